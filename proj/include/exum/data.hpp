#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "exum/common.hpp"

namespace exum {

struct InteractionRecord {
  int user = 0;
  int item = 0;
  double duration = 0.0;    // seconds
  double watch_time = 0.0;  // seconds
  double timestamp = 0.0;
  std::vector<int> context;  // categorical context ids, per dataset field
  Vec numerics;              // numeric context, per dataset field
};

struct Dataset {
  std::vector<InteractionRecord> records;
  int user_vocab = 0;
  int item_vocab = 0;
  std::vector<std::string> context_fields;
  std::vector<int> context_vocabs;
  std::vector<std::string> numeric_fields;
  size_t dropped_rows = 0;
};

// --- synthetic log ----------------------------------------------------------

struct SyntheticConfig {
  int users = 400;
  int items = 2400;
  int records = 60000;
  int latent_dim = 4;
  double duration_min = 5.0;    // seconds, log-uniform per item
  double duration_max = 120.0;
  double short_weight = 0.7;    // early-quit mass
  double complete_weight = 0.2; // watch-to-end atom at tau = duration
  double tail_weight = 0.1;     // repeat / beyond-duration mass
  double repeat_cap = 3.0;      // tail reaches repeat_cap * duration
  double noise = 0.05;          // quantile jitter sd
  double ood_fraction = 0.3;    // mass of label-replacement records
  double erratic_user_fraction = 0.3;
  uint64_t seed = 1;
};

namespace detail {

// Inverse CDF of the watch-time mixture at quantile q for a video of
// duration d. Component 1 is a truncated exponential on [0, d), component 2
// an atom at exactly d, component 3 a truncated exponential on (d, cap*d].
inline double mixture_watch_time(double q, double d, const SyntheticConfig& cfg) {
  const double wsum = cfg.short_weight + cfg.complete_weight + cfg.tail_weight;
  if (!(wsum > 0.0)) throw ConfigError("synthetic: mixture weights sum to zero");
  const double w1 = cfg.short_weight / wsum;
  const double w2 = cfg.complete_weight / wsum;
  const double w3 = 1.0 - w1 - w2;
  const double k1 = 5.0;
  const double k3 = 2.0;
  if (q < w1 && w1 > 0.0) {
    const double u = q / w1;
    return -(d / k1) * std::log(1.0 - u * (1.0 - std::exp(-k1)));
  }
  if (q <= w1 + w2 || w3 <= 0.0) return d;
  const double u = (q - w1 - w2) / w3;
  const double span = (cfg.repeat_cap - 1.0) * d;
  return d + (span / k3) * (-std::log(1.0 - u * (1.0 - std::exp(-k3))));
}

}  // namespace detail

// Deterministic synthetic interaction log. User/item latent affinities are
// rank-transformed over the whole log, so the base quantile of each record is
// exactly uniform and the mixture masses hold exactly in aggregate. A fixed
// slice of erratic users absorbs most of the label-replacement (OOD) mass,
// which is what makes confidence predictable from the inputs. Every record
// consumes the same number of RNG draws.
inline Dataset generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.users < 1 || cfg.items < 1 || cfg.records < 2)
    throw ConfigError("synthetic: users/items >= 1 and records >= 2 required");
  if (!(cfg.duration_min > 0.0) || !(cfg.duration_max >= cfg.duration_min))
    throw ConfigError("synthetic: bad duration range");
  if (cfg.ood_fraction < 0.0 || cfg.ood_fraction > 1.0)
    throw ConfigError("synthetic: ood_fraction outside [0, 1]");
  if (cfg.repeat_cap < 1.0) throw ConfigError("synthetic: repeat_cap < 1");

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> latent(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<Vec> user_lat(static_cast<size_t>(cfg.users));
  for (auto& v : user_lat) {
    v.resize(static_cast<size_t>(cfg.latent_dim));
    for (double& x : v) x = latent(rng);
  }
  std::vector<Vec> item_lat(static_cast<size_t>(cfg.items));
  std::vector<double> item_duration(static_cast<size_t>(cfg.items));
  const double log_lo = std::log(cfg.duration_min);
  const double log_hi = std::log(cfg.duration_max);
  for (size_t i = 0; i < item_lat.size(); ++i) {
    item_lat[i].resize(static_cast<size_t>(cfg.latent_dim));
    for (double& x : item_lat[i]) x = latent(rng);
    item_duration[i] = std::exp(log_lo + (log_hi - log_lo) * unit(rng));
  }

  const int n_erratic = static_cast<int>(
      std::lround(cfg.erratic_user_fraction * cfg.users));
  const double q_err = static_cast<double>(n_erratic) / cfg.users;
  double rate_erratic = 0.0;
  double rate_stable = 0.0;
  if (cfg.ood_fraction > 0.0) {
    if (q_err > 0.0 && cfg.ood_fraction <= q_err) {
      rate_erratic = cfg.ood_fraction / q_err;
    } else {
      rate_erratic = 1.0;
      rate_stable = q_err < 1.0
          ? (cfg.ood_fraction - q_err) / (1.0 - q_err)
          : 0.0;
    }
  }

  std::uniform_int_distribution<int> pick_user(0, cfg.users - 1);
  std::uniform_int_distribution<int> pick_item(0, cfg.items - 1);
  std::normal_distribution<double> jitter(0.0, 1.0);

  const size_t n = static_cast<size_t>(cfg.records);
  std::vector<int> users_drawn(n);
  std::vector<int> items_drawn(n);
  Vec affinity(n);
  Vec noise_draw(n);
  Vec ood_roll(n);
  Vec ood_quantile(n);
  for (size_t r = 0; r < n; ++r) {
    const int u = pick_user(rng);
    const int i = pick_item(rng);
    users_drawn[r] = u;
    items_drawn[r] = i;
    double dot = 0.0;
    for (int k = 0; k < cfg.latent_dim; ++k)
      dot += user_lat[static_cast<size_t>(u)][static_cast<size_t>(k)] *
             item_lat[static_cast<size_t>(i)][static_cast<size_t>(k)];
    affinity[r] = dot;
    noise_draw[r] = jitter(rng);
    ood_roll[r] = unit(rng);
    ood_quantile[r] = unit(rng);
  }

  // Rank transform: the base quantile of record r is its affinity rank over
  // the whole log, scaled to [0, 1].
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (affinity[a] != affinity[b]) return affinity[a] < affinity[b];
    return a < b;
  });
  Vec base_q(n);
  for (size_t pos = 0; pos < n; ++pos)
    base_q[order[pos]] = static_cast<double>(pos) / static_cast<double>(n - 1);

  Dataset ds;
  ds.user_vocab = cfg.users;
  ds.item_vocab = cfg.items;
  ds.records.resize(n);
  for (size_t r = 0; r < n; ++r) {
    InteractionRecord& rec = ds.records[r];
    rec.user = users_drawn[r];
    rec.item = items_drawn[r];
    rec.duration = item_duration[static_cast<size_t>(items_drawn[r])];
    rec.timestamp = static_cast<double>(r);
    double q = std::clamp(base_q[r] + cfg.noise * noise_draw[r], 0.0, 1.0);
    const bool erratic = users_drawn[r] < n_erratic;
    const double rate = erratic ? rate_erratic : rate_stable;
    if (ood_roll[r] < rate) q = ood_quantile[r];
    rec.watch_time = detail::mixture_watch_time(q, rec.duration, cfg);
  }
  return ds;
}

// --- CSV io -----------------------------------------------------------------

struct CsvSchema {
  std::vector<std::string> user_columns = {"user_id", "user"};
  std::vector<std::string> item_columns = {"item_id", "item", "video_id"};
  std::vector<std::string> duration_ms_columns = {"duration_ms"};
  std::vector<std::string> duration_s_columns = {"duration_s", "duration"};
  std::vector<std::string> watch_ms_columns = {"play_time_ms"};
  std::vector<std::string> watch_s_columns = {"watch_time_s", "watch_time",
                                              "play_time_s"};
  std::vector<std::string> timestamp_columns = {"timestamp", "time_ms"};
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

inline int find_column(const std::vector<std::string>& header,
                       const std::vector<std::string>& names) {
  for (const std::string& name : names)
    for (size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
  return -1;
}

inline bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  try {
    size_t used = 0;
    out = std::stod(s, &used);
    return used == s.size() && std::isfinite(out);
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace detail

// Reads an interaction log from a comma-separated file with a header row.
// Rows with missing cells, unparseable numbers, non-positive durations or
// negative watch times are dropped and counted. User/item strings are mapped
// to dense ids in order of first appearance. Columns not covered by the
// schema become context fields: numeric if every kept row parses, otherwise
// categorical.
inline Dataset ingest_log(std::istream& is, const CsvSchema& schema = {}) {
  std::string line;
  if (!std::getline(is, line)) throw SchemaError("ingest: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = detail::split_csv_line(line);

  const int user_col = detail::find_column(header, schema.user_columns);
  const int item_col = detail::find_column(header, schema.item_columns);
  int duration_col = detail::find_column(header, schema.duration_ms_columns);
  double duration_scale = 1e-3;
  if (duration_col < 0) {
    duration_col = detail::find_column(header, schema.duration_s_columns);
    duration_scale = 1.0;
  }
  int watch_col = detail::find_column(header, schema.watch_ms_columns);
  double watch_scale = 1e-3;
  if (watch_col < 0) {
    watch_col = detail::find_column(header, schema.watch_s_columns);
    watch_scale = 1.0;
  }
  const int ts_col = detail::find_column(header, schema.timestamp_columns);

  std::string missing;
  if (user_col < 0) missing += " user";
  if (item_col < 0) missing += " item";
  if (duration_col < 0) missing += " duration";
  if (watch_col < 0) missing += " watch_time";
  if (!missing.empty())
    throw SchemaError("ingest: missing required columns:" + missing);

  std::vector<int> extra_cols;
  for (size_t i = 0; i < header.size(); ++i) {
    const int ci = static_cast<int>(i);
    if (ci == user_col || ci == item_col || ci == duration_col ||
        ci == watch_col || ci == ts_col)
      continue;
    extra_cols.push_back(ci);
  }

  Dataset ds;
  std::map<std::string, int> user_ids;
  std::map<std::string, int> item_ids;
  std::vector<std::vector<std::string>> extra_values(extra_cols.size());
  size_t row_index = 0;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++row_index;
    const std::vector<std::string> cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) {
      ++ds.dropped_rows;
      continue;
    }
    double duration = 0.0, watch = 0.0, ts = 0.0;
    if (!detail::parse_double(cells[static_cast<size_t>(duration_col)], duration) ||
        !detail::parse_double(cells[static_cast<size_t>(watch_col)], watch)) {
      ++ds.dropped_rows;
      continue;
    }
    duration *= duration_scale;
    watch *= watch_scale;
    if (!(duration > 0.0) || watch < 0.0) {
      ++ds.dropped_rows;
      continue;
    }
    if (ts_col >= 0) {
      if (!detail::parse_double(cells[static_cast<size_t>(ts_col)], ts)) {
        ++ds.dropped_rows;
        continue;
      }
    } else {
      ts = static_cast<double>(row_index);
    }
    InteractionRecord rec;
    auto intern = [](std::map<std::string, int>& dict, const std::string& key) {
      auto it = dict.find(key);
      if (it != dict.end()) return it->second;
      const int id = static_cast<int>(dict.size());
      dict.emplace(key, id);
      return id;
    };
    rec.user = intern(user_ids, cells[static_cast<size_t>(user_col)]);
    rec.item = intern(item_ids, cells[static_cast<size_t>(item_col)]);
    rec.duration = duration;
    rec.watch_time = watch;
    rec.timestamp = ts;
    for (size_t e = 0; e < extra_cols.size(); ++e)
      extra_values[e].push_back(cells[static_cast<size_t>(extra_cols[e])]);
    ds.records.push_back(std::move(rec));
  }
  ds.user_vocab = static_cast<int>(user_ids.size());
  ds.item_vocab = static_cast<int>(item_ids.size());

  for (size_t e = 0; e < extra_cols.size(); ++e) {
    const std::string& name = header[static_cast<size_t>(extra_cols[e])];
    bool numeric = true;
    Vec parsed(extra_values[e].size());
    for (size_t r = 0; r < extra_values[e].size(); ++r) {
      if (!detail::parse_double(extra_values[e][r], parsed[r])) {
        numeric = false;
        break;
      }
    }
    if (numeric) {
      ds.numeric_fields.push_back(name);
      for (size_t r = 0; r < ds.records.size(); ++r)
        ds.records[r].numerics.push_back(parsed[r]);
    } else {
      std::map<std::string, int> dict;
      for (size_t r = 0; r < ds.records.size(); ++r) {
        const std::string& key = extra_values[e][r];
        auto it = dict.find(key);
        int id;
        if (it != dict.end()) {
          id = it->second;
        } else {
          id = static_cast<int>(dict.size());
          dict.emplace(key, id);
        }
        ds.records[r].context.push_back(id);
      }
      ds.context_fields.push_back(name);
      ds.context_vocabs.push_back(static_cast<int>(dict.size()));
    }
  }
  return ds;
}

inline Dataset ingest_log_file(const std::string& path,
                               const CsvSchema& schema = {}) {
  std::ifstream is(path);
  if (!is) throw DataError("ingest: cannot open " + path);
  return ingest_log(is, schema);
}

inline void write_csv(std::ostream& os, const Dataset& ds) {
  os << "user_id,item_id,duration_s,watch_time_s,timestamp";
  for (const std::string& f : ds.context_fields) os << ',' << f;
  for (const std::string& f : ds.numeric_fields) os << ',' << f;
  os << '\n';
  for (const InteractionRecord& rec : ds.records) {
    os << rec.user << ',' << rec.item << ',' << fmt_full(rec.duration) << ','
       << fmt_full(rec.watch_time) << ',' << fmt_full(rec.timestamp);
    for (int id : rec.context) os << ',' << id;
    for (double v : rec.numerics) os << ',' << fmt_full(v);
    os << '\n';
  }
}

inline void write_csv_file(const std::string& path, const Dataset& ds) {
  std::ofstream os(path);
  if (!os) throw DataError("write_csv: cannot open " + path);
  write_csv(os, ds);
}

// --- splitting --------------------------------------------------------------

// Train rows strictly precede the split timestamp; test rows are the rest.
inline std::pair<Dataset, Dataset> chronological_split(const Dataset& ds,
                                                       double split_timestamp) {
  Dataset train, test;
  auto copy_meta = [&](Dataset& d) {
    d.user_vocab = ds.user_vocab;
    d.item_vocab = ds.item_vocab;
    d.context_fields = ds.context_fields;
    d.context_vocabs = ds.context_vocabs;
    d.numeric_fields = ds.numeric_fields;
  };
  copy_meta(train);
  copy_meta(test);
  for (const InteractionRecord& rec : ds.records)
    (rec.timestamp < split_timestamp ? train : test).records.push_back(rec);
  return {std::move(train), std::move(test)};
}

// Timestamp threshold that puts roughly `fraction` of rows in the train set.
inline double split_threshold(const Dataset& ds, double fraction) {
  if (ds.records.empty()) throw DataError("split_threshold: empty dataset");
  if (!(fraction > 0.0) || !(fraction < 1.0))
    throw ConfigError("split_threshold: fraction outside (0, 1)");
  Vec ts(ds.records.size());
  for (size_t i = 0; i < ts.size(); ++i) ts[i] = ds.records[i].timestamp;
  std::sort(ts.begin(), ts.end());
  const size_t k = static_cast<size_t>(fraction * static_cast<double>(ts.size()));
  return ts[std::min(k, ts.size() - 1)];
}

}  // namespace exum
