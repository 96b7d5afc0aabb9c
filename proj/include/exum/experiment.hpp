#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include "exum/data.hpp"
#include "exum/embedding.hpp"
#include "exum/labels.hpp"
#include "exum/losses.hpp"
#include "exum/metrics.hpp"
#include "exum/net.hpp"

namespace exum {

enum class Variant { Plain, Exum, ExumMultiHead };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::Plain: return "plain";
    case Variant::Exum: return "exum";
    case Variant::ExumMultiHead: return "exum_multihead";
  }
  return "?";
}

inline Variant variant_from_name(const std::string& s) {
  if (s == "plain") return Variant::Plain;
  if (s == "exum") return Variant::Exum;
  if (s == "exum_multihead") return Variant::ExumMultiHead;
  throw ConfigError("unknown variant: " + s);
}

inline Backbone backbone_from_name(const std::string& s) {
  if (s == "qp") return Backbone::QP;
  if (s == "or") return Backbone::OR;
  throw ConfigError("unknown backbone: " + s);
}

struct ExperimentConfig {
  std::string backbone = "or";
  std::string variant = "exum";
  int segments = 10;
  int duration_groups = 10;
  std::vector<int> bottom = {64, 32};
  std::vector<int> watch_hidden = {16};
  std::vector<int> conf_hidden = {16};
  int user_dim = 8;
  int item_dim = 8;
  int context_dim = 4;

  double lambda = 0.5;
  int epochs = 20;
  int batch_size = 256;
  double lr = 3e-3;
  std::string optimizer = "adam";
  uint64_t seed = 1;
  bool shuffle = true;
  bool force_c_one = false;  // diagnostic: freeze c at 1 inside the loss

  std::string data_source = "synthetic";
  std::string data_path;
  double split_timestamp = 50000.0;
  SyntheticConfig synthetic;

  size_t xauc_pairs_per_sample = 10;
  uint64_t eval_seed = 7;

  Backbone backbone_enum() const { return backbone_from_name(backbone); }
  Variant variant_enum() const { return variant_from_name(variant); }
};

inline void validate(const ExperimentConfig& cfg) {
  const Backbone b = cfg.backbone_enum();
  const Variant v = cfg.variant_enum();
  if (v == Variant::ExumMultiHead && b != Backbone::OR)
    throw ConfigError("multi-head confidence requires the ordinal backbone");
  if (cfg.lambda < 0.0) throw ConfigError("lambda must be >= 0");
  if (cfg.segments < 2) throw ConfigError("segments must be >= 2");
  if (cfg.duration_groups < 1) throw ConfigError("duration_groups must be >= 1");
  if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(cfg.lr > 0.0)) throw ConfigError("lr must be > 0");
  if (cfg.optimizer != "adam" && cfg.optimizer != "sgd")
    throw ConfigError("optimizer must be adam or sgd");
  if (cfg.data_source != "synthetic" && cfg.data_source != "csv")
    throw ConfigError("data_source must be synthetic or csv");
  if (cfg.data_source == "csv" && cfg.data_path.empty())
    throw ConfigError("data_path required for csv data_source");
}

// --- flat key=value config files -------------------------------------------

namespace detail {

inline std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

inline std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    if (cell.empty()) continue;
    out.push_back(std::stoi(cell));
  }
  return out;
}

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace detail

inline void save_config(std::ostream& os, const ExperimentConfig& c) {
  os << "backbone=" << c.backbone << '\n';
  os << "variant=" << c.variant << '\n';
  os << "segments=" << c.segments << '\n';
  os << "duration_groups=" << c.duration_groups << '\n';
  os << "bottom=" << detail::join_ints(c.bottom) << '\n';
  os << "watch_hidden=" << detail::join_ints(c.watch_hidden) << '\n';
  os << "conf_hidden=" << detail::join_ints(c.conf_hidden) << '\n';
  os << "user_dim=" << c.user_dim << '\n';
  os << "item_dim=" << c.item_dim << '\n';
  os << "context_dim=" << c.context_dim << '\n';
  os << "lambda=" << fmt_full(c.lambda) << '\n';
  os << "epochs=" << c.epochs << '\n';
  os << "batch_size=" << c.batch_size << '\n';
  os << "lr=" << fmt_full(c.lr) << '\n';
  os << "optimizer=" << c.optimizer << '\n';
  os << "seed=" << c.seed << '\n';
  os << "shuffle=" << (c.shuffle ? 1 : 0) << '\n';
  os << "force_c_one=" << (c.force_c_one ? 1 : 0) << '\n';
  os << "data_source=" << c.data_source << '\n';
  os << "data_path=" << c.data_path << '\n';
  os << "split_timestamp=" << fmt_full(c.split_timestamp) << '\n';
  os << "xauc_pairs_per_sample=" << c.xauc_pairs_per_sample << '\n';
  os << "eval_seed=" << c.eval_seed << '\n';
  os << "synthetic.users=" << c.synthetic.users << '\n';
  os << "synthetic.items=" << c.synthetic.items << '\n';
  os << "synthetic.records=" << c.synthetic.records << '\n';
  os << "synthetic.latent_dim=" << c.synthetic.latent_dim << '\n';
  os << "synthetic.duration_min=" << fmt_full(c.synthetic.duration_min) << '\n';
  os << "synthetic.duration_max=" << fmt_full(c.synthetic.duration_max) << '\n';
  os << "synthetic.short_weight=" << fmt_full(c.synthetic.short_weight) << '\n';
  os << "synthetic.complete_weight=" << fmt_full(c.synthetic.complete_weight)
     << '\n';
  os << "synthetic.tail_weight=" << fmt_full(c.synthetic.tail_weight) << '\n';
  os << "synthetic.repeat_cap=" << fmt_full(c.synthetic.repeat_cap) << '\n';
  os << "synthetic.noise=" << fmt_full(c.synthetic.noise) << '\n';
  os << "synthetic.ood_fraction=" << fmt_full(c.synthetic.ood_fraction) << '\n';
  os << "synthetic.erratic_user_fraction="
     << fmt_full(c.synthetic.erratic_user_fraction) << '\n';
  os << "synthetic.seed=" << c.synthetic.seed << '\n';
}

inline ExperimentConfig load_config(std::istream& is) {
  ExperimentConfig c;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key=value");
    const std::string key = detail::trim(t.substr(0, eq));
    const std::string val = detail::trim(t.substr(eq + 1));
    try {
      if (key == "backbone") c.backbone = val;
      else if (key == "variant") c.variant = val;
      else if (key == "segments") c.segments = std::stoi(val);
      else if (key == "duration_groups") c.duration_groups = std::stoi(val);
      else if (key == "bottom") c.bottom = detail::parse_int_list(val);
      else if (key == "watch_hidden") c.watch_hidden = detail::parse_int_list(val);
      else if (key == "conf_hidden") c.conf_hidden = detail::parse_int_list(val);
      else if (key == "user_dim") c.user_dim = std::stoi(val);
      else if (key == "item_dim") c.item_dim = std::stoi(val);
      else if (key == "context_dim") c.context_dim = std::stoi(val);
      else if (key == "lambda") c.lambda = std::stod(val);
      else if (key == "epochs") c.epochs = std::stoi(val);
      else if (key == "batch_size") c.batch_size = std::stoi(val);
      else if (key == "lr") c.lr = std::stod(val);
      else if (key == "optimizer") c.optimizer = val;
      else if (key == "seed") c.seed = std::stoull(val);
      else if (key == "shuffle") c.shuffle = std::stoi(val) != 0;
      else if (key == "force_c_one") c.force_c_one = std::stoi(val) != 0;
      else if (key == "data_source") c.data_source = val;
      else if (key == "data_path") c.data_path = val;
      else if (key == "split_timestamp") c.split_timestamp = std::stod(val);
      else if (key == "xauc_pairs_per_sample")
        c.xauc_pairs_per_sample = std::stoull(val);
      else if (key == "eval_seed") c.eval_seed = std::stoull(val);
      else if (key == "synthetic.users") c.synthetic.users = std::stoi(val);
      else if (key == "synthetic.items") c.synthetic.items = std::stoi(val);
      else if (key == "synthetic.records") c.synthetic.records = std::stoi(val);
      else if (key == "synthetic.latent_dim")
        c.synthetic.latent_dim = std::stoi(val);
      else if (key == "synthetic.duration_min")
        c.synthetic.duration_min = std::stod(val);
      else if (key == "synthetic.duration_max")
        c.synthetic.duration_max = std::stod(val);
      else if (key == "synthetic.short_weight")
        c.synthetic.short_weight = std::stod(val);
      else if (key == "synthetic.complete_weight")
        c.synthetic.complete_weight = std::stod(val);
      else if (key == "synthetic.tail_weight")
        c.synthetic.tail_weight = std::stod(val);
      else if (key == "synthetic.repeat_cap")
        c.synthetic.repeat_cap = std::stod(val);
      else if (key == "synthetic.noise") c.synthetic.noise = std::stod(val);
      else if (key == "synthetic.ood_fraction")
        c.synthetic.ood_fraction = std::stod(val);
      else if (key == "synthetic.erratic_user_fraction")
        c.synthetic.erratic_user_fraction = std::stod(val);
      else if (key == "synthetic.seed") c.synthetic.seed = std::stoull(val);
      else
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": unknown key '" + key + "'");
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": bad value for '" + key + "'");
    }
  }
  return c;
}

inline ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  return load_config(is);
}

inline void save_config_file(const std::string& path,
                             const ExperimentConfig& cfg) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write config file: " + path);
  save_config(os, cfg);
}

// --- dataset preparation ----------------------------------------------------

struct PreparedData {
  Dataset train;
  Dataset test;
  DurationGrouping grouping;
  std::vector<QuantileGrid> grids;  // one per duration group
  std::vector<int> train_group;
  Vec train_label_qp;
  std::vector<OrdinalLabelVector> train_label_or;
};

inline Dataset load_dataset(const ExperimentConfig& cfg) {
  if (cfg.data_source == "synthetic") return generate_synthetic(cfg.synthetic);
  return ingest_log_file(cfg.data_path);
}

// Builds the duration grouping and per-group quantile grids from the train
// half only, then attaches labels to every train record.
inline PreparedData prepare(const ExperimentConfig& cfg, const Dataset& full) {
  PreparedData prep;
  auto split = chronological_split(full, cfg.split_timestamp);
  prep.train = std::move(split.first);
  prep.test = std::move(split.second);
  if (prep.train.records.empty())
    throw DataError("prepare: train split is empty");
  if (prep.test.records.empty())
    throw DataError("prepare: test split is empty");

  Vec durations(prep.train.records.size());
  for (size_t i = 0; i < durations.size(); ++i)
    durations[i] = prep.train.records[i].duration;
  prep.grouping = build_duration_grouping(durations, cfg.duration_groups);

  const int groups = prep.grouping.group_count();
  std::vector<Vec> watch_by_group(static_cast<size_t>(groups));
  prep.train_group.resize(prep.train.records.size());
  for (size_t i = 0; i < prep.train.records.size(); ++i) {
    const int g = prep.grouping.group_of(prep.train.records[i].duration);
    prep.train_group[i] = g;
    watch_by_group[static_cast<size_t>(g)].push_back(
        prep.train.records[i].watch_time);
  }
  Vec all_watch(prep.train.records.size());
  for (size_t i = 0; i < all_watch.size(); ++i)
    all_watch[i] = prep.train.records[i].watch_time;
  for (int g = 0; g < groups; ++g) {
    const Vec& source = watch_by_group[static_cast<size_t>(g)].empty()
        ? all_watch
        : watch_by_group[static_cast<size_t>(g)];
    prep.grids.push_back(build_quantile_grid(source, cfg.segments, g));
  }

  const Backbone b = cfg.backbone_enum();
  if (b == Backbone::QP) {
    prep.train_label_qp.resize(prep.train.records.size());
    for (size_t i = 0; i < prep.train.records.size(); ++i)
      prep.train_label_qp[i] = quantile_label(
          prep.train.records[i].watch_time,
          prep.grids[static_cast<size_t>(prep.train_group[i])]);
  } else {
    prep.train_label_or.resize(prep.train.records.size());
    for (size_t i = 0; i < prep.train.records.size(); ++i)
      prep.train_label_or[i] = ordinal_labels(
          prep.train.records[i].watch_time,
          prep.grids[static_cast<size_t>(prep.train_group[i])]);
  }
  return prep;
}

// --- training ---------------------------------------------------------------

struct EpochStats {
  double mean_c = 0.0;
  double var_c = 0.0;
  double main_loss = 0.0;
  double adv_loss = 0.0;
};

struct TrainResult {
  SharedBottomNet net;
  EmbeddingTable table;
  std::vector<EpochStats> curve;
  Vec final_c;  // per train sample, averaged over confidence heads
  double initial_mean_c = 1.0;  // before the first update, same averaging
};

inline constexpr const char* kCurveHeader = "epoch,mean_c,var_c,main_loss,adv_loss";

inline void write_curve(std::ostream& os, const std::vector<EpochStats>& curve) {
  os << kCurveHeader << '\n';
  for (size_t e = 0; e < curve.size(); ++e)
    os << e + 1 << ',' << fmt_full(curve[e].mean_c) << ','
       << fmt_full(curve[e].var_c) << ',' << fmt_full(curve[e].main_loss) << ','
       << fmt_full(curve[e].adv_loss) << '\n';
}

inline TrainResult train_model(const ExperimentConfig& cfg,
                               const PreparedData& prep,
                               std::ostream* log = nullptr) {
  validate(cfg);
  const Backbone backbone = cfg.backbone_enum();
  const Variant variant = cfg.variant_enum();
  if (variant == Variant::Plain && cfg.lambda != 0.0)
    std::cerr << "warning: lambda=" << cfg.lambda
              << " has no effect on the plain variant\n";

  TrainResult result;
  result.table = make_embedding(
      prep.train, {cfg.user_dim, cfg.item_dim, cfg.context_dim},
      cfg.seed ^ 0x5eedULL);
  fit_numeric_stats(result.table, prep.train.records);

  NetConfig ncfg;
  ncfg.input_dim = result.table.output_dim();
  ncfg.bottom = cfg.bottom;
  ncfg.watch_hidden = cfg.watch_hidden;
  ncfg.conf_hidden = cfg.conf_hidden;
  ncfg.watch_outputs = backbone == Backbone::QP ? 1 : cfg.segments;
  ncfg.conf_outputs =
      variant == Variant::ExumMultiHead ? cfg.segments : 1;
  result.net = make_net(ncfg, cfg.seed);
  if (variant == Variant::Plain) result.net.has_conf = false;
  const ConfidenceMode mode = variant == Variant::ExumMultiHead
      ? ConfidenceMode::MultiHead
      : ConfidenceMode::Single;

  NetGrads grads = make_grads(result.net);
  EmbeddingGrads egrads = make_embedding_grads(result.table);
  std::vector<ParamBlock> blocks = net_blocks(result.net, grads);
  for (size_t f = 0; f < result.table.fields.size(); ++f)
    blocks.push_back({result.table.fields[f].data.data(),
                      egrads.fields[f].data(),
                      result.table.fields[f].data.size()});

  OptimizerState opt;
  opt.method = cfg.optimizer == "adam" ? OptimizerMethod::Adam
                                       : OptimizerMethod::Sgd;
  opt.lr = cfg.lr;

  const size_t n = prep.train.records.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::mt19937_64 shuffle_rng(cfg.seed + 0x517fULL);

  const size_t conf_heads = static_cast<size_t>(ncfg.conf_outputs);
  const Vec ones(static_cast<size_t>(ncfg.conf_outputs), 1.0);
  const Vec d_c_zero(static_cast<size_t>(ncfg.conf_outputs), 0.0);

  auto sample_loss = [&](const ForwardCache& cache, size_t idx) -> LossBundle {
    const Vec& c_vec = (variant == Variant::Plain || cfg.force_c_one)
        ? ones
        : cache.c;
    if (variant == Variant::Plain) {
      if (backbone == Backbone::QP)
        return qp_loss(cache.p[0], 1.0, prep.train_label_qp[idx]);
      return or_loss(cache.p, ones, prep.train_label_or[idx],
                     ConfidenceMode::Single);
    }
    if (backbone == Backbone::QP)
      return combined_loss_qp(cache.p[0], c_vec[0], prep.train_label_qp[idx],
                              cfg.lambda);
    return combined_loss_or(cache.p, c_vec, prep.train_label_or[idx], mode,
                            cfg.lambda);
  };

  auto mean_c_of = [&](const ForwardCache& cache) {
    if (variant == Variant::Plain) return 1.0;
    double s = 0.0;
    for (double v : cache.c) s += v;
    return s / static_cast<double>(conf_heads);
  };

  if (result.net.has_conf) {
    double c0 = 0.0;
    for (size_t i = 0; i < n; ++i) {
      const Vec x = embed(result.table, prep.train.records[i]);
      c0 += mean_c_of(forward(result.net, x));
    }
    result.initial_mean_c = c0 / static_cast<double>(n);
  }

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle) std::shuffle(order.begin(), order.end(), shuffle_rng);
    double main_sum = 0.0;
    double adv_sum = 0.0;
    size_t batch_index = 0;
    for (size_t start = 0; start < n; start += cfg.batch_size, ++batch_index) {
      const size_t stop = std::min(n, start + cfg.batch_size);
      const double inv_b = 1.0 / static_cast<double>(stop - start);
      zero_grads(grads);
      zero_embedding_grads(egrads);
      for (size_t k = start; k < stop; ++k) {
        const size_t idx = order[k];
        const InteractionRecord& rec = prep.train.records[idx];
        const Vec x = embed(result.table, rec);
        const ForwardCache cache = forward(result.net, x);
        const LossBundle lb = sample_loss(cache, idx);
        if (!std::isfinite(lb.total))
          throw NumericError("training diverged at epoch " +
                             std::to_string(epoch + 1) + " batch " +
                             std::to_string(batch_index + 1));
        main_sum += lb.main;
        adv_sum += lb.adversarial;
        Vec d_p = lb.d_p;
        for (double& g : d_p) g *= inv_b;
        if (result.net.has_conf && !cfg.force_c_one) {
          Vec d_c = lb.d_c;
          for (double& g : d_c) g *= inv_b;
          backward(result.net, cache, d_p, d_c, grads);
        } else {
          backward(result.net, cache, d_p,
                   result.net.has_conf ? d_c_zero : Vec{}, grads);
        }
        accumulate_embedding_grads(result.table, rec, grads.d_input, egrads);
        std::fill(grads.d_input.begin(), grads.d_input.end(), 0.0);
      }
      apply_update(blocks, opt);
    }
    for (const ParamBlock& blk : blocks)
      for (size_t i = 0; i < blk.n; ++i)
        if (!std::isfinite(blk.params[i]))
          throw NumericError("training diverged at epoch " +
                             std::to_string(epoch + 1) + " batch " +
                             std::to_string(batch_index));

    // Confidence snapshot over the whole train set with frozen weights.
    Vec c_now(n, 1.0);
    if (result.net.has_conf) {
      for (size_t i = 0; i < n; ++i) {
        const Vec x = embed(result.table, prep.train.records[i]);
        c_now[i] = mean_c_of(forward(result.net, x));
      }
    }
    EpochStats st;
    st.mean_c = mean_of(c_now);
    st.var_c = variance_of(c_now);
    st.main_loss = main_sum / static_cast<double>(n);
    st.adv_loss = adv_sum / static_cast<double>(n);
    result.curve.push_back(st);
    if (epoch + 1 == cfg.epochs) result.final_c = std::move(c_now);
    if (log)
      *log << "epoch " << epoch + 1 << " mean_c " << fmt_g9(st.mean_c)
           << " var_c " << fmt_g9(st.var_c) << " main " << fmt_g9(st.main_loss)
           << " adv " << fmt_g9(st.adv_loss) << '\n';
  }
  return result;
}

// --- inference and evaluation -----------------------------------------------

// Watch-time prediction in seconds. The confidence head plays no part here;
// stripping it must leave these values untouched.
inline double predict_seconds(const SharedBottomNet& net,
                              const EmbeddingTable& table,
                              const std::vector<QuantileGrid>& grids,
                              const DurationGrouping& grouping,
                              Backbone backbone, const InteractionRecord& rec) {
  const int g = grouping.group_of(rec.duration);
  if (g < 0 || g >= static_cast<int>(grids.size()))
    throw ConfigError("predict: duration group has no grid");
  const QuantileGrid& grid = grids[static_cast<size_t>(g)];
  const Vec x = embed(table, rec);
  const ForwardCache cache = forward(net, x);
  if (backbone == Backbone::QP) {
    if (net.cfg.watch_outputs != 1)
      throw ConfigError("predict: quantile backbone expects a single head");
    return quantile_to_seconds(cache.p[0], grid);
  }
  if (net.cfg.watch_outputs != grid.segments())
    throw ConfigError("predict: head count does not match grid segments");
  return expected_watch_time(cache.p, grid);
}

inline MetricsReport evaluate_model(const SharedBottomNet& net,
                                    const EmbeddingTable& table,
                                    const std::vector<QuantileGrid>& grids,
                                    const DurationGrouping& grouping,
                                    Backbone backbone, const Dataset& ds,
                                    size_t pairs_per_sample, uint64_t eval_seed,
                                    const std::string& model_name,
                                    const std::string& dataset_name) {
  if (ds.records.empty()) throw DataError("evaluate: empty dataset");
  Vec pred(ds.records.size());
  Vec truth(ds.records.size());
  for (size_t i = 0; i < ds.records.size(); ++i) {
    pred[i] = predict_seconds(net, table, grids, grouping, backbone,
                              ds.records[i]);
    truth[i] = ds.records[i].watch_time;
  }
  MetricsReport rep;
  rep.model = model_name;
  rep.dataset = dataset_name;
  rep.samples = ds.records.size();
  rep.pairs = pairs_per_sample * ds.records.size();
  rep.seed = eval_seed;
  rep.mae = mae(pred, truth);
  rep.xauc = xauc(pred, truth, rep.pairs, eval_seed);
  return rep;
}

// --- model bundle on disk ---------------------------------------------------

struct ModelBundle {
  ExperimentConfig cfg;
  SharedBottomNet net;
  EmbeddingTable table;
  std::vector<QuantileGrid> grids;
  DurationGrouping grouping;
};

// Drops the confidence head; watch-time inference must be unaffected.
inline void strip_conf_head(ModelBundle& bundle) { bundle.net.has_conf = false; }

inline void save_model(const std::string& dir, const ModelBundle& bundle) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    std::ofstream os(fs::path(dir) / "model.txt");
    if (!os) throw DataError("save_model: cannot write model.txt");
    os << "exum_model 1\n";
    os << "backbone " << bundle.cfg.backbone << '\n';
    os << "variant " << bundle.cfg.variant << '\n';
    write_net(os, bundle.net);
    write_embedding(os, bundle.table);
    os << "end_model\n";
  }
  {
    std::ofstream os(fs::path(dir) / "grids.csv");
    if (!os) throw DataError("save_model: cannot write grids.csv");
    write_grids(os, bundle.grids);
  }
  {
    std::ofstream os(fs::path(dir) / "grouping.csv");
    if (!os) throw DataError("save_model: cannot write grouping.csv");
    write_grouping(os, bundle.grouping);
  }
  save_config_file((fs::path(dir) / "config.txt").string(), bundle.cfg);
}

inline ModelBundle load_model(const std::string& dir) {
  namespace fs = std::filesystem;
  ModelBundle bundle;
  bundle.cfg = load_config_file((fs::path(dir) / "config.txt").string());
  {
    std::ifstream is(fs::path(dir) / "model.txt");
    if (!is) throw DataError("load_model: cannot open model.txt");
    std::string word;
    int version = 0;
    if (!(is >> word >> version) || word != "exum_model" || version != 1)
      throw DataError("load_model: bad model.txt header");
    std::string backbone, variant;
    is >> word >> backbone;
    if (word != "backbone") throw DataError("load_model: expected backbone");
    is >> word >> variant;
    if (word != "variant") throw DataError("load_model: expected variant");
    backbone_from_name(backbone);
    variant_from_name(variant);
    bundle.cfg.backbone = backbone;
    bundle.cfg.variant = variant;
    bundle.net = read_net(is);
    bundle.table = read_embedding(is);
    is >> word;
    if (word != "end_model") throw DataError("load_model: missing end_model");
  }
  {
    std::ifstream is(fs::path(dir) / "grids.csv");
    if (!is) throw DataError("load_model: cannot open grids.csv");
    bundle.grids = read_grids(is);
  }
  {
    std::ifstream is(fs::path(dir) / "grouping.csv");
    if (!is) throw DataError("load_model: cannot open grouping.csv");
    bundle.grouping = read_grouping(is);
  }
  return bundle;
}

// --- lambda sweep -----------------------------------------------------------

struct SweepRow {
  std::string model;
  bool has_lambda = false;
  double lambda = 0.0;
  double mae = 0.0;
  double xauc = 0.0;
  double final_mean_c = 1.0;
  std::string status = "ok";
};

inline constexpr const char* kSweepHeader =
    "model,lambda,mae,xauc,final_mean_c,status";

inline void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << kSweepHeader << '\n';
  for (const SweepRow& r : rows) {
    os << r.model << ',';
    if (r.has_lambda) os << fmt_full(r.lambda);
    os << ',' << fmt_full(r.mae) << ',' << fmt_full(r.xauc) << ','
       << fmt_full(r.final_mean_c) << ',' << r.status << '\n';
  }
}

// Trains the adversarial variant once per lambda, bracketed by a plain
// reference run. A failure in one row is recorded there and the sweep
// carries on.
inline std::vector<SweepRow> sweep_lambda(const ExperimentConfig& base,
                                          const Vec& lambdas,
                                          std::ostream* log = nullptr) {
  validate(base);
  const Dataset full = load_dataset(base);
  const PreparedData prep = prepare(base, full);
  std::vector<SweepRow> rows;

  auto run_one = [&](const std::string& model, bool has_lambda, double lambda) {
    SweepRow row;
    row.model = model;
    row.has_lambda = has_lambda;
    row.lambda = lambda;
    try {
      ExperimentConfig cfg = base;
      cfg.variant = model;
      cfg.lambda = has_lambda ? lambda : 0.0;
      const TrainResult tr = train_model(cfg, prep, log);
      const MetricsReport rep = evaluate_model(
          tr.net, tr.table, prep.grids, prep.grouping, cfg.backbone_enum(),
          prep.test, cfg.xauc_pairs_per_sample, cfg.eval_seed, model, "test");
      row.mae = rep.mae;
      row.xauc = rep.xauc;
      row.final_mean_c = tr.curve.back().mean_c;
    } catch (const std::exception& e) {
      std::string msg = e.what();
      for (char& ch : msg)
        if (ch == ',' || ch == '\n') ch = ';';
      row.status = "error: " + msg;
    }
    return row;
  };

  rows.push_back(run_one("plain", false, 0.0));
  for (double lambda : lambdas)
    rows.push_back(run_one(base.variant == "plain" ? "exum" : base.variant,
                           true, lambda));
  return rows;
}

}  // namespace exum
