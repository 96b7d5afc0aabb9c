#pragma once

#include <istream>
#include <ostream>
#include <random>

#include "exum/common.hpp"
#include "exum/data.hpp"

namespace exum {

struct EmbeddingConfig {
  int user_dim = 8;
  int item_dim = 8;
  int context_dim = 4;
};

struct EmbeddingField {
  std::string name;
  int vocab = 0;
  int dim = 0;
  Vec data;  // (vocab + 1) rows of dim; the last row is the OOV bucket
};

// Maps an interaction record to the dense model input: user and item lookups,
// one lookup per categorical context field, then normalized numeric features.
// Numerics are the derived pair (duration, log1p(duration)) followed by the
// dataset's own numeric fields.
struct EmbeddingTable {
  std::vector<EmbeddingField> fields;  // user, item, then context fields
  Vec numeric_shift;
  Vec numeric_scale;

  int output_dim() const {
    int d = 0;
    for (const EmbeddingField& f : fields) d += f.dim;
    return d + static_cast<int>(numeric_shift.size());
  }
  size_t numeric_count() const { return numeric_shift.size(); }
};

inline constexpr int kDerivedNumerics = 2;

inline EmbeddingTable make_embedding(const Dataset& ds,
                                     const EmbeddingConfig& cfg,
                                     uint64_t seed) {
  if (cfg.user_dim < 1 || cfg.item_dim < 1 || cfg.context_dim < 1)
    throw ConfigError("make_embedding: dims must be >= 1");
  if (ds.user_vocab < 1 || ds.item_vocab < 1)
    throw ConfigError("make_embedding: dataset has empty vocabularies");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> init(0.0, 0.1);
  EmbeddingTable table;
  auto add_field = [&](const std::string& name, int vocab, int dim) {
    EmbeddingField f;
    f.name = name;
    f.vocab = vocab;
    f.dim = dim;
    f.data.resize(static_cast<size_t>(vocab + 1) * static_cast<size_t>(dim));
    for (double& x : f.data) x = init(rng);
    table.fields.push_back(std::move(f));
  };
  add_field("user", ds.user_vocab, cfg.user_dim);
  add_field("item", ds.item_vocab, cfg.item_dim);
  for (size_t i = 0; i < ds.context_fields.size(); ++i)
    add_field(ds.context_fields[i], ds.context_vocabs[i], cfg.context_dim);
  const size_t numerics = kDerivedNumerics + ds.numeric_fields.size();
  table.numeric_shift.assign(numerics, 0.0);
  table.numeric_scale.assign(numerics, 1.0);
  return table;
}

namespace detail {

inline Vec raw_numerics(const EmbeddingTable& table,
                        const InteractionRecord& rec) {
  Vec x;
  x.reserve(table.numeric_count());
  x.push_back(rec.duration);
  x.push_back(std::log1p(rec.duration));
  for (double v : rec.numerics) x.push_back(v);
  if (x.size() != table.numeric_count())
    throw ConfigError("embed: record numeric fields do not match table");
  return x;
}

}  // namespace detail

// Standardizes numeric features to zero mean and unit variance over the given
// records. Constant features keep scale 1.
inline void fit_numeric_stats(EmbeddingTable& table,
                              const std::vector<InteractionRecord>& records) {
  if (records.empty()) throw DataError("fit_numeric_stats: no records");
  const size_t m = table.numeric_count();
  Vec sum(m, 0.0), sumsq(m, 0.0);
  for (const InteractionRecord& rec : records) {
    const Vec x = detail::raw_numerics(table, rec);
    for (size_t i = 0; i < m; ++i) {
      sum[i] += x[i];
      sumsq[i] += x[i] * x[i];
    }
  }
  const double n = static_cast<double>(records.size());
  for (size_t i = 0; i < m; ++i) {
    const double mean = sum[i] / n;
    const double var = std::max(0.0, sumsq[i] / n - mean * mean);
    table.numeric_shift[i] = mean;
    table.numeric_scale[i] = var > 1e-12 ? 1.0 / std::sqrt(var) : 1.0;
  }
}

namespace detail {

inline size_t row_offset(const EmbeddingField& f, int id) {
  const int row = (id < 0 || id >= f.vocab) ? f.vocab : id;
  return static_cast<size_t>(row) * static_cast<size_t>(f.dim);
}

}  // namespace detail

inline Vec embed(const EmbeddingTable& table, const InteractionRecord& rec) {
  if (table.fields.size() < 2)
    throw ConfigError("embed: table missing user/item fields");
  if (rec.context.size() + 2 != table.fields.size())
    throw ConfigError("embed: record context fields do not match table");
  Vec out;
  out.reserve(static_cast<size_t>(table.output_dim()));
  auto append_row = [&](const EmbeddingField& f, int id) {
    const size_t off = detail::row_offset(f, id);
    out.insert(out.end(), f.data.begin() + static_cast<long>(off),
               f.data.begin() + static_cast<long>(off + f.dim));
  };
  append_row(table.fields[0], rec.user);
  append_row(table.fields[1], rec.item);
  for (size_t i = 0; i < rec.context.size(); ++i)
    append_row(table.fields[i + 2], rec.context[i]);
  const Vec x = detail::raw_numerics(table, rec);
  for (size_t i = 0; i < x.size(); ++i)
    out.push_back((x[i] - table.numeric_shift[i]) * table.numeric_scale[i]);
  return out;
}

struct EmbeddingGrads {
  std::vector<Vec> fields;  // same shapes as the table rows
};

inline EmbeddingGrads make_embedding_grads(const EmbeddingTable& table) {
  EmbeddingGrads g;
  g.fields.resize(table.fields.size());
  for (size_t i = 0; i < table.fields.size(); ++i)
    g.fields[i].assign(table.fields[i].data.size(), 0.0);
  return g;
}

inline void zero_embedding_grads(EmbeddingGrads& g) {
  for (Vec& v : g.fields) std::fill(v.begin(), v.end(), 0.0);
}

// Scatters the input gradient back into the rows used by this record. The
// numeric tail of d_input has no trainable parameters and is ignored.
inline void accumulate_embedding_grads(const EmbeddingTable& table,
                                       const InteractionRecord& rec,
                                       const Vec& d_input,
                                       EmbeddingGrads& grads) {
  if (static_cast<int>(d_input.size()) != table.output_dim())
    throw ShapeError("accumulate_embedding_grads: d_input width mismatch");
  size_t pos = 0;
  auto scatter = [&](size_t field_idx, int id) {
    const EmbeddingField& f = table.fields[field_idx];
    const size_t off = detail::row_offset(f, id);
    for (int k = 0; k < f.dim; ++k)
      grads.fields[field_idx][off + static_cast<size_t>(k)] += d_input[pos++];
  };
  scatter(0, rec.user);
  scatter(1, rec.item);
  for (size_t i = 0; i < rec.context.size(); ++i)
    scatter(i + 2, rec.context[i]);
}

// --- checkpoint format ------------------------------------------------------

inline void write_embedding(std::ostream& os, const EmbeddingTable& table) {
  os << "embedding\n";
  os << "fields " << table.fields.size() << '\n';
  for (const EmbeddingField& f : table.fields) {
    os << "field " << f.name << ' ' << f.vocab << ' ' << f.dim << '\n';
    for (size_t i = 0; i < f.data.size(); ++i)
      os << (i % 8 == 0 ? (i == 0 ? "" : "\n") : " ") << fmt_full(f.data[i]);
    if (!f.data.empty()) os << '\n';
  }
  os << "numerics " << table.numeric_count() << '\n';
  for (size_t i = 0; i < table.numeric_count(); ++i)
    os << fmt_full(table.numeric_shift[i]) << ' '
       << fmt_full(table.numeric_scale[i]) << '\n';
  os << "end_embedding\n";
}

inline EmbeddingTable read_embedding(std::istream& is) {
  auto expect = [&](const char* tag) {
    std::string word;
    if (!(is >> word) || word != tag)
      throw DataError(std::string("embedding: expected '") + tag + "', got '" +
                      word + "'");
  };
  expect("embedding");
  expect("fields");
  size_t nfields = 0;
  is >> nfields;
  EmbeddingTable table;
  for (size_t fi = 0; fi < nfields; ++fi) {
    expect("field");
    EmbeddingField f;
    is >> f.name >> f.vocab >> f.dim;
    if (f.vocab < 0 || f.dim < 1) throw DataError("embedding: bad field header");
    f.data.resize(static_cast<size_t>(f.vocab + 1) * static_cast<size_t>(f.dim));
    for (double& x : f.data)
      if (!(is >> x)) throw DataError("embedding: truncated field data");
    table.fields.push_back(std::move(f));
  }
  expect("numerics");
  size_t m = 0;
  is >> m;
  table.numeric_shift.resize(m);
  table.numeric_scale.resize(m);
  for (size_t i = 0; i < m; ++i)
    if (!(is >> table.numeric_shift[i] >> table.numeric_scale[i]))
      throw DataError("embedding: truncated numeric stats");
  expect("end_embedding");
  return table;
}

}  // namespace exum
