#pragma once

#include <ostream>
#include <random>

#include "exum/common.hpp"

namespace exum {

inline double mae(const Vec& predictions, const Vec& truths) {
  if (predictions.size() != truths.size())
    throw UsageError("mae: size mismatch");
  if (predictions.empty()) throw UsageError("mae: empty input");
  double s = 0.0;
  for (size_t i = 0; i < predictions.size(); ++i)
    s += std::abs(predictions[i] - truths[i]);
  return s / static_cast<double>(predictions.size());
}

// Pairwise ranking quality estimated over `pairs` random index pairs drawn
// with replacement. A pair scores 1 when predictions order the two samples
// the same way as the truths (or both sides tie), 0.5 when exactly one side
// ties, 0 otherwise.
inline double xauc(const Vec& predictions, const Vec& truths, size_t pairs,
                   uint64_t seed) {
  if (predictions.size() != truths.size())
    throw UsageError("xauc: size mismatch");
  if (predictions.size() < 2) throw UsageError("xauc: need at least 2 samples");
  if (pairs == 0) throw UsageError("xauc: need at least 1 pair");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<size_t> pick(0, predictions.size() - 1);
  double score = 0.0;
  for (size_t k = 0; k < pairs; ++k) {
    const size_t i = pick(rng);
    const size_t j = pick(rng);
    const double dp = predictions[i] - predictions[j];
    const double dt = truths[i] - truths[j];
    if (dp == 0.0 && dt == 0.0)
      score += 1.0;
    else if (dp == 0.0 || dt == 0.0)
      score += 0.5;
    else if ((dp > 0.0) == (dt > 0.0))
      score += 1.0;
  }
  return score / static_cast<double>(pairs);
}

struct MetricsReport {
  std::string model;
  std::string dataset;
  double mae = 0.0;
  double xauc = 0.0;
  size_t samples = 0;
  size_t pairs = 0;
  uint64_t seed = 0;
};

inline constexpr const char* kMetricsHeader =
    "model,dataset,mae,xauc,samples,pairs,seed";

inline void write_metrics_row(std::ostream& os, const MetricsReport& r) {
  os << r.model << ',' << r.dataset << ',' << fmt_full(r.mae) << ','
     << fmt_full(r.xauc) << ',' << r.samples << ',' << r.pairs << ',' << r.seed
     << '\n';
}

}  // namespace exum
