#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>

#include "exum/common.hpp"

namespace exum {

// Maps a video duration to its duration group. Interior cut points are
// strictly ascending; group k covers (boundaries[k-1], boundaries[k]].
struct DurationGrouping {
  Vec boundaries;

  int group_count() const { return static_cast<int>(boundaries.size()) + 1; }

  int group_of(double duration) const {
    int g = 0;
    while (g < static_cast<int>(boundaries.size()) &&
           duration > boundaries[static_cast<size_t>(g)])
      ++g;
    return g;
  }
};

// Empirical watch-time quantiles for one duration group: levels[n] = n/N and
// values[n] is the watch time at that quantile, with values[0] pinned to 0.
struct QuantileGrid {
  int group_id = 0;
  Vec levels;
  Vec values;

  int segments() const { return static_cast<int>(levels.size()) - 1; }
};

using OrdinalLabelVector = std::vector<uint8_t>;

namespace detail {

// Linearly interpolated order-statistic quantile on sorted data
// (h = (n-1)q convention).
inline double sorted_quantile(const Vec& sorted, double q) {
  const size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double h = static_cast<double>(n - 1) * q;
  const size_t lo = std::min(static_cast<size_t>(h), n - 2);
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace detail

inline QuantileGrid build_quantile_grid(const Vec& watch_times, int segments,
                                        int group_id = 0) {
  if (watch_times.empty())
    throw DataError("build_quantile_grid: empty watch-time list");
  if (segments < 2)
    throw ConfigError("build_quantile_grid: need at least 2 segments");
  Vec sorted = watch_times;
  for (double w : sorted)
    if (!(w >= 0.0) || !std::isfinite(w))
      throw DataError("build_quantile_grid: watch times must be finite and >= 0");
  std::sort(sorted.begin(), sorted.end());

  QuantileGrid grid;
  grid.group_id = group_id;
  grid.levels.resize(static_cast<size_t>(segments) + 1);
  grid.values.resize(static_cast<size_t>(segments) + 1);
  for (int n = 0; n <= segments; ++n) {
    grid.levels[static_cast<size_t>(n)] =
        static_cast<double>(n) / static_cast<double>(segments);
    grid.values[static_cast<size_t>(n)] =
        detail::sorted_quantile(sorted, grid.levels[static_cast<size_t>(n)]);
  }
  grid.values[0] = 0.0;
  // Sorting makes quantiles monotone; guard against FP slips anyway.
  for (size_t n = 1; n < grid.values.size(); ++n)
    grid.values[n] = std::max(grid.values[n], grid.values[n - 1]);
  return grid;
}

// Empirical CDF of tau under the group's distribution, piecewise linear
// between (value, level) knots. A tau equal to a repeated knot value gets the
// midpoint of the flat span.
inline double quantile_label(double tau, const QuantileGrid& grid) {
  if (tau < 0.0) throw DataError("quantile_label: tau must be >= 0");
  const Vec& w = grid.values;
  const Vec& t = grid.levels;
  const size_t last = w.size() - 1;
  if (tau > w[last]) return 1.0;
  auto lo = std::lower_bound(w.begin(), w.end(), tau);
  if (lo != w.end() && *lo == tau) {
    const size_t first = static_cast<size_t>(lo - w.begin());
    size_t span_end = first;
    while (span_end < last && w[span_end + 1] == tau) ++span_end;
    return 0.5 * (t[first] + t[span_end]);
  }
  // tau strictly between two distinct knot values.
  const size_t hi = static_cast<size_t>(lo - w.begin());
  const size_t lo_idx = hi - 1;
  const double frac = (tau - w[lo_idx]) / (w[hi] - w[lo_idx]);
  return t[lo_idx] + frac * (t[hi] - t[lo_idx]);
}

// Piecewise-linear inverse of quantile_label along the (level, value) knots.
inline double quantile_to_seconds(double q, const QuantileGrid& grid) {
  if (q < 0.0 || q > 1.0)
    throw DataError("quantile_to_seconds: q must be in [0,1]");
  const Vec& w = grid.values;
  const Vec& t = grid.levels;
  const size_t last = t.size() - 1;
  if (q >= t[last]) return w[last];
  size_t hi = 1;
  while (t[hi] < q) ++hi;
  const size_t lo = hi - 1;
  const double frac = (q - t[lo]) / (t[hi] - t[lo]);
  return w[lo] + frac * (w[hi] - w[lo]);
}

// Bit n-1 answers "did the user watch past the n-th quantile value"
// (strictly), for n = 1..N. Monotone non-increasing by construction.
inline OrdinalLabelVector ordinal_labels(double tau, const QuantileGrid& grid) {
  if (tau < 0.0) throw DataError("ordinal_labels: tau must be >= 0");
  OrdinalLabelVector bits(static_cast<size_t>(grid.segments()));
  for (size_t n = 1; n < grid.values.size(); ++n)
    bits[n - 1] = grid.values[n] < tau ? 1 : 0;
  return bits;
}

// E[tau] as the probability-weighted sum of segment lengths,
// sum_n p[n] * (w[n+1] - w[n]). Written in Abel-summed form so an all-ones
// probability vector returns exactly w[N].
inline double expected_watch_time(const Vec& p, const QuantileGrid& grid) {
  if (static_cast<int>(p.size()) != grid.segments())
    throw ShapeError("expected_watch_time: head count does not match grid");
  const size_t N = p.size();
  double e = grid.values[N] * p[N - 1];
  for (size_t n = 1; n < N; ++n)
    e += grid.values[n] * (p[n - 1] - p[n]);
  return e;
}

// Equal-frequency duration buckets; ties may collapse adjacent cut points.
inline DurationGrouping build_duration_grouping(const Vec& durations,
                                                int groups) {
  if (durations.empty())
    throw DataError("build_duration_grouping: empty duration list");
  if (groups < 1)
    throw ConfigError("build_duration_grouping: need at least 1 group");
  Vec sorted = durations;
  std::sort(sorted.begin(), sorted.end());
  DurationGrouping grouping;
  for (int k = 1; k < groups; ++k) {
    const double cut = detail::sorted_quantile(
        sorted, static_cast<double>(k) / static_cast<double>(groups));
    if (grouping.boundaries.empty() || cut > grouping.boundaries.back())
      grouping.boundaries.push_back(cut);
  }
  return grouping;
}

// Popularity adjustment hook. The shape of the adjustment is deliberately
// unspecified upstream; the default leaves the watch times untouched.
inline Vec adjust_for_popularity(const Vec& watch_times,
                                 double /*popularity*/) {
  return watch_times;
}

// --- grid file format: one CSV line per group ------------------------------
// group_id,N,t0,w0,t1,w1,...,tN,wN

inline void write_grids(std::ostream& os, const std::vector<QuantileGrid>& grids) {
  for (const QuantileGrid& g : grids) {
    os << g.group_id << ',' << g.segments();
    for (size_t n = 0; n < g.levels.size(); ++n)
      os << ',' << fmt_full(g.levels[n]) << ',' << fmt_full(g.values[n]);
    os << '\n';
  }
}

inline std::vector<QuantileGrid> read_grids(std::istream& is) {
  std::vector<QuantileGrid> grids;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    auto next = [&]() -> double {
      if (!std::getline(ls, cell, ','))
        throw DataError("read_grids: truncated grid line");
      return std::stod(cell);
    };
    QuantileGrid g;
    g.group_id = static_cast<int>(next());
    const int segments = static_cast<int>(next());
    if (segments < 1) throw DataError("read_grids: bad segment count");
    for (int n = 0; n <= segments; ++n) {
      g.levels.push_back(next());
      g.values.push_back(next());
    }
    grids.push_back(std::move(g));
  }
  return grids;
}

inline void write_grouping(std::ostream& os, const DurationGrouping& grouping) {
  for (size_t i = 0; i < grouping.boundaries.size(); ++i) {
    if (i) os << ',';
    os << fmt_full(grouping.boundaries[i]);
  }
  os << '\n';
}

inline DurationGrouping read_grouping(std::istream& is) {
  DurationGrouping grouping;
  std::string line;
  if (!std::getline(is, line)) return grouping;
  std::istringstream ls(line);
  std::string cell;
  while (std::getline(ls, cell, ','))
    if (!cell.empty()) grouping.boundaries.push_back(std::stod(cell));
  return grouping;
}

}  // namespace exum
