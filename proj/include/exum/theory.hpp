#pragma once

#include <ostream>
#include <random>

#include "exum/losses.hpp"
#include "exum/net.hpp"

namespace exum {

// --- collapse of the confidence signal without the adversarial term ---------

struct DegradationReport {
  Backbone backbone = Backbone::QP;
  size_t checked = 0;
  size_t violations = 0;  // d_c below -1e-12
  double min_gradient = 0.0;
  bool pass = false;
};

// With lambda = 0 the confidence gradient must be non-negative everywhere, so
// descent can only push c down. Checked on a dense (p, c) grid through the
// actual loss implementations.
inline DegradationReport verify_degradation(Backbone backbone,
                                            int grid = 100,
                                            double margin = 1e-4) {
  if (grid < 2) throw ConfigError("verify_degradation: grid < 2");
  DegradationReport rep;
  rep.backbone = backbone;
  rep.min_gradient = std::numeric_limits<double>::infinity();
  const Vec ys = backbone == Backbone::QP ? Vec{0.0, 0.5, 1.0} : Vec{0.0, 1.0};
  for (int i = 0; i < grid; ++i) {
    const double p = margin + (1.0 - 2.0 * margin) * i / (grid - 1);
    for (int j = 0; j < grid; ++j) {
      const double c = margin + (1.0 - 2.0 * margin) * j / (grid - 1);
      for (double y : ys) {
        double d_c;
        if (backbone == Backbone::QP) {
          d_c = qp_loss(p, c, y).d_c[0];
        } else {
          const OrdinalLabelVector label = {y > 0.5 ? uint8_t{1} : uint8_t{0}};
          d_c = or_loss({p}, {c}, label, ConfidenceMode::Single).d_c[0];
        }
        ++rep.checked;
        rep.min_gradient = std::min(rep.min_gradient, d_c);
        if (d_c < -1e-12) ++rep.violations;
      }
    }
  }
  rep.pass = rep.violations == 0;
  return rep;
}

struct ConfOnlyResult {
  Vec mean_c;  // before training, then after each step
  bool non_increasing = false;
  double max_rise = 0.0;
};

// Trains only the confidence head with lambda = 0 on a fixed random batch.
// The degradation result predicts the mean confidence can never move up.
inline ConfOnlyResult verify_conf_only_training(Backbone backbone,
                                                int steps = 200,
                                                uint64_t seed = 42) {
  const int batch = 64;
  const int ordinal_heads = 4;
  NetConfig cfg;
  cfg.input_dim = 8;
  cfg.bottom = {16, 8};
  cfg.watch_hidden = {4};
  cfg.conf_hidden = {4};
  cfg.watch_outputs = backbone == Backbone::QP ? 1 : ordinal_heads;
  cfg.conf_outputs = 1;
  SharedBottomNet net = make_net(cfg, seed);

  std::mt19937_64 rng(seed + 1);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> rank(0, ordinal_heads);
  std::vector<Vec> inputs(batch);
  Vec y_qp(batch);
  std::vector<OrdinalLabelVector> y_or(batch);
  for (int s = 0; s < batch; ++s) {
    inputs[s].resize(static_cast<size_t>(cfg.input_dim));
    for (double& x : inputs[s]) x = gauss(rng);
    y_qp[s] = unit(rng);
    OrdinalLabelVector bits(ordinal_heads, 0);
    const int k = rank(rng);
    for (int t = 0; t < k; ++t) bits[static_cast<size_t>(t)] = 1;
    y_or[s] = bits;
  }

  NetGrads grads = make_grads(net);
  OptimizerState opt;
  opt.method = OptimizerMethod::Sgd;
  opt.lr = 0.02;

  auto batch_mean_c = [&]() {
    double s = 0.0;
    for (int i = 0; i < batch; ++i) s += forward(net, inputs[i]).c[0];
    return s / batch;
  };

  ConfOnlyResult res;
  res.mean_c.push_back(batch_mean_c());
  const Vec d_p_zero(static_cast<size_t>(cfg.watch_outputs), 0.0);
  for (int step = 0; step < steps; ++step) {
    zero_grads(grads);
    for (int s = 0; s < batch; ++s) {
      ForwardCache cache = forward(net, inputs[s]);
      LossBundle lb = backbone == Backbone::QP
          ? combined_loss_qp(cache.p[0], cache.c[0], y_qp[s], 0.0)
          : combined_loss_or(cache.p, cache.c, y_or[s],
                             ConfidenceMode::Single, 0.0);
      Vec d_c = lb.d_c;
      for (double& g : d_c) g /= batch;
      backward(net, cache, d_p_zero, d_c, grads);
    }
    std::vector<ParamBlock> conf_blocks;
    for (size_t li = 0; li < net.conf_head.layers.size(); ++li) {
      conf_blocks.push_back({net.conf_head.layers[li].weights.data(),
                             grads.conf.layers[li].d_weights.data(),
                             net.conf_head.layers[li].weights.size()});
      conf_blocks.push_back({net.conf_head.layers[li].bias.data(),
                             grads.conf.layers[li].d_bias.data(),
                             net.conf_head.layers[li].bias.size()});
    }
    apply_update(conf_blocks, opt);
    res.mean_c.push_back(batch_mean_c());
  }
  res.max_rise = 0.0;
  for (size_t i = 1; i < res.mean_c.size(); ++i)
    res.max_rise = std::max(res.max_rise, res.mean_c[i] - res.mean_c[i - 1]);
  res.non_increasing = res.max_rise <= 1e-9;
  return res;
}

// --- fixed points of the adversarial balance --------------------------------

struct BisectionResult {
  bool bracketed = false;
  double root = 0.0;  // boundary the gradient points to when not bracketed
};

// Root of the combined confidence gradient on (kProbFloor, 1 - kProbFloor),
// found without the closed form. Serves as the oracle the closed form is
// compared against.
inline BisectionResult bisect_confidence_root(Backbone backbone, double eps,
                                              double lambda) {
  double lo = kProbFloor;
  double hi = 1.0 - kProbFloor;
  const double g_lo = confidence_gradient(backbone, eps, lo, lambda);
  const double g_hi = confidence_gradient(backbone, eps, hi, lambda);
  BisectionResult res;
  if ((g_lo < 0.0) == (g_hi < 0.0)) {
    res.bracketed = false;
    res.root = g_lo < 0.0 ? hi : lo;  // descent runs toward this boundary
    return res;
  }
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double g_mid = confidence_gradient(backbone, eps, mid, lambda);
    if ((g_mid < 0.0) == (g_lo < 0.0))
      lo = mid;
    else
      hi = mid;
  }
  res.bracketed = true;
  res.root = 0.5 * (lo + hi);
  return res;
}

struct DescentResult {
  double c_final = 0.0;
  size_t steps = 0;
  bool monotone_up = true;  // every step moved c up, within 1e-12
};

// Plain gradient descent on the confidence under a frozen prediction error,
// clamped to the open unit interval.
inline DescentResult descend_confidence(Backbone backbone, double eps,
                                        double lambda, double c0,
                                        double step = 0.01,
                                        size_t max_steps = 1000000) {
  if (!(c0 > 0.0) || !(c0 < 1.0))
    throw ConfigError("descend_confidence: c0 outside (0, 1)");
  double c = clamp_unit(c0);
  DescentResult res;
  for (size_t t = 0; t < max_steps; ++t) {
    const double g = confidence_gradient(backbone, eps, c, lambda);
    const double next = clamp_unit(c - step * g);
    if (next < c - 1e-12) res.monotone_up = false;
    res.steps = t + 1;
    if (std::abs(next - c) < 1e-14) {
      c = next;
      break;
    }
    c = next;
  }
  res.c_final = c;
  return res;
}

struct FixedPointRow {
  Backbone backbone = Backbone::QP;
  double eps = 0.0;
  double lambda = 0.0;
  bool interior = false;
  double closed_form = 0.0;
  double bisection = 0.0;
  double gap = 0.0;
  Vec descent_err;  // |final - closed form| from each start
  bool pass = false;
};

struct MonotoneRow {
  Backbone backbone = Backbone::QP;
  double eps = 0.0;
  double lambda = 0.0;
  bool monotone_up = false;
  double c_final = 0.0;
  bool pass = false;
};

struct FixedPointReport {
  std::vector<FixedPointRow> rows;
  std::vector<MonotoneRow> monotone_rows;
  bool pass = false;
};

// For every error level: five lambdas under the validity bound must give an
// interior balance point that matches the bisection oracle and attracts
// descent; one lambda well above the bound must push c monotonically to 1.
inline FixedPointReport verify_fixed_points(double fp_tol = 1e-9,
                                            double descent_tol = 1e-3) {
  const Vec ratios = {0.04, 0.1, 0.2, 0.3, 0.36};
  const Vec starts = {0.1, 0.5, 0.9};
  FixedPointReport rep;
  rep.pass = true;
  for (Backbone b : {Backbone::QP, Backbone::OR}) {
    for (int ei = 1; ei <= 19; ++ei) {
      const double eps = 0.05 * ei;
      const double bound = lambda_validity_bound(b, eps);
      for (double rho : ratios) {
        const double lambda = rho * bound;
        FixedPointRow row;
        row.backbone = b;
        row.eps = eps;
        row.lambda = lambda;
        const FixedPointResult fp = fixed_point(b, eps, lambda);
        row.interior = fp.interior;
        row.closed_form = fp.c_star;
        const BisectionResult bis = bisect_confidence_root(b, eps, lambda);
        row.bisection = bis.root;
        row.gap = std::abs(row.closed_form - row.bisection);
        row.pass = fp.interior && bis.bracketed && row.gap <= fp_tol;
        for (double c0 : starts) {
          const DescentResult d = descend_confidence(b, eps, lambda, c0);
          const double err = std::abs(d.c_final - row.closed_form);
          row.descent_err.push_back(err);
          if (err > descent_tol) row.pass = false;
        }
        rep.pass = rep.pass && row.pass;
        rep.rows.push_back(std::move(row));
      }
      MonotoneRow mono;
      mono.backbone = b;
      mono.eps = eps;
      mono.lambda = 10.0 * bound;
      const DescentResult d =
          descend_confidence(b, eps, mono.lambda, 0.1, 0.01, 200000);
      mono.monotone_up = d.monotone_up;
      mono.c_final = d.c_final;
      mono.pass = d.monotone_up && d.c_final > 0.99 &&
                  !fixed_point(b, eps, mono.lambda).interior;
      rep.pass = rep.pass && mono.pass;
      rep.monotone_rows.push_back(mono);
    }
  }
  return rep;
}

inline const char* backbone_name(Backbone b) {
  return b == Backbone::QP ? "qp" : "or";
}

inline void write_fixed_point_csv(std::ostream& os,
                                  const FixedPointReport& rep) {
  os << "backbone,eps,lambda,interior,closed_form,bisection,gap,"
        "descent_err_0.1,descent_err_0.5,descent_err_0.9,pass\n";
  for (const FixedPointRow& r : rep.rows) {
    os << backbone_name(r.backbone) << ',' << fmt_full(r.eps) << ','
       << fmt_full(r.lambda) << ',' << (r.interior ? 1 : 0) << ','
       << fmt_full(r.closed_form) << ',' << fmt_full(r.bisection) << ','
       << fmt_full(r.gap);
    for (double e : r.descent_err) os << ',' << fmt_full(e);
    os << ',' << (r.pass ? 1 : 0) << '\n';
  }
}

inline void write_monotone_csv(std::ostream& os, const FixedPointReport& rep) {
  os << "backbone,eps,lambda,monotone_up,c_final,pass\n";
  for (const MonotoneRow& r : rep.monotone_rows) {
    os << backbone_name(r.backbone) << ',' << fmt_full(r.eps) << ','
       << fmt_full(r.lambda) << ',' << (r.monotone_up ? 1 : 0) << ','
       << fmt_full(r.c_final) << ',' << (r.pass ? 1 : 0) << '\n';
  }
}

}  // namespace exum
