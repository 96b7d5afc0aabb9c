#pragma once

#include "exum/common.hpp"
#include "exum/labels.hpp"

namespace exum {

enum class Backbone { QP, OR };

// Single: one confidence for the whole predicted distribution.
// MultiHead: one confidence per quantile head (ordinal backbone only).
enum class ConfidenceMode { Single, MultiHead };

// Per-sample loss value plus analytic gradients w.r.t. the head outputs.
struct LossBundle {
  double total = 0.0;
  double main = 0.0;
  double adversarial = 0.0;
  Vec d_p;
  Vec d_c;
  double lambda = 0.0;
  bool saturated = false;
};

inline size_t confidence_count(ConfidenceMode mode, size_t heads) {
  return mode == ConfidenceMode::Single ? 1 : heads;
}

// p' = c*p + (1-c)*y: the confidence picks between prediction and label.
inline Vec blend(const Vec& p, const Vec& c, const Vec& y,
                 ConfidenceMode mode) {
  if (mode == ConfidenceMode::MultiHead && p.size() == 1)
    throw ConfigError("blend: multi-head confidence needs an ordinal backbone");
  if (y.size() != p.size())
    throw ShapeError("blend: label/head count mismatch");
  if (c.size() != confidence_count(mode, p.size()))
    throw ShapeError("blend: confidence count mismatch");
  Vec out(p.size());
  for (size_t t = 0; t < p.size(); ++t) {
    const double ct = mode == ConfidenceMode::Single ? c[0] : c[t];
    out[t] = ct * p[t] + (1.0 - ct) * y[t];
  }
  return out;
}

// Squared error over the blended prediction. Collapses to 0.5*(c*(p-y))^2,
// with d_p = c^2*(p-y) and d_c = c*(p-y)^2.
inline LossBundle qp_loss(double p, double c, double y) {
  LossBundle b;
  const double err = p - y;
  b.main = 0.5 * c * c * err * err;
  b.total = b.main;
  b.d_p = {c * c * err};
  b.d_c = {c * err * err};
  return b;
}

// Binary cross entropy per head over blended predictions, negated so descent
// reduces the error. In Single mode d_c sums head contributions.
inline LossBundle or_loss(const Vec& p, const Vec& c,
                          const OrdinalLabelVector& y, ConfidenceMode mode) {
  if (y.size() != p.size())
    throw ShapeError("or_loss: label/head count mismatch");
  if (c.size() != confidence_count(mode, p.size()))
    throw ShapeError("or_loss: confidence count mismatch");
  LossBundle b;
  b.d_p.assign(p.size(), 0.0);
  b.d_c.assign(c.size(), 0.0);
  for (size_t t = 0; t < p.size(); ++t) {
    const double ct = mode == ConfidenceMode::Single ? c[0] : c[t];
    const double yt = static_cast<double>(y[t]);
    const double raw = ct * p[t] + (1.0 - ct) * yt;
    const double pb = clamp_unit(raw);
    if (pb != raw) b.saturated = true;
    b.main -= yt * std::log(pb) + (1.0 - yt) * std::log(1.0 - pb);
    if (pb == raw) {
      const double d_blend = -yt / pb + (1.0 - yt) / (1.0 - pb);
      b.d_p[t] = d_blend * ct;
      const double dc = d_blend * (p[t] - yt);
      if (mode == ConfidenceMode::Single)
        b.d_c[0] += dc;
      else
        b.d_c[t] = dc;
    }
    // Saturated heads sit on the clamp plateau; their gradient is zero.
  }
  b.total = b.main;
  return b;
}

struct AdversarialLoss {
  double value = 0.0;
  Vec d_c;
  bool saturated = false;
};

// L_c = -sum(log c): the counter-force that pushes confidence up.
inline AdversarialLoss adversarial_loss(const Vec& c) {
  AdversarialLoss a;
  a.d_c.resize(c.size());
  for (size_t i = 0; i < c.size(); ++i) {
    const double ci = clamp_unit(c[i]);
    if (ci != c[i]) a.saturated = true;
    a.value -= std::log(ci);
    a.d_c[i] = -1.0 / ci;
  }
  return a;
}

// Main loss plus lambda times the adversarial confidence term.
inline LossBundle combined_loss(Backbone backbone, ConfidenceMode mode,
                                const Vec& p, const Vec& c,
                                const Vec& y_qp, const OrdinalLabelVector& y_or,
                                double lambda) {
  if (lambda < 0.0) throw ConfigError("combined_loss: lambda must be >= 0");
  LossBundle b;
  if (backbone == Backbone::QP) {
    if (mode == ConfidenceMode::MultiHead)
      throw ConfigError("combined_loss: multi-head confidence needs OR");
    if (p.size() != 1 || c.size() != 1 || y_qp.size() != 1)
      throw ShapeError("combined_loss: QP expects single-entry p, c, y");
    b = qp_loss(p[0], c[0], y_qp[0]);
  } else {
    b = or_loss(p, c, y_or, mode);
  }
  const AdversarialLoss a = adversarial_loss(c);
  b.adversarial = a.value;
  b.lambda = lambda;
  b.total = b.main + lambda * a.value;
  b.saturated = b.saturated || a.saturated;
  for (size_t i = 0; i < b.d_c.size(); ++i) b.d_c[i] += lambda * a.d_c[i];
  return b;
}

// Convenience overloads for the per-backbone label shapes.
inline LossBundle combined_loss_qp(double p, double c, double y,
                                   double lambda) {
  return combined_loss(Backbone::QP, ConfidenceMode::Single, {p}, {c}, {y}, {},
                       lambda);
}

inline LossBundle combined_loss_or(const Vec& p, const Vec& c,
                                   const OrdinalLabelVector& y,
                                   ConfidenceMode mode, double lambda) {
  return combined_loss(Backbone::OR, mode, p, c, {}, y, lambda);
}

// Combined gradient w.r.t. one confidence entry at error magnitude eps,
// for the single-head analysis: c*eps^2 - lambda/c (QP) and
// 1/(1/eps - c) - lambda/c (OR).
inline double confidence_gradient(Backbone backbone, double eps, double c,
                                  double lambda) {
  if (backbone == Backbone::QP) return c * eps * eps - lambda / c;
  return 1.0 / (1.0 / eps - c) - lambda / c;
}

struct FixedPointResult {
  bool interior = false;
  // Interior: the zero-gradient confidence. Boundary: the saturated end the
  // descent drifts to (always 1; the adversarial term dominates).
  double c_star = 1.0;
};

inline double lambda_validity_bound(Backbone backbone, double eps) {
  if (!(eps > 0.0 && eps < 1.0))
    throw ConfigError("lambda_validity_bound: eps must be in (0,1)");
  return backbone == Backbone::QP ? eps * eps : eps / (1.0 - eps);
}

// Closed-form zero crossing of the combined confidence gradient:
// sqrt(lambda)/eps for QP, lambda/(eps*(1+lambda)) for OR. Outside (0,1) the
// gradient has no interior root and confidence saturates at 1.
inline FixedPointResult fixed_point(Backbone backbone, double eps,
                                    double lambda) {
  if (lambda <= 0.0) throw ConfigError("fixed_point: lambda must be > 0");
  FixedPointResult r;
  if (eps == 0.0) return r;  // no degradation force, c drifts to 1
  if (!(eps > 0.0 && eps < 1.0))
    throw ConfigError("fixed_point: eps must be in [0,1)");
  const double c = backbone == Backbone::QP
                       ? std::sqrt(lambda) / eps
                       : lambda / (eps * (1.0 + lambda));
  if (c > 0.0 && c < 1.0) {
    r.interior = true;
    r.c_star = c;
  }
  return r;
}

}  // namespace exum
