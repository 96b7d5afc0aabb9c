#pragma once

#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <sstream>

#include "exum/common.hpp"

namespace exum {

enum class Activation { ReLU, Logistic, Identity };

inline const char* activation_name(Activation a) {
  switch (a) {
    case Activation::ReLU: return "relu";
    case Activation::Logistic: return "logistic";
    case Activation::Identity: return "identity";
  }
  return "?";
}

inline Activation activation_from_name(const std::string& s) {
  if (s == "relu") return Activation::ReLU;
  if (s == "logistic") return Activation::Logistic;
  if (s == "identity") return Activation::Identity;
  throw DataError("unknown activation: " + s);
}

struct DenseLayer {
  int in = 0;
  int out = 0;
  Vec weights;  // row-major, out x in
  Vec bias;     // out
  Activation act = Activation::ReLU;
};

struct Mlp {
  std::vector<DenseLayer> layers;

  int input_dim() const { return layers.empty() ? 0 : layers.front().in; }
  int output_dim() const { return layers.empty() ? 0 : layers.back().out; }
};

struct NetConfig {
  int input_dim = 0;
  std::vector<int> bottom = {128, 64, 32};
  std::vector<int> watch_hidden = {16};
  std::vector<int> conf_hidden = {16};
  int watch_outputs = 1;  // 1 for QP, N for OR
  int conf_outputs = 1;   // 1 for single confidence, N for multi-head
};

// Shared trunk feeding a watch-time head and a confidence head. Both head
// outputs pass through a logistic squash and are clamped into
// [kProbFloor, 1 - kProbFloor].
struct SharedBottomNet {
  NetConfig cfg;
  Mlp bottom;
  Mlp watch_head;
  Mlp conf_head;
  bool has_conf = true;
};

namespace detail {

inline DenseLayer make_layer(int in, int out, Activation act,
                             std::mt19937_64& rng) {
  DenseLayer l;
  l.in = in;
  l.out = out;
  l.act = act;
  l.weights.resize(static_cast<size_t>(in) * static_cast<size_t>(out));
  l.bias.assign(static_cast<size_t>(out), 0.0);
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& w : l.weights) w = dist(rng);
  return l;
}

inline Mlp make_mlp(int input, const std::vector<int>& hidden, int output,
                    Activation out_act, std::mt19937_64& rng) {
  Mlp mlp;
  int prev = input;
  for (int width : hidden) {
    mlp.layers.push_back(make_layer(prev, width, Activation::ReLU, rng));
    prev = width;
  }
  if (output > 0)
    mlp.layers.push_back(make_layer(prev, output, out_act, rng));
  return mlp;
}

}  // namespace detail

inline SharedBottomNet make_net(const NetConfig& cfg, uint64_t seed) {
  if (cfg.input_dim < 1) throw ConfigError("make_net: input_dim must be >= 1");
  if (cfg.bottom.empty()) throw ConfigError("make_net: bottom must be non-empty");
  std::mt19937_64 rng(seed);
  SharedBottomNet net;
  net.cfg = cfg;
  // The bottom's last hidden layer is its output; no squash there.
  std::vector<int> bottom_hidden(cfg.bottom.begin(), cfg.bottom.end());
  net.bottom = detail::make_mlp(cfg.input_dim, bottom_hidden, 0,
                                Activation::Identity, rng);
  const int trunk = cfg.bottom.back();
  net.watch_head = detail::make_mlp(trunk, cfg.watch_hidden, cfg.watch_outputs,
                                    Activation::Logistic, rng);
  net.conf_head = detail::make_mlp(trunk, cfg.conf_hidden, cfg.conf_outputs,
                                   Activation::Logistic, rng);
  return net;
}

// Activations kept from a forward pass; enough to backpropagate.
struct MlpCache {
  std::vector<Vec> inputs;    // input to each layer
  std::vector<Vec> pre;       // pre-activation z per layer
  std::vector<Vec> post;      // activation output per layer (pre-clamp)
  Vec output;                 // final output after clamping
};

struct ForwardCache {
  Vec input;
  MlpCache bottom;
  MlpCache watch;
  MlpCache conf;
  Vec p;
  Vec c;
};

namespace detail {

inline void mlp_forward(const Mlp& mlp, const Vec& x, MlpCache& cache,
                        bool clamp_output) {
  cache.inputs.clear();
  cache.pre.clear();
  cache.post.clear();
  Vec a = x;
  for (const DenseLayer& l : mlp.layers) {
    cache.inputs.push_back(a);
    Vec z(static_cast<size_t>(l.out));
    for (int j = 0; j < l.out; ++j) {
      const double* wrow = &l.weights[static_cast<size_t>(j) * l.in];
      double s = l.bias[static_cast<size_t>(j)];
      for (int k = 0; k < l.in; ++k) s += wrow[k] * a[static_cast<size_t>(k)];
      z[static_cast<size_t>(j)] = s;
    }
    Vec out(z.size());
    switch (l.act) {
      case Activation::ReLU:
        for (size_t j = 0; j < z.size(); ++j) out[j] = z[j] > 0.0 ? z[j] : 0.0;
        break;
      case Activation::Logistic:
        for (size_t j = 0; j < z.size(); ++j) out[j] = logistic(z[j]);
        break;
      case Activation::Identity:
        out = z;
        break;
    }
    cache.pre.push_back(std::move(z));
    cache.post.push_back(out);
    a = std::move(out);
  }
  cache.output = a;
  if (clamp_output)
    for (double& v : cache.output) v = clamp_unit(v);
}

}  // namespace detail

inline ForwardCache forward(const SharedBottomNet& net, const Vec& x) {
  if (static_cast<int>(x.size()) != net.cfg.input_dim)
    throw ShapeError("forward: input width mismatch");
  ForwardCache cache;
  cache.input = x;
  detail::mlp_forward(net.bottom, x, cache.bottom, false);
  detail::mlp_forward(net.watch_head, cache.bottom.output, cache.watch, true);
  cache.p = cache.watch.output;
  if (net.has_conf) {
    detail::mlp_forward(net.conf_head, cache.bottom.output, cache.conf, true);
    cache.c = cache.conf.output;
  }
  return cache;
}

struct LayerGrads {
  Vec d_weights;
  Vec d_bias;
};

struct MlpGrads {
  std::vector<LayerGrads> layers;
};

struct NetGrads {
  MlpGrads bottom;
  MlpGrads watch;
  MlpGrads conf;
  Vec d_input;
};

namespace detail {

inline void zero_grads_for(const Mlp& mlp, MlpGrads& g) {
  g.layers.resize(mlp.layers.size());
  for (size_t i = 0; i < mlp.layers.size(); ++i) {
    g.layers[i].d_weights.assign(mlp.layers[i].weights.size(), 0.0);
    g.layers[i].d_bias.assign(mlp.layers[i].bias.size(), 0.0);
  }
}

// Backpropagates d_out through the mlp, accumulating into grads; returns the
// gradient w.r.t. the mlp input. The output clamp contributes a zero gradient
// where it is active.
inline Vec mlp_backward(const Mlp& mlp, const MlpCache& cache, Vec d_out,
                        MlpGrads& grads, bool output_clamped) {
  for (size_t li = mlp.layers.size(); li-- > 0;) {
    const DenseLayer& l = mlp.layers[li];
    const Vec& z = cache.pre[li];
    const Vec& a_in = cache.inputs[li];
    Vec d_z(static_cast<size_t>(l.out));
    const bool is_last = li + 1 == mlp.layers.size();
    for (int j = 0; j < l.out; ++j) {
      double g = d_out[static_cast<size_t>(j)];
      switch (l.act) {
        case Activation::ReLU:
          g = z[static_cast<size_t>(j)] > 0.0 ? g : 0.0;
          break;
        case Activation::Logistic: {
          const double s = cache.post[li][static_cast<size_t>(j)];
          if (is_last && output_clamped &&
              (s < kProbFloor || s > 1.0 - kProbFloor))
            g = 0.0;
          else
            g *= s * (1.0 - s);
          break;
        }
        case Activation::Identity:
          break;
      }
      d_z[static_cast<size_t>(j)] = g;
    }
    LayerGrads& lg = grads.layers[li];
    for (int j = 0; j < l.out; ++j) {
      const double gj = d_z[static_cast<size_t>(j)];
      double* dwrow = &lg.d_weights[static_cast<size_t>(j) * l.in];
      for (int k = 0; k < l.in; ++k)
        dwrow[k] += gj * a_in[static_cast<size_t>(k)];
      lg.d_bias[static_cast<size_t>(j)] += gj;
    }
    Vec d_in(static_cast<size_t>(l.in), 0.0);
    for (int j = 0; j < l.out; ++j) {
      const double gj = d_z[static_cast<size_t>(j)];
      if (gj == 0.0) continue;
      const double* wrow = &l.weights[static_cast<size_t>(j) * l.in];
      for (int k = 0; k < l.in; ++k)
        d_in[static_cast<size_t>(k)] += gj * wrow[k];
    }
    d_out = std::move(d_in);
  }
  return d_out;
}

}  // namespace detail

inline NetGrads make_grads(const SharedBottomNet& net) {
  NetGrads g;
  detail::zero_grads_for(net.bottom, g.bottom);
  detail::zero_grads_for(net.watch_head, g.watch);
  detail::zero_grads_for(net.conf_head, g.conf);
  g.d_input.assign(static_cast<size_t>(net.cfg.input_dim), 0.0);
  return g;
}

inline void zero_grads(NetGrads& g) {
  auto clear = [](MlpGrads& m) {
    for (LayerGrads& l : m.layers) {
      std::fill(l.d_weights.begin(), l.d_weights.end(), 0.0);
      std::fill(l.d_bias.begin(), l.d_bias.end(), 0.0);
    }
  };
  clear(g.bottom);
  clear(g.watch);
  clear(g.conf);
  std::fill(g.d_input.begin(), g.d_input.end(), 0.0);
}

// Accumulates parameter gradients for one sample into `grads` given the
// loss gradients w.r.t. the head outputs. Both head paths merge at the
// shared trunk, which is how the confidence signal shapes the bottom.
inline void backward(const SharedBottomNet& net, const ForwardCache& cache,
                     const Vec& d_p, const Vec& d_c, NetGrads& grads) {
  if (static_cast<int>(d_p.size()) != net.cfg.watch_outputs)
    throw ShapeError("backward: d_p width mismatch");
  if (net.has_conf && static_cast<int>(d_c.size()) != net.cfg.conf_outputs)
    throw ShapeError("backward: d_c width mismatch");
  if (cache.bottom.inputs.empty() ||
      static_cast<int>(cache.input.size()) != net.cfg.input_dim)
    throw ShapeError("backward: cache does not match net");
  Vec d_trunk = detail::mlp_backward(net.watch_head, cache.watch, d_p,
                                     grads.watch, true);
  if (net.has_conf) {
    Vec d_trunk_c = detail::mlp_backward(net.conf_head, cache.conf, d_c,
                                         grads.conf, true);
    for (size_t i = 0; i < d_trunk.size(); ++i) d_trunk[i] += d_trunk_c[i];
  }
  Vec d_in = detail::mlp_backward(net.bottom, cache.bottom, std::move(d_trunk),
                                  grads.bottom, false);
  for (size_t i = 0; i < d_in.size(); ++i) grads.d_input[i] += d_in[i];
}

// --- flat parameter access --------------------------------------------------

namespace detail {

template <typename NetT, typename Fn>
void visit_mlp(NetT& mlp, Fn&& fn) {
  for (auto& l : mlp.layers) {
    fn(l.weights);
    fn(l.bias);
  }
}

template <typename NetT, typename Fn>
void visit_params(NetT& net, Fn&& fn) {
  visit_mlp(net.bottom, fn);
  visit_mlp(net.watch_head, fn);
  if (net.has_conf) visit_mlp(net.conf_head, fn);
}

}  // namespace detail

inline size_t param_count(const SharedBottomNet& net) {
  size_t n = 0;
  detail::visit_params(net, [&](const Vec& v) { n += v.size(); });
  return n;
}

inline Vec flatten_params(const SharedBottomNet& net) {
  Vec flat;
  flat.reserve(param_count(net));
  detail::visit_params(net,
                       [&](const Vec& v) { flat.insert(flat.end(), v.begin(), v.end()); });
  return flat;
}

inline void set_params(SharedBottomNet& net, const Vec& flat) {
  if (flat.size() != param_count(net))
    throw ShapeError("set_params: parameter count mismatch");
  size_t pos = 0;
  detail::visit_params(net, [&](Vec& v) {
    std::copy(flat.begin() + static_cast<long>(pos),
              flat.begin() + static_cast<long>(pos + v.size()), v.begin());
    pos += v.size();
  });
}

// --- optimizer --------------------------------------------------------------

// One contiguous slab of trainable parameters with its gradient.
struct ParamBlock {
  double* params = nullptr;
  const double* grads = nullptr;
  size_t n = 0;
};

enum class OptimizerMethod { Sgd, Adam };

struct OptimizerState {
  OptimizerMethod method = OptimizerMethod::Sgd;
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  Vec m;  // first-moment accumulator (Adam)
  Vec v;  // second-moment accumulator (Adam)
};

inline void apply_update(std::span<const ParamBlock> blocks,
                         OptimizerState& state) {
  size_t total = 0;
  for (const ParamBlock& b : blocks) total += b.n;
  if (state.method == OptimizerMethod::Adam) {
    if (state.m.empty()) {
      state.m.assign(total, 0.0);
      state.v.assign(total, 0.0);
    } else if (state.m.size() != total) {
      throw ShapeError("apply_update: accumulator/parameter size mismatch");
    }
  }
  state.step += 1;
  if (state.method == OptimizerMethod::Sgd) {
    for (const ParamBlock& b : blocks)
      for (size_t i = 0; i < b.n; ++i) b.params[i] -= state.lr * b.grads[i];
    return;
  }
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  size_t pos = 0;
  for (const ParamBlock& b : blocks) {
    for (size_t i = 0; i < b.n; ++i, ++pos) {
      const double g = b.grads[i];
      state.m[pos] = state.beta1 * state.m[pos] + (1.0 - state.beta1) * g;
      state.v[pos] = state.beta2 * state.v[pos] + (1.0 - state.beta2) * g * g;
      const double mhat = state.m[pos] / bc1;
      const double vhat = state.v[pos] / bc2;
      b.params[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

inline std::vector<ParamBlock> net_blocks(SharedBottomNet& net, NetGrads& g) {
  std::vector<ParamBlock> blocks;
  auto add = [&](Mlp& mlp, MlpGrads& mg) {
    for (size_t i = 0; i < mlp.layers.size(); ++i) {
      blocks.push_back({mlp.layers[i].weights.data(),
                        mg.layers[i].d_weights.data(),
                        mlp.layers[i].weights.size()});
      blocks.push_back({mlp.layers[i].bias.data(), mg.layers[i].d_bias.data(),
                        mlp.layers[i].bias.size()});
    }
  };
  add(net.bottom, g.bottom);
  add(net.watch_head, g.watch);
  if (net.has_conf) add(net.conf_head, g.conf);
  return blocks;
}

// --- finite differences -----------------------------------------------------

// Central-difference gradient of a scalar function of a parameter vector.
// The independent oracle used to check every analytic gradient in the stack.
template <typename F>
Vec finite_difference_gradient(F&& loss_fn, const Vec& params, double h) {
  if (!(h > 0.0)) throw ConfigError("finite_difference_gradient: h must be > 0");
  Vec grad(params.size());
  Vec work = params;
  for (size_t i = 0; i < params.size(); ++i) {
    work[i] = params[i] + h;
    const double fp = loss_fn(work);
    work[i] = params[i] - h;
    const double fm = loss_fn(work);
    work[i] = params[i];
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericError("finite_difference_gradient: non-finite loss at coordinate " +
                         std::to_string(i));
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

// Relative error with an absolute floor, for gradient comparisons.
inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// --- checkpoint format ------------------------------------------------------
// Versioned flat text; write -> read -> write is byte-identical.

namespace detail {

inline void write_int_list(std::ostream& os, const std::vector<int>& v) {
  os << v.size();
  for (int x : v) os << ' ' << x;
  os << '\n';
}

inline std::vector<int> read_int_list(std::istream& is) {
  size_t n = 0;
  is >> n;
  std::vector<int> v(n);
  for (size_t i = 0; i < n; ++i) is >> v[i];
  return v;
}

inline void write_param_array(std::ostream& os, const Vec& v) {
  for (size_t i = 0; i < v.size(); ++i) {
    os << (i % 8 == 0 ? (i == 0 ? "" : "\n") : " ") << fmt_full(v[i]);
  }
  if (!v.empty()) os << '\n';
}

}  // namespace detail

inline void write_net(std::ostream& os, const SharedBottomNet& net) {
  os << "net\n";
  os << "input_dim " << net.cfg.input_dim << '\n';
  os << "bottom ";
  detail::write_int_list(os, net.cfg.bottom);
  os << "watch_hidden ";
  detail::write_int_list(os, net.cfg.watch_hidden);
  os << "conf_hidden ";
  detail::write_int_list(os, net.cfg.conf_hidden);
  os << "watch_outputs " << net.cfg.watch_outputs << '\n';
  os << "conf_outputs " << net.cfg.conf_outputs << '\n';
  os << "has_conf " << (net.has_conf ? 1 : 0) << '\n';
  os << "hidden_activation relu\n";
  os << "output_activation logistic\n";
  const Vec flat = flatten_params(net);
  os << "params " << flat.size() << '\n';
  detail::write_param_array(os, flat);
  os << "end_net\n";
}

inline SharedBottomNet read_net(std::istream& is) {
  auto expect = [&](const char* tag) {
    std::string word;
    if (!(is >> word) || word != tag)
      throw DataError(std::string("checkpoint: expected '") + tag + "', got '" +
                      word + "'");
  };
  expect("net");
  NetConfig cfg;
  expect("input_dim");
  is >> cfg.input_dim;
  expect("bottom");
  cfg.bottom = detail::read_int_list(is);
  expect("watch_hidden");
  cfg.watch_hidden = detail::read_int_list(is);
  expect("conf_hidden");
  cfg.conf_hidden = detail::read_int_list(is);
  expect("watch_outputs");
  is >> cfg.watch_outputs;
  expect("conf_outputs");
  is >> cfg.conf_outputs;
  expect("has_conf");
  int has_conf = 1;
  is >> has_conf;
  expect("hidden_activation");
  std::string act;
  is >> act;
  activation_from_name(act);
  expect("output_activation");
  is >> act;
  activation_from_name(act);
  SharedBottomNet net = make_net(cfg, 0);
  net.has_conf = has_conf != 0;
  expect("params");
  size_t n = 0;
  is >> n;
  if (n != param_count(net))
    throw DataError("checkpoint: parameter count mismatch");
  Vec flat(n);
  for (size_t i = 0; i < n; ++i)
    if (!(is >> flat[i])) throw DataError("checkpoint: truncated parameters");
  set_params(net, flat);
  expect("end_net");
  return net;
}

}  // namespace exum
