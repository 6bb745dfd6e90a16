#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "adathresh/binary_io.hpp"
#include "adathresh/dataset.hpp"
#include "adathresh/dense.hpp"
#include "adathresh/error.hpp"
#include "adathresh/threshold.hpp"

namespace adt {

// One hidden layer: logits = W2 relu(W1 x + b1) + b2.
//
// W1 is stored transposed (D x hidden) so the sparse first-layer product
// walks contiguous rows: w1t(j, h) == W1[h][j].
struct MlpParams {
  DenseMatrix w1t;  // D x H
  std::vector<double> b1;
  DenseMatrix w2;  // L x H
  std::vector<double> b2;

  std::size_t input_dim() const noexcept { return w1t.rows(); }
  std::size_t hidden_dim() const noexcept { return w1t.cols(); }
  std::size_t output_dim() const noexcept { return w2.rows(); }

  bool operator==(const MlpParams&) const = default;
};

using MlpGrad = MlpParams;

inline std::size_t parameter_count(std::size_t d, std::size_t hidden, std::size_t l) {
  return d * hidden + hidden + hidden * l + l;
}

inline std::size_t parameter_count(const MlpParams& p) {
  return parameter_count(p.input_dim(), p.hidden_dim(), p.output_dim());
}

inline MlpParams zero_like(const MlpParams& p) {
  return {DenseMatrix(p.w1t.rows(), p.w1t.cols()), std::vector<double>(p.b1.size(), 0.0),
          DenseMatrix(p.w2.rows(), p.w2.cols()), std::vector<double>(p.b2.size(), 0.0)};
}

// Uniform in +-1/sqrt(fan_in) for weights and biases of each layer.
inline MlpParams init_mlp(std::size_t d, std::size_t l, std::size_t hidden, std::uint64_t seed) {
  detail::require(d >= 1 && l >= 1 && hidden >= 1, ErrorCode::invalid_argument,
                  "mlp dimensions must be >= 1");
  std::mt19937_64 rng(seed);
  MlpParams p{DenseMatrix(d, hidden), std::vector<double>(hidden), DenseMatrix(l, hidden),
              std::vector<double>(l)};
  const double bound1 = 1.0 / std::sqrt(static_cast<double>(d));
  const double bound2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  std::uniform_real_distribution<double> u1(-bound1, bound1);
  std::uniform_real_distribution<double> u2(-bound2, bound2);
  for (double& w : p.w1t.flat()) w = u1(rng);
  for (double& b : p.b1) b = u1(rng);
  for (double& w : p.w2.flat()) w = u2(rng);
  for (double& b : p.b2) b = u2(rng);
  return p;
}

struct MlpCache {
  SparseFeatureMatrix input;
  DenseMatrix pre_activation;  // B x H
  DenseMatrix hidden;          // B x H
};

struct ForwardResult {
  DenseMatrix logits;  // B x L
  MlpCache cache;
};

inline ForwardResult forward(const MlpParams& p, const SparseFeatureMatrix& batch) {
  detail::require_shape(batch.n_features() == p.input_dim(),
                        "batch feature dim " + std::to_string(batch.n_features()) +
                            " != model input dim " + std::to_string(p.input_dim()));
  const std::size_t b = batch.n_samples();
  const std::size_t h = p.hidden_dim();
  const std::size_t l = p.output_dim();
  ForwardResult out{DenseMatrix(b, l), {batch, DenseMatrix(b, h), DenseMatrix(b, h)}};
  for (std::size_t i = 0; i < b; ++i) {
    auto pre = out.cache.pre_activation.row(i);
    std::copy(p.b1.begin(), p.b1.end(), pre.begin());
    for (const auto& e : batch.row(i)) {
      const auto w = p.w1t.row(e.index);
      for (std::size_t k = 0; k < h; ++k) pre[k] += e.value * w[k];
    }
    auto act = out.cache.hidden.row(i);
    for (std::size_t k = 0; k < h; ++k) act[k] = pre[k] > 0.0 ? pre[k] : 0.0;
    auto z = out.logits.row(i);
    for (std::size_t o = 0; o < l; ++o) {
      const auto w = p.w2.row(o);
      double s = p.b2[o];
      for (std::size_t k = 0; k < h; ++k) s += w[k] * act[k];
      z[o] = s;
    }
  }
  return out;
}

// relu'(0) := 0.
inline MlpGrad backward(const MlpParams& p, const MlpCache& cache, const DenseMatrix& d_logits) {
  const std::size_t b = cache.input.n_samples();
  const std::size_t h = p.hidden_dim();
  const std::size_t l = p.output_dim();
  detail::require_shape(cache.hidden.rows() == b && cache.hidden.cols() == h &&
                            cache.input.n_features() == p.input_dim(),
                        "stale forward cache");
  detail::require_shape(d_logits.rows() == b && d_logits.cols() == l,
                        "d_logits shape mismatch");
  MlpGrad g = zero_like(p);
  std::vector<double> d_act(h);
  for (std::size_t i = 0; i < b; ++i) {
    const auto dz = d_logits.row(i);
    const auto act = cache.hidden.row(i);
    const auto pre = cache.pre_activation.row(i);
    std::fill(d_act.begin(), d_act.end(), 0.0);
    for (std::size_t o = 0; o < l; ++o) {
      const double d = dz[o];
      if (d == 0.0) continue;
      g.b2[o] += d;
      auto gw = g.w2.row(o);
      const auto w = p.w2.row(o);
      for (std::size_t k = 0; k < h; ++k) {
        gw[k] += d * act[k];
        d_act[k] += d * w[k];
      }
    }
    for (std::size_t k = 0; k < h; ++k) {
      if (!(pre[k] > 0.0)) d_act[k] = 0.0;
      g.b1[k] += d_act[k];
    }
    for (const auto& e : cache.input.row(i)) {
      auto gw = g.w1t.row(e.index);
      for (std::size_t k = 0; k < h; ++k) gw[k] += e.value * d_act[k];
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Optimizer

enum class OptimizerKind { sgd, adam };

inline std::string_view to_string(OptimizerKind k) noexcept {
  return k == OptimizerKind::sgd ? "sgd" : "adam";
}

inline OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  throw Error(ErrorCode::invalid_argument, "unknown optimizer \"" + std::string(s) + "\"");
}

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd;
  double learning_rate = 1e-3;
  // Multiplier on the learning rate for the threshold parameters (alpha, beta,
  // bias, lambda_raw).
  double threshold_lr_scale = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  OptimizerConfig config;
  std::uint64_t step = 0;
  // Adam moments, one entry per trainable tensor in visit order; empty for SGD.
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;

  bool operator==(const OptimizerState& o) const {
    return step == o.step && first_moment == o.first_moment &&
           second_moment == o.second_moment;
  }
};

// Visits every trainable tensor as (name, params, grads) in a fixed order.
using TensorVisitor =
    std::function<void(std::string_view, std::span<double>, std::span<const double>)>;

inline void visit_trainable(MlpParams& p, ThresholdParams& t, const MlpGrad& gp,
                            const ThresholdGrad& gt, const TensorVisitor& fn) {
  fn("w1", p.w1t.flat(), gp.w1t.flat());
  fn("b1", p.b1, gp.b1);
  fn("w2", p.w2.flat(), gp.w2.flat());
  fn("b2", p.b2, gp.b2);
  fn("alpha", t.alpha, gt.d_alpha);
  fn("beta", t.beta, gt.d_beta);
  fn("bias", t.bias, gt.d_bias);
  fn("lambda_raw", std::span<double>(&t.lambda_raw, 1),
     std::span<const double>(&gt.d_lambda_raw, 1));
}

// visit_trainable order: the first four tensors belong to the MLP.
inline constexpr std::size_t kMlpTensors = 4;

inline OptimizerState make_optimizer(const OptimizerConfig& config) {
  detail::require(config.learning_rate > 0.0, ErrorCode::invalid_argument,
                  "learning_rate must be > 0");
  detail::require(config.threshold_lr_scale > 0.0, ErrorCode::invalid_argument,
                  "threshold_lr_scale must be > 0");
  return OptimizerState{config, 0, {}, {}};
}

// Plain SGD: p -= lr * g. Adam: bias-corrected moment estimates.
inline void sgd_step(MlpParams& p, ThresholdParams& t, const MlpGrad& gp,
                     const ThresholdGrad& gt, OptimizerState& state) {
  detail::require_shape(gp.w1t.same_shape(p.w1t) && gp.w2.same_shape(p.w2) &&
                            gp.b1.size() == p.b1.size() && gp.b2.size() == p.b2.size(),
                        "mlp gradient shape mismatch");
  detail::require_shape(gt.d_alpha.size() == t.alpha.size() &&
                            gt.d_beta.size() == t.beta.size() &&
                            gt.d_bias.size() == t.bias.size(),
                        "threshold gradient shape mismatch");
  visit_trainable(p, t, gp, gt, [](std::string_view name, std::span<double>,
                                   std::span<const double> g) {
    for (double v : g)
      if (!std::isfinite(v))
        throw Error(ErrorCode::non_finite, "non-finite gradient in tensor " + std::string(name));
  });

  const auto& cfg = state.config;
  ++state.step;
  if (cfg.kind == OptimizerKind::sgd) {
    std::size_t tensor = 0;
    visit_trainable(p, t, gp, gt,
                    [&](std::string_view, std::span<double> w, std::span<const double> g) {
                      const double lr = tensor++ < kMlpTensors
                                            ? cfg.learning_rate
                                            : cfg.learning_rate * cfg.threshold_lr_scale;
                      for (std::size_t k = 0; k < w.size(); ++k) w[k] -= lr * g[k];
                    });
    return;
  }

  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  std::size_t tensor = 0;
  visit_trainable(p, t, gp, gt, [&](std::string_view, std::span<double> w,
                                    std::span<const double> g) {
    if (state.first_moment.size() <= tensor) {
      state.first_moment.emplace_back(w.size(), 0.0);
      state.second_moment.emplace_back(w.size(), 0.0);
    }
    auto& m = state.first_moment[tensor];
    auto& v = state.second_moment[tensor];
    detail::require_shape(m.size() == w.size(), "optimizer state shape mismatch");
    const double lr =
        tensor < kMlpTensors ? cfg.learning_rate : cfg.learning_rate * cfg.threshold_lr_scale;
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      w[k] -= lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
    ++tensor;
  });
}

// ---------------------------------------------------------------------------
// Serialization: "ADTMLP01" | D | H | L | w1t | b1 | w2 | b2

inline void write_mlp(detail::BinaryWriter& w, const MlpParams& p) {
  w.tag("ADTMLP01");
  w.u64(p.input_dim());
  w.u64(p.hidden_dim());
  w.u64(p.output_dim());
  w.f64s({p.w1t.flat().begin(), p.w1t.flat().end()});
  w.f64s(p.b1);
  w.f64s({p.w2.flat().begin(), p.w2.flat().end()});
  w.f64s(p.b2);
}

inline MlpParams read_mlp(detail::BinaryReader& r) {
  r.expect_tag("ADTMLP01");
  const auto d = r.u64();
  const auto h = r.u64();
  const auto l = r.u64();
  MlpParams p{DenseMatrix(d, h), {}, DenseMatrix(l, h), {}};
  p.w1t.storage() = r.f64s(d * h);
  p.b1 = r.f64s(h);
  p.w2.storage() = r.f64s(l * h);
  p.b2 = r.f64s(l);
  return p;
}

inline void write_optimizer(detail::BinaryWriter& w, const OptimizerState& s) {
  w.tag("ADTOPT01");
  w.u64(s.config.kind == OptimizerKind::sgd ? 0 : 1);
  w.f64(s.config.learning_rate);
  w.f64(s.config.threshold_lr_scale);
  w.f64(s.config.beta1);
  w.f64(s.config.beta2);
  w.f64(s.config.epsilon);
  w.u64(s.step);
  w.u64(s.first_moment.size());
  for (std::size_t k = 0; k < s.first_moment.size(); ++k) {
    w.f64s(s.first_moment[k]);
    w.f64s(s.second_moment[k]);
  }
}

inline OptimizerState read_optimizer(detail::BinaryReader& r) {
  r.expect_tag("ADTOPT01");
  OptimizerState s;
  s.config.kind = r.u64() == 0 ? OptimizerKind::sgd : OptimizerKind::adam;
  s.config.learning_rate = r.f64();
  s.config.threshold_lr_scale = r.f64();
  s.config.beta1 = r.f64();
  s.config.beta2 = r.f64();
  s.config.epsilon = r.f64();
  s.step = r.u64();
  const auto n = r.u64();
  if (n > 64) throw Error(ErrorCode::parse, "optimizer state: too many tensors");
  for (std::uint64_t k = 0; k < n; ++k) {
    s.first_moment.push_back(r.f64s());
    s.second_moment.push_back(r.f64s());
  }
  return s;
}

}  // namespace adt
