#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "adathresh/dense.hpp"
#include "adathresh/error.hpp"
#include "adathresh/threshold.hpp"

namespace adt {

struct LossConfig {
  double margin = 0.1;         // hinge offset
  double margin_weight = 0.1;  // weight of the hinge term in the total
  double pos_weight = 1.0;     // BCE weight on positive entries
  bool use_standardization = false;
  double epsilon = kDefaultEpsilon;  // standardization guard
};

inline void validate(const LossConfig& c) {
  detail::require(c.margin >= 0.0, ErrorCode::invalid_argument, "margin must be >= 0");
  detail::require(c.margin_weight >= 0.0, ErrorCode::invalid_argument,
                  "margin_weight must be >= 0");
  detail::require(c.pos_weight > 0.0, ErrorCode::invalid_argument, "pos_weight must be > 0");
}

struct LossOutput {
  double total = 0.0;
  double bce_component = 0.0;
  double margin_component = 0.0;
  DenseMatrix d_logits;
  DenseMatrix d_threshold;
};

struct BceResult {
  double loss = 0.0;
  DenseMatrix grad;  // d loss / d shifted
};

struct MarginResult {
  double loss = 0.0;
  DenseMatrix d_logits;
  DenseMatrix d_thresholds;
};

// log(1 + e^x) without overflow.
inline double softplus(double x) noexcept {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

// Mean over all B*L entries of
//   y=1: pos_weight * log(1 + e^-s)      y=0: log(1 + e^s)
inline BceResult bce_with_logits(const DenseMatrix& shifted, const DenseMatrix& targets,
                                 double pos_weight = 1.0) {
  detail::require_shape(shifted.same_shape(targets), "bce: shifted/targets shape mismatch");
  detail::require(pos_weight > 0.0, ErrorCode::invalid_argument, "pos_weight must be > 0");
  BceResult out{0.0, DenseMatrix(shifted.rows(), shifted.cols())};
  const auto s = shifted.flat();
  const auto y = targets.flat();
  auto g = out.grad.flat();
  if (s.empty()) return out;
  const double inv_n = 1.0 / static_cast<double>(s.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (!std::isfinite(s[k])) throw Error(ErrorCode::non_finite, "bce: non-finite logit");
    if (y[k] == 1.0) {
      sum += pos_weight * softplus(-s[k]);
      g[k] = pos_weight * (sigmoid(s[k]) - 1.0) * inv_n;
    } else if (y[k] == 0.0) {
      sum += softplus(s[k]);
      g[k] = sigmoid(s[k]) * inv_n;
    } else {
      throw Error(ErrorCode::invalid_argument, "bce: targets must be 0 or 1");
    }
  }
  out.loss = sum * inv_n;
  return out;
}

// Mean hinge: y=1 -> max(0, theta - z + margin), y=0 -> max(0, z - theta + margin).
// Subgradient is 0 at the kink.
inline MarginResult margin_loss(const DenseMatrix& logits, const DenseMatrix& thresholds,
                                const DenseMatrix& targets, double margin = 0.1) {
  detail::require_shape(logits.same_shape(thresholds) && logits.same_shape(targets),
                        "margin: shape mismatch");
  MarginResult out{0.0, DenseMatrix(logits.rows(), logits.cols()),
                   DenseMatrix(logits.rows(), logits.cols())};
  const auto z = logits.flat();
  const auto t = thresholds.flat();
  const auto y = targets.flat();
  auto dz = out.d_logits.flat();
  auto dt = out.d_thresholds.flat();
  if (z.empty()) return out;
  const double inv_n = 1.0 / static_cast<double>(z.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    const double sign = y[k] == 1.0 ? -1.0 : 1.0;  // direction in which z is penalized
    const double h = sign * (z[k] - t[k]) + margin;
    if (h > 0.0) {
      sum += h;
      dz[k] = sign * inv_n;
      dt[k] = -sign * inv_n;
    }
  }
  out.loss = sum * inv_n;
  return out;
}

// total = BCE(z - theta, y) + margin_weight * Margin(z, theta, y). With
// standardization on, z is replaced by (z - mu) / (sigma + eps) with mu, sigma
// held constant for the backward pass.
inline LossOutput composite_loss(const DenseMatrix& logits, const DenseMatrix& thresholds,
                                 const DenseMatrix& targets, const LossConfig& config) {
  validate(config);
  detail::require_shape(logits.same_shape(thresholds) && logits.same_shape(targets),
                        "composite: shape mismatch");
  double scale = 1.0;
  StandardizedLogits standardized;
  const DenseMatrix* z = &logits;
  if (config.use_standardization) {
    standardized = standardize_logits(logits, config.epsilon);
    scale = 1.0 / (standardized.std + config.epsilon);
    z = &standardized.values;
  }

  DenseMatrix shifted(z->rows(), z->cols());
  {
    auto dst = shifted.flat();
    const auto zs = z->flat();
    const auto ts = thresholds.flat();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = zs[k] - ts[k];
  }
  BceResult bce = bce_with_logits(shifted, targets, config.pos_weight);

  LossOutput out;
  out.bce_component = bce.loss;
  out.d_logits = bce.grad;
  out.d_threshold = DenseMatrix(logits.rows(), logits.cols());
  {
    auto dt = out.d_threshold.flat();
    const auto g = bce.grad.flat();
    for (std::size_t k = 0; k < dt.size(); ++k) dt[k] = -g[k];
  }

  if (config.margin_weight > 0.0) {
    MarginResult m = margin_loss(*z, thresholds, targets, config.margin);
    out.margin_component = m.loss;
    auto dz = out.d_logits.flat();
    auto dt = out.d_threshold.flat();
    const auto mz = m.d_logits.flat();
    const auto mt = m.d_thresholds.flat();
    for (std::size_t k = 0; k < dz.size(); ++k) {
      dz[k] += config.margin_weight * mz[k];
      dt[k] += config.margin_weight * mt[k];
    }
  }
  out.total = out.bce_component + config.margin_weight * out.margin_component;
  if (scale != 1.0)
    for (double& g : out.d_logits.flat()) g *= scale;
  return out;
}

}  // namespace adt
