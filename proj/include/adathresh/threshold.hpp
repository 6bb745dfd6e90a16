#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "adathresh/binary_io.hpp"
#include "adathresh/dense.hpp"
#include "adathresh/error.hpp"
#include "adathresh/signals.hpp"

namespace adt {

// Which threshold terms are active.
//   adaptive : theta = s*alpha*idf + (1-s)*beta*knn + b,  s = sigmoid(lambda_raw)
//   idf_only : theta = alpha*idf + b
//   knn_only : theta = beta*knn + b
//   static   : theta = 0, plain sigmoid(z) > 0.5 decision
enum class Variant { adaptive, idf_only, knn_only, static_threshold };

inline constexpr Variant kAllVariants[] = {Variant::adaptive, Variant::knn_only,
                                           Variant::idf_only, Variant::static_threshold};

inline std::string_view to_string(Variant v) noexcept {
  switch (v) {
    case Variant::adaptive: return "adaptive";
    case Variant::idf_only: return "idf_only";
    case Variant::knn_only: return "knn_only";
    case Variant::static_threshold: return "static";
  }
  return "?";
}

inline Variant parse_variant(std::string_view s) {
  for (Variant v : kAllVariants)
    if (to_string(v) == s) return v;
  throw Error(ErrorCode::invalid_argument, "unknown variant \"" + std::string(s) + "\"");
}

inline bool uses_idf(Variant v) noexcept {
  return v == Variant::adaptive || v == Variant::idf_only;
}
inline bool uses_knn(Variant v) noexcept {
  return v == Variant::adaptive || v == Variant::knn_only;
}

inline double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

struct ThresholdParams {
  std::vector<double> alpha;
  std::vector<double> beta;
  std::vector<double> bias;
  double lambda_raw = 0.0;  // blend weight is sigmoid(lambda_raw)

  std::size_t n_labels() const noexcept { return alpha.size(); }
  double lambda() const noexcept { return sigmoid(lambda_raw); }

  bool operator==(const ThresholdParams&) const = default;
};

struct ThresholdGrad {
  std::vector<double> d_alpha;
  std::vector<double> d_beta;
  std::vector<double> d_bias;
  double d_lambda_raw = 0.0;

  explicit ThresholdGrad(std::size_t n_labels = 0)
      : d_alpha(n_labels, 0.0), d_beta(n_labels, 0.0), d_bias(n_labels, 0.0) {}
};

// alpha = beta = 1, bias = 0, lambda = 0.5. The seed is accepted for API
// symmetry with the MLP initializer; the initialization is fixed.
inline ThresholdParams init_params(std::size_t n_labels, std::uint64_t /*seed*/ = 0) {
  detail::require(n_labels >= 1, ErrorCode::invalid_argument, "n_labels must be >= 1");
  return {std::vector<double>(n_labels, 1.0), std::vector<double>(n_labels, 1.0),
          std::vector<double>(n_labels, 0.0), 0.0};
}

namespace detail {

inline void check_threshold_shapes(const ThresholdParams& p, std::span<const double> idf,
                                   const DenseMatrix* knn, std::size_t rows) {
  const std::size_t l = p.n_labels();
  require_shape(p.beta.size() == l && p.bias.size() == l, "threshold params length mismatch");
  require_shape(idf.size() == l, "idf length " + std::to_string(idf.size()) +
                                     " != n_labels " + std::to_string(l));
  if (knn) {
    require_shape(knn->cols() == l, "knn signal has wrong label count");
    require_shape(knn->rows() == rows, "knn signal has wrong row count");
  }
}

}  // namespace detail

inline DenseMatrix compute_threshold(const ThresholdParams& params,
                                     std::span<const double> idf, const DenseMatrix& knn) {
  const std::size_t b = knn.rows();
  detail::check_threshold_shapes(params, idf, &knn, b);
  const double s = params.lambda();
  DenseMatrix theta(b, params.n_labels());
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t l = 0; l < params.n_labels(); ++l) {
      theta(i, l) = s * params.alpha[l] * idf[l] +
                    (1.0 - s) * params.beta[l] * knn(i, l) + params.bias[l];
    }
  }
  return theta;
}

inline DenseMatrix compute_threshold(const ThresholdParams& params,
                                     std::span<const double> idf, const KnnSignal& knn) {
  return compute_threshold(params, idf, knn.values);
}

inline ThresholdGrad threshold_backward(const ThresholdParams& params,
                                        std::span<const double> idf, const DenseMatrix& knn,
                                        const DenseMatrix& upstream) {
  const std::size_t b = knn.rows();
  detail::check_threshold_shapes(params, idf, &knn, b);
  detail::require_shape(upstream.same_shape(knn), "upstream gradient shape mismatch");
  const double s = params.lambda();
  const double ds = s * (1.0 - s);
  ThresholdGrad g(params.n_labels());
  double lam = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t l = 0; l < params.n_labels(); ++l) {
      const double u = upstream(i, l);
      const double k = knn(i, l);
      g.d_alpha[l] += u * s * idf[l];
      g.d_beta[l] += u * (1.0 - s) * k;
      g.d_bias[l] += u;
      lam += u * (params.alpha[l] * idf[l] - params.beta[l] * k);
    }
  }
  g.d_lambda_raw = ds * lam;
  return g;
}

inline ThresholdGrad threshold_backward(const ThresholdParams& params,
                                        std::span<const double> idf, const KnnSignal& knn,
                                        const DenseMatrix& upstream) {
  return threshold_backward(params, idf, knn.values, upstream);
}

// Threshold for a variant. `knn` may be null for variants that do not use it;
// pinned terms are skipped outright rather than multiplied by zero.
inline DenseMatrix variant_threshold(Variant v, const ThresholdParams& params,
                                     std::span<const double> idf, const DenseMatrix* knn,
                                     std::size_t rows) {
  const std::size_t n_labels = params.n_labels();
  if (v == Variant::static_threshold) return DenseMatrix(rows, n_labels, 0.0);
  detail::require(!uses_knn(v) || knn != nullptr, ErrorCode::invalid_argument,
                  "variant requires a knn signal");
  detail::check_threshold_shapes(params, idf, uses_knn(v) ? knn : nullptr, rows);
  if (v == Variant::adaptive) return compute_threshold(params, idf, *knn);
  DenseMatrix theta(rows, n_labels);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t l = 0; l < n_labels; ++l) {
      theta(i, l) = params.bias[l] + (v == Variant::idf_only
                                          ? params.alpha[l] * idf[l]
                                          : params.beta[l] * (*knn)(i, l));
    }
  }
  return theta;
}

inline ThresholdGrad variant_threshold_backward(Variant v, const ThresholdParams& params,
                                                std::span<const double> idf,
                                                const DenseMatrix* knn,
                                                const DenseMatrix& upstream) {
  const std::size_t n_labels = params.n_labels();
  if (v == Variant::static_threshold) return ThresholdGrad(n_labels);
  if (v == Variant::adaptive) {
    detail::require(knn != nullptr, ErrorCode::invalid_argument, "variant requires a knn signal");
    return threshold_backward(params, idf, *knn, upstream);
  }
  detail::require(!uses_knn(v) || knn != nullptr, ErrorCode::invalid_argument,
                  "variant requires a knn signal");
  detail::check_threshold_shapes(params, idf, uses_knn(v) ? knn : nullptr, upstream.rows());
  detail::require_shape(upstream.cols() == n_labels, "upstream gradient shape mismatch");
  ThresholdGrad g(n_labels);
  for (std::size_t i = 0; i < upstream.rows(); ++i) {
    for (std::size_t l = 0; l < n_labels; ++l) {
      const double u = upstream(i, l);
      g.d_bias[l] += u;
      if (v == Variant::idf_only)
        g.d_alpha[l] += u * idf[l];
      else
        g.d_beta[l] += u * (*knn)(i, l);
    }
  }
  return g;
}

// Blend weight actually in effect: pinned to 1 / 0 for the single-signal
// ablations; the static baseline reports the untouched stored value.
inline double effective_lambda(Variant v, const ThresholdParams& params) noexcept {
  switch (v) {
    case Variant::idf_only: return 1.0;
    case Variant::knn_only: return 0.0;
    default: return params.lambda();
  }
}

// ---------------------------------------------------------------------------

struct StandardizedLogits {
  DenseMatrix values;
  double mean = 0.0;
  double std = 0.0;
  double epsilon = kDefaultEpsilon;
};

// z_hat = (z - mu) / (sigma + eps) with mu, sigma (population) over all entries.
inline StandardizedLogits standardize_logits(const DenseMatrix& logits,
                                             double epsilon = kDefaultEpsilon) {
  detail::require(epsilon > 0.0, ErrorCode::invalid_argument, "epsilon must be > 0");
  StandardizedLogits out{DenseMatrix(logits.rows(), logits.cols()), 0.0, 0.0, epsilon};
  const auto flat = logits.flat();
  if (flat.empty()) return out;
  const auto n = static_cast<double>(flat.size());
  // Shifted by the first entry so a constant batch gets an exact mean; with a
  // tiny epsilon any rounding residue would otherwise be blown up.
  double shift = 0.0;
  for (double z : flat) shift += z - flat[0];
  const double mean = flat[0] + shift / n;
  double var = 0.0;
  for (double z : flat) var += (z - mean) * (z - mean);
  var /= n;
  out.mean = mean;
  out.std = std::sqrt(var);
  const double scale = 1.0 / (out.std + epsilon);
  auto dst = out.values.flat();
  for (std::size_t k = 0; k < flat.size(); ++k) dst[k] = (flat[k] - mean) * scale;
  return out;
}

// ---------------------------------------------------------------------------

struct WeightSummary {
  double alpha_mean = 0.0;
  double alpha_std = 0.0;
  double beta_mean = 0.0;
  double beta_std = 0.0;
  double lambda = 0.0;

  bool operator==(const WeightSummary&) const = default;
};

namespace detail {
inline std::pair<double, double> mean_std(std::span<const double> v) {
  if (v.empty()) return {0.0, 0.0};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - m) * (x - m);
  return {m, std::sqrt(var / static_cast<double>(v.size()))};
}
}  // namespace detail

inline WeightSummary summarize(Variant v, const ThresholdParams& params) {
  WeightSummary s;
  std::tie(s.alpha_mean, s.alpha_std) = detail::mean_std(params.alpha);
  std::tie(s.beta_mean, s.beta_std) = detail::mean_std(params.beta);
  s.lambda = effective_lambda(v, params);
  return s;
}

// ---------------------------------------------------------------------------
// Checkpoint record:
//   "ADTTHRSH" | u64 version (=1) | u64 L | alpha[L] | beta[L] | bias[L] | f64 lambda_raw
// Each array is prefixed with its u64 length. All values little-endian.

inline constexpr std::uint64_t kThresholdFormatVersion = 1;

inline void write_threshold_params(detail::BinaryWriter& w, const ThresholdParams& p) {
  w.tag("ADTTHRSH");
  w.u64(kThresholdFormatVersion);
  w.u64(p.n_labels());
  w.f64s(p.alpha);
  w.f64s(p.beta);
  w.f64s(p.bias);
  w.f64(p.lambda_raw);
}

inline ThresholdParams read_threshold_params(detail::BinaryReader& r) {
  r.expect_tag("ADTTHRSH");
  const auto version = r.u64();
  if (version != kThresholdFormatVersion)
    throw Error(ErrorCode::parse, "unsupported threshold record version " + std::to_string(version));
  const auto l = r.u64();
  ThresholdParams p;
  p.alpha = r.f64s(l);
  p.beta = r.f64s(l);
  p.bias = r.f64s(l);
  p.lambda_raw = r.f64();
  return p;
}

inline void save_threshold_params(const std::string& path, const ThresholdParams& p) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path);
  detail::BinaryWriter w(out);
  write_threshold_params(w, p);
  if (!out) throw Error(ErrorCode::io, "write failed: " + path);
}

inline ThresholdParams load_threshold_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path);
  detail::BinaryReader r(in, path);
  return read_threshold_params(r);
}

}  // namespace adt
