#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "adathresh/dense.hpp"
#include "adathresh/error.hpp"

namespace adt {

// Streaming confusion counts; merge() is associative and commutative.
struct ConfusionCounts {
  std::vector<std::uint64_t> tp, fp, fn;
  std::uint64_t total_predicted_positive = 0;
  std::uint64_t total_cells = 0;

  ConfusionCounts() = default;
  explicit ConfusionCounts(std::size_t n_labels)
      : tp(n_labels, 0), fp(n_labels, 0), fn(n_labels, 0) {}

  std::size_t n_labels() const noexcept { return tp.size(); }

  void merge(const ConfusionCounts& other) {
    detail::require_shape(other.n_labels() == n_labels(), "merge: label count mismatch");
    for (std::size_t l = 0; l < n_labels(); ++l) {
      tp[l] += other.tp[l];
      fp[l] += other.fp[l];
      fn[l] += other.fn[l];
    }
    total_predicted_positive += other.total_predicted_positive;
    total_cells += other.total_cells;
  }

  bool operator==(const ConfusionCounts&) const = default;
};

// predictions/targets: B x L, nonzero = positive.
inline void accumulate(ConfusionCounts& counts, const DenseMatrix& predictions,
                       const DenseMatrix& targets) {
  detail::require_shape(predictions.same_shape(targets), "accumulate: shape mismatch");
  detail::require_shape(predictions.cols() == counts.n_labels(),
                        "accumulate: label count mismatch");
  for (std::size_t i = 0; i < predictions.rows(); ++i) {
    for (std::size_t l = 0; l < predictions.cols(); ++l) {
      const bool p = predictions(i, l) != 0.0;
      const bool t = targets(i, l) != 0.0;
      if (p) ++counts.total_predicted_positive;
      if (p && t) ++counts.tp[l];
      else if (p) ++counts.fp[l];
      else if (t) ++counts.fn[l];
    }
  }
  counts.total_cells += predictions.size();
}

inline double f1_from_counts(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn) noexcept {
  const std::uint64_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

// Unweighted mean over all labels, absent labels included; 0/0 := 0.
inline double macro_f1(const ConfusionCounts& c) {
  detail::require(c.n_labels() >= 1, ErrorCode::invalid_argument, "macro_f1: no labels");
  double sum = 0.0;
  for (std::size_t l = 0; l < c.n_labels(); ++l) sum += f1_from_counts(c.tp[l], c.fp[l], c.fn[l]);
  return sum / static_cast<double>(c.n_labels());
}

inline double micro_f1(const ConfusionCounts& c) {
  detail::require(c.n_labels() >= 1, ErrorCode::invalid_argument, "micro_f1: no labels");
  std::uint64_t tp = 0, fp = 0, fn = 0;
  for (std::size_t l = 0; l < c.n_labels(); ++l) {
    tp += c.tp[l];
    fp += c.fp[l];
    fn += c.fn[l];
  }
  return f1_from_counts(tp, fp, fn);
}

// Predicted-positive fraction of all sample x label cells.
inline double positive_ratio(const ConfusionCounts& c) {
  detail::require(c.total_cells > 0, ErrorCode::invalid_argument, "positive_ratio: no cells");
  return static_cast<double>(c.total_predicted_positive) / static_cast<double>(c.total_cells);
}

}  // namespace adt
