#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "adathresh/dataset.hpp"
#include "adathresh/dense.hpp"
#include "adathresh/error.hpp"

namespace adt {

struct KnnSignal {
  DenseMatrix values;  // B x L
  double epsilon = kDefaultEpsilon;
  // Rows whose feature vector had zero norm (reference mode only); left at zero.
  std::vector<std::size_t> zero_norm_rows;
};

// Label-space soft KNN over a batch:
//   raw  = Y Y^T                      (shared label counts, diagonal kept)
//   norm = raw[i, j] / (|Y_i| + eps)
//   out  = norm Y
// Uses the batch's own ground-truth labels, so it is a training-time signal.
inline KnnSignal knn_signal(const LabelMatrix& batch, double epsilon = kDefaultEpsilon) {
  detail::require(epsilon > 0.0, ErrorCode::invalid_argument, "epsilon must be > 0");
  detail::require(batch.n_samples() >= 1, ErrorCode::invalid_argument, "empty batch");
  const std::size_t b = batch.n_samples();
  KnnSignal sig{DenseMatrix(b, batch.n_labels()), epsilon, {}};
  std::vector<double> weight(b);
  for (std::size_t i = 0; i < b; ++i) {
    const auto yi = batch.row(i);
    if (yi.empty()) continue;
    const double denom = static_cast<double>(yi.size()) + epsilon;
    for (std::size_t j = 0; j < b; ++j) {
      const auto yj = batch.row(j);
      std::size_t shared = 0;
      auto a = yi.begin();
      auto c = yj.begin();
      while (a != yi.end() && c != yj.end()) {
        if (*a < *c) {
          ++a;
        } else if (*c < *a) {
          ++c;
        } else {
          ++shared;
          ++a;
          ++c;
        }
      }
      weight[j] = static_cast<double>(shared) / denom;
    }
    auto out = sig.values.row(i);
    for (std::size_t j = 0; j < b; ++j) {
      if (weight[j] == 0.0) continue;
      for (LabelIndex l : batch.row(j)) out[l] += weight[j];
    }
  }
  return sig;
}

inline const std::vector<double>& idf_signal(const DatasetStats& stats) { return stats.idf; }

// Feature-space neighbor lookup used when batch labels are unknown (evaluation).
// Reference rows are L2-normalized once; queries use an inverted index.
class ReferenceIndex {
 public:
  ReferenceIndex(const SparseFeatureMatrix& features, const LabelMatrix& labels)
      : labels_(labels), postings_(features.n_features()) {
    detail::require(features.n_samples() >= 1, ErrorCode::invalid_argument,
                    "reference set must be non-empty");
    detail::require_shape(features.n_samples() == labels.n_samples(),
                          "reference features/labels row mismatch");
    for (std::size_t r = 0; r < features.n_samples(); ++r) {
      const double norm = features.row_norm(r);
      if (norm == 0.0) continue;
      for (const auto& e : features.row(r))
        postings_[e.index].push_back({static_cast<FeatureIndex>(r), e.value / norm});
    }
  }

  std::size_t size() const noexcept { return labels_.n_samples(); }
  std::size_t n_features() const noexcept { return postings_.size(); }
  const LabelMatrix& labels() const noexcept { return labels_; }

  // Cosine similarity of a query row against every reference row.
  void similarities(std::span<const FeatureEntry> query, double query_norm,
                    std::vector<double>& out) const {
    out.assign(size(), 0.0);
    for (const auto& q : query) {
      const double qv = q.value / query_norm;
      for (const auto& p : postings_[q.index]) out[p.index] += qv * p.value;
    }
  }

 private:
  LabelMatrix labels_;
  std::vector<std::vector<FeatureEntry>> postings_;
};

// For each query row: the k most cosine-similar reference rows (ties -> lower
// index), label vectors averaged with weights sim / (sum sim + eps).
// Negative similarities carry zero weight.
inline KnnSignal knn_signal_reference(const SparseFeatureMatrix& batch,
                                      const ReferenceIndex& reference, std::size_t k,
                                      double epsilon = kDefaultEpsilon) {
  detail::require(k >= 1, ErrorCode::invalid_argument, "k must be >= 1");
  detail::require(epsilon > 0.0, ErrorCode::invalid_argument, "epsilon must be > 0");
  detail::require_shape(batch.n_features() == reference.n_features(),
                        "query/reference feature dimension mismatch");
  const std::size_t n_ref = reference.size();
  const std::size_t kk = std::min(k, n_ref);
  KnnSignal sig{DenseMatrix(batch.n_samples(), reference.labels().n_labels()), epsilon, {}};

  std::vector<double> sim;
  std::vector<std::size_t> order(n_ref);
  for (std::size_t i = 0; i < batch.n_samples(); ++i) {
    const double qn = batch.row_norm(i);
    if (qn == 0.0) {
      sig.zero_norm_rows.push_back(i);
      continue;
    }
    reference.similarities(batch.row(i), qn, sim);
    for (std::size_t r = 0; r < n_ref; ++r) order[r] = r;
    auto better = [&](std::size_t a, std::size_t b) {
      return sim[a] > sim[b] || (sim[a] == sim[b] && a < b);
    };
    std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(kk - 1),
                     order.end(), better);
    std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(kk), better);

    double total = 0.0;
    for (std::size_t t = 0; t < kk; ++t) total += std::max(sim[order[t]], 0.0);
    const double denom = total + epsilon;
    auto out = sig.values.row(i);
    for (std::size_t t = 0; t < kk; ++t) {
      const double w = std::max(sim[order[t]], 0.0) / denom;
      if (w == 0.0) continue;
      for (LabelIndex l : reference.labels().row(order[t])) out[l] += w;
    }
  }
  return sig;
}

// Neighbor label votes: entries with soft score >= cut become 1, the rest 0.
// Turns neighbor soft labels into an imputed label set for the query row.
inline KnnSignal vote_labels(const KnnSignal& soft, double cut) {
  detail::require(cut > 0.0 && cut <= 1.0, ErrorCode::invalid_argument,
                  "vote cut must be in (0, 1]");
  KnnSignal out{soft.values, soft.epsilon, soft.zero_norm_rows};
  for (double& v : out.values.flat()) v = v >= cut ? 1.0 : 0.0;
  return out;
}

// Eval-time stand-in for the batch signal. Unknown query labels are replaced
// by their neighbor soft labels y_hat; the rest of a training batch of size
// `batch_size` is emulated by the reference rows, rescaled by
// (batch_size - 1) / n_ref:
//   out[x, l] = y_hat[x, l]
//             + (batch_size - 1) / n_ref * sum_j (y_hat_x . y_j) / (|y_hat_x|_1 + eps) * y_j[l]
// The first term matches the diagonal of the training signal (weight ~1).
inline KnnSignal batch_equivalent_signal(const KnnSignal& soft, const LabelMatrix& reference,
                                         std::size_t batch_size) {
  detail::require_shape(soft.values.cols() == reference.n_labels(),
                        "soft labels / reference label count mismatch");
  detail::require(reference.n_samples() >= 1 && batch_size >= 1, ErrorCode::invalid_argument,
                  "reference set and batch size must be non-empty");
  const double scale = static_cast<double>(batch_size - 1) /
                       static_cast<double>(reference.n_samples());
  KnnSignal out{soft.values, soft.epsilon, soft.zero_norm_rows};
  for (std::size_t i = 0; i < soft.values.rows(); ++i) {
    const auto y_hat = soft.values.row(i);
    double mass = 0.0;
    for (double v : y_hat) mass += v;
    if (mass == 0.0) continue;
    const double denom = mass + soft.epsilon;
    auto dst = out.values.row(i);
    for (std::size_t j = 0; j < reference.n_samples(); ++j) {
      const auto yj = reference.row(j);
      double shared = 0.0;
      for (LabelIndex l : yj) shared += y_hat[l];
      if (shared == 0.0) continue;
      const double w = scale * shared / denom;
      for (LabelIndex l : yj) dst[l] += w;
    }
  }
  return out;
}

}  // namespace adt
