#pragma once

// Test-only reference implementations. These deliberately avoid the library's
// code paths: dense loops, no sparsity tricks, textbook formulas.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "adathresh/dataset.hpp"
#include "adathresh/dense.hpp"

namespace oracle {

using Dense = std::vector<std::vector<double>>;

// knn_raw = Y Y^T; knn_norm[i][j] = raw[i][j] / (sum_k Y[i][k] + eps); out = knn_norm Y.
inline Dense knn_triple_loop(const Dense& y, double eps) {
  const std::size_t b = y.size();
  const std::size_t l = b ? y[0].size() : 0;
  Dense raw(b, std::vector<double>(b, 0.0));
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j)
      for (std::size_t k = 0; k < l; ++k) raw[i][j] += y[i][k] * y[j][k];
  Dense norm(b, std::vector<double>(b, 0.0));
  for (std::size_t i = 0; i < b; ++i) {
    double count = 0.0;
    for (std::size_t k = 0; k < l; ++k) count += y[i][k];
    for (std::size_t j = 0; j < b; ++j) norm[i][j] = raw[i][j] / (count + eps);
  }
  Dense out(b, std::vector<double>(l, 0.0));
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t k = 0; k < l; ++k)
      for (std::size_t j = 0; j < b; ++j) out[i][k] += norm[i][j] * y[j][k];
  return out;
}

inline Dense random_binary(std::mt19937_64& rng, std::size_t rows, std::size_t cols,
                           double density) {
  std::bernoulli_distribution on(density);
  Dense y(rows, std::vector<double>(cols, 0.0));
  for (auto& row : y)
    for (auto& v : row) v = on(rng) ? 1.0 : 0.0;
  return y;
}

inline adt::LabelMatrix to_labels(const Dense& y) {
  adt::LabelMatrix m(y.empty() ? 0 : y[0].size());
  for (const auto& row : y) {
    std::vector<adt::LabelIndex> pos;
    for (std::size_t k = 0; k < row.size(); ++k)
      if (row[k] != 0.0) pos.push_back(static_cast<adt::LabelIndex>(k));
    m.push_row(pos);
  }
  return m;
}

inline adt::DenseMatrix to_matrix(const Dense& d) {
  adt::DenseMatrix m(d.size(), d.empty() ? 0 : d[0].size());
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = 0; j < d[i].size(); ++j) m(i, j) = d[i][j];
  return m;
}

inline adt::DenseMatrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols,
                                      double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  adt::DenseMatrix m(rows, cols);
  for (double& v : m.flat()) v = u(rng);
  return m;
}

inline adt::DenseMatrix random_targets(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
  std::bernoulli_distribution on(0.4);
  adt::DenseMatrix m(rows, cols);
  for (double& v : m.flat()) v = on(rng) ? 1.0 : 0.0;
  return m;
}

// Central difference of f with respect to x[k]; x is restored afterwards.
inline double central_difference(const std::function<double()>& f, double& x, double step) {
  const double orig = x;
  x = orig + step;
  const double up = f();
  x = orig - step;
  const double down = f();
  x = orig;
  return (up - down) / (2.0 * step);
}

// |a - b| / max(|a|, |b|, floor): relative error with an absolute floor so
// near-zero gradients are not judged by relative noise.
inline double rel_error(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace oracle
