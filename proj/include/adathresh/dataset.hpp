#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "adathresh/dense.hpp"
#include "adathresh/error.hpp"

namespace adt {

using FeatureIndex = std::uint32_t;
using LabelIndex = std::uint32_t;

// Default guard used by the IDF prior and the KNN row normalization.
inline constexpr double kDefaultEpsilon = 1e-12;

struct FeatureEntry {
  FeatureIndex index = 0;
  double value = 0.0;

  bool operator==(const FeatureEntry&) const = default;
};

// Row-sparse (CSR) real-valued feature matrix, N x D.
class SparseFeatureMatrix {
 public:
  SparseFeatureMatrix() = default;
  explicit SparseFeatureMatrix(std::size_t n_features) : n_features_(n_features) {}

  std::size_t n_samples() const noexcept { return offsets_.size() - 1; }
  std::size_t n_features() const noexcept { return n_features_; }
  std::size_t nnz() const noexcept { return entries_.size(); }

  std::span<const FeatureEntry> row(std::size_t i) const {
    return {entries_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
  }

  // Appends a row; indices must be strictly increasing, in range, values finite.
  void push_row(std::span<const FeatureEntry> entries) {
    for (std::size_t k = 0; k < entries.size(); ++k) {
      const auto& e = entries[k];
      if (e.index >= n_features_) {
        throw Error(ErrorCode::out_of_range,
                    "feature index " + std::to_string(e.index) + " >= n_features " +
                        std::to_string(n_features_));
      }
      if (k > 0 && entries[k - 1].index >= e.index) {
        throw Error(ErrorCode::parse, "feature indices must be strictly increasing");
      }
      if (!std::isfinite(e.value)) {
        throw Error(ErrorCode::non_finite, "non-finite feature value");
      }
    }
    entries_.insert(entries_.end(), entries.begin(), entries.end());
    offsets_.push_back(entries_.size());
  }

  double row_norm(std::size_t i) const {
    double s = 0.0;
    for (const auto& e : row(i)) s += e.value * e.value;
    return std::sqrt(s);
  }

  SparseFeatureMatrix select(std::span<const std::size_t> rows) const {
    SparseFeatureMatrix out(n_features_);
    for (std::size_t r : rows) out.push_row(row(r));
    return out;
  }

  bool operator==(const SparseFeatureMatrix&) const = default;

 private:
  std::size_t n_features_ = 0;
  std::vector<std::size_t> offsets_{0};
  std::vector<FeatureEntry> entries_;
};

// Binary label assignments stored as sorted positive-label lists per row.
class LabelMatrix {
 public:
  LabelMatrix() = default;
  explicit LabelMatrix(std::size_t n_labels) : n_labels_(n_labels) {}

  std::size_t n_samples() const noexcept { return offsets_.size() - 1; }
  std::size_t n_labels() const noexcept { return n_labels_; }
  std::size_t total_positives() const noexcept { return labels_.size(); }

  std::span<const LabelIndex> row(std::size_t i) const {
    return {labels_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
  }

  // Appends a row given in any order; duplicates and out-of-range indices throw.
  void push_row(std::span<const LabelIndex> row_labels) {
    std::vector<LabelIndex> sorted(row_labels.begin(), row_labels.end());
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t k = 0; k < sorted.size(); ++k) {
      if (sorted[k] >= n_labels_) {
        throw Error(ErrorCode::out_of_range,
                    "label index " + std::to_string(sorted[k]) + " >= n_labels " +
                        std::to_string(n_labels_));
      }
      if (k > 0 && sorted[k - 1] == sorted[k]) {
        throw Error(ErrorCode::duplicate_label,
                    "duplicate label " + std::to_string(sorted[k]));
      }
    }
    labels_.insert(labels_.end(), sorted.begin(), sorted.end());
    offsets_.push_back(labels_.size());
  }

  bool contains(std::size_t i, LabelIndex l) const {
    auto r = row(i);
    return std::binary_search(r.begin(), r.end(), l);
  }

  LabelMatrix select(std::span<const std::size_t> rows) const {
    LabelMatrix out(n_labels_);
    for (std::size_t r : rows) out.push_row(row(r));
    return out;
  }

  DenseMatrix to_dense() const {
    DenseMatrix out(n_samples(), n_labels_);
    for (std::size_t i = 0; i < n_samples(); ++i)
      for (LabelIndex l : row(i)) out(i, l) = 1.0;
    return out;
  }

  bool operator==(const LabelMatrix&) const = default;

 private:
  std::size_t n_labels_ = 0;
  std::vector<std::size_t> offsets_{0};
  std::vector<LabelIndex> labels_;
};

struct Dataset {
  SparseFeatureMatrix features;
  LabelMatrix labels;

  std::size_t size() const noexcept { return features.n_samples(); }

  Dataset select(std::span<const std::size_t> rows) const {
    return {features.select(rows), labels.select(rows)};
  }

  bool operator==(const Dataset&) const = default;
};

struct DatasetStats {
  std::size_t n_samples = 0;
  std::vector<std::size_t> label_freq;
  std::vector<double> idf;
  double epsilon = kDefaultEpsilon;
};

// idf[l] = ln(N / (f_l + epsilon)); natural log.
inline DatasetStats compute_stats(const LabelMatrix& labels,
                                  double epsilon = kDefaultEpsilon) {
  detail::require(epsilon > 0.0, ErrorCode::invalid_argument, "epsilon must be > 0");
  DatasetStats stats;
  stats.n_samples = labels.n_samples();
  stats.epsilon = epsilon;
  stats.label_freq.assign(labels.n_labels(), 0);
  for (std::size_t i = 0; i < labels.n_samples(); ++i)
    for (LabelIndex l : labels.row(i)) ++stats.label_freq[l];
  stats.idf.resize(labels.n_labels());
  const auto n = static_cast<double>(stats.n_samples);
  for (std::size_t l = 0; l < labels.n_labels(); ++l)
    stats.idf[l] = std::log(n / (static_cast<double>(stats.label_freq[l]) + epsilon));
  return stats;
}

// ---------------------------------------------------------------------------
// Text format
//
// features: first line "N D L", then N lines of "index:value" pairs.
// labels:   N lines of comma-separated label indices; blank line = no labels.

namespace detail {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Splits on '\n'; a trailing newline does not start a new line. Strips '\r'.
inline std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

inline bool is_space(char c) { return c == ' ' || c == '\t'; }

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  s = trim(s);
  if (s.empty()) return false;
  if constexpr (std::is_floating_point_v<T>) {
    if (s.front() == '+') s.remove_prefix(1);
  }
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

inline std::vector<std::string_view> split_tokens(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && is_space(line[i])) ++i;
    std::size_t j = i;
    while (j < line.size() && !is_space(line[j])) ++j;
    if (j > i) tokens.push_back(line.substr(i, j - i));
    i = j;
  }
  return tokens;
}

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace detail

inline Dataset load_dataset(const std::string& features_path,
                            const std::string& labels_path) {
  using detail::parse_number;
  const std::string ftext = detail::read_file(features_path);
  const auto flines = detail::split_lines(ftext);
  if (flines.empty()) throw Error(ErrorCode::parse, features_path, 1, "missing header");

  const auto header = detail::split_tokens(flines[0]);
  std::size_t n = 0, d = 0, l = 0;
  if (header.size() != 3 || !parse_number(header[0], n) || !parse_number(header[1], d) ||
      !parse_number(header[2], l)) {
    throw Error(ErrorCode::parse, features_path, 1, "header must be \"N D L\"");
  }
  if (flines.size() - 1 != n) {
    throw Error(ErrorCode::inconsistent, features_path, flines.size(),
                "header declares " + std::to_string(n) + " samples, found " +
                    std::to_string(flines.size() - 1) + " rows");
  }

  Dataset ds{SparseFeatureMatrix(d), LabelMatrix(l)};
  std::vector<FeatureEntry> entries;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lineno = i + 2;
    entries.clear();
    for (auto tok : detail::split_tokens(flines[i + 1])) {
      const auto colon = tok.find(':');
      FeatureEntry e;
      if (colon == std::string_view::npos || !parse_number(tok.substr(0, colon), e.index) ||
          !parse_number(tok.substr(colon + 1), e.value)) {
        throw Error(ErrorCode::parse, features_path, lineno,
                    "malformed pair \"" + std::string(tok) + "\"");
      }
      entries.push_back(e);
    }
    try {
      ds.features.push_row(entries);
    } catch (const Error& err) {
      throw Error(err.code(), features_path, lineno, err.what());
    }
  }

  const std::string ltext = detail::read_file(labels_path);
  const auto llines = detail::split_lines(ltext);
  if (llines.size() != n) {
    throw Error(ErrorCode::inconsistent, labels_path, llines.size(),
                "expected " + std::to_string(n) + " label rows, found " +
                    std::to_string(llines.size()));
  }
  std::vector<LabelIndex> row;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lineno = i + 1;
    row.clear();
    std::string_view line = detail::trim(llines[i]);
    if (!line.empty()) {
      std::size_t start = 0;
      while (true) {
        std::size_t comma = line.find(',', start);
        auto tok = line.substr(start, comma == std::string_view::npos ? line.npos
                                                                       : comma - start);
        LabelIndex idx = 0;
        if (!parse_number(tok, idx)) {
          throw Error(ErrorCode::parse, labels_path, lineno,
                      "malformed label \"" + std::string(tok) + "\"");
        }
        row.push_back(idx);
        if (comma == std::string_view::npos) break;
        start = comma + 1;
      }
    }
    try {
      ds.labels.push_row(row);
    } catch (const Error& err) {
      throw Error(err.code(), labels_path, lineno, err.what());
    }
  }
  return ds;
}

// Values are written in shortest round-trip form, so write/load is lossless.
inline void write_dataset(const Dataset& ds, const std::string& features_path,
                          const std::string& labels_path) {
  std::ofstream f(features_path, std::ios::binary);
  if (!f) throw Error(ErrorCode::io, "cannot write " + features_path);
  f << ds.features.n_samples() << ' ' << ds.features.n_features() << ' '
    << ds.labels.n_labels() << '\n';
  for (std::size_t i = 0; i < ds.features.n_samples(); ++i) {
    bool first = true;
    for (const auto& e : ds.features.row(i)) {
      if (!first) f << ' ';
      first = false;
      f << e.index << ':' << detail::format_double(e.value);
    }
    f << '\n';
  }
  std::ofstream lab(labels_path, std::ios::binary);
  if (!lab) throw Error(ErrorCode::io, "cannot write " + labels_path);
  for (std::size_t i = 0; i < ds.labels.n_samples(); ++i) {
    bool first = true;
    for (LabelIndex l : ds.labels.row(i)) {
      if (!first) lab << ',';
      first = false;
      lab << l;
    }
    lab << '\n';
  }
  if (!f || !lab) throw Error(ErrorCode::io, "write failed");
}

// ---------------------------------------------------------------------------
// Synthetic long-tailed corpus

struct SyntheticSpec {
  std::size_t n_samples = 5000;
  std::size_t n_labels = 200;
  std::size_t n_features = 1000;
  double zipf_exponent = 1.2;
  double mean_labels_per_sample = 3.0;
  std::uint64_t seed = 42;
  // Feature construction: each label owns a sparse signature direction; the
  // summed counts are TF-IDF weighted at the end.
  std::size_t signature_size = 8;
  std::size_t noise_features = 20;
  double noise_scale = 0.6;
};

inline void validate(const SyntheticSpec& spec) {
  using detail::require;
  require(spec.n_samples >= 1 && spec.n_labels >= 1 && spec.n_features >= 1,
          ErrorCode::invalid_argument, "synthetic counts must be >= 1");
  require(spec.zipf_exponent > 0.0, ErrorCode::invalid_argument,
          "zipf_exponent must be > 0");
  require(spec.mean_labels_per_sample > 0.0 &&
              spec.mean_labels_per_sample <= static_cast<double>(spec.n_labels),
          ErrorCode::invalid_argument, "mean_labels_per_sample must be in (0, n_labels]");
  require(spec.signature_size >= 1 && spec.signature_size <= spec.n_features,
          ErrorCode::invalid_argument, "signature_size must be in [1, n_features]");
}

// Target occurrence count per label: proportional to (rank+1)^-s over a budget
// of N * mean positives, clamped to [1, N]. Non-increasing in label index.
inline std::vector<std::size_t> zipf_label_counts(const SyntheticSpec& spec) {
  std::vector<double> weight(spec.n_labels);
  for (std::size_t l = 0; l < spec.n_labels; ++l)
    weight[l] = std::pow(static_cast<double>(l + 1), -spec.zipf_exponent);
  const double total = std::accumulate(weight.begin(), weight.end(), 0.0);
  const double budget = static_cast<double>(spec.n_samples) * spec.mean_labels_per_sample;
  std::vector<std::size_t> counts(spec.n_labels);
  for (std::size_t l = 0; l < spec.n_labels; ++l) {
    auto c = static_cast<std::size_t>(std::llround(budget * weight[l] / total));
    counts[l] = std::clamp<std::size_t>(c, 1, spec.n_samples);
  }
  return counts;
}

// Reweights every entry by ln(N / df_j), df_j being the number of rows that
// contain feature j, then L2-normalizes each row. Features present in every
// row get weight 0 and are dropped.
inline SparseFeatureMatrix tfidf_transform(const SparseFeatureMatrix& m) {
  const std::size_t n = m.n_samples();
  std::vector<double> df(m.n_features(), 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (const auto& e : m.row(i)) df[e.index] += 1.0;
  SparseFeatureMatrix out(m.n_features());
  std::vector<FeatureEntry> row;
  for (std::size_t i = 0; i < n; ++i) {
    row.assign(m.row(i).begin(), m.row(i).end());
    double norm = 0.0;
    for (auto& e : row) {
      e.value *= std::log(static_cast<double>(n) / df[e.index]);
      norm += e.value * e.value;
    }
    norm = std::sqrt(norm);
    std::erase_if(row, [](const FeatureEntry& e) { return e.value == 0.0; });
    for (auto& e : row) e.value /= norm;
    out.push_row(row);
  }
  return out;
}

inline Dataset generate_synthetic(const SyntheticSpec& spec) {
  validate(spec);
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Labels: each label picks its target number of distinct samples.
  const auto counts = zipf_label_counts(spec);
  std::vector<std::vector<LabelIndex>> rows(spec.n_samples);
  std::vector<std::size_t> pool(spec.n_samples);
  std::iota(pool.begin(), pool.end(), 0);
  for (std::size_t l = 0; l < spec.n_labels; ++l) {
    for (std::size_t k = 0; k < counts[l]; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, spec.n_samples - 1);
      std::swap(pool[k], pool[pick(rng)]);
      rows[pool[k]].push_back(static_cast<LabelIndex>(l));
    }
  }

  // Signatures: distinct feature indices with weights in [0.5, 1.5].
  std::vector<std::vector<FeatureEntry>> signature(spec.n_labels);
  std::vector<FeatureIndex> fpool(spec.n_features);
  std::iota(fpool.begin(), fpool.end(), 0);
  for (auto& sig : signature) {
    for (std::size_t k = 0; k < spec.signature_size; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, spec.n_features - 1);
      std::swap(fpool[k], fpool[pick(rng)]);
      sig.push_back({fpool[k], 0.5 + unit(rng)});
    }
  }

  Dataset ds{SparseFeatureMatrix(spec.n_features), LabelMatrix(spec.n_labels)};
  std::vector<double> dense(spec.n_features, 0.0);
  std::vector<FeatureIndex> touched;
  std::vector<FeatureEntry> entries;
  std::uniform_int_distribution<FeatureIndex> any_feature(
      0, static_cast<FeatureIndex>(spec.n_features - 1));
  for (std::size_t i = 0; i < spec.n_samples; ++i) {
    auto add = [&](FeatureIndex j, double v) {
      if (dense[j] == 0.0) touched.push_back(j);
      dense[j] += v;
    };
    for (LabelIndex l : rows[i]) {
      const double scale = 0.5 + unit(rng);
      for (const auto& e : signature[l]) add(e.index, scale * e.value);
    }
    for (std::size_t k = 0; k < spec.noise_features; ++k)
      add(any_feature(rng), spec.noise_scale * unit(rng));

    std::sort(touched.begin(), touched.end());
    double norm = 0.0;
    for (FeatureIndex j : touched) norm += dense[j] * dense[j];
    norm = std::sqrt(norm);
    entries.clear();
    for (FeatureIndex j : touched) {
      if (dense[j] != 0.0) entries.push_back({j, dense[j] / norm});
      dense[j] = 0.0;
    }
    touched.clear();
    ds.features.push_row(entries);
    ds.labels.push_row(rows[i]);
  }
  ds.features = tfidf_transform(ds.features);
  return ds;
}

// ---------------------------------------------------------------------------

struct Split {
  Dataset train;
  Dataset eval;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> eval_rows;
};

// Random disjoint partition; the eval side holds round(N * fraction) rows,
// clamped so neither side is empty. Rows keep their original order.
inline Split train_eval_split(const Dataset& ds, double eval_fraction, std::uint64_t seed) {
  detail::require(eval_fraction > 0.0 && eval_fraction < 1.0, ErrorCode::invalid_argument,
                  "eval_fraction must be in (0, 1)");
  const std::size_t n = ds.size();
  detail::require(n >= 2, ErrorCode::invalid_argument,
                  "split needs at least 2 samples so both sides are non-empty");
  auto n_eval = static_cast<std::size_t>(std::llround(static_cast<double>(n) * eval_fraction));
  n_eval = std::clamp<std::size_t>(n_eval, 1, n - 1);

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);

  Split split;
  split.eval_rows.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_eval));
  split.train_rows.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_eval), perm.end());
  std::sort(split.eval_rows.begin(), split.eval_rows.end());
  std::sort(split.train_rows.begin(), split.train_rows.end());
  split.train = ds.select(split.train_rows);
  split.eval = ds.select(split.eval_rows);
  return split;
}

}  // namespace adt
