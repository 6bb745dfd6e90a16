#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "adathresh/binary_io.hpp"
#include "adathresh/config.hpp"
#include "adathresh/dataset.hpp"
#include "adathresh/losses.hpp"
#include "adathresh/metrics.hpp"
#include "adathresh/model.hpp"
#include "adathresh/signals.hpp"
#include "adathresh/threshold.hpp"

namespace adt {

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_bce = 0.0;
  double train_margin = 0.0;
  bool evaluated = false;
  double eval_macro_f1 = 0.0;
  double eval_micro_f1 = 0.0;
  double eval_bce = 0.0;
  double eval_positive_ratio = 0.0;
  WeightSummary weights;

  bool operator==(const EpochRecord&) const = default;
};

struct EvalMetrics {
  ConfusionCounts counts;
  double macro_f1 = 0.0;
  double micro_f1 = 0.0;
  double bce = 0.0;  // unweighted BCE on the decision logits
  double positive_ratio = 0.0;
};

// Everything needed to score new data: parameters, the training-set IDF
// vector and the reference rows that stand in for batch labels at eval time.
struct ModelBundle {
  TrainConfig config;
  MlpParams mlp;
  ThresholdParams threshold;
  std::vector<double> idf;
  Dataset reference;
};

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

enum SeedStream : std::uint64_t { kInitStream = 1, kReferenceStream = 2, kShuffleStream = 3 };

inline std::vector<std::size_t> reference_rows(std::size_t n_train, std::size_t size,
                                               std::uint64_t seed) {
  std::vector<std::size_t> rows(n_train);
  std::iota(rows.begin(), rows.end(), 0);
  if (size >= n_train) return rows;
  std::mt19937_64 rng(mix_seed(seed, kReferenceStream));
  std::shuffle(rows.begin(), rows.end(), rng);
  rows.resize(size);
  std::sort(rows.begin(), rows.end());
  return rows;
}

inline void write_record(BinaryWriter& w, const EpochRecord& r) {
  w.u64(r.epoch);
  w.u64(r.evaluated ? 1 : 0);
  for (double v : {r.train_loss, r.train_bce, r.train_margin, r.eval_macro_f1, r.eval_micro_f1,
                   r.eval_bce, r.eval_positive_ratio, r.weights.alpha_mean, r.weights.alpha_std,
                   r.weights.beta_mean, r.weights.beta_std, r.weights.lambda})
    w.f64(v);
}

inline EpochRecord read_record(BinaryReader& r) {
  EpochRecord rec;
  rec.epoch = r.u64();
  rec.evaluated = r.u64() != 0;
  for (double* v : {&rec.train_loss, &rec.train_bce, &rec.train_margin, &rec.eval_macro_f1,
                    &rec.eval_micro_f1, &rec.eval_bce, &rec.eval_positive_ratio,
                    &rec.weights.alpha_mean, &rec.weights.alpha_std, &rec.weights.beta_mean,
                    &rec.weights.beta_std, &rec.weights.lambda})
    *v = r.f64();
  return rec;
}

inline LossConfig effective_loss(const TrainConfig& c) {
  LossConfig loss = c.loss;
  loss.epsilon = c.epsilon;
  if (c.variant == Variant::static_threshold) loss.margin_weight = 0.0;
  return loss;
}

}  // namespace detail

// Scores `data` in batches of config.batch_size. `knn` is the precomputed
// reference-set signal for all rows of `data` (ignored by variants without it).
inline EvalMetrics evaluate(const TrainConfig& config, const MlpParams& mlp,
                            const ThresholdParams& threshold, std::span<const double> idf,
                            const Dataset& data, const DenseMatrix* knn) {
  const Variant v = config.variant;
  EvalMetrics m{ConfusionCounts(data.labels.n_labels())};
  double bce_sum = 0.0;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < data.size(); start += config.batch_size) {
    const std::size_t end = std::min(data.size(), start + config.batch_size);
    rows.resize(end - start);
    std::iota(rows.begin(), rows.end(), start);
    const auto features = data.features.select(rows);
    DenseMatrix logits = forward(mlp, features).logits;
    if (config.loss.use_standardization) logits = standardize_logits(logits, config.epsilon).values;

    std::optional<DenseMatrix> batch_knn;
    if (uses_knn(v)) {
      batch_knn.emplace(rows.size(), data.labels.n_labels());
      for (std::size_t r = 0; r < rows.size(); ++r) {
        auto src = knn->row(rows[r]);
        std::copy(src.begin(), src.end(), batch_knn->row(r).begin());
      }
    }
    const DenseMatrix theta =
        variant_threshold(v, threshold, idf, batch_knn ? &*batch_knn : nullptr, rows.size());
    DenseMatrix shifted(rows.size(), data.labels.n_labels());
    DenseMatrix predicted(rows.size(), data.labels.n_labels());
    for (std::size_t k = 0; k < shifted.size(); ++k) {
      shifted.flat()[k] = logits.flat()[k] - theta.flat()[k];
      predicted.flat()[k] = shifted.flat()[k] > 0.0 ? 1.0 : 0.0;
    }
    const DenseMatrix targets = data.labels.select(rows).to_dense();
    bce_sum += bce_with_logits(shifted, targets, 1.0).loss * static_cast<double>(shifted.size());
    accumulate(m.counts, predicted, targets);
  }
  m.macro_f1 = macro_f1(m.counts);
  m.micro_f1 = micro_f1(m.counts);
  m.positive_ratio = m.counts.total_cells ? positive_ratio(m.counts) : 0.0;
  m.bce = m.counts.total_cells ? bce_sum / static_cast<double>(m.counts.total_cells) : 0.0;
  return m;
}

// Eval-time KNN signal: neighbor soft labels from the reference set, turned
// into imputed labels by vote (knn_vote > 0), then rescaled to the magnitude
// of the in-batch training signal.
inline DenseMatrix reference_knn(const TrainConfig& config, const Dataset& reference,
                                 const SparseFeatureMatrix& features) {
  ReferenceIndex index(reference.features, reference.labels);
  KnnSignal soft = knn_signal_reference(features, index, config.knn_k, config.epsilon);
  if (config.knn_vote > 0.0) soft = vote_labels(soft, config.knn_vote);
  return batch_equivalent_signal(soft, reference.labels, config.batch_size).values;
}

inline DenseMatrix reference_knn(const ModelBundle& model, const SparseFeatureMatrix& features) {
  return reference_knn(model.config, model.reference, features);
}

inline EvalMetrics evaluate(const ModelBundle& model, const Dataset& data) {
  detail::require_shape(data.labels.n_labels() == model.threshold.n_labels(),
                        "dataset label count does not match the model");
  std::optional<DenseMatrix> knn;
  if (uses_knn(model.config.variant)) knn = reference_knn(model, data.features);
  return evaluate(model.config, model.mlp, model.threshold, model.idf, data,
                  knn ? &*knn : nullptr);
}

// Test seams. on_idf sees the IDF vector once for every variant; on_knn sees
// each KNN matrix right after it is computed, which only happens for variants
// that consume it.
struct TrainerHooks {
  std::function<void(DenseMatrix&)> on_knn;
  std::function<void(std::vector<double>&)> on_idf;
};

struct RunResult {
  Variant variant = Variant::adaptive;
  EpochRecord final_record;  // record of the retained (best) epoch
  std::vector<EpochRecord> records;
  ModelBundle best_model;
};

class Trainer {
 public:
  Trainer(TrainConfig config, const Dataset& train, const Dataset& eval, TrainerHooks hooks = {})
      : config_(std::move(config)), train_(train), eval_(eval), hooks_(std::move(hooks)) {
    validate(config_);
    detail::require(train.size() >= 1 && eval.size() >= 1, ErrorCode::invalid_argument,
                    "training and eval sets must be non-empty");
    detail::require_shape(train.features.n_features() == eval.features.n_features() &&
                              train.labels.n_labels() == eval.labels.n_labels(),
                          "train/eval dimension mismatch");
    const std::size_t l = train.labels.n_labels();
    stats_ = compute_stats(train.labels, config_.epsilon);
    idf_ = idf_signal(stats_);
    if (hooks_.on_idf) hooks_.on_idf(idf_);

    const auto ref_rows =
        detail::reference_rows(train.size(), config_.reference_size, config_.seed);
    reference_ = train.select(ref_rows);
    if (uses_knn(config_.variant)) {
      eval_knn_ = reference_knn(config_, reference_, eval.features);
      if (hooks_.on_knn) hooks_.on_knn(*eval_knn_);
    }

    mlp_ = init_mlp(train.features.n_features(), l, config_.hidden_dim,
                    detail::mix_seed(config_.seed, detail::kInitStream));
    threshold_ = init_params(l, config_.seed);
    optimizer_ = make_optimizer(config_.optimizer);
    best_mlp_ = mlp_;
    best_threshold_ = threshold_;
  }

  const TrainConfig& config() const noexcept { return config_; }
  const std::vector<EpochRecord>& records() const noexcept { return records_; }
  const MlpParams& mlp() const noexcept { return mlp_; }
  const ThresholdParams& threshold() const noexcept { return threshold_; }
  const OptimizerState& optimizer() const noexcept { return optimizer_; }
  const std::vector<double>& idf() const noexcept { return idf_; }
  std::size_t epoch() const noexcept { return records_.size(); }
  bool finished() const noexcept { return stopped_ || epoch() >= config_.max_epochs; }
  bool stopped_early() const noexcept { return stopped_; }
  std::size_t best_epoch() const noexcept { return best_epoch_; }

  const EpochRecord& run_epoch() {
    const std::size_t epoch_index = epoch() + 1;
    const Variant v = config_.variant;
    const LossConfig loss_cfg = detail::effective_loss(config_);
    const std::size_t n = train_.size();

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(detail::mix_seed(
        detail::mix_seed(config_.seed, detail::kShuffleStream), epoch_index));
    std::shuffle(order.begin(), order.end(), rng);

    EpochRecord rec;
    rec.epoch = epoch_index;
    std::vector<std::size_t> rows;
    for (std::size_t start = 0, batch_no = 0; start < n; start += config_.batch_size, ++batch_no) {
      const std::size_t end = std::min(n, start + config_.batch_size);
      rows.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                  order.begin() + static_cast<std::ptrdiff_t>(end));
      const Dataset batch = train_.select(rows);
      const DenseMatrix targets = batch.labels.to_dense();

      ForwardResult fwd = forward(mlp_, batch.features);
      std::optional<DenseMatrix> knn;
      if (uses_knn(v)) {
        knn = knn_signal(batch.labels, config_.epsilon).values;
        if (hooks_.on_knn) hooks_.on_knn(*knn);
      }
      const DenseMatrix* knn_ptr = knn ? &*knn : nullptr;
      const DenseMatrix theta = variant_threshold(v, threshold_, idf_, knn_ptr, rows.size());
      LossOutput loss = composite_loss(fwd.logits, theta, targets, loss_cfg);
      if (!std::isfinite(loss.total)) {
        throw Error(ErrorCode::non_finite, "non-finite loss at epoch " +
                                               std::to_string(epoch_index) + " batch " +
                                               std::to_string(batch_no));
      }
      const double weight = static_cast<double>(rows.size()) / static_cast<double>(n);
      rec.train_loss += weight * loss.total;
      rec.train_bce += weight * loss.bce_component;
      rec.train_margin += weight * loss.margin_component;

      const MlpGrad g_mlp = backward(mlp_, fwd.cache, loss.d_logits);
      const ThresholdGrad g_thr =
          variant_threshold_backward(v, threshold_, idf_, knn_ptr, loss.d_threshold);
      sgd_step(mlp_, threshold_, g_mlp, g_thr, optimizer_);
    }

    rec.weights = summarize(v, threshold_);
    if (epoch_index % config_.eval_stride == 0 || epoch_index == config_.max_epochs) {
      const EvalMetrics m = evaluate(config_, mlp_, threshold_, idf_, eval_,
                                     eval_knn_ ? &*eval_knn_ : nullptr);
      rec.evaluated = true;
      rec.eval_macro_f1 = m.macro_f1;
      rec.eval_micro_f1 = m.micro_f1;
      rec.eval_bce = m.bce;
      rec.eval_positive_ratio = m.positive_ratio;
      if (best_epoch_ == 0 || m.macro_f1 > best_f1_) {
        best_f1_ = m.macro_f1;
        best_epoch_ = epoch_index;
        best_mlp_ = mlp_;
        best_threshold_ = threshold_;
      }
    }
    records_.push_back(rec);
    if (best_epoch_ != 0 && epoch_index - best_epoch_ >= config_.early_stop_patience)
      stopped_ = true;
    return records_.back();
  }

  void run() {
    while (!finished()) run_epoch();
  }

  ModelBundle best_model() const {
    return {config_, best_mlp_, best_threshold_, idf_, reference_};
  }

  RunResult result() const {
    RunResult r;
    r.variant = config_.variant;
    r.records = records_;
    if (best_epoch_ != 0) r.final_record = records_[best_epoch_ - 1];
    else if (!records_.empty()) r.final_record = records_.back();
    r.best_model = best_model();
    return r;
  }

  // Resumable training state:
  //   "ADTSTATE" | u64 version | u64 config hash | u64 epoch | u64 best_epoch |
  //   f64 best_f1 | u64 stopped | mlp | threshold | optimizer | best mlp |
  //   best threshold | u64 n_records | records
  void save_state(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::io, "cannot write " + path);
    detail::BinaryWriter w(out);
    w.tag("ADTSTATE");
    w.u64(kStateVersion);
    w.u64(config_hash(config_));
    w.u64(epoch());
    w.u64(best_epoch_);
    w.f64(best_f1_);
    w.u64(stopped_ ? 1 : 0);
    write_mlp(w, mlp_);
    write_threshold_params(w, threshold_);
    write_optimizer(w, optimizer_);
    write_mlp(w, best_mlp_);
    write_threshold_params(w, best_threshold_);
    w.u64(records_.size());
    for (const auto& r : records_) detail::write_record(w, r);
    if (!out) throw Error(ErrorCode::io, "write failed: " + path);
  }

  // The trainer must have been constructed with the same config and data.
  void load_state(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot open " + path);
    detail::BinaryReader r(in, path);
    r.expect_tag("ADTSTATE");
    if (r.u64() != kStateVersion) throw Error(ErrorCode::parse, path + ": unsupported version");
    if (r.u64() != config_hash(config_))
      throw Error(ErrorCode::inconsistent, path + ": state was written under a different config");
    const auto epochs = r.u64();
    best_epoch_ = r.u64();
    best_f1_ = r.f64();
    stopped_ = r.u64() != 0;
    mlp_ = read_mlp(r);
    threshold_ = read_threshold_params(r);
    optimizer_ = read_optimizer(r);
    best_mlp_ = read_mlp(r);
    best_threshold_ = read_threshold_params(r);
    const auto n = r.u64();
    if (n != epochs) throw Error(ErrorCode::parse, path + ": record count mismatch");
    records_.clear();
    for (std::uint64_t k = 0; k < n; ++k) records_.push_back(detail::read_record(r));
    detail::require_shape(mlp_.input_dim() == train_.features.n_features() &&
                              mlp_.output_dim() == train_.labels.n_labels(),
                          path + ": state dimensions do not match the dataset");
  }

 private:
  static constexpr std::uint64_t kStateVersion = 1;

  TrainConfig config_;
  const Dataset& train_;
  const Dataset& eval_;
  TrainerHooks hooks_;
  DatasetStats stats_;
  std::vector<double> idf_;
  Dataset reference_;
  std::optional<DenseMatrix> eval_knn_;

  MlpParams mlp_;
  ThresholdParams threshold_;
  OptimizerState optimizer_;
  MlpParams best_mlp_;
  ThresholdParams best_threshold_;
  double best_f1_ = -1.0;
  std::size_t best_epoch_ = 0;
  bool stopped_ = false;
  std::vector<EpochRecord> records_;
};

inline RunResult run_variant(const TrainConfig& config, const Dataset& train,
                             const Dataset& eval, TrainerHooks hooks = {}) {
  Trainer trainer(config, train, eval, std::move(hooks));
  trainer.run();
  return trainer.result();
}

// All four variants on shared data and seeds, in the order
// adaptive, knn_only, idf_only, static.
inline std::vector<RunResult> run_ablation_suite(const TrainConfig& base, const Dataset& train,
                                                 const Dataset& eval,
                                                 const std::function<void(const RunResult&)>&
                                                     on_done = {}) {
  std::vector<RunResult> results;
  for (Variant v : kAllVariants) {
    TrainConfig c = base;
    c.variant = v;
    results.push_back(run_variant(c, train, eval));
    if (on_done) on_done(results.back());
  }
  return results;
}

// ---------------------------------------------------------------------------
// Model checkpoint:
//   "ADTMODEL" | u64 version | u64 config hash | str config JSON | idf[] |
//   reference set | mlp | threshold
// Reference set: u64 D | u64 L | u64 N | per row: u64 nnz, (u32 index, f64 value)*,
//   u64 n_labels, u32 label*

inline constexpr std::uint64_t kModelFormatVersion = 1;

namespace detail {

inline void write_reference(BinaryWriter& w, const Dataset& ds) {
  w.u64(ds.features.n_features());
  w.u64(ds.labels.n_labels());
  w.u64(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto row = ds.features.row(i);
    w.u64(row.size());
    for (const auto& e : row) {
      w.pod(e.index);
      w.f64(e.value);
    }
    const auto labels = ds.labels.row(i);
    w.u64(labels.size());
    for (LabelIndex l : labels) w.pod(l);
  }
}

inline Dataset read_reference(BinaryReader& r) {
  const auto d = r.u64();
  const auto l = r.u64();
  const auto n = r.u64();
  Dataset ds{SparseFeatureMatrix(d), LabelMatrix(l)};
  std::vector<FeatureEntry> entries;
  std::vector<LabelIndex> labels;
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto nnz = r.u64();
    if (nnz > d) throw Error(ErrorCode::parse, "reference row longer than feature dim");
    entries.resize(nnz);
    for (auto& e : entries) {
      e.index = r.pod<FeatureIndex>();
      e.value = r.f64();
    }
    const auto nl = r.u64();
    if (nl > l) throw Error(ErrorCode::parse, "reference row has too many labels");
    labels.resize(nl);
    for (auto& x : labels) x = r.pod<LabelIndex>();
    ds.features.push_row(entries);
    ds.labels.push_row(labels);
  }
  return ds;
}

}  // namespace detail

inline void save_model(const std::string& path, const ModelBundle& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path);
  detail::BinaryWriter w(out);
  w.tag("ADTMODEL");
  w.u64(kModelFormatVersion);
  w.u64(config_hash(m.config));
  w.str(to_json(m.config).dump());
  w.f64s(m.idf);
  detail::write_reference(w, m.reference);
  write_mlp(w, m.mlp);
  write_threshold_params(w, m.threshold);
  if (!out) throw Error(ErrorCode::io, "write failed: " + path);
}

inline ModelBundle load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path);
  detail::BinaryReader r(in, path);
  r.expect_tag("ADTMODEL");
  const auto version = r.u64();
  if (version != kModelFormatVersion)
    throw Error(ErrorCode::parse, path + ": unsupported model version " + std::to_string(version));
  const auto hash = r.u64();
  ModelBundle m;
  try {
    apply_json(m.config, nlohmann::json::parse(r.str()));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse, path + ": bad embedded config: " + e.what());
  }
  if (config_hash(m.config) != hash)
    throw Error(ErrorCode::inconsistent, path + ": config hash mismatch");
  m.idf = r.f64s();
  m.reference = detail::read_reference(r);
  m.mlp = read_mlp(r);
  m.threshold = read_threshold_params(r);
  const std::size_t l = m.threshold.n_labels();
  detail::require_shape(m.idf.size() == l && m.mlp.output_dim() == l &&
                            m.reference.labels.n_labels() == l &&
                            m.reference.features.n_features() == m.mlp.input_dim(),
                        path + ": inconsistent checkpoint dimensions");
  return m;
}

}  // namespace adt
