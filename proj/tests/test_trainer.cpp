#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "adathresh/adathresh.hpp"

namespace fs = std::filesystem;

namespace {

struct Corpus {
  adt::Dataset train, eval;
};

const Corpus& corpus() {
  static const Corpus c = [] {
    adt::SyntheticSpec spec;
    spec.n_samples = 300;
    spec.n_labels = 20;
    spec.n_features = 120;
    spec.mean_labels_per_sample = 2.0;
    spec.seed = 5;
    auto split = adt::train_eval_split(adt::generate_synthetic(spec), 0.25, 5);
    return Corpus{std::move(split.train), std::move(split.eval)};
  }();
  return c;
}

adt::TrainConfig small_config(adt::Variant v, std::size_t epochs = 6) {
  adt::TrainConfig c;
  c.variant = v;
  c.max_epochs = epochs;
  c.batch_size = 32;
  c.hidden_dim = 16;
  c.reference_size = 128;
  c.optimizer.kind = adt::OptimizerKind::adam;
  c.optimizer.learning_rate = 1e-2;
  c.seed = 11;
  return c;
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("adt_trainer_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST(Trainer, StaticKeepsZeroThresholdAndPlainDecision) {
  const auto& d = corpus();
  const auto cfg = small_config(adt::Variant::static_threshold);
  adt::Trainer t(cfg, d.train, d.eval);
  t.run();
  EXPECT_EQ(t.threshold(), adt::init_params(d.train.labels.n_labels()));
  for (const auto& r : t.records()) EXPECT_EQ(r.train_margin, 0.0);

  // Decision equals sigmoid(z) > 0.5 on the eval split.
  const auto model = t.best_model();
  const auto z = adt::forward(model.mlp, d.eval.features).logits;
  adt::DenseMatrix pred(z.rows(), z.cols());
  for (std::size_t k = 0; k < z.size(); ++k) pred.flat()[k] = adt::sigmoid(z.flat()[k]) > 0.5;
  adt::ConfusionCounts c(z.cols());
  adt::accumulate(c, pred, d.eval.labels.to_dense());
  EXPECT_EQ(adt::evaluate(model, d.eval).counts, c);
}

TEST(Trainer, IdfOnlyPinsLambdaToOne) {
  const auto& d = corpus();
  const auto run = adt::run_variant(small_config(adt::Variant::idf_only), d.train, d.eval);
  ASSERT_EQ(run.records.size(), 6u);
  for (const auto& r : run.records) {
    EXPECT_EQ(r.weights.lambda, 1.0);
    EXPECT_EQ(r.weights.beta_mean, 1.0);
  }
}

TEST(Trainer, IdfOnlyNeverTouchesKnn) {
  const auto& d = corpus();
  const auto cfg = small_config(adt::Variant::idf_only);
  const auto plain = adt::run_variant(cfg, d.train, d.eval);
  int calls = 0;
  adt::TrainerHooks hooks;
  hooks.on_knn = [&](adt::DenseMatrix& m) {
    ++calls;
    m.fill(std::numeric_limits<double>::quiet_NaN());
  };
  const auto poisoned = adt::run_variant(cfg, d.train, d.eval, hooks);
  EXPECT_EQ(calls, 0);
  EXPECT_EQ(poisoned.records, plain.records);
  EXPECT_EQ(poisoned.best_model.mlp, plain.best_model.mlp);
}

TEST(Trainer, KnnOnlyNeverReadsIdf) {
  const auto& d = corpus();
  const auto cfg = small_config(adt::Variant::knn_only);
  const auto plain = adt::run_variant(cfg, d.train, d.eval);
  adt::TrainerHooks hooks;
  hooks.on_idf = [](std::vector<double>& idf) {
    for (double& v : idf) v = std::numeric_limits<double>::quiet_NaN();
  };
  const auto poisoned = adt::run_variant(cfg, d.train, d.eval, hooks);
  EXPECT_EQ(poisoned.records, plain.records);
  EXPECT_EQ(poisoned.best_model.mlp, plain.best_model.mlp);
  for (const auto& r : plain.records) EXPECT_EQ(r.weights.lambda, 0.0);
}

TEST(Trainer, AdaptiveNeedsFiniteKnn) {
  const auto& d = corpus();
  adt::TrainerHooks hooks;
  hooks.on_knn = [](adt::DenseMatrix& m) { m(0, 0) = std::numeric_limits<double>::infinity(); };
  try {
    adt::run_variant(small_config(adt::Variant::adaptive), d.train, d.eval, hooks);
    FAIL() << "expected a non-finite error";
  } catch (const adt::Error& e) {
    EXPECT_EQ(e.code(), adt::ErrorCode::non_finite);
  }
}

TEST(Trainer, ResumeIsBitwiseIdentical) {
  const auto& d = corpus();
  for (auto kind : {adt::OptimizerKind::sgd, adt::OptimizerKind::adam}) {
    auto cfg = small_config(adt::Variant::adaptive, 8);
    cfg.optimizer.kind = kind;
    cfg.optimizer.learning_rate = kind == adt::OptimizerKind::sgd ? 5.0 : 1e-2;
    adt::Trainer straight(cfg, d.train, d.eval);
    straight.run();

    const auto path = (scratch("resume") / "state.bin").string();
    {
      adt::Trainer first(cfg, d.train, d.eval);
      for (int k = 0; k < 3; ++k) first.run_epoch();
      first.save_state(path);
    }
    adt::Trainer resumed(cfg, d.train, d.eval);
    resumed.load_state(path);
    EXPECT_EQ(resumed.epoch(), 3u);
    resumed.run();

    EXPECT_EQ(resumed.records(), straight.records());
    EXPECT_EQ(resumed.mlp(), straight.mlp());
    EXPECT_EQ(resumed.threshold(), straight.threshold());
    EXPECT_EQ(resumed.optimizer(), straight.optimizer());

    auto other = cfg;
    other.hidden_dim = 8;
    adt::Trainer mismatch(other, d.train, d.eval);
    EXPECT_THROW(mismatch.load_state(path), adt::Error);
  }
}

TEST(Trainer, EarlyStoppingKeepsBestEpoch) {
  const auto& d = corpus();
  auto cfg = small_config(adt::Variant::adaptive, 400);
  cfg.early_stop_patience = 3;
  const auto run = adt::run_variant(cfg, d.train, d.eval);
  ASSERT_LT(run.records.size(), 400u);
  double best = -1.0;
  for (const auto& r : run.records) best = std::max(best, r.eval_macro_f1);
  EXPECT_EQ(run.final_record.eval_macro_f1, best);
  EXPECT_EQ(run.records.size(), run.final_record.epoch + cfg.early_stop_patience);
  // Strict improvement only: the best epoch is the first to reach the max.
  for (const auto& r : run.records)
    if (r.epoch < run.final_record.epoch) {
      EXPECT_LT(r.eval_macro_f1, best);
    }
}

TEST(Trainer, EvalStrideSkipsEpochs) {
  const auto& d = corpus();
  auto cfg = small_config(adt::Variant::idf_only, 7);
  cfg.eval_stride = 3;
  const auto run = adt::run_variant(cfg, d.train, d.eval);
  ASSERT_EQ(run.records.size(), 7u);
  for (const auto& r : run.records)
    EXPECT_EQ(r.evaluated, r.epoch % 3 == 0 || r.epoch == 7) << r.epoch;
}

TEST(Trainer, VoteCutChangesOnlyEvalSignal) {
  const auto& d = corpus();
  auto soft = small_config(adt::Variant::knn_only, 3);
  soft.knn_vote = 0.0;
  auto voted = soft;
  voted.knn_vote = 0.5;
  const auto a = adt::run_variant(soft, d.train, d.eval);
  const auto b = adt::run_variant(voted, d.train, d.eval);
  // Training never sees the reference set, so the losses agree; eval does not.
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t e = 0; e < a.records.size(); ++e) {
    EXPECT_EQ(a.records[e].train_loss, b.records[e].train_loss);
    EXPECT_EQ(a.records[e].weights, b.records[e].weights);
  }
  const auto ka = adt::reference_knn(soft, d.train, d.eval.features);
  const auto kb = adt::reference_knn(voted, d.train, d.eval.features);
  double diff = 0.0;
  for (std::size_t k = 0; k < ka.size(); ++k) diff += std::abs(ka.flat()[k] - kb.flat()[k]);
  EXPECT_GT(diff, 1e-6);
  for (double v : kb.flat()) EXPECT_GE(v, 0.0);
}

TEST(Trainer, RejectsBadInput) {
  const auto& d = corpus();
  auto cfg = small_config(adt::Variant::adaptive);
  cfg.batch_size = 0;
  EXPECT_THROW(adt::Trainer(cfg, d.train, d.eval), adt::Error);
  cfg = small_config(adt::Variant::adaptive);
  cfg.knn_vote = 1.5;
  EXPECT_THROW(adt::Trainer(cfg, d.train, d.eval), adt::Error);
  adt::Dataset empty{adt::SparseFeatureMatrix(d.train.features.n_features()),
                     adt::LabelMatrix(d.train.labels.n_labels())};
  EXPECT_THROW(adt::Trainer(small_config(adt::Variant::adaptive), empty, d.eval), adt::Error);
}

TEST(Artifacts, TenEpochRun) {
  const auto& d = corpus();
  const auto run = adt::run_variant(small_config(adt::Variant::adaptive, 10), d.train, d.eval);
  const auto dir = scratch("artifacts");
  adt::emit_artifacts(run, dir);

  const auto metrics = adt::parse_csv(slurp(dir / "metrics.csv"));
  EXPECT_EQ(metrics.rows.size(), 10u);
  for (const char* col : {"epoch", "split", "variant", "macro_f1", "micro_f1", "bce",
                          "positive_ratio"})
    EXPECT_NO_THROW(metrics.column(col)) << col;

  const auto weights = adt::parse_csv(slurp(dir / "weights.csv"));
  ASSERT_EQ(weights.rows.size(), 10u);
  const auto li = weights.column("lambda");
  for (const auto& row : weights.rows) {
    const double lambda = std::stod(row[li]);
    EXPECT_GT(lambda, 0.0);
    EXPECT_LT(lambda, 1.0);
  }

  const auto summary = adt::parse_csv(slurp(dir / "summary.csv"));
  ASSERT_EQ(summary.rows.size(), 1u);
  EXPECT_EQ(summary.rows[0][summary.column("variant")], "adaptive");

  // Each plot holds exactly the CSV series it claims, one point per row.
  const auto f1_plot = adt::parse_plot_series(slurp(dir / "macro_f1.svg"));
  ASSERT_EQ(f1_plot.size(), 2u);
  EXPECT_EQ(f1_plot[0].first, "macro_f1");
  EXPECT_EQ(f1_plot[1].first, "micro_f1");
  for (const auto& [name, n] : f1_plot) {
    EXPECT_NO_THROW(metrics.column(name));
    EXPECT_EQ(n, 10u);
  }
  const auto w_plot = adt::parse_plot_series(slurp(dir / "weights.svg"));
  ASSERT_EQ(w_plot.size(), 5u);
  for (const auto& [name, n] : w_plot) {
    EXPECT_NO_THROW(weights.column(name)) << name;
    EXPECT_EQ(n, 10u);
  }
  fs::remove_all(dir);
}

TEST(Artifacts, UnwritableDirectory) {
  const auto& d = corpus();
  const auto run = adt::run_variant(small_config(adt::Variant::idf_only, 2), d.train, d.eval);
  const auto dir = scratch("unwritable");
  std::ofstream(dir / "blocker") << "x";
  EXPECT_THROW(adt::emit_artifacts(run, dir / "blocker" / "sub"), adt::Error);
  fs::remove_all(dir);
}

TEST(Suite, FourRowsAndDeterministic) {
  const auto& d = corpus();
  const auto cfg = small_config(adt::Variant::adaptive, 4);
  const auto a = adt::run_ablation_suite(cfg, d.train, d.eval);
  const auto b = adt::run_ablation_suite(cfg, d.train, d.eval);
  ASSERT_EQ(a.size(), 4u);
  const auto table = adt::parse_csv(adt::summary_csv(a));
  ASSERT_EQ(table.rows.size(), 4u);
  std::vector<std::string> names;
  for (const auto& row : table.rows) names.push_back(row[0]);
  EXPECT_EQ(names, (std::vector<std::string>{"adaptive", "knn_only", "idf_only", "static"}));
  EXPECT_EQ(adt::summary_csv(a), adt::summary_csv(b));

  const auto dir = scratch("suite");
  adt::emit_suite_artifacts(a, dir);
  for (const char* f : {"summary.csv", "curves.csv", "curves.svg", "static/metrics.csv",
                        "adaptive/weights.csv"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  const auto curves = adt::parse_plot_series(slurp(dir / "curves.svg"));
  EXPECT_EQ(curves.size(), 4u);
  fs::remove_all(dir);
}

TEST(ModelCheckpoint, RoundTripReproducesEvalMetrics) {
  const auto& d = corpus();
  for (adt::Variant v : adt::kAllVariants) {
    const auto run = adt::run_variant(small_config(v, 5), d.train, d.eval);
    const auto path = (scratch("model") / "model.bin").string();
    adt::save_model(path, run.best_model);
    const auto loaded = adt::load_model(path);
    EXPECT_EQ(loaded.mlp, run.best_model.mlp);
    EXPECT_EQ(loaded.threshold, run.best_model.threshold);
    EXPECT_EQ(loaded.idf, run.best_model.idf);
    EXPECT_EQ(loaded.config.variant, v);
    const auto m = adt::evaluate(loaded, d.eval);
    EXPECT_EQ(m.macro_f1, run.final_record.eval_macro_f1) << adt::to_string(v);
    EXPECT_EQ(m.positive_ratio, run.final_record.eval_positive_ratio);
    EXPECT_EQ(m.bce, run.final_record.eval_bce);
  }
  const auto bad = scratch("model_bad") / "model.bin";
  std::ofstream(bad) << "ADTMODEL garbage";
  EXPECT_THROW(adt::load_model(bad.string()), adt::Error);
}

TEST(Config, JsonRoundTripAndOverrides) {
  adt::TrainConfig c;
  c.variant = adt::Variant::knn_only;
  c.loss.pos_weight = 4.0;
  c.optimizer.kind = adt::OptimizerKind::adam;
  adt::TrainConfig back;
  adt::apply_json(back, adt::to_json(c));
  EXPECT_EQ(adt::to_json(back), adt::to_json(c));
  EXPECT_EQ(adt::config_hash(back), adt::config_hash(c));

  back.output_dir = "elsewhere";
  EXPECT_EQ(adt::config_hash(back), adt::config_hash(c));
  back.seed = 7;
  EXPECT_NE(adt::config_hash(back), adt::config_hash(c));

  EXPECT_THROW(adt::apply_json(back, nlohmann::json{{"bogus", 1}}), adt::Error);
  EXPECT_THROW(adt::apply_json(back, nlohmann::json{{"epochs", "many"}}), adt::Error);
  EXPECT_THROW(adt::apply_json(back, nlohmann::json{{"variant", "nope"}}), adt::Error);

  const auto dir = scratch("config");
  std::ofstream(dir / "c.json") << R"({"variant": "static", "epochs": 12, "lr": 0.5})";
  const auto loaded = adt::load_config((dir / "c.json").string());
  EXPECT_EQ(loaded.variant, adt::Variant::static_threshold);
  EXPECT_EQ(loaded.max_epochs, 12u);
  EXPECT_EQ(loaded.optimizer.learning_rate, 0.5);
  std::ofstream(dir / "broken.json") << "{ nope";
  EXPECT_THROW(adt::load_config((dir / "broken.json").string()), adt::Error);
  fs::remove_all(dir);
}
