// Command-line front end: generate, train, ablate, eval.
//
// Errors are reported on stderr as a single line
//   error: <code>: <message>
// and the process exits with status 1 (2 for usage errors).

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "adathresh/adathresh.hpp"

namespace {

using nlohmann::json;

struct TrainFlags {
  std::string config_path;
  std::string features;
  std::string labels;
  std::string resume;
  std::size_t stop_after = 0;
  json overlay = json::object();
};

// Registers the shared training flags. Values given on the command line are
// recorded into `overlay` under their config-file key, so they override the file.
void add_train_flags(CLI::App& cmd, TrainFlags& flags, bool with_variant) {
  cmd.add_option("--config", flags.config_path, "JSON config file");
  cmd.add_option("--features", flags.features, "feature file")->required();
  cmd.add_option("--labels", flags.labels, "label file")->required();

  auto bind = [&](const std::string& flag, const std::string& key, auto tag,
                  const std::string& help) {
    using T = decltype(tag);
    cmd.add_option_function<T>(flag, [&flags, key](const T& v) { flags.overlay[key] = v; }, help);
  };
  if (with_variant) bind("--variant", "variant", std::string{}, "adaptive|idf_only|knn_only|static");
  bind("--epochs", "epochs", std::size_t{}, "maximum epochs");
  bind("--batch-size", "batch_size", std::size_t{}, "minibatch size");
  bind("--lr", "lr", double{}, "learning rate");
  bind("--threshold-lr-scale", "threshold_lr_scale", double{},
       "learning-rate multiplier for the threshold parameters");
  bind("--hidden-dim", "hidden_dim", std::size_t{}, "hidden layer width");
  bind("--margin", "margin", double{}, "hinge margin");
  bind("--margin-weight", "margin_weight", double{}, "hinge term weight");
  bind("--pos-weight", "pos_weight", double{}, "BCE positive weight");
  bind("--seed", "seed", std::uint64_t{}, "master seed");
  bind("--out", "out", std::string{}, "output directory");
  bind("--optimizer", "optimizer", std::string{}, "sgd|adam");
  bind("--patience", "patience", std::size_t{}, "early-stopping patience (epochs)");
  bind("--eval-fraction", "eval_fraction", double{}, "held-out fraction");
  bind("--eval-stride", "eval_stride", std::size_t{}, "evaluate every N epochs");
  bind("--knn-k", "knn_k", std::size_t{}, "neighbors for the eval-time KNN signal");
  bind("--knn-vote", "knn_vote", double{}, "neighbor vote needed to impute a label (0 = soft)");
  bind("--reference-size", "reference_size", std::size_t{}, "reference rows for eval-time KNN");
  bind("--epsilon", "epsilon", double{}, "shared epsilon");
  cmd.add_flag_callback("--standardize", [&flags] { flags.overlay["standardize"] = true; },
                        "standardize logits per batch");
}

adt::TrainConfig resolve_config(const TrainFlags& flags) {
  adt::TrainConfig cfg;
  if (!flags.config_path.empty()) cfg = adt::load_config(flags.config_path);
  adt::apply_json(cfg, flags.overlay);
  adt::validate(cfg);
  return cfg;
}

std::string metrics_line(const adt::EpochRecord& r) {
  return "macro_f1=" + std::to_string(r.eval_macro_f1) +
         " micro_f1=" + std::to_string(r.eval_micro_f1) + " bce=" + std::to_string(r.eval_bce) +
         " positive_ratio=" + std::to_string(r.eval_positive_ratio) +
         " best_epoch=" + std::to_string(r.epoch);
}

int cmd_generate(const adt::SyntheticSpec& spec, const std::string& features,
                 const std::string& labels) {
  const auto ds = adt::generate_synthetic(spec);
  adt::write_dataset(ds, features, labels);
  std::cout << "wrote " << ds.size() << " samples, " << ds.labels.total_positives()
            << " positives to " << features << ", " << labels << "\n";
  return 0;
}

int cmd_train(const TrainFlags& flags) {
  const auto cfg = resolve_config(flags);
  const auto data = adt::load_dataset(flags.features, flags.labels);
  const auto split = adt::train_eval_split(data, cfg.eval_fraction, cfg.seed);
  const std::filesystem::path out = cfg.output_dir;
  std::filesystem::create_directories(out);

  adt::Trainer trainer(cfg, split.train, split.eval);
  if (!flags.resume.empty()) trainer.load_state(flags.resume);
  while (!trainer.finished()) {
    const auto& r = trainer.run_epoch();
    if (flags.stop_after != 0 && r.epoch >= flags.stop_after) break;
  }
  trainer.save_state((out / "state.bin").string());
  const auto result = trainer.result();
  adt::emit_artifacts(result, out);
  adt::save_model((out / "model.bin").string(), result.best_model);
  std::cout << adt::to_string(cfg.variant) << ' ' << metrics_line(result.final_record)
            << " epochs_run=" << result.records.size() << "\n";
  return 0;
}

int cmd_ablate(const TrainFlags& flags) {
  const auto cfg = resolve_config(flags);
  const auto data = adt::load_dataset(flags.features, flags.labels);
  const auto split = adt::train_eval_split(data, cfg.eval_fraction, cfg.seed);
  const std::filesystem::path out = cfg.output_dir;
  const auto runs = adt::run_ablation_suite(cfg, split.train, split.eval,
                                            [](const adt::RunResult& r) {
                                              std::cerr << adt::to_string(r.variant) << ' '
                                                        << metrics_line(r.final_record) << "\n";
                                            });
  adt::emit_suite_artifacts(runs, out);
  for (const auto& r : runs)
    adt::save_model((out / std::string(adt::to_string(r.variant)) / "model.bin").string(),
                    r.best_model);
  std::cout << adt::summary_csv(runs);
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& features,
             const std::string& labels, const std::string& out_csv) {
  const auto model = adt::load_model(checkpoint);
  const auto data = adt::load_dataset(features, labels);
  const auto m = adt::evaluate(model, data);
  std::string csv = "variant,macro_f1,micro_f1,bce,positive_ratio\n";
  csv += std::string(adt::to_string(model.config.variant)) + ',' +
         adt::detail::format_double(m.macro_f1) + ',' + adt::detail::format_double(m.micro_f1) +
         ',' + adt::detail::format_double(m.bce) + ',' +
         adt::detail::format_double(m.positive_ratio) + '\n';
  if (!out_csv.empty()) adt::detail::write_text(out_csv, csv);
  std::cout << csv;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive per-label thresholds for multi-label classification"};
  app.require_subcommand(1);

  adt::SyntheticSpec spec;
  std::string gen_features = "features.txt", gen_labels = "labels.txt";
  auto* gen = app.add_subcommand("generate", "write a synthetic long-tailed corpus");
  gen->add_option("--n-samples", spec.n_samples);
  gen->add_option("--n-labels", spec.n_labels);
  gen->add_option("--n-features", spec.n_features);
  gen->add_option("--zipf", spec.zipf_exponent, "label frequency exponent");
  gen->add_option("--mean-labels", spec.mean_labels_per_sample);
  gen->add_option("--signature-size", spec.signature_size);
  gen->add_option("--noise-features", spec.noise_features);
  gen->add_option("--noise-scale", spec.noise_scale);
  gen->add_option("--seed", spec.seed);
  gen->add_option("--features-out", gen_features);
  gen->add_option("--labels-out", gen_labels);

  TrainFlags train_flags;
  auto* train = app.add_subcommand("train", "train one variant");
  add_train_flags(*train, train_flags, true);
  train->add_option("--resume", train_flags.resume, "continue from a saved state.bin");
  train->add_option("--stop-after", train_flags.stop_after, "stop after this epoch (0 = off)");

  TrainFlags ablate_flags;
  auto* ablate = app.add_subcommand("ablate", "train all four variants");
  add_train_flags(*ablate, ablate_flags, false);

  std::string checkpoint, eval_features, eval_labels, eval_out;
  auto* eval = app.add_subcommand("eval", "score a checkpoint on a dataset");
  eval->add_option("--checkpoint", checkpoint)->required();
  eval->add_option("--features", eval_features)->required();
  eval->add_option("--labels", eval_labels)->required();
  eval->add_option("--out", eval_out, "write the metrics CSV here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*gen) return cmd_generate(spec, gen_features, gen_labels);
    if (*train) return cmd_train(train_flags);
    if (*ablate) return cmd_ablate(ablate_flags);
    if (*eval) return cmd_eval(checkpoint, eval_features, eval_labels, eval_out);
  } catch (const adt::Error& e) {
    std::cerr << "error: " << adt::to_string(e.code()) << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
