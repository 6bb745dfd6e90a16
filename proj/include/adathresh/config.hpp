#pragma once

#include <cstdint>
#include <fstream>
#include <string>

#include "json.hpp"

#include "adathresh/error.hpp"
#include "adathresh/losses.hpp"
#include "adathresh/model.hpp"
#include "adathresh/threshold.hpp"

namespace adt {

struct TrainConfig {
  Variant variant = Variant::adaptive;
  std::size_t batch_size = 128;
  std::size_t max_epochs = 1500;
  std::size_t early_stop_patience = 20;
  LossConfig loss;
  double epsilon = kDefaultEpsilon;  // shared by IDF, KNN normalization, standardization
  std::size_t hidden_dim = 256;
  OptimizerConfig optimizer;
  std::size_t knn_k = 10;
  double knn_vote = 0.2;  // 0 keeps neighbor soft labels as they are
  std::size_t reference_size = 2048;
  std::size_t eval_stride = 1;
  double eval_fraction = 0.2;
  std::uint64_t seed = 42;
  std::string output_dir = "out";
};

inline void validate(const TrainConfig& c) {
  using detail::require;
  require(c.batch_size >= 1, ErrorCode::invalid_argument, "batch_size must be >= 1");
  require(c.max_epochs >= 1, ErrorCode::invalid_argument, "max_epochs must be >= 1");
  require(c.early_stop_patience >= 1, ErrorCode::invalid_argument,
          "early_stop_patience must be >= 1");
  require(c.epsilon > 0.0, ErrorCode::invalid_argument, "epsilon must be > 0");
  require(c.hidden_dim >= 1, ErrorCode::invalid_argument, "hidden_dim must be >= 1");
  require(c.optimizer.learning_rate > 0.0, ErrorCode::invalid_argument,
          "learning_rate must be > 0");
  require(c.optimizer.threshold_lr_scale > 0.0, ErrorCode::invalid_argument,
          "threshold_lr_scale must be > 0");
  require(c.knn_k >= 1 && c.reference_size >= 1, ErrorCode::invalid_argument,
          "knn_k and reference_size must be >= 1");
  require(c.knn_vote >= 0.0 && c.knn_vote <= 1.0, ErrorCode::invalid_argument,
          "knn_vote must be in [0, 1]");
  require(c.eval_stride >= 1, ErrorCode::invalid_argument, "eval_stride must be >= 1");
  require(c.eval_fraction > 0.0 && c.eval_fraction < 1.0, ErrorCode::invalid_argument,
          "eval_fraction must be in (0, 1)");
  validate(c.loss);
}

// JSON keys mirror the CLI flag names with '-' replaced by '_'.
inline nlohmann::json to_json(const TrainConfig& c) {
  return {
      {"variant", std::string(to_string(c.variant))},
      {"batch_size", c.batch_size},
      {"epochs", c.max_epochs},
      {"patience", c.early_stop_patience},
      {"margin", c.loss.margin},
      {"margin_weight", c.loss.margin_weight},
      {"pos_weight", c.loss.pos_weight},
      {"standardize", c.loss.use_standardization},
      {"epsilon", c.epsilon},
      {"hidden_dim", c.hidden_dim},
      {"optimizer", std::string(to_string(c.optimizer.kind))},
      {"lr", c.optimizer.learning_rate},
      {"threshold_lr_scale", c.optimizer.threshold_lr_scale},
      {"adam_beta1", c.optimizer.beta1},
      {"adam_beta2", c.optimizer.beta2},
      {"adam_epsilon", c.optimizer.epsilon},
      {"knn_k", c.knn_k},
      {"knn_vote", c.knn_vote},
      {"reference_size", c.reference_size},
      {"eval_stride", c.eval_stride},
      {"eval_fraction", c.eval_fraction},
      {"seed", c.seed},
      {"out", c.output_dir},
  };
}

// Overlays the keys present in `j` onto `c`; unknown keys are rejected.
inline void apply_json(TrainConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::parse, "config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "variant") c.variant = parse_variant(v.get<std::string>());
      else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (key == "epochs") c.max_epochs = v.get<std::size_t>();
      else if (key == "patience") c.early_stop_patience = v.get<std::size_t>();
      else if (key == "margin") c.loss.margin = v.get<double>();
      else if (key == "margin_weight") c.loss.margin_weight = v.get<double>();
      else if (key == "pos_weight") c.loss.pos_weight = v.get<double>();
      else if (key == "standardize") c.loss.use_standardization = v.get<bool>();
      else if (key == "epsilon") c.epsilon = v.get<double>();
      else if (key == "hidden_dim") c.hidden_dim = v.get<std::size_t>();
      else if (key == "optimizer") c.optimizer.kind = parse_optimizer(v.get<std::string>());
      else if (key == "lr") c.optimizer.learning_rate = v.get<double>();
      else if (key == "threshold_lr_scale") c.optimizer.threshold_lr_scale = v.get<double>();
      else if (key == "adam_beta1") c.optimizer.beta1 = v.get<double>();
      else if (key == "adam_beta2") c.optimizer.beta2 = v.get<double>();
      else if (key == "adam_epsilon") c.optimizer.epsilon = v.get<double>();
      else if (key == "knn_k") c.knn_k = v.get<std::size_t>();
      else if (key == "knn_vote") c.knn_vote = v.get<double>();
      else if (key == "reference_size") c.reference_size = v.get<std::size_t>();
      else if (key == "eval_stride") c.eval_stride = v.get<std::size_t>();
      else if (key == "eval_fraction") c.eval_fraction = v.get<double>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "out") c.output_dir = v.get<std::string>();
      else throw Error(ErrorCode::parse, "unknown config key \"" + key + "\"");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse, std::string("config: ") + e.what());
  }
  c.loss.epsilon = c.epsilon;
}

inline TrainConfig load_config(const std::string& path, TrainConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse, path + ": " + e.what());
  }
  apply_json(base, j);
  return base;
}

// FNV-1a over the canonical JSON form, output directory excluded.
inline std::uint64_t config_hash(const TrainConfig& c) {
  auto j = to_json(c);
  j.erase("out");
  const std::string s = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace adt
