#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "semsr/dataset.hpp"
#include "semsr/losses.hpp"
#include "semsr/models.hpp"
#include "semsr/optim.hpp"

namespace semsr {

struct SegmenterTrainConfig {
  long steps = 1500;
  int batch_size = 16;
  int crop = 64;
  double lr = 1e-3;
  long val_every = 250;
  double miou_floor = 0.75;
};

struct PretrainConfig {
  long steps = 2000;
  int batch_size = 16;
  int crop = 64;
  double lr_g = 2e-4;
  long val_every = 500;
  long checkpoint_every = 500;
  bool init_from_lower_scale = true;
};

enum class DivergenceAction { kWarn, kAbort };

struct DivergenceGuard {
  double accuracy = 0.95;
  long patience = 500;
  DivergenceAction action = DivergenceAction::kWarn;
};

struct FinetuneConfig {
  long steps = 10000;
  int batch_size = 16;
  int crop = 64;
  double lr_g = 1e-4;
  double lr_d = 2e-4;
  int d_steps_per_g_step = 1;
  long val_every = 500;
  long checkpoint_every = 500;
  LossWeights weights;
  FeatureLossKind feat_loss = FeatureLossKind::kL2;
  DivergenceGuard divergence;
};

struct TrainConfig {
  int scale = 4;
  AdamConfig adam;
  long lr_decay_interval = 10000;
  long log_every = 10;
  SegmenterTrainConfig segmenter;
  PretrainConfig pretrain;
  FinetuneConfig finetune;
};

struct EvalConfig {
  std::vector<int> scales{4};
  int max_tiles = 0;  // 0: whole test split
  std::string segmenter_checkpoint;              // empty: run-directory default
  std::map<int, std::string> cnn_checkpoints;    // scale -> path overrides
  std::map<int, std::string> gan_checkpoints;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_root = "runs/default";
  DatasetOptions dataset;  // root is derived from output_root
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  SegmenterConfig segmenter;
  TrainConfig training;
  EvalConfig evaluation;

  /// Generator config at the training scale.
  GeneratorConfig generator_at(int scale) const {
    GeneratorConfig g = generator;
    g.scale = scale;
    return g;
  }
  void validate() const;
};

/// Strict parse: unknown keys and wrongly typed values are ConfigErrors;
/// absent keys keep their defaults.
RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& cfg);

/// Writes the fully resolved config (the echo file).
void write_config_echo(const RunConfig& cfg, const std::filesystem::path& path);

/// Dotted key paths under the given top-level sections, e.g. "training.pretrain.steps".
std::vector<std::string> config_keys(const std::vector<std::string>& prefixes);

/// Where each stage keeps its artifacts under the output root.
struct RunLayout {
  std::filesystem::path root;

  std::filesystem::path dataset() const { return root / "dataset"; }
  std::filesystem::path segmenter() const { return root / "segmenter"; }
  std::filesystem::path pretrain(int scale) const { return root / ("pretrain_x" + std::to_string(scale)); }
  std::filesystem::path finetune(int scale) const { return root / ("finetune_x" + std::to_string(scale)); }
  std::filesystem::path evaluation() const { return root / "evaluation"; }
  std::filesystem::path comparison() const { return root / "comparison"; }
};

}  // namespace semsr
