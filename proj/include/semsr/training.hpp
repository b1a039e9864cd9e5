#pragma once

#include <json.hpp>

#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "semsr/checkpoint.hpp"
#include "semsr/config.hpp"
#include "semsr/dataset.hpp"
#include "semsr/losses.hpp"
#include "semsr/metrics.hpp"
#include "semsr/models.hpp"
#include "semsr/optim.hpp"

namespace semsr {

/// Line-delimited JSON records, flushed per line.
class TrainLog {
 public:
  TrainLog() = default;
  TrainLog(const std::filesystem::path& path, bool append);
  void write(const nlohmann::json& record);
  bool open() const { return out_ && out_->is_open(); }

 private:
  std::unique_ptr<std::ofstream> out_;
};

std::vector<nlohmann::json> read_log(const std::filesystem::path& path);

/// Human-readable progress sink; may be empty.
using Progress = std::function<void(const std::string&)>;

/// Deterministic batch schedule. Tiles are visited in a per-epoch
/// permutation keyed on (seed, stream, epoch); crop offsets are keyed on
/// (seed, stream, step). Any step can be drawn without replaying earlier ones.
class BatchSampler {
 public:
  BatchSampler(int tile_count, int tile_extent, int batch, int crop, int align, std::uint64_t seed,
               std::uint64_t stream);

  void draw(long step, std::vector<int>& tiles, std::vector<std::pair<int, int>>& offsets) const;
  Batch draw(long step, const TileSet& set) const;

 private:
  const std::vector<int>& permutation(long epoch) const;

  int count_, extent_, batch_, crop_, align_;
  std::uint64_t seed_, stream_;
  mutable long cached_epoch_ = -1;
  mutable std::vector<int> cached_perm_;
};

/// Stream ids separating the randomness of each stage.
enum class Stream : std::uint64_t { kSegmenter = 1, kPretrain = 2, kFinetune = 3 };

template <typename Scalar>
Var<Scalar> input_var(const Tensor<Scalar>& t) {
  return Var<Scalar>(t, false);
}

/// Labels flattened to NHW order for cross entropy.
std::vector<int> flatten_labels(const std::vector<LabelMask>& masks);

// ---------------------------------------------------------------------------
// Inference helpers.

/// Applies G to each batch entry without recording a graph.
ImageTensor super_resolve(const Generator<float>& g, const ImageTensor& lr);

/// Segmenter probabilities, one image at a time, no graph.
MaskTensor segment(const Segmenter<float>& f, const ImageTensor& img);

/// Pooled per-class counts of mask_from_probs(F(img)) against labels.
IouCounts segmentation_counts(const Segmenter<float>& f, const std::vector<ImageTensor>& images,
                              const std::vector<LabelMask>& labels, int classes);

struct ValidationSummary {
  double psnr = 0;
  double miou = 0;  // NaN when no segmenter was supplied
};

/// Mean PSNR of G over the tiles, plus pooled segmentation mIoU when `f` is given.
ValidationSummary validate_generator(const Generator<float>& g, const TileSet& tiles, const Segmenter<float>* f,
                                     int max_tiles = 0);

// ---------------------------------------------------------------------------
// Checkpoint <-> model helpers.

Checkpoint make_checkpoint(const std::string& kind, long step, int scale, const RunConfig& cfg);

/// Rebuilds G from a pretrain or finetune checkpoint. The checkpoint's scale
/// must equal `scale`; use init_from_lower_scale for cross-scale transfer.
std::unique_ptr<Generator<float>> load_generator(const Checkpoint& ckpt, const RunConfig& cfg, int scale);

/// Rebuilds the frozen segmenter.
std::unique_ptr<Segmenter<float>> load_segmenter(const Checkpoint& ckpt, const RunConfig& cfg);

/// Digest of a model's parameter values.
template <typename Model>
std::string parameter_digest(const Model& m) {
  return tensor_digest(snapshot(m.parameters()));
}

// ---------------------------------------------------------------------------
// Stage 0: segmentation embedding.

struct SegmenterResult {
  double best_val_miou = 0;
  long best_step = 0;
  std::vector<std::pair<long, double>> curve;  // (step, val mIoU)
  std::string digest;
};

/// Trains F with per-pixel cross entropy on hr/mask crops, keeps the best
/// validation checkpoint (marked frozen) in `out_dir`. Throws TrainingError
/// when the best mIoU stays below the configured floor.
SegmenterResult train_segmenter(const RunConfig& cfg, const TileSet& train, const TileSet& val,
                                const std::filesystem::path& out_dir, const Progress& progress = {});

// ---------------------------------------------------------------------------
// Stage 1: MAE pretraining of G.

struct PretrainRecord {
  long step = 0;
  double lr = 0;
  double mae = 0;
};

class PretrainSession {
 public:
  PretrainSession(const RunConfig& cfg, int scale, const TileSet& train);

  Generator<float>& generator() { return *g_; }
  const Generator<float>& generator() const { return *g_; }
  Adam<float>& optimizer() { return *opt_; }
  long step() const { return step_; }
  void set_step(long s) { step_ = s; }
  double lr_at(long step) const;

  /// One MAE update on the batch drawn for the current step.
  PretrainRecord advance();
  /// One MAE update on a given batch (no step bookkeeping).
  double update(const Batch& batch, double lr);

  Checkpoint checkpoint() const;
  void restore(const Checkpoint& ckpt);
  /// Replaces G's weights with a transfer from a lower-scale checkpoint.
  TransferReport transfer_from(const Checkpoint& lower);

 private:
  RunConfig cfg_;
  int scale_;
  const TileSet& train_;
  Rng rng_;
  std::unique_ptr<Generator<float>> g_;
  std::unique_ptr<Adam<float>> opt_;
  BatchSampler sampler_;
  long step_ = 0;
};

// ---------------------------------------------------------------------------
// Stage 2: adversarial fine-tuning.

struct FinetuneRecord {
  long step = 0;
  double lr_g = 0;
  double lr_d = 0;
  double loss_d = 0;
  LossBreakdown g;
  double d_acc_real = 0;
  double d_acc_fake = 0;
  int d_steps = 0;
  int g_steps = 0;
  bool divergence_tripped = false;
  long divergence_run = 0;  // consecutive steps above the accuracy threshold
};

class FinetuneSession {
 public:
  /// G starts from the pretrained checkpoint; F is frozen.
  FinetuneSession(const RunConfig& cfg, int scale, const TileSet& train, const Checkpoint& pretrained,
                  const Segmenter<float>& f);

  Generator<float>& generator() { return *g_; }
  Discriminator<float>& discriminator() { return *d_; }
  long step() const { return step_; }
  void set_step(long s) { step_ = s; }
  double lr_g_at(long step) const;
  double lr_d_at(long step) const;

  /// D step(s) then one G step on the batches drawn for the current step.
  FinetuneRecord advance();

  /// One D update; accuracies are over all patches.
  double discriminator_update(const Batch& batch, double lr, double* acc_real = nullptr, double* acc_fake = nullptr);
  /// One G update (weighted objective).
  LossBreakdown generator_update(const Batch& batch, double lr);

  Checkpoint checkpoint() const;
  void restore(const Checkpoint& ckpt);

  long total_d_steps() const { return d_opt_->steps(); }
  long total_g_steps() const { return g_opt_->steps(); }

 private:
  RunConfig cfg_;
  int scale_;
  const TileSet& train_;
  const Segmenter<float>& f_;
  Rng rng_;
  std::unique_ptr<Generator<float>> g_;
  std::unique_ptr<Discriminator<float>> d_;
  std::unique_ptr<Adam<float>> g_opt_;
  std::unique_ptr<Adam<float>> d_opt_;
  BatchSampler sampler_;
  long step_ = 0;
  long divergence_run_ = 0;
};

// ---------------------------------------------------------------------------
// Stage drivers used by the CLI: logging, validation, periodic checkpoints,
// resume and the non-finite abort.

struct StageOptions {
  bool resume = false;
  Progress progress;
};

struct PretrainOutcome {
  long steps = 0;
  double final_val_psnr = 0;
  double bilinear_val_psnr = 0;
};

PretrainOutcome run_pretrain(const RunConfig& cfg, int scale, const std::filesystem::path& dataset_root,
                             const std::filesystem::path& out_dir, const StageOptions& opts,
                             const std::filesystem::path& lower_scale_checkpoint = {});

struct FinetuneOutcome {
  long steps = 0;
  double final_val_psnr = 0;
  double final_val_miou = 0;
  long divergence_warnings = 0;
  std::string segmenter_digest_before;
  std::string segmenter_digest_after;
};

FinetuneOutcome run_finetune(const RunConfig& cfg, int scale, const std::filesystem::path& dataset_root,
                             const std::filesystem::path& pretrain_dir, const std::filesystem::path& segmenter_dir,
                             const std::filesystem::path& out_dir, const StageOptions& opts);

SegmenterResult run_train_segmenter(const RunConfig& cfg, const std::filesystem::path& dataset_root,
                                    const std::filesystem::path& out_dir, const StageOptions& opts);

}  // namespace semsr
