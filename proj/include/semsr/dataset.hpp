#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "semsr/resample.hpp"
#include "semsr/tensor.hpp"

namespace semsr {

/// Class palette of the synthetic scenes. The first three are low-texture,
/// the last three carry fine texture.
enum SceneClass : int {
  kGround = 0,
  kRoad = 1,
  kPool = 2,
  kStripedRoof = 3,
  kNoiseRoof = 4,
  kFoliage = 5,
};

inline constexpr int kSceneClassCount = 6;

const std::vector<std::string>& scene_class_names();
bool is_textured_class(int class_id);

struct TextureParams {
  double ground_amplitude = 0.03;    // low-frequency variation
  double flat_noise = 0.008;         // per-pixel jitter on flat classes
  double stripe_amplitude_min = 0.08;
  double stripe_amplitude_max = 0.12;
  int stripe_period_min = 4;
  int stripe_period_max = 10;
  double noise_amplitude_min = 0.06;
  double noise_amplitude_max = 0.10;
  double foliage_amplitude = 0.10;
};

struct SceneSpec {
  std::uint64_t seed = 0;
  int size = 256;
  int classes = kSceneClassCount;
  TextureParams texture;

  void validate() const;
};

struct Scene {
  ImageTensor image;  // (1,S,S,3), 8-bit quantised values in [0,1]
  LabelMask labels;   // S x S
};

/// Procedural aerial-like scene with an exact label mask. A pure function of
/// the spec.
Scene generate_scene(const SceneSpec& spec);

struct ScenePair {
  ImageTensor hr;
  ImageTensor lr;
  LabelMask labels;
  int scale = 0;
};

enum class Split { kTrain, kVal, kTest };
const char* to_string(Split s);
Split parse_split(const std::string& s);

struct TileRecord {
  Split split = Split::kTrain;
  std::uint64_t seed = 0;
  std::string hr;                      // relative to the dataset root
  std::string mask;
  std::map<int, std::string> lr;       // scale -> relative path (empty when degraded on load)
};

enum class LrMode { kBuild, kOnTheFly };

struct DatasetOptions {
  std::filesystem::path root;
  std::uint64_t first_seed = 0;
  int tile_count = 200;
  int size = 256;
  int classes = kSceneClassCount;
  std::vector<int> scales{4};
  std::array<double, 3> split_ratio{0.8, 0.1, 0.1};
  LrMode lr_mode = LrMode::kBuild;
  TextureParams texture;
  int threads = 1;
};

class DatasetManifest {
 public:
  static constexpr int kVersion = 1;

  std::filesystem::path root;
  int size = 0;
  std::vector<int> scales;
  std::vector<std::string> class_names;
  LrMode lr_mode = LrMode::kBuild;
  std::vector<TileRecord> tiles;

  std::vector<const TileRecord*> split(Split s) const;
  std::size_t split_size(Split s) const { return split(s).size(); }

  /// Line-delimited JSON; first line is a header, one line per tile after.
  std::string serialize() const;
  static DatasetManifest parse(const std::string& text, const std::filesystem::path& root);
  static DatasetManifest load(const std::filesystem::path& root);
  void save() const;
};

/// Split sizes for `n` tiles under the given ratio: floor for val and test,
/// remainder to train.
std::array<int, 3> split_counts(int n, const std::array<double, 3>& ratio);

/// Writes hr/lr/mask tiles for every seed and scale plus the manifest.
/// Rebuilding with identical options yields identical files.
DatasetManifest build_dataset(const DatasetOptions& opts);

struct Batch {
  ImageTensor hr;   // (B,S,S,3)
  ImageTensor lr;   // (B,S/s,S/s,3)
  std::vector<LabelMask> labels;
  int scale = 0;
};

Batch load_batch(const DatasetManifest& manifest, Split split, const std::vector<int>& indices, int scale);

/// Whole split held in memory for training-time cropping.
class TileSet {
 public:
  TileSet() = default;
  TileSet(const DatasetManifest& manifest, Split split, int scale);

  int size() const { return int(hr_.size()); }
  int scale() const { return scale_; }
  int tile_extent() const { return hr_.empty() ? 0 : hr_.front().height(); }
  const ImageTensor& hr(int i) const { return hr_[i]; }
  const ImageTensor& lr(int i) const { return lr_[i]; }
  const LabelMask& labels(int i) const { return labels_[i]; }
  std::uint64_t seed(int i) const { return seeds_[i]; }

  /// Aligned crops: hr crop of `hr_crop` pixels at a multiple of the scale,
  /// with the matching region of the low-resolution tile.
  Batch crop_batch(const std::vector<int>& tiles, const std::vector<std::pair<int, int>>& offsets, int hr_crop) const;

  /// Builds directly from in-memory scenes (used by tests and probes).
  static TileSet from_scenes(const std::vector<Scene>& scenes, int scale);

 private:
  int scale_ = 0;
  std::vector<ImageTensor> hr_;
  std::vector<ImageTensor> lr_;
  std::vector<LabelMask> labels_;
  std::vector<std::uint64_t> seeds_;
};

/// Deterministic 64-bit mixer used to key per-step randomness.
std::uint64_t splitmix64(std::uint64_t x);

}  // namespace semsr
