#pragma once

#include <json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "semsr/layers.hpp"

namespace semsr {

using TensorMap = std::map<std::string, Tensor<float>>;

struct CheckpointMeta {
  std::string kind;  // "segmenter", "pretrain" or "finetune"
  long step = 0;
  int scale = 0;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json extra = nlohmann::json::object();  // stage-specific counters
};

struct Checkpoint {
  CheckpointMeta meta;
  TensorMap tensors;
};

inline constexpr int kCheckpointVersion = 1;

/// Directory layout:
///   meta.json            format, version, kind, step, scale, config, tensor index
///   tensors/<file>.bin   "SMT1", u32 rank, u32 dims[rank], float32 data (little endian)
/// The directory is written next to the target and renamed into place.
void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);

/// Reads and validates everything before returning; never yields a partial
/// checkpoint.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

bool checkpoint_exists(const std::filesystem::path& dir);

/// 64-bit FNV-1a over names, shapes and raw bytes, as 16 hex digits.
std::string tensor_digest(const TensorMap& tensors);

template <typename Scalar>
void store(TensorMap& out, const std::string& prefix, const NamedVars<Scalar>& vars) {
  for (const auto& [name, v] : vars) out[prefix + name] = v.value().template cast<float>();
}

template <typename Scalar>
TensorMap snapshot(const NamedVars<Scalar>& vars) {
  TensorMap out;
  store(out, "", vars);
  return out;
}

/// One group of live tensors to fill from a checkpoint.
template <typename Scalar>
struct StateBinding {
  std::string prefix;
  NamedVars<Scalar> vars;
};

/// Checks every binding against the checkpoint (missing, unexpected and
/// mis-shaped tensors are all listed), then assigns. Checkpoint tensors
/// outside every binding's prefix are ignored.
template <typename Scalar>
void restore(const TensorMap& ckpt, const std::vector<StateBinding<Scalar>>& bindings, const std::string& what) {
  std::vector<std::string> problems;
  std::map<std::string, bool> used;
  for (const auto& [name, t] : ckpt)
    for (const auto& b : bindings)
      if (name.rfind(b.prefix, 0) == 0) used[name] = false;
  for (const auto& b : bindings) {
    for (const auto& [name, v] : b.vars) {
      auto it = ckpt.find(b.prefix + name);
      if (it == ckpt.end()) {
        problems.push_back(b.prefix + name + " (missing)");
        continue;
      }
      used[it->first] = true;
      if (!(it->second.shape() == v.shape()))
        problems.push_back(b.prefix + name + " (shape " + it->second.shape().str() + " vs " + v.shape().str() + ")");
    }
  }
  for (const auto& [name, u] : used)
    if (!u) problems.push_back(name + " (unexpected)");
  if (!problems.empty()) {
    std::string msg = what + ": checkpoint does not match the model:";
    for (const auto& p : problems) msg += " " + p;
    throw CheckpointError(msg);
  }
  for (const auto& b : bindings)
    for (auto [name, v] : b.vars) v.value_mut() = ckpt.at(b.prefix + name).template cast<Scalar>();
}

}  // namespace semsr
