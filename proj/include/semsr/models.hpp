#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "semsr/layers.hpp"
#include "semsr/resample.hpp"

namespace semsr {

inline bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

inline int log2_exact(int v) {
  int k = 0;
  while ((1 << k) < v) ++k;
  return k;
}

// ---------------------------------------------------------------------------
// Generator: shrunken residual-in-residual dense network.

struct GeneratorConfig {
  int dense_blocks = 3;  // per residual-in-residual block
  int rrdb_count = 3;
  int base_channels = 32;
  int growth_channels = 16;
  double residual_scale = 0.2;
  int scale = 4;

  int upsample_stages() const { return log2_exact(scale); }
  bool same_except_scale(const GeneratorConfig& o) const {
    return dense_blocks == o.dense_blocks && rrdb_count == o.rrdb_count && base_channels == o.base_channels &&
           growth_channels == o.growth_channels && residual_scale == o.residual_scale;
  }
  void validate() const {
    if (!is_power_of_two(scale) || scale < 2) throw ConfigError("generator scale must be a power of two >= 2");
    if (dense_blocks < 1 || rrdb_count < 0 || base_channels < 1 || growth_channels < 1)
      throw ConfigError("generator widths and block counts must be positive");
  }
};

template <typename Scalar>
class Generator {
 public:
  static constexpr int kConvsPerDenseBlock = 5;
  static constexpr double kLeakySlope = 0.2;

  Generator(const GeneratorConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg.validate();
    const int base = cfg.base_channels;
    const int growth = cfg.growth_channels;
    conv_first_ = Conv2d<Scalar>(3, base, 3, rng);
    dense_.resize(std::size_t(cfg.rrdb_count) * cfg.dense_blocks);
    for (auto& block : dense_) {
      for (int k = 0; k < kConvsPerDenseBlock; ++k) {
        const int out = k + 1 < kConvsPerDenseBlock ? growth : base;
        block.push_back(Conv2d<Scalar>(base + k * growth, out, 3, rng, 1, true, 0.1));
      }
    }
    trunk_conv_ = Conv2d<Scalar>(base, base, 3, rng);
    for (int s = 0; s < cfg.upsample_stages(); ++s) upsample_.push_back(Conv2d<Scalar>(base, base, 3, rng));
    conv_hr_ = Conv2d<Scalar>(base, base, 3, rng);
    conv_last_ = Conv2d<Scalar>(base, 3, 3, rng);
  }

  const GeneratorConfig& config() const { return cfg_; }

  /// (B,h,w,3) -> (B, h*scale, w*scale, 3), values in (0,1).
  Var<Scalar> operator()(const Var<Scalar>& lr) const {
    const Shape& s = lr.shape();
    if (s.c != 3) throw ShapeError("generator expects 3 channels, got " + s.str());
    if (s.h < 8 || s.w < 8) throw ShapeError("generator input must be at least 8x8, got " + s.str());
    const Scalar beta = Scalar(cfg_.residual_scale);

    Var<Scalar> fea = conv_first_(lr);
    Var<Scalar> trunk = fea;
    for (int r = 0; r < cfg_.rrdb_count; ++r) {
      Var<Scalar> t = trunk;
      for (int d = 0; d < cfg_.dense_blocks; ++d) t = dense_block(dense_[std::size_t(r) * cfg_.dense_blocks + d], t);
      trunk = trunk + t * beta;
    }
    fea = fea + trunk_conv_(trunk);
    return upsample_path(fea, lr);
  }

  /// Everything after the residual trunk: x2 nearest + conv stages and the
  /// output head, which predicts a logit-space correction to the bilinear
  /// enlargement of `lr`. Exposed so the base path can be checked in isolation.
  Var<Scalar> upsample_path(Var<Scalar> fea, const Var<Scalar>& lr) const {
    const Scalar slope = Scalar(kLeakySlope);
    for (const auto& conv : upsample_) fea = leaky_relu(conv(upsample_nearest(fea, 2)), slope);
    return sigmoid(conv_last_(leaky_relu(conv_hr_(fea), slope)) + interpolation_logits(lr));
  }

  /// The skip carries no gradient to `lr`; inputs are always data.
  Var<Scalar> interpolation_logits(const Var<Scalar>& lr) const {
    constexpr Scalar eps = Scalar(1e-3);
    Tensor<Scalar> p = bilinear_upsample(lr.value(), cfg_.scale);
    p.array() = p.array().max(eps).min(Scalar(1) - eps);
    p.array() = (p.array() / (Scalar(1) - p.array())).log();
    return Var<Scalar>(std::move(p));
  }

  Var<Scalar> first_features(const Var<Scalar>& lr) const { return conv_first_(lr); }

  NamedVars<Scalar> parameters() const {
    NamedVars<Scalar> p;
    conv_first_.collect("conv_first", p);
    for (int r = 0; r < cfg_.rrdb_count; ++r)
      for (int d = 0; d < cfg_.dense_blocks; ++d)
        for (int k = 0; k < kConvsPerDenseBlock; ++k)
          dense_[std::size_t(r) * cfg_.dense_blocks + d][k].collect(
              "rrdb" + std::to_string(r) + ".db" + std::to_string(d) + ".conv" + std::to_string(k), p);
    trunk_conv_.collect("trunk_conv", p);
    for (std::size_t s = 0; s < upsample_.size(); ++s) upsample_[s].collect("upsample" + std::to_string(s), p);
    conv_hr_.collect("conv_hr", p);
    conv_last_.collect("conv_last", p);
    return p;
  }
  NamedVars<Scalar> buffers() const { return {}; }

  /// Parameters of the residual trunk (dense blocks and trunk conv).
  NamedVars<Scalar> residual_parameters() const {
    NamedVars<Scalar> out;
    for (auto& [name, v] : parameters())
      if (name.rfind("rrdb", 0) == 0 || name.rfind("trunk_conv", 0) == 0) out.emplace_back(name, v);
    return out;
  }

 private:
  Var<Scalar> dense_block(const std::vector<Conv2d<Scalar>>& convs, const Var<Scalar>& x) const {
    const Scalar slope = Scalar(kLeakySlope);
    std::vector<Var<Scalar>> feats{x};
    for (int k = 0; k + 1 < kConvsPerDenseBlock; ++k) feats.push_back(leaky_relu(convs[k](concat_channels(feats)), slope));
    return x + convs.back()(concat_channels(feats)) * Scalar(cfg_.residual_scale);
  }

  GeneratorConfig cfg_;
  Conv2d<Scalar> conv_first_;
  std::vector<std::vector<Conv2d<Scalar>>> dense_;
  Conv2d<Scalar> trunk_conv_;
  std::vector<Conv2d<Scalar>> upsample_;
  Conv2d<Scalar> conv_hr_;
  Conv2d<Scalar> conv_last_;
};

// ---------------------------------------------------------------------------
// Conditional patch discriminator.

struct DiscriminatorConfig {
  std::vector<int> stage_channels{64, 128, 256, 512};
  double leaky_slope = 0.2;
  int input_channels = 6;
  int warmup_power_iterations = 50;

  int stride_product() const { return 1 << stage_channels.size(); }
  void validate() const {
    if (stage_channels.empty()) throw ConfigError("discriminator needs at least one stage");
    for (int c : stage_channels)
      if (c < 1) throw ConfigError("discriminator stage widths must be positive");
    if (input_channels != 6) throw ConfigError("discriminator input_channels must be 6 (image + conditioning)");
  }
};

/// Fully convolutional D(img | x_nn). Each stage is two (3x3 conv, batchnorm,
/// LeakyReLU) units, the first with stride 2; a 1x1 conv emits one logit per
/// patch. Every kernel is spectrally normalised.
template <typename Scalar>
class Discriminator {
 public:
  Discriminator(const DiscriminatorConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg.validate();
    int in = cfg.input_channels;
    for (int ch : cfg.stage_channels) {
      Stage st;
      st.conv_a = SpectralConv2d<Scalar>(in, ch, 3, rng, 2, false, cfg.warmup_power_iterations);
      st.bn_a = BatchNorm2d<Scalar>(ch);
      st.conv_b = SpectralConv2d<Scalar>(ch, ch, 3, rng, 1, false, cfg.warmup_power_iterations);
      st.bn_b = BatchNorm2d<Scalar>(ch);
      stages_.push_back(std::move(st));
      in = ch;
    }
    out_ = SpectralConv2d<Scalar>(in, 1, 1, rng, 1, true, cfg.warmup_power_iterations);
  }

  const DiscriminatorConfig& config() const { return cfg_; }
  void set_training(bool on) { training_ = on; }
  bool training() const { return training_; }

  Var<Scalar> operator()(const Var<Scalar>& img, const Var<Scalar>& x_nn) {
    const Shape& a = img.shape();
    const Shape& b = x_nn.shape();
    if (a.n != b.n || a.h != b.h || a.w != b.w)
      throw ShapeError("discriminator: image " + a.str() + " and conditioning " + b.str() + " differ");
    if (a.c != 3 || b.c != 3) throw ShapeError("discriminator: expects RGB inputs");
    const int m = cfg_.stride_product();
    if (a.h < m || a.w < m)
      throw ShapeError("discriminator: input " + a.str() + " smaller than stride product " + std::to_string(m));
    const Scalar slope = Scalar(cfg_.leaky_slope);
    Var<Scalar> h = concat_channels<Scalar>({img, x_nn});
    for (auto& st : stages_) {
      h = leaky_relu(st.bn_a(st.conv_a(h), training_), slope);
      h = leaky_relu(st.bn_b(st.conv_b(h), training_), slope);
    }
    return out_(h);
  }

  /// Advances every kernel's singular vector estimate.
  void power_iterate(int n_iters) {
    for (auto* c : spectral_convs()) c->power_iterate(n_iters);
  }

  std::vector<SpectralConv2d<Scalar>*> spectral_convs() {
    std::vector<SpectralConv2d<Scalar>*> out;
    for (auto& st : stages_) {
      out.push_back(&st.conv_a);
      out.push_back(&st.conv_b);
    }
    out.push_back(&out_);
    return out;
  }

  NamedVars<Scalar> parameters() const {
    NamedVars<Scalar> p;
    for (std::size_t i = 0; i < stages_.size(); ++i) {
      const std::string pre = "stage" + std::to_string(i);
      stages_[i].conv_a.collect(pre + ".conv_a", p);
      stages_[i].bn_a.collect(pre + ".bn_a", p);
      stages_[i].conv_b.collect(pre + ".conv_b", p);
      stages_[i].bn_b.collect(pre + ".bn_b", p);
    }
    out_.collect("out", p);
    return p;
  }

  NamedVars<Scalar> buffers() const {
    NamedVars<Scalar> b;
    for (std::size_t i = 0; i < stages_.size(); ++i) {
      const std::string pre = "stage" + std::to_string(i);
      stages_[i].conv_a.collect_buffers(pre + ".conv_a", b);
      stages_[i].bn_a.collect_buffers(pre + ".bn_a", b);
      stages_[i].conv_b.collect_buffers(pre + ".conv_b", b);
      stages_[i].bn_b.collect_buffers(pre + ".bn_b", b);
    }
    out_.collect_buffers("out", b);
    return b;
  }

 private:
  struct Stage {
    SpectralConv2d<Scalar> conv_a;
    BatchNorm2d<Scalar> bn_a;
    SpectralConv2d<Scalar> conv_b;
    BatchNorm2d<Scalar> bn_b;
  };

  DiscriminatorConfig cfg_;
  std::vector<Stage> stages_;
  SpectralConv2d<Scalar> out_;
  bool training_ = true;
};

// ---------------------------------------------------------------------------
// Segmentation embedding: compact encoder-decoder with skip connections.

struct SegmenterConfig {
  std::vector<int> encoder_channels{16, 32, 64};
  int classes = 6;
  bool frozen = false;

  int stride_product() const { return 1 << (encoder_channels.size() - 1); }
  void validate() const {
    if (encoder_channels.empty()) throw ConfigError("segmenter needs at least one encoder level");
    if (classes < 2) throw ConfigError("segmenter needs at least two classes");
  }
};

template <typename Scalar>
class Segmenter {
 public:
  Segmenter(const SegmenterConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg.validate();
    int in = 3;
    for (int ch : cfg.encoder_channels) {
      enc_.push_back({Conv2d<Scalar>(in, ch, 3, rng), Conv2d<Scalar>(ch, ch, 3, rng)});
      in = ch;
    }
    for (std::size_t l = 0; l + 1 < cfg.encoder_channels.size(); ++l) {
      const int ch = cfg.encoder_channels[l];
      const int below = cfg.encoder_channels[l + 1];
      dec_.push_back({Conv2d<Scalar>(below, ch, 3, rng), Conv2d<Scalar>(2 * ch, ch, 3, rng), Conv2d<Scalar>(ch, ch, 3, rng)});
    }
    head_ = Conv2d<Scalar>(cfg.encoder_channels.front(), cfg.classes, 1, rng);
    if (cfg.frozen) freeze();
  }

  const SegmenterConfig& config() const { return cfg_; }
  int classes() const { return cfg_.classes; }

  /// Pre-softmax class scores, (B,H,W,K).
  Var<Scalar> logits(const Var<Scalar>& x) const {
    const Shape& s = x.shape();
    const int m = cfg_.stride_product();
    if (s.c != 3) throw ShapeError("segmenter expects RGB input, got " + s.str());
    if (s.h % m || s.w % m)
      throw ShapeError("segmenter: input " + s.str() + " not divisible by stride product " + std::to_string(m));
    std::vector<Var<Scalar>> skips;
    Var<Scalar> h = x;
    for (std::size_t l = 0; l < enc_.size(); ++l) {
      if (l > 0) h = max_pool2(h);
      h = relu(enc_[l][1](relu(enc_[l][0](h))));
      skips.push_back(h);
    }
    for (std::size_t l = dec_.size(); l-- > 0;) {
      const auto& d = dec_[l];
      Var<Scalar> up = relu(d[0](upsample_nearest(h, 2)));
      h = relu(d[2](relu(d[1](concat_channels<Scalar>({up, skips[l]})))));
    }
    return head_(h);
  }

  /// Per-pixel class probabilities, the pre-threshold embedding.
  Var<Scalar> operator()(const Var<Scalar>& x) const { return softmax_channels(logits(x)); }

  void freeze() {
    cfg_.frozen = true;
    set_requires_grad(parameters(), false);
  }

  NamedVars<Scalar> parameters() const {
    NamedVars<Scalar> p;
    for (std::size_t l = 0; l < enc_.size(); ++l) {
      enc_[l][0].collect("enc" + std::to_string(l) + ".conv0", p);
      enc_[l][1].collect("enc" + std::to_string(l) + ".conv1", p);
    }
    for (std::size_t l = 0; l < dec_.size(); ++l) {
      dec_[l][0].collect("dec" + std::to_string(l) + ".up", p);
      dec_[l][1].collect("dec" + std::to_string(l) + ".conv0", p);
      dec_[l][2].collect("dec" + std::to_string(l) + ".conv1", p);
    }
    head_.collect("head", p);
    return p;
  }
  NamedVars<Scalar> buffers() const { return {}; }

 private:
  SegmenterConfig cfg_;
  std::vector<std::array<Conv2d<Scalar>, 2>> enc_;
  std::vector<std::array<Conv2d<Scalar>, 3>> dec_;
  Conv2d<Scalar> head_;
};

// ---------------------------------------------------------------------------

/// Copies every value tensor of `src` into the like-named tensor of `dst`.
/// Throws CheckpointError naming every tensor whose name or shape disagrees.
template <typename Scalar>
void assign_state(const NamedVars<Scalar>& dst, const NamedVars<Scalar>& src, const std::string& what) {
  std::map<std::string, Var<Scalar>> by_name(src.begin(), src.end());
  std::vector<std::string> problems;
  std::set<std::string> dst_names;
  for (const auto& [name, v] : dst) {
    dst_names.insert(name);
    auto it = by_name.find(name);
    if (it == by_name.end())
      problems.push_back(name + " (missing)");
    else if (!(it->second.shape() == v.shape()))
      problems.push_back(name + " (shape " + it->second.shape().str() + " vs " + v.shape().str() + ")");
  }
  for (const auto& [name, v] : src)
    if (!dst_names.count(name)) problems.push_back(name + " (unexpected)");
  if (!problems.empty()) {
    std::string msg = what + ": incompatible tensors:";
    for (const auto& p : problems) msg += " " + p;
    throw CheckpointError(msg);
  }
  for (auto [name, v] : dst) v.value_mut() = by_name.at(name).value();
}

struct TransferReport {
  std::vector<std::string> copied;
  std::vector<std::string> fresh;
};

/// Builds a generator for twice the scale of `lo`, copying every tensor the
/// two share; the extra upsampling stage keeps its fresh initialisation.
template <typename Scalar>
Generator<Scalar> init_from_lower_scale(const Generator<Scalar>& lo, int scale_hi, Rng& rng,
                                        TransferReport* report = nullptr) {
  GeneratorConfig hi_cfg = lo.config();
  hi_cfg.scale = scale_hi;
  if (scale_hi != 2 * lo.config().scale)
    throw ConfigError("cross-scale transfer expects scale " + std::to_string(2 * lo.config().scale) + ", got " +
                      std::to_string(scale_hi));
  Generator<Scalar> hi(hi_cfg, rng);
  std::map<std::string, Var<Scalar>> src;
  for (const auto& [name, v] : lo.parameters()) src.emplace(name, v);
  std::vector<std::string> mismatched;
  TransferReport rep;
  for (auto [name, v] : hi.parameters()) {
    auto it = src.find(name);
    if (it == src.end()) {
      rep.fresh.push_back(name);
      continue;
    }
    if (!(it->second.shape() == v.shape())) {
      mismatched.push_back(name);
      continue;
    }
    v.value_mut() = it->second.value();
    rep.copied.push_back(name);
    src.erase(it);
  }
  for (const auto& [name, v] : src) mismatched.push_back(name);
  if (!mismatched.empty()) {
    std::string msg = "cross-scale transfer: mismatched tensors:";
    for (const auto& n : mismatched) msg += " " + n;
    throw CheckpointError(msg);
  }
  if (report) *report = std::move(rep);
  return hi;
}

/// Overload that also checks the caller's intended config matches `lo`
/// everywhere but the scale.
template <typename Scalar>
Generator<Scalar> init_from_lower_scale(const Generator<Scalar>& lo, const GeneratorConfig& hi_cfg, Rng& rng,
                                        TransferReport* report = nullptr) {
  if (!lo.config().same_except_scale(hi_cfg))
    throw ConfigError("cross-scale transfer: generator configs differ in more than scale");
  return init_from_lower_scale(lo, hi_cfg.scale, rng, report);
}

}  // namespace semsr
