#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "pidd/blocks.hpp"
#include "pidd/kv_config.hpp"

namespace pidd {

struct GeneratorConfig {
  std::size_t base_width = 32;
  bool use_gr = true;
  bool use_lr = true;
  Attention attention = Attention::fca;
  FcaConfig fca{};
  std::uint64_t seed = 1;

  static constexpr std::size_t kDepth = 4;

  KeyValues to_kv() const;
  static GeneratorConfig from_kv(const KeyValues& kv);
  std::uint64_t hash() const { return fnv1a64(to_kv().str()); }
};

/// U-Net refinement network on 2-channel (re, im) images.
///
/// Down block i: conv3x3 stride 2 -> BN -> LeakyReLU -> residual block (1x1
/// shortcut when use_lr) -> attention, with base * 2^i channels.
/// Up block: deconv 4x4 stride 2 -> BN -> LeakyReLU -> concat same-scale
/// encoder output (the input itself at full scale) -> residual block without
/// shortcut -> attention. A 1x1 head maps to 2 channels; with use_gr the
/// input is added to the head output.
template <typename T>
class Generator {
 public:
  explicit Generator(const GeneratorConfig& cfg);
  ~Generator();
  Generator(const Generator&) = delete;
  Generator& operator=(const Generator&) = delete;

  Tensor<T> forward(const Tensor<T>& x, Mode mode);
  /// Gradient w.r.t. the input of the last forward call; accumulates parameter grads.
  Tensor<T> backward(const Tensor<T>& grad_out);
  std::vector<Param<T>*> params();
  const GeneratorConfig& config() const noexcept { return cfg_; }

  /// Zeroes the 1x1 head so the residual path contributes nothing.
  void zero_output_head();
  Conv2d<T>& head();

 private:
  struct Impl;
  GeneratorConfig cfg_;
  std::unique_ptr<Impl> impl_;
};

/// Stride-2 3x3 convs (BN + LeakyReLU each) until the map is at most 2x2,
/// two 1x1 convs, a residual block of three 1x1 convs with identity
/// shortcut, then FC -> sigmoid. Output is N x 1 x 1 x 1 in (0, 1).
template <typename T>
class Discriminator {
 public:
  Discriminator(const std::string& name, std::size_t in_channels, std::size_t h, std::size_t w, std::size_t base,
                RngStream& rng);
  ~Discriminator();
  Discriminator(const Discriminator&) = delete;
  Discriminator& operator=(const Discriminator&) = delete;

  Tensor<T> forward(const Tensor<T>& x, Mode mode);
  Tensor<T> backward(const Tensor<T>& grad_out);
  std::vector<Param<T>*> params();

  std::size_t strided_convs() const noexcept { return n_strided_; }
  /// Number of weight layers (convs + FC).
  std::size_t depth() const noexcept { return n_strided_ + 6; }
  Linear<T>& fc();

 private:
  struct Impl;
  std::size_t in_c_, h_, w_, n_strided_ = 0;
  std::unique_ptr<Impl> impl_;
};

/// Frozen random-feature extractor: four stride-2 3x3 convs
/// (2 -> 8 -> 16 -> 32 -> 32) with LeakyReLU, weights drawn from a fixed seed.
template <typename T>
class PerceptualNet {
 public:
  explicit PerceptualNet(std::uint64_t seed = kDefaultSeed);
  Tensor<T> features(const Tensor<T>& x);
  /// Gradient w.r.t. the input of the last `features` call.
  Tensor<T> backward(const Tensor<T>& grad_features);
  std::vector<Param<T>*> params() { return parameters(net_); }

  static constexpr std::uint64_t kDefaultSeed = 0x5eed0f;

 private:
  Sequential<T> net_;
};

/// Checkpoint directory: model.cfg (generator config), params.bin
/// (concatenated PIDT records, one per parameter or buffer) and index.txt
/// (`config_hash` line, then `name<TAB>offset<TAB>file` per record).
template <typename T>
void save_checkpoint(const std::filesystem::path& dir, Generator<T>& g);
/// Loads parameters into `g`; the stored config hash must match g's config.
template <typename T>
void load_checkpoint(const std::filesystem::path& dir, Generator<T>& g);
GeneratorConfig read_checkpoint_config(const std::filesystem::path& dir);

}  // namespace pidd
