#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "pidd/layers.hpp"

namespace pidd {

/// conv3x3 -> BN -> LeakyReLU -> conv3x3, plus an optional 1x1 channel-adjust
/// shortcut (local residual learning).
template <typename T>
class ResidualBlock final : public Layer<T> {
 public:
  ResidualBlock(const std::string& name, std::size_t in, std::size_t out, bool use_shortcut, RngStream& rng);

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect(std::vector<Param<T>*>& out) override;

  bool has_shortcut() const noexcept { return skip_ != nullptr; }
  Conv2d<T>& conv_a() { return conv_a_; }
  Conv2d<T>& conv_b() { return conv_b_; }
  Conv2d<T>* shortcut() { return skip_.get(); }

 private:
  Conv2d<T> conv_a_;
  BatchNorm2d<T> bn_;
  LeakyRelu<T> act_;
  Conv2d<T> conv_b_;
  std::unique_ptr<Conv2d<T>> skip_;
};

enum class Attention { none, fca, se };
std::string to_string(Attention a);
Attention parse_attention(const std::string& s);

struct FcaConfig {
  std::size_t n_parts = 4;
  std::vector<std::pair<std::size_t, std::size_t>> freqs{{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  std::size_t reduction = 4;
};

/// Squeeze -> FC(C -> C/r) -> LeakyReLU -> FC(C/r -> C) -> sigmoid -> channel
/// rescale. The squeeze is either the global average (SE) or, for FCA, the
/// projection of each channel group onto one DCT-II basis image. On maps
/// smaller than a requested frequency the index is clamped to the grid.
template <typename T>
class ChannelAttention final : public Layer<T> {
 public:
  /// SE block.
  ChannelAttention(const std::string& name, std::size_t channels, std::size_t reduction, RngStream& rng);
  /// FCA block.
  ChannelAttention(const std::string& name, std::size_t channels, const FcaConfig& cfg, RngStream& rng);

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect(std::vector<Param<T>*>& out) override;

  /// N x C x 1 x 1 squeezed descriptor.
  Tensor<T> squeeze(const Tensor<T>& x);
  /// Channel weights from the most recent forward call.
  const Tensor<T>& weights() const noexcept { return w_; }
  Linear<T>& fc1() { return fc1_; }
  Linear<T>& fc2() { return fc2_; }
  bool is_fca() const noexcept { return fca_; }

 private:
  void prepare_bases(std::size_t h, std::size_t w);

  std::size_t c_;
  bool fca_;
  FcaConfig cfg_;
  Linear<T> fc1_;
  LeakyRelu<T> act_;
  Linear<T> fc2_;
  Sigmoid<T> sig_;
  std::size_t basis_h_ = 0, basis_w_ = 0;
  std::vector<Tensor<T>> bases_;  // one per group
  Tensor<T> x_, w_;
};

/// x * w broadcast over H x W, w being N x C x 1 x 1.
template <typename T>
Tensor<T> scale_channels(const Tensor<T>& x, const Tensor<T>& w);

template <typename T>
std::unique_ptr<Layer<T>> make_attention(Attention kind, const std::string& name, std::size_t channels,
                                         const FcaConfig& cfg, RngStream& rng);

}  // namespace pidd
