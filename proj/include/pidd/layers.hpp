#pragma once

#include <memory>
#include <string>
#include <vector>

#include "pidd/rng.hpp"
#include "pidd/tensor.hpp"

namespace pidd {

enum class Mode { train, eval };

/// A differentiable stage. `forward` caches what `backward` needs, so a
/// backward call always refers to the most recent forward call. Parameter
/// gradients accumulate until the owner zeroes them.
template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor<T> forward(const Tensor<T>& x, Mode mode) = 0;
  virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;
  /// Appends every parameter and buffer owned by this layer.
  virtual void collect(std::vector<Param<T>*>& out) { (void)out; }
};

template <typename T>
std::vector<Param<T>*> parameters(Layer<T>& layer) {
  std::vector<Param<T>*> out;
  layer.collect(out);
  return out;
}

template <typename T>
void zero_grads(const std::vector<Param<T>*>& params) {
  for (auto* p : params)
    if (p->trainable) p->grad.zero();
}

/// Fan-in scaled normal: std = sqrt(2 / fan_in).
template <typename T>
void init_fan_in(Tensor<T>& w, std::size_t fan_in, RngStream& rng);

/// 2D cross-correlation, weights [out, in, k, k], bias [out].
template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(std::string name, std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, std::size_t pad,
         RngStream& rng);

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect(std::vector<Param<T>*>& out) override;

  Param<T>& weight() { return weight_; }
  Param<T>& bias() { return bias_; }
  std::size_t out_size(std::size_t in) const;

 private:
  std::size_t in_, out_, k_, stride_, pad_;
  Param<T> weight_, bias_;
  Tensor<T> x_;
};

/// Transposed convolution, weights [in, out, k, k], bias [out].
/// Output size is (in - 1) * stride - 2 * pad + k.
template <typename T>
class Deconv2d final : public Layer<T> {
 public:
  Deconv2d(std::string name, std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
           std::size_t pad, RngStream& rng);

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect(std::vector<Param<T>*>& out) override;

  Param<T>& weight() { return weight_; }
  Param<T>& bias() { return bias_; }

 private:
  std::size_t in_, out_, k_, stride_, pad_;
  Param<T> weight_, bias_;
  Tensor<T> x_;
};

/// Per-channel batch normalization (eps 1e-5). Running statistics follow
/// r <- momentum * r + (1 - momentum) * batch with momentum 0.9; the running
/// variance uses the unbiased batch estimate.
template <typename T>
class BatchNorm2d final : public Layer<T> {
 public:
  BatchNorm2d(std::string name, std::size_t channels);

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect(std::vector<Param<T>*>& out) override;

  Param<T>& gamma() { return gamma_; }
  Param<T>& beta() { return beta_; }
  Param<T>& running_mean() { return mean_; }
  Param<T>& running_var() { return var_; }

  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.9;

 private:
  std::size_t c_;
  Param<T> gamma_, beta_, mean_, var_;
  Mode mode_ = Mode::train;
  Tensor<T> xhat_;
  std::vector<T> inv_std_;
};

template <typename T>
class LeakyRelu final : public Layer<T> {
 public:
  explicit LeakyRelu(T slope = T(0.2)) : slope_(slope) {}
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

 private:
  T slope_;
  Tensor<T> x_;
};

template <typename T>
class Sigmoid final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

 private:
  Tensor<T> y_;
};

/// Fully connected over the flattened C*H*W features; output is N x out x 1 x 1.
template <typename T>
class Linear final : public Layer<T> {
 public:
  Linear(std::string name, std::size_t in, std::size_t out, RngStream& rng);

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect(std::vector<Param<T>*>& out) override;

  Param<T>& weight() { return weight_; }
  Param<T>& bias() { return bias_; }

 private:
  std::size_t in_, out_;
  Param<T> weight_, bias_;
  Tensor<T> x_;
};

template <typename T>
class Sequential final : public Layer<T> {
 public:
  Sequential() = default;

  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto p = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *p;
    layers_.push_back(std::move(p));
    return ref;
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    Tensor<T> y = x;
    for (auto& l : layers_) y = l->forward(y, mode);
    return y;
  }
  Tensor<T> backward(const Tensor<T>& grad_out) override {
    Tensor<T> g = grad_out;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
    return g;
  }
  void collect(std::vector<Param<T>*>& out) override {
    for (auto& l : layers_) l->collect(out);
  }
  std::size_t size() const { return layers_.size(); }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

/// Channel concatenation [a, b] and its gradient split.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& g, std::size_t first_channels);

}  // namespace pidd
