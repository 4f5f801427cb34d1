#include "pidd/blocks.hpp"

#include <algorithm>
#include <set>

#include "pidd/dct.hpp"

namespace pidd {

template <typename T>
ResidualBlock<T>::ResidualBlock(const std::string& name, std::size_t in, std::size_t out, bool use_shortcut,
                                RngStream& rng)
    : conv_a_(name + ".conv_a", in, out, 3, 1, 1, rng),
      bn_(name + ".bn", out),
      conv_b_(name + ".conv_b", out, out, 3, 1, 1, rng) {
  if (use_shortcut) skip_ = std::make_unique<Conv2d<T>>(name + ".skip", in, out, 1, 1, 0, rng);
}

template <typename T>
Tensor<T> ResidualBlock<T>::forward(const Tensor<T>& x, Mode mode) {
  Tensor<T> y = conv_b_.forward(act_.forward(bn_.forward(conv_a_.forward(x, mode), mode), mode), mode);
  if (skip_) y += skip_->forward(x, mode);
  return y;
}

template <typename T>
Tensor<T> ResidualBlock<T>::backward(const Tensor<T>& g) {
  Tensor<T> dx = conv_a_.backward(bn_.backward(act_.backward(conv_b_.backward(g))));
  if (skip_) dx += skip_->backward(g);
  return dx;
}

template <typename T>
void ResidualBlock<T>::collect(std::vector<Param<T>*>& out) {
  conv_a_.collect(out);
  bn_.collect(out);
  conv_b_.collect(out);
  if (skip_) skip_->collect(out);
}

std::string to_string(Attention a) {
  switch (a) {
    case Attention::none: return "none";
    case Attention::fca: return "fca";
    case Attention::se: return "se";
  }
  return "none";
}

Attention parse_attention(const std::string& s) {
  if (s == "none") return Attention::none;
  if (s == "fca") return Attention::fca;
  if (s == "se") return Attention::se;
  throw InvalidInput("unknown attention '" + s + "' (expected none, fca or se)");
}

namespace {

std::size_t reduced(std::size_t c, std::size_t r) {
  if (r == 0) throw InvalidInput("attention reduction must be positive");
  return std::max<std::size_t>(1, c / r);
}

}  // namespace

template <typename T>
ChannelAttention<T>::ChannelAttention(const std::string& name, std::size_t channels, std::size_t reduction,
                                      RngStream& rng)
    : c_(channels),
      fca_(false),
      fc1_(name + ".fc1", channels, reduced(channels, reduction), rng),
      fc2_(name + ".fc2", reduced(channels, reduction), channels, rng) {
  cfg_.reduction = reduction;
}

template <typename T>
ChannelAttention<T>::ChannelAttention(const std::string& name, std::size_t channels, const FcaConfig& cfg,
                                      RngStream& rng)
    : c_(channels),
      fca_(true),
      cfg_(cfg),
      fc1_(name + ".fc1", channels, reduced(channels, cfg.reduction), rng),
      fc2_(name + ".fc2", reduced(channels, cfg.reduction), channels, rng) {
  if (cfg.n_parts == 0 || channels % cfg.n_parts != 0) {
    throw InvalidInput("fca: " + std::to_string(channels) + " channels not divisible into " +
                       std::to_string(cfg.n_parts) + " parts");
  }
  if (cfg.freqs.size() != cfg.n_parts) throw InvalidInput("fca: need exactly one frequency per part");
  std::set<std::pair<std::size_t, std::size_t>> uniq(cfg.freqs.begin(), cfg.freqs.end());
  if (uniq.size() != cfg.freqs.size()) throw InvalidInput("fca: frequency pairs must be unique");
}

template <typename T>
void ChannelAttention<T>::prepare_bases(std::size_t h, std::size_t w) {
  if (h == basis_h_ && w == basis_w_) return;
  bases_.clear();
  for (const auto& [u, v] : cfg_.freqs) bases_.push_back(dct2_basis<T>(std::min(u, h - 1), std::min(v, w - 1), h, w));
  basis_h_ = h;
  basis_w_ = w;
}

template <typename T>
Tensor<T> ChannelAttention<T>::squeeze(const Tensor<T>& x) {
  if (x.c() != c_) throw InvalidInput("attention: channel mismatch, got " + x.shape().str());
  const std::size_t hw = x.h() * x.w();
  Tensor<T> s(x.n(), c_, 1, 1);
  if (fca_) prepare_bases(x.h(), x.w());
  const std::size_t group = fca_ ? c_ / cfg_.n_parts : c_;
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t c = 0; c < c_; ++c) {
      const T* p = x.plane(n, c);
      T acc = 0;
      if (fca_) {
        const T* b = bases_[c / group].ptr();
        for (std::size_t k = 0; k < hw; ++k) acc += p[k] * b[k];
      } else {
        for (std::size_t k = 0; k < hw; ++k) acc += p[k];
        acc /= static_cast<T>(hw);
      }
      s.at(n, c, 0, 0) = acc;
    }
  return s;
}

template <typename T>
Tensor<T> ChannelAttention<T>::forward(const Tensor<T>& x, Mode mode) {
  x_ = x;
  const Tensor<T> s = squeeze(x);
  w_ = sig_.forward(fc2_.forward(act_.forward(fc1_.forward(s, mode), mode), mode), mode);
  return scale_channels(x, w_);
}

template <typename T>
Tensor<T> ChannelAttention<T>::backward(const Tensor<T>& g) {
  x_.require_same(g, "attention backward");
  const std::size_t hw = g.h() * g.w();
  Tensor<T> dx = scale_channels(g, w_);
  Tensor<T> dw(g.n(), c_, 1, 1);
  for (std::size_t n = 0; n < g.n(); ++n)
    for (std::size_t c = 0; c < c_; ++c) {
      const T* a = g.plane(n, c);
      const T* b = x_.plane(n, c);
      T acc = 0;
      for (std::size_t k = 0; k < hw; ++k) acc += a[k] * b[k];
      dw.at(n, c, 0, 0) = acc;
    }
  const Tensor<T> ds = fc1_.backward(act_.backward(fc2_.backward(sig_.backward(dw))));
  const std::size_t group = fca_ ? c_ / cfg_.n_parts : c_;
  for (std::size_t n = 0; n < g.n(); ++n)
    for (std::size_t c = 0; c < c_; ++c) {
      T* d = dx.plane(n, c);
      const T sc = ds.at(n, c, 0, 0);
      if (fca_) {
        const T* b = bases_[c / group].ptr();
        for (std::size_t k = 0; k < hw; ++k) d[k] += sc * b[k];
      } else {
        const T v = sc / static_cast<T>(hw);
        for (std::size_t k = 0; k < hw; ++k) d[k] += v;
      }
    }
  return dx;
}

template <typename T>
void ChannelAttention<T>::collect(std::vector<Param<T>*>& out) {
  fc1_.collect(out);
  fc2_.collect(out);
}

template <typename T>
Tensor<T> scale_channels(const Tensor<T>& x, const Tensor<T>& w) {
  if (w.n() != x.n() || w.c() != x.c() || w.h() != 1 || w.w() != 1) {
    throw InvalidInput("scale_channels: weights " + w.shape().str() + " vs input " + x.shape().str());
  }
  Tensor<T> y(x.shape());
  const std::size_t hw = x.h() * x.w();
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t c = 0; c < x.c(); ++c) {
      const T s = w.at(n, c, 0, 0);
      const T* p = x.plane(n, c);
      T* o = y.plane(n, c);
      for (std::size_t k = 0; k < hw; ++k) o[k] = p[k] * s;
    }
  return y;
}

template <typename T>
std::unique_ptr<Layer<T>> make_attention(Attention kind, const std::string& name, std::size_t channels,
                                         const FcaConfig& cfg, RngStream& rng) {
  switch (kind) {
    case Attention::fca: return std::make_unique<ChannelAttention<T>>(name, channels, cfg, rng);
    case Attention::se: return std::make_unique<ChannelAttention<T>>(name, channels, cfg.reduction, rng);
    case Attention::none: break;
  }
  return nullptr;
}

template class ResidualBlock<float>;
template class ResidualBlock<double>;
template class ChannelAttention<float>;
template class ChannelAttention<double>;
template Tensor<float> scale_channels(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> scale_channels(const Tensor<double>&, const Tensor<double>&);
template std::unique_ptr<Layer<float>> make_attention(Attention, const std::string&, std::size_t, const FcaConfig&,
                                                      RngStream&);
template std::unique_ptr<Layer<double>> make_attention(Attention, const std::string&, std::size_t, const FcaConfig&,
                                                       RngStream&);

}  // namespace pidd
