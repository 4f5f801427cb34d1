#include "pidd/layers.hpp"

#include <Eigen/Core>

#include <cmath>

namespace pidd {

namespace {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<Mat<T>>;
template <typename T>
using CMatMap = Eigen::Map<const Mat<T>>;

struct Geometry {
  std::size_t c, h, w;       // image side
  std::size_t k, stride, pad;
  std::size_t oh, ow;        // column side
  std::size_t rows() const { return c * k * k; }
  std::size_t cols() const { return oh * ow; }
};

// cols[(c*k + ki)*k + kj][oi*ow + oj] = img[c][oi*s - p + ki][oj*s - p + kj]
template <typename T>
void im2col(const T* img, const Geometry& g, T* cols) {
  for (std::size_t c = 0; c < g.c; ++c)
    for (std::size_t ki = 0; ki < g.k; ++ki)
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        T* row = cols + ((c * g.k + ki) * g.k + kj) * g.cols();
        for (std::size_t oi = 0; oi < g.oh; ++oi) {
          const long ii = static_cast<long>(oi * g.stride + ki) - static_cast<long>(g.pad);
          T* dst = row + oi * g.ow;
          if (ii < 0 || ii >= static_cast<long>(g.h)) {
            std::fill(dst, dst + g.ow, T(0));
            continue;
          }
          const T* src = img + (c * g.h + static_cast<std::size_t>(ii)) * g.w;
          for (std::size_t oj = 0; oj < g.ow; ++oj) {
            const long jj = static_cast<long>(oj * g.stride + kj) - static_cast<long>(g.pad);
            dst[oj] = (jj < 0 || jj >= static_cast<long>(g.w)) ? T(0) : src[jj];
          }
        }
      }
}

// Adjoint of im2col: accumulates columns back into the image.
template <typename T>
void col2im(const T* cols, const Geometry& g, T* img) {
  std::fill(img, img + g.c * g.h * g.w, T(0));
  for (std::size_t c = 0; c < g.c; ++c)
    for (std::size_t ki = 0; ki < g.k; ++ki)
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const T* row = cols + ((c * g.k + ki) * g.k + kj) * g.cols();
        for (std::size_t oi = 0; oi < g.oh; ++oi) {
          const long ii = static_cast<long>(oi * g.stride + ki) - static_cast<long>(g.pad);
          if (ii < 0 || ii >= static_cast<long>(g.h)) continue;
          T* dst = img + (c * g.h + static_cast<std::size_t>(ii)) * g.w;
          const T* src = row + oi * g.ow;
          for (std::size_t oj = 0; oj < g.ow; ++oj) {
            const long jj = static_cast<long>(oj * g.stride + kj) - static_cast<long>(g.pad);
            if (jj >= 0 && jj < static_cast<long>(g.w)) dst[jj] += src[oj];
          }
        }
      }
}

bool is_pointwise(const Geometry& g) { return g.k == 1 && g.stride == 1 && g.pad == 0; }

}  // namespace

template <typename T>
void init_fan_in(Tensor<T>& w, std::size_t fan_in, RngStream& rng) {
  const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& v : w.data()) v = static_cast<T>(sd * rng.normal());
}

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(std::string name, std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                  std::size_t pad, RngStream& rng)
    : in_(in),
      out_(out),
      k_(kernel),
      stride_(stride),
      pad_(pad),
      weight_(name + ".weight", Shape{out, in, kernel, kernel}),
      bias_(name + ".bias", Shape{out, 1, 1, 1}) {
  if (in == 0 || out == 0 || kernel == 0 || stride == 0) throw InvalidInput("conv2d: zero-sized configuration");
  init_fan_in(weight_.value, in * kernel * kernel, rng);
}

template <typename T>
std::size_t Conv2d<T>::out_size(std::size_t n) const {
  if (n + 2 * pad_ < k_) throw InvalidInput("conv2d: input smaller than kernel");
  return (n + 2 * pad_ - k_) / stride_ + 1;
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x, Mode) {
  if (x.c() != in_) {
    throw InvalidInput("conv2d " + weight_.name + ": expected " + std::to_string(in_) + " channels, got " +
                       x.shape().str());
  }
  const Geometry g{in_, x.h(), x.w(), k_, stride_, pad_, out_size(x.h()), out_size(x.w())};
  x_ = x;
  Tensor<T> y(x.n(), out_, g.oh, g.ow);
  AlignedVector<T> cols(is_pointwise(g) ? 0 : g.rows() * g.cols());
  CMatMap<T> W(weight_.value.ptr(), out_, g.rows());
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(bias_.value.ptr(), out_);
  for (std::size_t n = 0; n < x.n(); ++n) {
    const T* src = x.plane(n, 0);
    if (!is_pointwise(g)) {
      im2col(src, g, cols.data());
      src = cols.data();
    }
    MatMap<T> Y(y.plane(n, 0), out_, g.cols());
    Y.noalias() = W * CMatMap<T>(src, g.rows(), g.cols());
    Y.colwise() += b;
  }
  return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& dy) {
  const Geometry g{in_, x_.h(), x_.w(), k_, stride_, pad_, out_size(x_.h()), out_size(x_.w())};
  if (dy.n() != x_.n() || dy.c() != out_ || dy.h() != g.oh || dy.w() != g.ow) {
    throw InvalidInput("conv2d backward: gradient shape " + dy.shape().str() + " does not match output");
  }
  Tensor<T> dx(x_.shape());
  AlignedVector<T> cols(is_pointwise(g) ? 0 : g.rows() * g.cols());
  AlignedVector<T> dcols(is_pointwise(g) ? 0 : g.rows() * g.cols());
  CMatMap<T> W(weight_.value.ptr(), out_, g.rows());
  MatMap<T> dW(weight_.grad.ptr(), out_, g.rows());
  Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> db(bias_.grad.ptr(), out_);
  for (std::size_t n = 0; n < x_.n(); ++n) {
    CMatMap<T> G(dy.plane(n, 0), out_, g.cols());
    const T* src = x_.plane(n, 0);
    if (!is_pointwise(g)) {
      im2col(src, g, cols.data());
      src = cols.data();
    }
    dW.noalias() += G * CMatMap<T>(src, g.rows(), g.cols()).transpose();
    db += G.rowwise().sum();
    if (is_pointwise(g)) {
      MatMap<T>(dx.plane(n, 0), g.rows(), g.cols()).noalias() = W.transpose() * G;
    } else {
      MatMap<T>(dcols.data(), g.rows(), g.cols()).noalias() = W.transpose() * G;
      col2im(dcols.data(), g, dx.plane(n, 0));
    }
  }
  return dx;
}

template <typename T>
void Conv2d<T>::collect(std::vector<Param<T>*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

// -------------------------------------------------------------- Deconv2d

template <typename T>
Deconv2d<T>::Deconv2d(std::string name, std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                      std::size_t pad, RngStream& rng)
    : in_(in),
      out_(out),
      k_(kernel),
      stride_(stride),
      pad_(pad),
      weight_(name + ".weight", Shape{in, out, kernel, kernel}),
      bias_(name + ".bias", Shape{out, 1, 1, 1}) {
  if (in == 0 || out == 0 || kernel == 0 || stride == 0) throw InvalidInput("deconv2d: zero-sized configuration");
  // each output pixel sees roughly in * (k / stride)^2 taps
  init_fan_in(weight_.value, std::max<std::size_t>(1, in * kernel * kernel / (stride * stride)), rng);
}

template <typename T>
Tensor<T> Deconv2d<T>::forward(const Tensor<T>& x, Mode) {
  if (x.c() != in_) {
    throw InvalidInput("deconv2d " + weight_.name + ": expected " + std::to_string(in_) + " channels, got " +
                       x.shape().str());
  }
  const long oh = static_cast<long>((x.h() - 1) * stride_ + k_) - 2 * static_cast<long>(pad_);
  const long ow = static_cast<long>((x.w() - 1) * stride_ + k_) - 2 * static_cast<long>(pad_);
  if (oh <= 0 || ow <= 0) throw InvalidInput("deconv2d: output would be empty");
  const Geometry g{out_, static_cast<std::size_t>(oh), static_cast<std::size_t>(ow), k_, stride_, pad_, x.h(), x.w()};
  x_ = x;
  Tensor<T> y(x.n(), out_, g.h, g.w);
  AlignedVector<T> cols(g.rows() * g.cols());
  CMatMap<T> W(weight_.value.ptr(), in_, g.rows());
  for (std::size_t n = 0; n < x.n(); ++n) {
    MatMap<T>(cols.data(), g.rows(), g.cols()).noalias() = W.transpose() * CMatMap<T>(x.plane(n, 0), in_, g.cols());
    col2im(cols.data(), g, y.plane(n, 0));
    for (std::size_t c = 0; c < out_; ++c) {
      T* p = y.plane(n, c);
      const T b = bias_.value[c];
      for (std::size_t k = 0; k < g.h * g.w; ++k) p[k] += b;
    }
  }
  return y;
}

template <typename T>
Tensor<T> Deconv2d<T>::backward(const Tensor<T>& dy) {
  const std::size_t oh = (x_.h() - 1) * stride_ + k_ - 2 * pad_;
  const std::size_t ow = (x_.w() - 1) * stride_ + k_ - 2 * pad_;
  if (dy.n() != x_.n() || dy.c() != out_ || dy.h() != oh || dy.w() != ow) {
    throw InvalidInput("deconv2d backward: gradient shape " + dy.shape().str() + " does not match output");
  }
  const Geometry g{out_, oh, ow, k_, stride_, pad_, x_.h(), x_.w()};
  Tensor<T> dx(x_.shape());
  AlignedVector<T> cols(g.rows() * g.cols());
  CMatMap<T> W(weight_.value.ptr(), in_, g.rows());
  MatMap<T> dW(weight_.grad.ptr(), in_, g.rows());
  for (std::size_t n = 0; n < x_.n(); ++n) {
    im2col(dy.plane(n, 0), g, cols.data());
    CMatMap<T> C(cols.data(), g.rows(), g.cols());
    MatMap<T>(dx.plane(n, 0), in_, g.cols()).noalias() = W * C;
    dW.noalias() += CMatMap<T>(x_.plane(n, 0), in_, g.cols()) * C.transpose();
    for (std::size_t c = 0; c < out_; ++c) {
      const T* p = dy.plane(n, c);
      T s = 0;
      for (std::size_t k = 0; k < oh * ow; ++k) s += p[k];
      bias_.grad[c] += s;
    }
  }
  return dx;
}

template <typename T>
void Deconv2d<T>::collect(std::vector<Param<T>*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

// ----------------------------------------------------------- BatchNorm2d

template <typename T>
BatchNorm2d<T>::BatchNorm2d(std::string name, std::size_t channels)
    : c_(channels),
      gamma_(name + ".gamma", Shape{channels, 1, 1, 1}),
      beta_(name + ".beta", Shape{channels, 1, 1, 1}),
      mean_(name + ".running_mean", Shape{channels, 1, 1, 1}, false),
      var_(name + ".running_var", Shape{channels, 1, 1, 1}, false) {
  gamma_.value.fill(T(1));
  var_.value.fill(T(1));
}

template <typename T>
Tensor<T> BatchNorm2d<T>::forward(const Tensor<T>& x, Mode mode) {
  if (x.c() != c_) throw InvalidInput("batchnorm " + gamma_.name + ": channel mismatch, got " + x.shape().str());
  mode_ = mode;
  const std::size_t hw = x.h() * x.w();
  const std::size_t m = x.n() * hw;
  Tensor<T> y(x.shape());
  xhat_ = Tensor<T>(x.shape());
  inv_std_.assign(c_, T(0));
  if (mode == Mode::train && x.n() < 2) throw InvalidInput("batchnorm in train mode needs a batch of at least 2");
  for (std::size_t c = 0; c < c_; ++c) {
    double mean, var;
    if (mode == Mode::train) {
      double s = 0.0;
      for (std::size_t n = 0; n < x.n(); ++n) {
        const T* p = x.plane(n, c);
        for (std::size_t k = 0; k < hw; ++k) s += p[k];
      }
      mean = s / static_cast<double>(m);
      double ss = 0.0;
      for (std::size_t n = 0; n < x.n(); ++n) {
        const T* p = x.plane(n, c);
        for (std::size_t k = 0; k < hw; ++k) {
          const double d = p[k] - mean;
          ss += d * d;
        }
      }
      var = ss / static_cast<double>(m);
      const double unbiased = ss / static_cast<double>(m - 1);
      mean_.value[c] = static_cast<T>(kMomentum * mean_.value[c] + (1.0 - kMomentum) * mean);
      var_.value[c] = static_cast<T>(kMomentum * var_.value[c] + (1.0 - kMomentum) * unbiased);
    } else {
      mean = mean_.value[c];
      var = var_.value[c];
    }
    const T inv = static_cast<T>(1.0 / std::sqrt(var + kEps));
    const T mu = static_cast<T>(mean);
    inv_std_[c] = inv;
    const T gm = gamma_.value[c], bt = beta_.value[c];
    for (std::size_t n = 0; n < x.n(); ++n) {
      const T* p = x.plane(n, c);
      T* xh = xhat_.plane(n, c);
      T* o = y.plane(n, c);
      for (std::size_t k = 0; k < hw; ++k) {
        xh[k] = (p[k] - mu) * inv;
        o[k] = gm * xh[k] + bt;
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> BatchNorm2d<T>::backward(const Tensor<T>& dy) {
  xhat_.require_same(dy, "batchnorm backward");
  const std::size_t hw = dy.h() * dy.w();
  const double m = static_cast<double>(dy.n() * hw);
  Tensor<T> dx(dy.shape());
  for (std::size_t c = 0; c < c_; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t n = 0; n < dy.n(); ++n) {
      const T* g = dy.plane(n, c);
      const T* xh = xhat_.plane(n, c);
      for (std::size_t k = 0; k < hw; ++k) {
        sum_dy += g[k];
        sum_dy_xhat += g[k] * xh[k];
      }
    }
    gamma_.grad[c] += static_cast<T>(sum_dy_xhat);
    beta_.grad[c] += static_cast<T>(sum_dy);
    const T scale = gamma_.value[c] * inv_std_[c];
    if (mode_ == Mode::train) {
      const T mdy = static_cast<T>(sum_dy / m), mdyx = static_cast<T>(sum_dy_xhat / m);
      for (std::size_t n = 0; n < dy.n(); ++n) {
        const T* g = dy.plane(n, c);
        const T* xh = xhat_.plane(n, c);
        T* d = dx.plane(n, c);
        for (std::size_t k = 0; k < hw; ++k) d[k] = scale * (g[k] - mdy - xh[k] * mdyx);
      }
    } else {
      for (std::size_t n = 0; n < dy.n(); ++n) {
        const T* g = dy.plane(n, c);
        T* d = dx.plane(n, c);
        for (std::size_t k = 0; k < hw; ++k) d[k] = scale * g[k];
      }
    }
  }
  return dx;
}

template <typename T>
void BatchNorm2d<T>::collect(std::vector<Param<T>*>& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
  out.push_back(&mean_);
  out.push_back(&var_);
}

// ------------------------------------------------------------ activations

template <typename T>
Tensor<T> LeakyRelu<T>::forward(const Tensor<T>& x, Mode) {
  x_ = x;
  Tensor<T> y(x.shape());
  for (std::size_t k = 0; k < x.size(); ++k) y[k] = x[k] > T(0) ? x[k] : slope_ * x[k];
  return y;
}

template <typename T>
Tensor<T> LeakyRelu<T>::backward(const Tensor<T>& dy) {
  x_.require_same(dy, "leaky_relu backward");
  Tensor<T> dx(dy.shape());
  for (std::size_t k = 0; k < dy.size(); ++k) dx[k] = x_[k] > T(0) ? dy[k] : slope_ * dy[k];
  return dx;
}

template <typename T>
Tensor<T> Sigmoid<T>::forward(const Tensor<T>& x, Mode) {
  y_ = Tensor<T>(x.shape());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const T v = x[k];
    // split by sign so exp never overflows
    y_[k] = v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
  }
  return y_;
}

template <typename T>
Tensor<T> Sigmoid<T>::backward(const Tensor<T>& dy) {
  y_.require_same(dy, "sigmoid backward");
  Tensor<T> dx(dy.shape());
  for (std::size_t k = 0; k < dy.size(); ++k) dx[k] = dy[k] * y_[k] * (T(1) - y_[k]);
  return dx;
}

// ---------------------------------------------------------------- Linear

template <typename T>
Linear<T>::Linear(std::string name, std::size_t in, std::size_t out, RngStream& rng)
    : in_(in), out_(out), weight_(name + ".weight", Shape{out, in, 1, 1}), bias_(name + ".bias", Shape{out, 1, 1, 1}) {
  if (in == 0 || out == 0) throw InvalidInput("linear: zero-sized configuration");
  init_fan_in(weight_.value, in, rng);
}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x, Mode) {
  const std::size_t feat = x.c() * x.h() * x.w();
  if (feat != in_) {
    throw InvalidInput("linear " + weight_.name + ": expected " + std::to_string(in_) + " features, got " +
                       x.shape().str());
  }
  x_ = x;
  Tensor<T> y(x.n(), out_, 1, 1);
  CMatMap<T> X(x.ptr(), x.n(), in_);
  CMatMap<T> W(weight_.value.ptr(), out_, in_);
  MatMap<T> Y(y.ptr(), x.n(), out_);
  Y.noalias() = X * W.transpose();
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias_.value.ptr(), out_);
  Y.rowwise() += b;
  return y;
}

template <typename T>
Tensor<T> Linear<T>::backward(const Tensor<T>& dy) {
  if (dy.n() != x_.n() || dy.c() * dy.h() * dy.w() != out_) throw InvalidInput("linear backward: shape mismatch");
  Tensor<T> dx(x_.shape());
  CMatMap<T> G(dy.ptr(), dy.n(), out_);
  CMatMap<T> X(x_.ptr(), x_.n(), in_);
  CMatMap<T> W(weight_.value.ptr(), out_, in_);
  MatMap<T>(weight_.grad.ptr(), out_, in_).noalias() += G.transpose() * X;
  Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias_.grad.ptr(), out_) += G.colwise().sum();
  MatMap<T>(dx.ptr(), x_.n(), in_).noalias() = G * W;
  return dx;
}

template <typename T>
void Linear<T>::collect(std::vector<Param<T>*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

// ----------------------------------------------------------------- concat

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w()) {
    throw InvalidInput("concat_channels: " + a.shape().str() + " vs " + b.shape().str());
  }
  Tensor<T> out(a.n(), a.c() + b.c(), a.h(), a.w());
  const std::size_t hw = a.h() * a.w();
  for (std::size_t n = 0; n < a.n(); ++n) {
    std::copy(a.plane(n, 0), a.plane(n, 0) + a.c() * hw, out.plane(n, 0));
    std::copy(b.plane(n, 0), b.plane(n, 0) + b.c() * hw, out.plane(n, a.c()));
  }
  return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& g, std::size_t first) {
  if (first > g.c()) throw InvalidInput("split_channels: split point beyond channel count");
  Tensor<T> a(g.n(), first, g.h(), g.w()), b(g.n(), g.c() - first, g.h(), g.w());
  const std::size_t hw = g.h() * g.w();
  for (std::size_t n = 0; n < g.n(); ++n) {
    std::copy(g.plane(n, 0), g.plane(n, 0) + first * hw, a.plane(n, 0));
    std::copy(g.plane(n, first), g.plane(n, first) + (g.c() - first) * hw, b.plane(n, 0));
  }
  return {std::move(a), std::move(b)};
}

#define PIDD_INSTANTIATE(T)                                                                   \
  template void init_fan_in(Tensor<T>&, std::size_t, RngStream&);                             \
  template class Conv2d<T>;                                                                   \
  template class Deconv2d<T>;                                                                 \
  template class BatchNorm2d<T>;                                                              \
  template class LeakyRelu<T>;                                                                \
  template class Sigmoid<T>;                                                                  \
  template class Linear<T>;                                                                   \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                     \
  template std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>&, std::size_t);

PIDD_INSTANTIATE(float)
PIDD_INSTANTIATE(double)
#undef PIDD_INSTANTIATE

}  // namespace pidd
