#include "pidd/losses.hpp"

#include <algorithm>
#include <cmath>

#include "pidd/fft.hpp"

namespace pidd {

template <typename T>
Tensor<T> pack_images(const std::vector<const ComplexImage*>& imgs) {
  if (imgs.empty()) throw InvalidInput("pack_images: empty batch");
  const std::size_t h = imgs.front()->height(), w = imgs.front()->width();
  Tensor<T> t(imgs.size(), 2, h, w);
  for (std::size_t n = 0; n < imgs.size(); ++n) {
    if (imgs[n]->height() != h || imgs[n]->width() != w) throw InvalidInput("pack_images: mixed image sizes");
    T* re = t.plane(n, 0);
    T* im = t.plane(n, 1);
    for (std::size_t k = 0; k < h * w; ++k) {
      re[k] = static_cast<T>((*imgs[n])[k].real());
      im[k] = static_cast<T>((*imgs[n])[k].imag());
    }
  }
  return t;
}

template <typename T>
ComplexImage unpack_image(const Tensor<T>& t, std::size_t n) {
  if (t.c() != 2 || n >= t.n()) throw InvalidInput("unpack_image: expected N x 2 x H x W, got " + t.shape().str());
  ComplexImage img(t.h(), t.w());
  const T* re = t.plane(n, 0);
  const T* im = t.plane(n, 1);
  for (std::size_t k = 0; k < img.size(); ++k) img[k] = {static_cast<double>(re[k]), static_cast<double>(im[k])};
  return img;
}

double loss_imse(const ComplexImage& xhat, const CoilImages& xt, const SensitivityMaps& maps, ComplexImage* grad) {
  if (!xt.same_shape(maps) || xhat.height() != maps.height() || xhat.width() != maps.width()) {
    throw InvalidInput("loss_imse: shape mismatch");
  }
  const std::size_t hw = xhat.size();
  if (grad) *grad = ComplexImage(xhat.height(), xhat.width());
  double loss = 0.0;
  for (std::size_t q = 0; q < maps.coils(); ++q) {
    const auto c = maps.coil(q);
    const auto t = xt.coil(q);
    for (std::size_t k = 0; k < hw; ++k) {
      const std::complex<double> r = c[k] * xhat[k] - t[k];
      loss += 0.5 * std::norm(r);
      if (grad) (*grad)[k] += std::conj(c[k]) * r;
    }
  }
  return loss;
}

FmseParts loss_fmse(const ComplexImage& xhat, const MultiCoilKSpace& y_mask, const MultiCoilKSpace& y_unmask,
                    const SensitivityMaps& maps, const SamplingMask& mask, ComplexImage* g_mask,
                    ComplexImage* g_unmask) {
  if (!y_mask.same_shape(maps) || !y_unmask.same_shape(maps) || xhat.height() != maps.height() ||
      xhat.width() != maps.width() || mask.height() != maps.height() || mask.width() != maps.width()) {
    throw InvalidInput("loss_fmse: shape mismatch");
  }
  const std::size_t h = xhat.height(), w = xhat.width(), hw = h * w;
  if (g_mask) *g_mask = ComplexImage(h, w);
  if (g_unmask) *g_unmask = ComplexImage(h, w);
  FmseParts out;
  ComplexImage cx(h, w), rm(h, w), ru(h, w);
  for (std::size_t q = 0; q < maps.coils(); ++q) {
    const auto c = maps.coil(q);
    for (std::size_t k = 0; k < hw; ++k) cx[k] = c[k] * xhat[k];
    const ComplexImage k_est = fft2_centered(cx);
    const auto ym = y_mask.coil(q);
    const auto yu = y_unmask.coil(q);
    for (std::size_t k = 0; k < hw; ++k) {
      // residuals oriented as prediction - data so the gradient is F^H r
      if (mask[k]) {
        rm[k] = k_est[k] - ym[k];
        ru[k] = -yu[k];
      } else {
        rm[k] = -ym[k];
        ru[k] = k_est[k] - yu[k];
      }
      out.masked += 0.5 * std::norm(rm[k]);
      out.unmasked += 0.5 * std::norm(ru[k]);
    }
    // only the estimate-dependent half of each residual carries gradient
    if (g_mask) {
      for (std::size_t k = 0; k < hw; ++k)
        if (!mask[k]) rm[k] = 0.0;
      const ComplexImage back = ifft2_centered(rm);
      for (std::size_t k = 0; k < hw; ++k) (*g_mask)[k] += std::conj(c[k]) * back[k];
    }
    if (g_unmask) {
      for (std::size_t k = 0; k < hw; ++k)
        if (mask[k]) ru[k] = 0.0;
      const ComplexImage back = ifft2_centered(ru);
      for (std::size_t k = 0; k < hw; ++k) (*g_unmask)[k] += std::conj(c[k]) * back[k];
    }
  }
  return out;
}

template <typename T>
double loss_perceptual(PerceptualNet<T>& net, const Tensor<T>& xhat, const Tensor<T>& x_t, Tensor<T>* grad) {
  xhat.require_same(x_t, "loss_perceptual");
  const Tensor<T> ft = net.features(x_t);
  const Tensor<T> fh = net.features(xhat);
  const double inv_n = 1.0 / static_cast<double>(xhat.n());
  Tensor<T> d(fh.shape());
  double loss = 0.0;
  for (std::size_t k = 0; k < fh.size(); ++k) {
    const double r = static_cast<double>(fh[k]) - static_cast<double>(ft[k]);
    loss += 0.5 * r * r;
    d[k] = static_cast<T>(r * inv_n);
  }
  if (grad) *grad = net.backward(d);
  return loss * inv_n;
}

double bce(double p, bool real_label, double* dp) {
  const double c = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
  const bool active = c == p;
  if (real_label) {
    if (dp) *dp = active ? -1.0 / c : 0.0;
    return -std::log(c);
  }
  if (dp) *dp = active ? 1.0 / (1.0 - c) : 0.0;
  return -std::log1p(-c);
}

double loss_adversarial(double d1r, double d1f, double d2r, double d2f, const LossWeights& w, Side side) {
  if (side == Side::discriminator) {
    return w.mu * (bce(d1r, true) + bce(d1f, false)) + w.nu * (bce(d2r, true) + bce(d2f, false));
  }
  return w.mu * bce(d1f, true) + w.nu * bce(d2f, true);
}

double loss_total(const LossParts& p, const LossWeights& w) {
  return w.alpha * p.imse + w.beta * (p.fmse_mask + p.fmse_unmask) + w.gamma * p.perc + p.adv_g;
}

template <typename T>
LossParts content_losses(const Tensor<T>& xhat, const std::vector<const Sample*>& batch, const LossWeights& w,
                         Tensor<T>* grad) {
  if (batch.size() != xhat.n()) throw InvalidInput("content_losses: batch size mismatch");
  if (grad && !(grad->shape() == xhat.shape())) *grad = Tensor<T>(xhat.shape());
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  LossParts out;
  ComplexImage gi, gm, gu;
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const Sample& s = *batch[n];
    const ComplexImage x = unpack_image(xhat, n);
    out.imse += loss_imse(x, s.xt_coils, s.maps, grad ? &gi : nullptr) * inv_n;
    const FmseParts f = loss_fmse(x, s.y_mask, s.y_unmask, s.maps, s.mask, grad ? &gm : nullptr,
                                  grad ? &gu : nullptr);
    out.fmse_mask += f.masked * inv_n;
    out.fmse_unmask += f.unmasked * inv_n;
    if (grad) {
      T* re = grad->plane(n, 0);
      T* im = grad->plane(n, 1);
      for (std::size_t k = 0; k < x.size(); ++k) {
        const std::complex<double> g = (w.alpha * gi[k] + w.beta * (gm[k] + gu[k])) * inv_n;
        re[k] += static_cast<T>(g.real());
        im[k] += static_cast<T>(g.imag());
      }
    }
  }
  return out;
}

template Tensor<float> pack_images(const std::vector<const ComplexImage*>&);
template Tensor<double> pack_images(const std::vector<const ComplexImage*>&);
template ComplexImage unpack_image(const Tensor<float>&, std::size_t);
template ComplexImage unpack_image(const Tensor<double>&, std::size_t);
template double loss_perceptual(PerceptualNet<float>&, const Tensor<float>&, const Tensor<float>&, Tensor<float>*);
template double loss_perceptual(PerceptualNet<double>&, const Tensor<double>&, const Tensor<double>&,
                                Tensor<double>*);
template LossParts content_losses(const Tensor<float>&, const std::vector<const Sample*>&, const LossWeights&,
                                  Tensor<float>*);
template LossParts content_losses(const Tensor<double>&, const std::vector<const Sample*>&, const LossWeights&,
                                  Tensor<double>*);

}  // namespace pidd
