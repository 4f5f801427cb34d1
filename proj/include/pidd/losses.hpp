#pragma once

#include <vector>

#include "pidd/complex_image.hpp"
#include "pidd/gan.hpp"
#include "pidd/mri.hpp"

namespace pidd {

struct LossWeights {
  double alpha = 15.0;
  double beta = 0.1;
  double gamma = 10.0;
  double mu = 0.6;
  double nu = 0.4;
};

/// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] before the log.
inline constexpr double kProbClamp = 1e-7;

/// Everything one training/validation example needs.
struct Sample {
  ComplexImage x_t;        // sensitivity-combined ground truth
  CoilImages xt_coils;     // per-coil ground truth C^q x_t
  SensitivityMaps maps;
  SamplingMask mask;
  MultiCoilKSpace y_mask;    // acquired (possibly noisy) samples
  MultiCoilKSpace y_unmask;  // the complementary, unacquired samples
  ComplexImage x_u;          // zero-filled generator input
};

// Complex images enter the networks as two real channels (re, im).
template <typename T>
Tensor<T> pack_images(const std::vector<const ComplexImage*>& imgs);
template <typename T>
ComplexImage unpack_image(const Tensor<T>& t, std::size_t n);

// Gradients below are with respect to (re, im) of the complex argument,
// stored as dL/dre + i dL/dim.

/// sum_q 0.5 ||x_t^q - C^q xhat||^2
double loss_imse(const ComplexImage& xhat, const CoilImages& xt_coils, const SensitivityMaps& maps,
                 ComplexImage* grad = nullptr);

struct FmseParts {
  double masked = 0.0;
  double unmasked = 0.0;
};

/// masked:   sum_q 0.5 ||y_M^q - M F(C^q xhat)||^2
/// unmasked: sum_q 0.5 ||y_{1-M}^q - (1-M) F(C^q xhat)||^2
FmseParts loss_fmse(const ComplexImage& xhat, const MultiCoilKSpace& y_mask, const MultiCoilKSpace& y_unmask,
                    const SensitivityMaps& maps, const SamplingMask& mask, ComplexImage* grad_masked = nullptr,
                    ComplexImage* grad_unmasked = nullptr);

/// Batch mean of 0.5 ||f(x_t) - f(xhat)||^2; `grad` receives d/dxhat.
template <typename T>
double loss_perceptual(PerceptualNet<T>& net, const Tensor<T>& xhat, const Tensor<T>& x_t, Tensor<T>* grad = nullptr);

/// -log(p) for a "real" label, -log(1 - p) for "fake", after clamping.
/// `dp` receives the derivative (zero where the clamp is active).
double bce(double p, bool real_label, double* dp = nullptr);

enum class Side { discriminator, generator };

/// D side: mu [-log d1r - log(1 - d1f)] + nu [-log d2r - log(1 - d2f)]
/// G side: mu [-log d1f] + nu [-log d2f]   (non-saturating)
double loss_adversarial(double d1_real, double d1_fake, double d2_real, double d2_fake, const LossWeights& w,
                        Side side);

struct LossParts {
  double imse = 0.0;
  double fmse_mask = 0.0;
  double fmse_unmask = 0.0;
  double perc = 0.0;
  double adv_g = 0.0;
};

/// alpha L_iMSE + beta (L_fMSE,M + L_fMSE,1-M) + gamma L_perc + L_adv(G)
double loss_total(const LossParts& p, const LossWeights& w);

/// Batch means of the iMSE and fMSE terms for network output `xhat`
/// (N x 2 x H x W). When `grad` is given, the gradient of
/// alpha iMSE + beta (fMSE,M + fMSE,1-M) is added to it.
template <typename T>
LossParts content_losses(const Tensor<T>& xhat, const std::vector<const Sample*>& batch, const LossWeights& w,
                         Tensor<T>* grad = nullptr);

}  // namespace pidd
