#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "pidd/complex_image.hpp"

namespace pidd {

/// Magnitude image, row-major.
struct RealImage {
  std::size_t h = 0, w = 0;
  std::vector<double> v;

  RealImage() = default;
  RealImage(std::size_t height, std::size_t width, double fill = 0.0) : h(height), w(width), v(height * width, fill) {}
  double& operator()(std::size_t i, std::size_t j) { return v[i * w + j]; }
  double operator()(std::size_t i, std::size_t j) const { return v[i * w + j]; }
};

/// |z| per pixel.
RealImage abs_image(const ComplexImage& img);

/// Divides both images by max(gt) so the reference peaks at 1 (no-op for an all-zero reference).
void normalize_to_reference(RealImage& pred, RealImage& gt);

/// ||pred - gt||^2 / ||gt||^2; an all-zero reference is an UndefinedReference error.
double nmse(const RealImage& pred, const RealImage& gt);

inline constexpr double kPsnrCap = 99.0;
/// 10 log10(peak^2 / MSE), capped at 99 dB (returned for identical images).
double psnr(const RealImage& pred, const RealImage& gt, double peak = 1.0);

/// Mean SSIM over all valid windows of a Gaussian window (size min(11, H, W),
/// sigma 1.5), K1 = 0.01, K2 = 0.03, dynamic range 1.
double ssim(const RealImage& pred, const RealImage& gt);

struct MetricRow {
  std::string image_id;
  double nmse = 0.0, psnr = 0.0, ssim = 0.0;
};

struct MetricReport {
  std::vector<MetricRow> rows;
  MetricRow mean() const;
  /// Sample standard deviation (n - 1); zero for a single row.
  MetricRow stddev() const;
  /// image_id,nmse,psnr,ssim with trailing `mean` and `std` rows.
  std::string csv() const;
  void write_csv(const std::filesystem::path& path) const;
};

/// One (id, prediction, ground truth) triple per image in iteration order.
using ReconFn = std::function<RealImage(std::size_t index)>;
MetricReport evaluate(const std::vector<std::string>& ids, const ReconFn& predict, const ReconFn& truth);

}  // namespace pidd
