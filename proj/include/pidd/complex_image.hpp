#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "pidd/error.hpp"

namespace pidd {

/// H x W complex image, row-major. Both dimensions are at least 8.
template <typename T>
class ComplexImageT {
 public:
  using value_type = std::complex<T>;

  ComplexImageT() = default;
  ComplexImageT(std::size_t height, std::size_t width) : h_(height), w_(width), data_(height * width) {
    if (height < 8 || width < 8) throw InvalidInput("complex image must be at least 8x8");
  }
  ComplexImageT(std::size_t height, std::size_t width, std::vector<value_type> data)
      : ComplexImageT(height, width) {
    if (data.size() != h_ * w_) throw InvalidInput("complex image data length does not match dims");
    data_ = std::move(data);
  }

  std::size_t height() const noexcept { return h_; }
  std::size_t width() const noexcept { return w_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  value_type& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * w_ + j]; }
  const value_type& operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * w_ + j]; }
  value_type& operator[](std::size_t k) noexcept { return data_[k]; }
  const value_type& operator[](std::size_t k) const noexcept { return data_[k]; }

  std::span<value_type> data() noexcept { return data_; }
  std::span<const value_type> data() const noexcept { return data_; }

  bool same_shape(const ComplexImageT& o) const noexcept { return h_ == o.h_ && w_ == o.w_; }
  bool operator==(const ComplexImageT&) const = default;

 private:
  std::size_t h_ = 0;
  std::size_t w_ = 0;
  std::vector<value_type> data_;
};

using ComplexImage = ComplexImageT<double>;
using ComplexImageF = ComplexImageT<float>;

/// Q stacked H x W complex planes. The tag keeps coil maps, coil images and
/// k-space from being mixed up at call sites.
template <typename Tag>
class CoilArray {
 public:
  using value_type = std::complex<double>;

  CoilArray() = default;
  CoilArray(std::size_t coils, std::size_t height, std::size_t width)
      : q_(coils), h_(height), w_(width), data_(coils * height * width) {
    if (coils < 1) throw InvalidInput("coil count must be at least 1");
    if (height < 8 || width < 8) throw InvalidInput("coil planes must be at least 8x8");
  }

  std::size_t coils() const noexcept { return q_; }
  std::size_t height() const noexcept { return h_; }
  std::size_t width() const noexcept { return w_; }
  std::size_t plane_size() const noexcept { return h_ * w_; }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<value_type> coil(std::size_t q) noexcept { return {data_.data() + q * h_ * w_, h_ * w_}; }
  std::span<const value_type> coil(std::size_t q) const noexcept {
    return {data_.data() + q * h_ * w_, h_ * w_};
  }
  value_type& operator()(std::size_t q, std::size_t i, std::size_t j) noexcept {
    return data_[(q * h_ + i) * w_ + j];
  }
  const value_type& operator()(std::size_t q, std::size_t i, std::size_t j) const noexcept {
    return data_[(q * h_ + i) * w_ + j];
  }

  ComplexImage plane(std::size_t q) const {
    auto c = coil(q);
    return ComplexImage(h_, w_, std::vector<value_type>(c.begin(), c.end()));
  }
  void set_plane(std::size_t q, const ComplexImage& img) {
    if (img.height() != h_ || img.width() != w_) throw InvalidInput("plane shape mismatch");
    std::copy(img.data().begin(), img.data().end(), coil(q).begin());
  }

  std::span<value_type> data() noexcept { return data_; }
  std::span<const value_type> data() const noexcept { return data_; }

  template <typename Other>
  bool same_shape(const Other& o) const noexcept {
    return q_ == o.coils() && h_ == o.height() && w_ == o.width();
  }
  bool operator==(const CoilArray&) const = default;

 private:
  std::size_t q_ = 0;
  std::size_t h_ = 0;
  std::size_t w_ = 0;
  std::vector<value_type> data_;
};

using SensitivityMaps = CoilArray<struct SensitivityMapsTag>;
using MultiCoilKSpace = CoilArray<struct MultiCoilKSpaceTag>;
using CoilImages = CoilArray<struct CoilImagesTag>;

}  // namespace pidd
