#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <variant>
#include <vector>

#include "pidd/complex_image.hpp"
#include "pidd/tensor.hpp"

namespace pidd {

// PIDT container, little-endian, no padding:
//   "PIDT" | u32 version = 1 | u8 dtype | u8 rank | rank x u64 dims | payload
// Payload is row-major; complex values are (re, im) pairs.

enum class DType : std::uint8_t { f32 = 0, f64 = 1, c64 = 2, c128 = 3 };

std::size_t dtype_size(DType d);

struct PidtRecord {
  DType dtype = DType::f64;
  std::vector<std::uint64_t> dims;
  std::vector<std::byte> payload;

  std::uint64_t count() const;
};

/// Writes one record; returns the number of bytes written.
std::uint64_t write_record(std::ostream& os, const PidtRecord& rec);
/// Reads one record. `base_offset` is the stream position used in error messages.
PidtRecord read_record(std::istream& is, std::uint64_t base_offset = 0);

void save_record(const std::filesystem::path& path, const PidtRecord& rec);
PidtRecord load_record(const std::filesystem::path& path);

// typed conversions
template <typename T>
PidtRecord to_record(const Tensor<T>& t);
template <typename T>
PidtRecord to_record(const ComplexImageT<T>& img);
template <typename Tag>
PidtRecord to_record(const CoilArray<Tag>& arr);

/// Real records of rank <= 4 load as NCHW with leading dims padded by 1.
template <typename T>
Tensor<T> real_from_record(const PidtRecord& rec);
template <typename T>
ComplexImageT<T> complex_from_record(const PidtRecord& rec);
template <typename Tag>
CoilArray<Tag> coils_from_record(const PidtRecord& rec);

using AnyTensor = std::variant<Tensor<float>, Tensor<double>, ComplexImageF, ComplexImage>;

void tensor_save(const std::filesystem::path& path, const Tensor<float>& t);
void tensor_save(const std::filesystem::path& path, const Tensor<double>& t);
void tensor_save(const std::filesystem::path& path, const ComplexImageF& img);
void tensor_save(const std::filesystem::path& path, const ComplexImage& img);
/// Loads rank-4 real tensors and rank-2 complex images, keeping the stored dtype.
AnyTensor tensor_load(const std::filesystem::path& path);

}  // namespace pidd
