#include "pidd/tensor_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace pidd {

namespace {

constexpr std::array<char, 4> kMagic = {'P', 'I', 'D', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename U>
void put_le(std::ostream& os, U v) {
  std::array<unsigned char, sizeof(U)> b;
  std::memcpy(b.data(), &v, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
  os.write(reinterpret_cast<const char*>(b.data()), sizeof(U));
}

template <typename U>
U get_le(const unsigned char* p) {
  std::array<unsigned char, sizeof(U)> b;
  std::memcpy(b.data(), p, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
  U v;
  std::memcpy(&v, b.data(), sizeof(U));
  return v;
}

// Scalars are stored little-endian; convert element-wise on big-endian hosts.
template <typename S>
void append_scalars(std::vector<std::byte>& out, const S* src, std::size_t count) {
  const std::size_t start = out.size();
  out.resize(start + count * sizeof(S));
  std::memcpy(out.data() + start, src, count * sizeof(S));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t k = 0; k < count; ++k) {
      auto* p = out.data() + start + k * sizeof(S);
      std::reverse(p, p + sizeof(S));
    }
  }
}

template <typename S>
S scalar_at(const std::vector<std::byte>& in, std::size_t k) {
  return get_le<S>(reinterpret_cast<const unsigned char*>(in.data()) + k * sizeof(S));
}

void read_exact(std::istream& is, void* dst, std::size_t n, std::uint64_t offset, const char* what) {
  is.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) {
    throw FormatError(std::string("truncated PIDT container while reading ") + what, offset);
  }
}

void require_dtype(const PidtRecord& rec, std::initializer_list<DType> ok, const char* target) {
  for (auto d : ok)
    if (rec.dtype == d) return;
  throw FormatError(std::string("PIDT dtype code ") + std::to_string(static_cast<int>(rec.dtype)) +
                    " cannot be read as " + target);
}

}  // namespace

std::size_t dtype_size(DType d) {
  switch (d) {
    case DType::f32: return 4;
    case DType::f64: return 8;
    case DType::c64: return 8;
    case DType::c128: return 16;
  }
  throw FormatError("unknown dtype");
}

std::uint64_t PidtRecord::count() const {
  std::uint64_t c = 1;
  for (auto d : dims) c *= d;
  return c;
}

std::uint64_t write_record(std::ostream& os, const PidtRecord& rec) {
  if (rec.dims.size() > 255) throw InvalidInput("PIDT rank exceeds 255");
  if (rec.payload.size() != rec.count() * dtype_size(rec.dtype)) {
    throw InvalidInput("PIDT payload length does not match dims");
  }
  os.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(os, kVersion);
  put_le<std::uint8_t>(os, static_cast<std::uint8_t>(rec.dtype));
  put_le<std::uint8_t>(os, static_cast<std::uint8_t>(rec.dims.size()));
  for (auto d : rec.dims) put_le<std::uint64_t>(os, d);
  os.write(reinterpret_cast<const char*>(rec.payload.data()), static_cast<std::streamsize>(rec.payload.size()));
  if (!os) throw IoError("failed writing PIDT record");
  return 4 + 4 + 1 + 1 + 8 * rec.dims.size() + rec.payload.size();
}

PidtRecord read_record(std::istream& is, std::uint64_t base) {
  std::array<unsigned char, 10> head;
  read_exact(is, head.data(), head.size(), base, "header");
  if (std::memcmp(head.data(), kMagic.data(), 4) != 0) throw FormatError("bad PIDT magic", base);
  const auto version = get_le<std::uint32_t>(head.data() + 4);
  if (version != kVersion) {
    throw FormatError("unsupported PIDT version " + std::to_string(version), base + 4);
  }
  const auto code = head[8];
  if (code > 3) throw FormatError("unknown PIDT dtype code " + std::to_string(code), base + 8);
  PidtRecord rec;
  rec.dtype = static_cast<DType>(code);
  const std::size_t rank = head[9];
  rec.dims.resize(rank);
  std::uint64_t pos = base + 10;
  for (std::size_t r = 0; r < rank; ++r) {
    std::array<unsigned char, 8> b;
    read_exact(is, b.data(), 8, pos, "dims");
    rec.dims[r] = get_le<std::uint64_t>(b.data());
    pos += 8;
  }
  const std::uint64_t count = rec.count();
  const std::uint64_t bytes = count * dtype_size(rec.dtype);
  if (count != 0 && bytes / count != dtype_size(rec.dtype)) throw FormatError("PIDT dims overflow", base + 10);
  if (bytes > (std::uint64_t(1) << 40)) throw FormatError("PIDT payload implausibly large", base + 10);
  rec.payload.resize(bytes);
  read_exact(is, rec.payload.data(), bytes, pos, "payload");
  return rec;
}

void save_record(const std::filesystem::path& path, const PidtRecord& rec) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_record(os, rec);
  os.flush();
  if (!os) throw IoError("failed writing " + path.string());
}

PidtRecord load_record(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  try {
    auto rec = read_record(is, 0);
    if (is.peek() != std::char_traits<char>::eof()) {
      throw FormatError("trailing bytes after PIDT record", static_cast<std::uint64_t>(is.tellg()));
    }
    return rec;
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

template <typename T>
PidtRecord to_record(const Tensor<T>& t) {
  PidtRecord rec;
  rec.dtype = std::is_same_v<T, float> ? DType::f32 : DType::f64;
  rec.dims = {t.n(), t.c(), t.h(), t.w()};
  append_scalars(rec.payload, t.ptr(), t.size());
  return rec;
}

template <typename T>
PidtRecord to_record(const ComplexImageT<T>& img) {
  PidtRecord rec;
  rec.dtype = std::is_same_v<T, float> ? DType::c64 : DType::c128;
  rec.dims = {img.height(), img.width()};
  append_scalars(rec.payload, reinterpret_cast<const T*>(img.data().data()), 2 * img.size());
  return rec;
}

template <typename Tag>
PidtRecord to_record(const CoilArray<Tag>& arr) {
  PidtRecord rec;
  rec.dtype = DType::c128;
  rec.dims = {arr.coils(), arr.height(), arr.width()};
  append_scalars(rec.payload, reinterpret_cast<const double*>(arr.data().data()), 2 * arr.size());
  return rec;
}

template <typename T>
Tensor<T> real_from_record(const PidtRecord& rec) {
  require_dtype(rec, {DType::f32, DType::f64}, "a real tensor");
  if (rec.dims.size() > 4) throw FormatError("real tensor rank exceeds 4");
  std::array<std::size_t, 4> d = {1, 1, 1, 1};
  std::copy(rec.dims.begin(), rec.dims.end(), d.begin() + (4 - rec.dims.size()));
  Tensor<T> t(Shape{d[0], d[1], d[2], d[3]});
  for (std::size_t k = 0; k < t.size(); ++k) {
    t[k] = rec.dtype == DType::f32 ? static_cast<T>(scalar_at<float>(rec.payload, k))
                                   : static_cast<T>(scalar_at<double>(rec.payload, k));
  }
  return t;
}

template <typename T>
ComplexImageT<T> complex_from_record(const PidtRecord& rec) {
  require_dtype(rec, {DType::c64, DType::c128}, "a complex image");
  if (rec.dims.size() != 2) throw FormatError("complex image must have rank 2");
  ComplexImageT<T> img(rec.dims[0], rec.dims[1]);
  for (std::size_t k = 0; k < img.size(); ++k) {
    if (rec.dtype == DType::c64) {
      img[k] = {static_cast<T>(scalar_at<float>(rec.payload, 2 * k)),
                static_cast<T>(scalar_at<float>(rec.payload, 2 * k + 1))};
    } else {
      img[k] = {static_cast<T>(scalar_at<double>(rec.payload, 2 * k)),
                static_cast<T>(scalar_at<double>(rec.payload, 2 * k + 1))};
    }
  }
  return img;
}

template <typename Tag>
CoilArray<Tag> coils_from_record(const PidtRecord& rec) {
  require_dtype(rec, {DType::c128}, "a coil array");
  if (rec.dims.size() != 3) throw FormatError("coil array must have rank 3");
  CoilArray<Tag> arr(rec.dims[0], rec.dims[1], rec.dims[2]);
  auto data = arr.data();
  for (std::size_t k = 0; k < data.size(); ++k) {
    data[k] = {scalar_at<double>(rec.payload, 2 * k), scalar_at<double>(rec.payload, 2 * k + 1)};
  }
  return arr;
}

template PidtRecord to_record(const Tensor<float>&);
template PidtRecord to_record(const Tensor<double>&);
template PidtRecord to_record(const ComplexImageT<float>&);
template PidtRecord to_record(const ComplexImageT<double>&);
template PidtRecord to_record(const SensitivityMaps&);
template PidtRecord to_record(const MultiCoilKSpace&);
template PidtRecord to_record(const CoilImages&);
template Tensor<float> real_from_record(const PidtRecord&);
template Tensor<double> real_from_record(const PidtRecord&);
template ComplexImageT<float> complex_from_record(const PidtRecord&);
template ComplexImageT<double> complex_from_record(const PidtRecord&);
template SensitivityMaps coils_from_record(const PidtRecord&);
template MultiCoilKSpace coils_from_record(const PidtRecord&);
template CoilImages coils_from_record(const PidtRecord&);

void tensor_save(const std::filesystem::path& path, const Tensor<float>& t) { save_record(path, to_record(t)); }
void tensor_save(const std::filesystem::path& path, const Tensor<double>& t) { save_record(path, to_record(t)); }
void tensor_save(const std::filesystem::path& path, const ComplexImageF& img) { save_record(path, to_record(img)); }
void tensor_save(const std::filesystem::path& path, const ComplexImage& img) { save_record(path, to_record(img)); }

AnyTensor tensor_load(const std::filesystem::path& path) {
  const auto rec = load_record(path);
  switch (rec.dtype) {
    case DType::f32: return real_from_record<float>(rec);
    case DType::f64: return real_from_record<double>(rec);
    case DType::c64: return complex_from_record<float>(rec);
    case DType::c128: return complex_from_record<double>(rec);
  }
  throw FormatError("unknown dtype");
}

}  // namespace pidd
