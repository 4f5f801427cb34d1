#include <doctest.h>

#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include "pidd/dct.hpp"
#include "pidd/fft.hpp"
#include "pidd/kv_config.hpp"
#include "pidd/tensor_io.hpp"
#include "test_util.hpp"

using namespace pidd;
using testutil::random_image;

namespace {

// direct centered DFT: X[k] = N^-1/2 sum_n x[n] exp(-2 pi i (k - N/2)(n - N/2) / N) per axis
ComplexImage naive_centered_dft(const ComplexImage& x, int sign) {
  const std::size_t h = x.height(), w = x.width();
  const double pi = std::numbers::pi;
  ComplexImage out(h, w);
  for (std::size_t ki = 0; ki < h; ++ki)
    for (std::size_t kj = 0; kj < w; ++kj) {
      std::complex<double> acc = 0;
      for (std::size_t ni = 0; ni < h; ++ni)
        for (std::size_t nj = 0; nj < w; ++nj) {
          const double fi = (double(ki) - double(h / 2)) * (double(ni) - double(h / 2)) / double(h);
          const double fj = (double(kj) - double(w / 2)) * (double(nj) - double(w / 2)) / double(w);
          acc += x(ni, nj) * std::polar(1.0, -sign * 2 * pi * (fi + fj));
        }
      out(ki, kj) = acc / std::sqrt(double(h * w));
    }
  return out;
}

double rel_diff(const ComplexImage& a, const ComplexImage& b) {
  double num = 0, den = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    num += std::norm(a[k] - b[k]);
    den += std::norm(b[k]);
  }
  return std::sqrt(num / den);
}

}  // namespace

TEST_CASE("fft of a constant is a scaled center delta") {
  ComplexImage x(16, 12);
  for (auto& v : x.data()) v = {0.7, -0.2};
  const ComplexImage k = fft2_centered(x);
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t j = 0; j < 12; ++j) {
      if (i == 8 && j == 6) {
        CHECK(std::abs(k(i, j) - std::complex<double>(0.7, -0.2) * std::sqrt(192.0)) < 1e-12);
      } else {
        CHECK(std::abs(k(i, j)) < 1e-12);
      }
    }
}

TEST_CASE("inverse fft of a center delta is a constant") {
  ComplexImage k(8, 8);
  k(4, 4) = 3.0;
  const ComplexImage x = ifft2_centered(k);
  for (auto v : x.data()) CHECK(std::abs(v - std::complex<double>(3.0 / 8.0)) < 1e-14);
  const ComplexImage z = ifft2_centered(ComplexImage(8, 8));
  for (auto v : z.data()) CHECK(v == std::complex<double>(0.0));
}

TEST_CASE("fft matches a direct centered DFT, even and odd sizes") {
  RngStream rng(11, 0);
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{8, 8}, {9, 10}, {11, 13}}) {
    const ComplexImage x = random_image(h, w, rng);
    CHECK(rel_diff(fft2_centered(x), naive_centered_dft(x, 1)) < 1e-12);
    CHECK(rel_diff(ifft2_centered(x), naive_centered_dft(x, -1)) < 1e-12);
  }
}

TEST_CASE("fft round trip and Parseval") {
  RngStream rng(5, 0);
  for (std::size_t n : {16, 32, 64}) {
    const ComplexImage x = random_image(n, n, rng);
    const ComplexImage k = fft2_centered(x);
    CHECK(rel_diff(ifft2_centered(k), x) < 1e-12);
    double ex = 0, ek = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      ex += std::norm(x[i]);
      ek += std::norm(k[i]);
    }
    CHECK(std::abs(ek - ex) / ex < 1e-10);
  }
  // single precision
  ComplexImageF xf(32, 32);
  for (auto& v : xf.data()) v = {float(rng.normal()), float(rng.normal())};
  const ComplexImageF back = ifft2_centered(fft2_centered(xf));
  double num = 0, den = 0;
  for (std::size_t i = 0; i < xf.size(); ++i) {
    num += std::norm(std::complex<double>(back[i]) - std::complex<double>(xf[i]));
    den += std::norm(std::complex<double>(xf[i]));
  }
  CHECK(std::sqrt(num / den) < 1e-5);
}

TEST_CASE("fft rejects small or non-finite input") {
  ComplexImage x(8, 8);
  x(1, 1) = {std::nan(""), 0.0};
  CHECK_THROWS_AS(fft2_centered(x), InvalidInput);
  CHECK_THROWS_AS(ComplexImage(4, 8), InvalidInput);
}

TEST_CASE("dct basis values and orthonormality") {
  const auto b00 = dct2_basis(0, 0, 4, 4);
  for (double v : b00.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(std::abs(dot(dct2_basis(0, 0, 8, 8), dct2_basis(1, 0, 8, 8))) < 1e-12);

  // direct double-sum oracle for <B11, B11> on 8x8
  const double pi = std::numbers::pi;
  double s = 0;
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) {
      const double v = (2.0 / 8.0) * std::cos(pi * (2 * i + 1) / 16.0) * std::cos(pi * (2 * j + 1) / 16.0);
      s += v * v;
    }
  CHECK(std::abs(s - 1.0) < 1e-12);
  CHECK(std::abs(dot(dct2_basis(1, 1, 8, 8), dct2_basis(1, 1, 8, 8)) - 1.0) < 1e-12);

  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{5, 7}, {16, 16}}) {
    std::vector<Tensor<double>> all;
    for (std::size_t u = 0; u < h; ++u)
      for (std::size_t v = 0; v < w; ++v) all.push_back(dct2_basis(u, v, h, w));
    double worst = 0;
    for (std::size_t p = 0; p < all.size(); ++p)
      for (std::size_t q = p; q < all.size(); ++q) worst = std::max(worst, std::abs(dot(all[p], all[q]) - (p == q)));
    CHECK(worst < 1e-10);
  }
  CHECK_THROWS_AS(dct2_basis(4, 0, 4, 4), InvalidInput);
  CHECK_THROWS_AS(dct2_basis(0, 9, 4, 4), InvalidInput);
}

TEST_CASE("philox known-answer vectors") {
  using A4 = std::array<std::uint32_t, 4>;
  CHECK(RngStream::philox({0, 0, 0, 0}, {0, 0}) == A4{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(RngStream::philox({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        A4{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(RngStream::philox({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        A4{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("rng streams are reproducible and distinct") {
  RngStream a(42, 7), b(42, 7), c(42, 8);
  bool same = true, differs = false;
  for (int i = 0; i < 100000; ++i) {
    const auto x = a.next_u64();
    same = same && x == b.next_u64();
    differs = differs || x != c.next_u64();
  }
  CHECK(same);
  CHECK(differs);

  RngStream u(1, 0);
  double mean = 0, var = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = u.normal();
    mean += z / n;
    var += z * z / n;
  }
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
  for (int i = 0; i < 1000; ++i) {
    const double v = u.uniform();
    CHECK((v >= 0.0 && v < 1.0));
    CHECK(u.below(7) < 7);
  }
}

TEST_CASE("tensor container round trips bit-exactly") {
  const auto dir = testutil::scratch_dir("numeric_io");
  RngStream rng(3, 0);
  Tensor<double> t = testutil::random_tensor({3, 2, 5, 5}, rng);
  tensor_save(dir / "t.pidt", t);
  const AnyTensor back = tensor_load(dir / "t.pidt");
  REQUIRE(std::holds_alternative<Tensor<double>>(back));
  CHECK(std::memcmp(std::get<Tensor<double>>(back).ptr(), t.ptr(), t.size() * sizeof(double)) == 0);
  CHECK(std::get<Tensor<double>>(back).shape() == t.shape());

  Tensor<float> tf = t.cast<float>();
  tensor_save(dir / "tf.pidt", tf);
  CHECK(std::get<Tensor<float>>(tensor_load(dir / "tf.pidt")) == tf);

  const ComplexImage img = random_image(16, 16, rng);
  tensor_save(dir / "c.pidt", img);
  CHECK(load_record(dir / "c.pidt").dtype == DType::c128);
  CHECK(std::get<ComplexImage>(tensor_load(dir / "c.pidt")) == img);

  ComplexImageF imgf(16, 16);
  for (auto& v : imgf.data()) v = {float(rng.normal()), float(rng.normal())};
  tensor_save(dir / "cf.pidt", imgf);
  CHECK(load_record(dir / "cf.pidt").dtype == DType::c64);
  CHECK(std::get<ComplexImageF>(tensor_load(dir / "cf.pidt")) == imgf);
}

TEST_CASE("tensor container header layout") {
  Tensor<float> t(Shape{1, 1, 2, 3}, 1.5f);
  std::ostringstream os;
  write_record(os, to_record(t));
  const std::string b = os.str();
  REQUIRE(b.size() == 4 + 4 + 1 + 1 + 4 * 8 + 6 * 4);
  CHECK(b.substr(0, 4) == "PIDT");
  CHECK(b[4] == 1);
  CHECK(b[5] == 0);
  CHECK(b[8] == 0);  // f32
  CHECK(b[9] == 4);  // rank
  CHECK(static_cast<unsigned char>(b[10 + 8 * 2]) == 2);
  CHECK(static_cast<unsigned char>(b[10 + 8 * 3]) == 3);
}

TEST_CASE("corrupt containers raise format errors with offsets") {
  Tensor<double> t(Shape{1, 1, 4, 4}, 2.0);
  std::ostringstream os;
  write_record(os, to_record(t));
  std::string good = os.str();

  std::string bad = good;
  bad[0] = 'X';
  {
    std::istringstream is(bad);
    try {
      read_record(is);
      FAIL("expected format error");
    } catch (const FormatError& e) {
      CHECK(e.offset() == 0);
      CHECK(std::string(e.what()).find("magic") != std::string::npos);
    }
  }
  bad = good;
  bad[4] = 2;
  {
    std::istringstream is(bad);
    CHECK_THROWS_AS(read_record(is), FormatError);
  }
  {
    std::istringstream is(good.substr(0, good.size() - 5));
    try {
      read_record(is);
      FAIL("expected format error");
    } catch (const FormatError& e) {
      CHECK(e.offset() > 0);
    }
  }
  const auto dir = testutil::scratch_dir("numeric_corrupt");
  {
    std::ofstream f(dir / "trail.pidt", std::ios::binary);
    f << good << "xx";
  }
  CHECK_THROWS_AS(load_record(dir / "trail.pidt"), FormatError);
}

TEST_CASE("key-value text") {
  const auto kv = KeyValues::parse("# comment\na = 1\n\nb=two words \nflag = true\n");
  CHECK(kv.get_int("a") == 1);
  CHECK(kv.get("b") == "two words");
  CHECK(kv.get_bool("flag"));
  CHECK_THROWS_AS(KeyValues::parse("n = 1.5x\n").get_double("n"), InvalidInput);
  CHECK_THROWS_AS(KeyValues::parse("n = -3\n").get_uint("n"), InvalidInput);
  CHECK_THROWS_AS(KeyValues::parse("n = maybe\n").get_bool("n"), InvalidInput);
  CHECK(kv.unknown_keys({"a", "b"}) == std::vector<std::string>{"flag"});
  CHECK_THROWS_AS(KeyValues::parse("a = 1\na = 2\n"), FormatError);
  CHECK_THROWS_AS(KeyValues::parse("novalue\n"), FormatError);
  CHECK(format_double(0.1) == "0.1");
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}
