#include <doctest.h>

#include "pidd/blocks.hpp"
#include "pidd/dct.hpp"
#include "test_util.hpp"

using namespace pidd;
using testutil::check_layer;
using testutil::random_tensor;

namespace {

void zero_conv(Conv2d<double>& c) {
  c.weight().value.zero();
  c.bias().value.zero();
}

}  // namespace

TEST_CASE("residual block identities") {
  RngStream rng(1, 0);
  ResidualBlock<double> rb("rb", 3, 3, true, rng);
  zero_conv(rb.conv_a());
  zero_conv(rb.conv_b());
  zero_conv(*rb.shortcut());
  for (std::size_t k = 0; k < 3; ++k) rb.shortcut()->weight().value.at(k, k, 0, 0) = 1.0;
  const auto x = random_tensor({2, 3, 6, 6}, rng);
  CHECK(rb.forward(x, Mode::train) == x);

  ResidualBlock<double> plain("p", 3, 4, false, rng);
  CHECK_FALSE(plain.has_shortcut());
  zero_conv(plain.conv_a());
  zero_conv(plain.conv_b());
  const auto y = plain.forward(x, Mode::train);
  for (double v : y.data()) CHECK(v == 0.0);
}

TEST_CASE("residual block gradients") {
  RngStream rng(2, 0);
  for (bool lr : {true, false}) {
    for (const Shape& s : {Shape{2, 2, 4, 4}, Shape{3, 3, 5, 3}, Shape{2, 1, 6, 6}}) {
      ResidualBlock<double> rb("rb", s.c, 3, lr, rng);
      const auto r = check_layer(rb, random_tensor(s, rng), rng);
      CHECK(r.input < 1e-4);
      CHECK(r.params < 1e-4);
    }
  }
}

TEST_CASE("fca squeeze at the lowest frequency is a scaled global average") {
  RngStream rng(3, 0);
  FcaConfig one;
  one.n_parts = 1;
  one.freqs = {{0, 0}};
  one.reduction = 2;
  ChannelAttention<double> fca("fca", 6, one, rng);
  const auto x = random_tensor({2, 6, 7, 9}, rng);
  const auto s = fca.squeeze(x);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 6; ++c) {
      double mean = 0;
      for (std::size_t k = 0; k < 63; ++k) mean += x.plane(n, c)[k];
      mean /= 63.0;
      CHECK(std::abs(s.at(n, c, 0, 0) - mean * std::sqrt(63.0)) <= 1e-6 * std::abs(mean * std::sqrt(63.0)));
    }
}

TEST_CASE("fca squeeze projects each channel group on its DCT basis") {
  RngStream rng(4, 0);
  ChannelAttention<double> fca("fca", 8, FcaConfig{}, rng);
  const auto x = random_tensor({1, 8, 6, 6}, rng);
  const auto s = fca.squeeze(x);
  const std::pair<std::size_t, std::size_t> f[4] = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  for (std::size_t c = 0; c < 8; ++c) {
    const auto b = dct2_basis(f[c / 2].first, f[c / 2].second, 6, 6);
    double ref = 0;
    for (std::size_t k = 0; k < 36; ++k) ref += x.plane(0, c)[k] * b[k];
    CHECK(s.at(0, c, 0, 0) == doctest::Approx(ref).epsilon(1e-12));
  }
}

TEST_CASE("se and fca agree on constant channels once the scale is absorbed") {
  RngStream rng(5, 0);
  FcaConfig one;
  one.n_parts = 1;
  one.freqs = {{0, 0}};
  one.reduction = 2;
  ChannelAttention<double> fca("fca", 4, one, rng);
  ChannelAttention<double> se("se", 4, 2, rng);
  const double root = std::sqrt(25.0);
  // fca's squeeze is sqrt(HW) times the average, so its first FC takes weights / sqrt(HW)
  se.fc1().weight().value = fca.fc1().weight().value;
  se.fc1().weight().value *= root;
  se.fc1().bias().value = fca.fc1().bias().value;
  se.fc2().weight().value = fca.fc2().weight().value;
  se.fc2().bias().value = fca.fc2().bias().value;
  Tensor<double> x(Shape{2, 4, 5, 5});
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 4; ++c)
      for (std::size_t k = 0; k < 25; ++k) x.plane(n, c)[k] = double(c) - 1.5 + double(n);
  fca.forward(x, Mode::eval);
  se.forward(x, Mode::eval);
  for (std::size_t k = 0; k < 8; ++k) {
    CHECK(fca.weights()[k] == doctest::Approx(se.weights()[k]).epsilon(1e-12));
    CHECK(fca.weights()[k] > 0.0);
    CHECK(fca.weights()[k] < 1.0);
  }
}

TEST_CASE("attention weights in (0, 1), unit weights are identity") {
  RngStream rng(6, 0);
  ChannelAttention<double> fca("fca", 8, FcaConfig{}, rng);
  const auto x = random_tensor({2, 8, 4, 4}, rng, 5.0);
  fca.forward(x, Mode::eval);
  for (double w : fca.weights().data()) {
    CHECK(w > 0.0);
    CHECK(w < 1.0);
  }
  CHECK(scale_channels(x, Tensor<double>(Shape{2, 8, 1, 1}, 1.0)) == x);
  CHECK_THROWS_AS(ChannelAttention<double>("bad", 6, FcaConfig{}, rng), InvalidInput);
  FcaConfig dup;
  dup.freqs = {{0, 0}, {0, 0}, {1, 0}, {1, 1}};
  CHECK_THROWS_AS(ChannelAttention<double>("dup", 8, dup, rng), InvalidInput);
}

TEST_CASE("attention gradients") {
  RngStream rng(7, 0);
  for (const Shape& s : {Shape{2, 8, 4, 4}, Shape{1, 4, 3, 5}, Shape{3, 8, 2, 2}}) {
    ChannelAttention<double> fca("fca", s.c, FcaConfig{}, rng);
    auto r = check_layer(fca, random_tensor(s, rng), rng);
    CHECK(r.input < 1e-4);
    CHECK(r.params < 1e-4);
    ChannelAttention<double> se("se", s.c, 2, rng);
    r = check_layer(se, random_tensor(s, rng), rng);
    CHECK(r.input < 1e-4);
    CHECK(r.params < 1e-4);
  }
}
