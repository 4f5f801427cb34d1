#include <doctest.h>

#include <cmath>
#include <sstream>

#include "pidd/error.hpp"
#include "pidd/metrics.hpp"
#include "pidd/rng.hpp"

using namespace pidd;

namespace {

RealImage random_real(std::size_t h, std::size_t w, RngStream& rng) {
  RealImage r(h, w);
  for (auto& v : r.v) v = rng.uniform();
  return r;
}

// direct-loop SSIM with an explicit Gaussian window, used as the oracle
double ssim_oracle(const RealImage& a, const RealImage& b) {
  const std::size_t n = std::min<std::size_t>({11, a.h, a.w});
  std::vector<double> g(n * n);
  double gs = 0;
  const double c = (double(n) - 1) / 2;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      gs += g[i * n + j] = std::exp(-((i - c) * (i - c) + (j - c) * (j - c)) / (2 * 1.5 * 1.5));
  for (auto& v : g) v /= gs;
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0;
  std::size_t count = 0;
  for (std::size_t r = 0; r + n <= a.h; ++r)
    for (std::size_t s = 0; s + n <= a.w; ++s) {
      double ma = 0, mb = 0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          ma += g[i * n + j] * a(r + i, s + j);
          mb += g[i * n + j] * b(r + i, s + j);
        }
      double va = 0, vb = 0, cov = 0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double da = a(r + i, s + j) - ma, db = b(r + i, s + j) - mb;
          va += g[i * n + j] * da * da;
          vb += g[i * n + j] * db * db;
          cov += g[i * n + j] * da * db;
        }
      total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return total / double(count);
}

}  // namespace

TEST_CASE("nmse") {
  RngStream rng(1, 0);
  const RealImage gt = random_real(16, 16, rng);
  CHECK(nmse(gt, gt) == 0.0);
  for (double a : {0.0, 0.5, 2.0, 3.0}) {
    RealImage p = gt;
    for (auto& v : p.v) v *= a;
    CHECK(nmse(p, gt) == doctest::Approx((a - 1) * (a - 1)).epsilon(1e-12));
  }
  const RealImage p = random_real(16, 16, rng);
  double num = 0, den = 0;
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t j = 0; j < 16; ++j) {
      num += (p(i, j) - gt(i, j)) * (p(i, j) - gt(i, j));
      den += gt(i, j) * gt(i, j);
    }
  CHECK(nmse(p, gt) == doctest::Approx(num / den).epsilon(1e-13));
  CHECK(nmse(RealImage(16, 16), gt) == 1.0);
  CHECK_THROWS_AS(nmse(gt, RealImage(16, 16)), UndefinedReference);
  CHECK_THROWS_AS(nmse(gt, RealImage(8, 16, 1.0)), InvalidInput);
}

TEST_CASE("psnr") {
  RealImage gt(8, 8, 0.5), p(8, 8, 0.6);
  CHECK(psnr(p, gt) == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(psnr(gt, gt) == kPsnrCap);
  RngStream rng(3, 0);
  for (int t = 0; t < 20; ++t) {
    const RealImage a = random_real(8, 8, rng), b = random_real(8, 8, rng), ref = random_real(8, 8, rng);
    double ma = 0, mb = 0;
    for (std::size_t k = 0; k < 64; ++k) {
      ma += (a.v[k] - ref.v[k]) * (a.v[k] - ref.v[k]);
      mb += (b.v[k] - ref.v[k]) * (b.v[k] - ref.v[k]);
    }
    CHECK((ma < mb) == (psnr(a, ref) > psnr(b, ref)));
  }
  CHECK(psnr(p, gt, 2.0) == doctest::Approx(20.0 + 20.0 * std::log10(2.0)).epsilon(1e-12));
}

TEST_CASE("ssim") {
  RngStream rng(2, 0);
  const RealImage a = random_real(20, 23, rng);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  RealImage inv = a;
  for (auto& v : inv.v) v = 1.0 - v;
  CHECK(ssim(inv, a) < 1.0);
  CHECK(ssim(inv, a) < 0.0);

  const RealImage b = random_real(20, 23, rng);
  CHECK(ssim(b, a) == doctest::Approx(ssim_oracle(b, a)).epsilon(1e-10));
  CHECK(ssim(b, a) == doctest::Approx(ssim(a, b)).epsilon(1e-12));
  const RealImage s1 = random_real(9, 7, rng), s2 = random_real(9, 7, rng);
  CHECK(ssim(s1, s2) == doctest::Approx(ssim_oracle(s1, s2)).epsilon(1e-10));

  // constant 8x8 images: one window, only the luminance term survives
  const double x = 0.3, y = 0.7, c1 = 1e-4;
  CHECK(ssim(RealImage(8, 8, x), RealImage(8, 8, y)) ==
        doctest::Approx((2 * x * y + c1) / (x * x + y * y + c1)).epsilon(1e-12));
}

TEST_CASE("report aggregates and csv") {
  MetricReport r;
  r.rows = {{"a", 0.1, 30.0, 0.9}, {"b", 0.3, 20.0, 0.7}};
  CHECK(r.mean().nmse == doctest::Approx(0.2));
  CHECK(r.mean().psnr == doctest::Approx(25.0));
  CHECK(r.stddev().psnr == doctest::Approx(std::sqrt(50.0)));
  CHECK(r.stddev().ssim == doctest::Approx(std::sqrt(0.02)));
  const std::string csv = r.csv();
  std::istringstream is(csv);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(is, line)) lines.push_back(line);
  REQUIRE(lines.size() == 5);
  CHECK(lines[0] == "image_id,nmse,psnr,ssim");
  CHECK(lines[1].rfind("a,", 0) == 0);
  CHECK(lines[3].rfind("mean,", 0) == 0);
  CHECK(lines[4].rfind("std,", 0) == 0);

  MetricReport one;
  one.rows = {{"x", 0.5, 10, 0.5}};
  CHECK(one.stddev().nmse == 0.0);

  const auto rep = evaluate({"p", "q"},
                            [](std::size_t i) { return RealImage(8, 8, 0.5 + 0.1 * double(i)); },
                            [](std::size_t) { return RealImage(8, 8, 0.5); });
  REQUIRE(rep.rows.size() == 2);
  CHECK(rep.rows[0].image_id == "p");
  CHECK(rep.rows[0].nmse == 0.0);
  CHECK(rep.rows[1].psnr == doctest::Approx(20.0));
}
