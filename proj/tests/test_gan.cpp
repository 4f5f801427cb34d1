#include <doctest.h>

#include <cmath>
#include <numbers>

#include "pidd/edge.hpp"
#include "pidd/fft.hpp"
#include "pidd/gan.hpp"
#include "pidd/losses.hpp"
#include "pidd/phantom.hpp"
#include "test_util.hpp"

using namespace pidd;
using testutil::random_tensor;

namespace {

GeneratorConfig toy_config(Attention att = Attention::fca) {
  GeneratorConfig c;
  c.base_width = 4;
  c.attention = att;
  c.seed = 3;
  return c;
}

template <typename Net>
double net_grad_error(Net& net, Tensor<double> x, RngStream& rng, std::size_t per_param = 3) {
  const auto y = net.forward(x, Mode::train);
  const auto r = random_tensor(y.shape(), rng);
  auto params = net.params();
  zero_grads(params);
  net.forward(x, Mode::train);
  const auto dx = net.backward(r);
  auto loss = [&] { return dot(r, net.forward(x, Mode::train)); };
  std::vector<double> a, n;
  std::vector<double*> entries;
  for (std::size_t k = 0; k < x.size(); k += 37) {
    entries.push_back(&x[k]);
    a.push_back(dx[k]);
  }
  for (auto* p : params) {
    if (!p->trainable) continue;
    for (std::size_t k = 0; k < p->value.size(); k += std::max<std::size_t>(1, p->value.size() / per_param)) {
      entries.push_back(&p->value[k]);
      a.push_back(p->grad[k]);
    }
  }
  n = testutil::numeric_grad(entries, loss, 1e-6);
  return testutil::rel_err(a, n);
}

Sample phantom_sample(std::size_t n, std::size_t coils, std::uint64_t seed, double fraction = 0.3) {
  PhantomSpec spec;
  spec.size = n;
  spec.coils = coils;
  RngStream rng(seed, 0);
  const Phantom p = gen_phantom(spec, rng);
  RngStream mr(seed, 1);
  Sample s;
  s.maps = p.maps;
  s.mask = make_mask(MaskKind::gaussian2d, fraction, n, n, mr);
  s.xt_coils = p.coil_images;
  s.x_t = p.truth;
  const auto full = coil_kspace(p.coil_images);
  s.y_mask = forward_encode(p.truth, p.maps, s.mask);
  s.y_unmask = forward_encode(p.truth, p.maps, s.mask.complement());
  s.x_u = zero_filled(s.y_mask, p.maps, s.mask);
  return s;
}

// the head starts at zero, which would hide every upstream gradient
template <typename T>
void randomize_head(Generator<T>& g, RngStream& rng) {
  for (auto* t : {&g.head().weight().value, &g.head().bias().value})
    for (auto& v : t->data()) v = static_cast<T>(0.3 * rng.normal());
}

}  // namespace

TEST_CASE("generator shape contract and global residual identity") {
  GeneratorConfig c = toy_config();
  c.base_width = 8;
  Generator<float> g(c);
  RngStream rng(1, 0);
  Tensor<float> x = random_tensor({2, 2, 64, 64}, rng).cast<float>();
  // a fresh generator is the identity map
  CHECK(g.forward(x, Mode::train) == x);
  randomize_head(g, rng);
  CHECK(g.forward(x, Mode::train).shape() == x.shape());
  CHECK_FALSE(g.forward(x, Mode::train) == x);
  g.zero_output_head();
  CHECK(g.forward(x, Mode::train) == x);
  CHECK(g.forward(x, Mode::eval) == x);
  CHECK_THROWS_AS(g.forward(Tensor<float>(Shape{2, 2, 24, 24}), Mode::eval), InvalidInput);
  CHECK_THROWS_AS(g.forward(Tensor<float>(Shape{2, 1, 32, 32}), Mode::eval), InvalidInput);

  GeneratorConfig ngr = c;
  ngr.use_gr = false;
  Generator<float> h(ngr);
  h.zero_output_head();
  const auto y = h.forward(x, Mode::train);
  for (float v : y.data()) CHECK(v == 0.0f);
}

TEST_CASE("generator variants differ only where configured") {
  GeneratorConfig a = toy_config(), b = toy_config();
  b.use_gr = false;
  const auto ka = a.to_kv().entries(), kb = b.to_kv().entries();
  std::size_t diffs = 0;
  for (std::size_t i = 0; i < ka.size(); ++i) diffs += ka[i] != kb[i];
  CHECK(diffs == 1);
  Generator<double> ga(a), gb(b);
  const auto pa = ga.params(), pb = gb.params();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value == pb[i]->value);

  GeneratorConfig nlr = toy_config();
  nlr.use_lr = false;
  Generator<double> gn(nlr);
  CHECK(gn.params().size() < ga.params().size());
}

TEST_CASE("generator end-to-end gradient") {
  RngStream rng(2, 0);
  for (Attention att : {Attention::fca, Attention::se, Attention::none}) {
    Generator<double> g(toy_config(att));
    randomize_head(g, rng);
    CHECK(net_grad_error(g, random_tensor({3, 2, 16, 16}, rng), rng) < 1e-3);
  }
  GeneratorConfig c = toy_config();
  c.use_gr = false;
  c.use_lr = false;
  Generator<double> g(c);
  randomize_head(g, rng);
  CHECK(net_grad_error(g, random_tensor({2, 2, 16, 32}, rng), rng) < 1e-3);
}

TEST_CASE("discriminator structure, range and gradient") {
  RngStream rng(4, 0);
  Discriminator<float> d("d", 2, 64, 64, 8, rng);
  CHECK(d.strided_convs() == 5);
  CHECK(d.depth() == 11);
  Tensor<float> x = random_tensor({3, 2, 64, 64}, rng, 10.0).cast<float>();
  const auto p = d.forward(x, Mode::train);
  CHECK(p.shape() == Shape{3, 1, 1, 1});
  for (float v : p.data()) {
    CHECK(v > 0.0f);
    CHECK(v < 1.0f);
  }
  d.fc().weight().value.zero();
  d.fc().bias().value.zero();
  const auto half = d.forward(x, Mode::train);
  for (float v : half.data()) CHECK(v == 0.5f);
  CHECK_THROWS_AS(d.forward(Tensor<float>(Shape{1, 1, 64, 64}), Mode::eval), InvalidInput);

  for (std::size_t c : {1, 2}) {
    Discriminator<double> dd("dd", c, 16, 16, 4, rng);
    CHECK(dd.strided_convs() == 3);
    CHECK(net_grad_error(dd, random_tensor({3, c, 16, 16}, rng), rng, 4) < 1e-3);
  }
}

TEST_CASE("iMSE loss") {
  const Sample s = phantom_sample(32, 3, 1);
  CHECK(loss_imse(s.x_t, s.xt_coils, s.maps) < 1e-20);

  RngStream rng(5, 0);
  const ComplexImage d = testutil::random_image(32, 32, rng);
  ComplexImage x1 = s.x_t, x2 = s.x_t;
  for (std::size_t k = 0; k < d.size(); ++k) {
    x1[k] += d[k];
    x2[k] += 2.0 * d[k];
  }
  const double l1 = loss_imse(x1, s.xt_coils, s.maps), l2 = loss_imse(x2, s.xt_coils, s.maps);
  CHECK(l2 == doctest::Approx(4.0 * l1).epsilon(1e-9));

  // loop oracle on random inputs
  const auto maps = testutil::random_coils<SensitivityMapsTag>(2, 8, 8, rng);
  const auto xt = testutil::random_coils<CoilImagesTag>(2, 8, 8, rng);
  ComplexImage x = testutil::random_image(8, 8, rng);
  double ref = 0;
  for (std::size_t q = 0; q < 2; ++q)
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t j = 0; j < 8; ++j) {
        const auto r = xt(q, i, j) - maps(q, i, j) * x(i, j);
        ref += 0.5 * (r.real() * r.real() + r.imag() * r.imag());
      }
  ComplexImage g;
  CHECK(loss_imse(x, xt, maps, &g) == doctest::Approx(ref).epsilon(1e-12));

  std::vector<double*> entries;
  std::vector<double> analytic;
  for (std::size_t k = 0; k < x.size(); k += 5) {
    entries.push_back(reinterpret_cast<double*>(&x[k]));
    entries.push_back(reinterpret_cast<double*>(&x[k]) + 1);
    analytic.push_back(g[k].real());
    analytic.push_back(g[k].imag());
  }
  const auto num = testutil::numeric_grad(entries, [&] { return loss_imse(x, xt, maps); });
  CHECK(testutil::rel_err(analytic, num) < 1e-6);
}

TEST_CASE("fMSE losses") {
  const Sample s = phantom_sample(32, 2, 2);
  const FmseParts zero = loss_fmse(s.x_t, s.y_mask, s.y_unmask, s.maps, s.mask);
  CHECK(zero.masked < 1e-20);
  CHECK(zero.unmasked < 1e-20);

  RngStream rng(6, 0);
  ComplexImage x = testutil::random_image(32, 32, rng);
  ComplexImage gm, gu;
  const FmseParts f = loss_fmse(x, s.y_mask, s.y_unmask, s.maps, s.mask, &gm, &gu);
  // partition of unity: the two halves add up to the full k-space error
  const auto full = coil_kspace(s.xt_coils);
  double ref = 0;
  for (std::size_t q = 0; q < 2; ++q) {
    ComplexImage cx(32, 32);
    for (std::size_t k = 0; k < cx.size(); ++k) cx[k] = s.maps.coil(q)[k] * x[k];
    const auto kx = fft2_centered(cx);
    for (std::size_t k = 0; k < cx.size(); ++k) ref += 0.5 * std::norm(full.coil(q)[k] - kx[k]);
  }
  CHECK(f.masked + f.unmasked == doctest::Approx(ref).epsilon(1e-10));

  for (int which = 0; which < 2; ++which) {
    const ComplexImage& g = which == 0 ? gm : gu;
    std::vector<double*> entries;
    std::vector<double> analytic;
    for (std::size_t k = 0; k < x.size(); k += 23) {
      entries.push_back(reinterpret_cast<double*>(&x[k]));
      entries.push_back(reinterpret_cast<double*>(&x[k]) + 1);
      analytic.push_back(g[k].real());
      analytic.push_back(g[k].imag());
    }
    const auto num = testutil::numeric_grad(entries, [&] {
      const auto p = loss_fmse(x, s.y_mask, s.y_unmask, s.maps, s.mask);
      return which == 0 ? p.masked : p.unmasked;
    });
    CHECK(testutil::rel_err(analytic, num) < 1e-6);
  }
}

TEST_CASE("perceptual loss") {
  RngStream rng(7, 0);
  PerceptualNet<double> net;
  const auto a = random_tensor({2, 2, 16, 16}, rng);
  auto b = random_tensor({2, 2, 16, 16}, rng);
  CHECK(loss_perceptual(net, a, a) == 0.0);
  const double l = loss_perceptual(net, b, a);
  CHECK(l > 0.0);
  PerceptualNet<double> again;
  CHECK(loss_perceptual(again, b, a) == l);

  Tensor<double> g;
  loss_perceptual(net, b, a, &g);
  auto entries = testutil::sample_entries(b, 40);
  std::vector<double> analytic;
  for (double* p : entries) analytic.push_back(g[static_cast<std::size_t>(p - b.ptr())]);
  const auto num = testutil::numeric_grad(entries, [&] { return loss_perceptual(net, b, a); });
  CHECK(testutil::rel_err(analytic, num) < 1e-4);
}

TEST_CASE("adversarial loss identities") {
  const LossWeights w;
  CHECK(std::abs(loss_adversarial(0.5, 0.5, 0.5, 0.5, w, Side::discriminator) - 2.0 * std::log(2.0)) < 1e-9);
  CHECK(std::abs(loss_adversarial(0.5, 0.5, 0.5, 0.5, w, Side::generator) - std::log(2.0)) < 1e-12);
  const double eps = 1e-12;
  CHECK(loss_adversarial(1 - eps, eps, 1 - eps, eps, w, Side::discriminator) < 1e-6);
  CHECK(std::isfinite(loss_adversarial(0.0, 1.0, 0.0, 1.0, w, Side::discriminator)));

  LossWeights single = w;
  single.mu = 1.0;
  single.nu = 0.0;
  const double d1r = 0.8, d1f = 0.3;
  CHECK(loss_adversarial(d1r, d1f, 0.1, 0.9, single, Side::discriminator) ==
        doctest::Approx(-std::log(d1r) - std::log(1 - d1f)).epsilon(1e-14));
  CHECK(loss_adversarial(d1r, d1f, 0.1, 0.9, single, Side::generator) ==
        doctest::Approx(-std::log(d1f)).epsilon(1e-14));

  for (bool label : {true, false})
    for (double p : {0.2, 0.5, 0.9}) {
      double dp = 0;
      bce(p, label, &dp);
      const double num = (bce(p + 1e-6, label) - bce(p - 1e-6, label)) / 2e-6;
      CHECK(dp == doctest::Approx(num).epsilon(1e-6));
    }
  double dp = 1;
  bce(0.0, true, &dp);
  CHECK(dp == 0.0);
}

TEST_CASE("total loss composition") {
  const LossWeights w;
  LossParts perfect;
  perfect.adv_g = loss_adversarial(0.5, 0.5, 0.5, 0.5, w, Side::generator);
  CHECK(loss_total(perfect, w) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  LossParts p{1.5, 2.0, 3.0, 0.25, 0.7};
  CHECK(loss_total(p, w) == doctest::Approx(15 * 1.5 + 0.1 * 5.0 + 10 * 0.25 + 0.7).epsilon(1e-14));
  LossWeights none{0, 0, 0, 0.6, 0.4};
  CHECK(loss_total(p, none) == 0.7);
}

TEST_CASE("batched content losses and their gradient") {
  std::vector<Sample> ss{phantom_sample(32, 2, 3), phantom_sample(32, 2, 4)};
  std::vector<const Sample*> batch{&ss[0], &ss[1]};
  RngStream rng(8, 0);
  Tensor<double> x = random_tensor({2, 2, 32, 32}, rng, 0.3);
  const LossWeights w;
  Tensor<double> g;
  const LossParts p = content_losses(x, batch, w, &g);
  double ref = 0;
  for (std::size_t n = 0; n < 2; ++n) ref += loss_imse(unpack_image(x, n), ss[n].xt_coils, ss[n].maps) / 2;
  CHECK(p.imse == doctest::Approx(ref).epsilon(1e-12));
  auto entries = testutil::sample_entries(x, 50);
  std::vector<double> analytic;
  for (double* e : entries) analytic.push_back(g[static_cast<std::size_t>(e - x.ptr())]);
  const auto num = testutil::numeric_grad(entries, [&] {
    const LossParts q = content_losses(x, batch, w);
    return w.alpha * q.imse + w.beta * (q.fmse_mask + q.fmse_unmask);
  });
  CHECK(testutil::rel_err(analytic, num) < 1e-6);
}

TEST_CASE("edge path ignores a uniform magnitude offset") {
  RngStream rng(9, 0);
  Tensor<double> x = random_tensor({1, 2, 12, 12}, rng);
  const auto mag = magnitude(x);
  const auto r = random_tensor(mag.shape(), rng);
  const auto g = magnitude_backward(x, sobel_backward(mag, r));
  // unit phase direction: moving along it adds the same amount to every magnitude
  double along = 0, norm = 0;
  for (std::size_t k = 0; k < 144; ++k) {
    const double re = x.plane(0, 0)[k], im = x.plane(0, 1)[k], m = std::hypot(re, im);
    along += g.plane(0, 0)[k] * re / m + g.plane(0, 1)[k] * im / m;
    norm += g.plane(0, 0)[k] * g.plane(0, 0)[k] + g.plane(0, 1)[k] * g.plane(0, 1)[k];
  }
  CHECK(std::abs(along) < 1e-9 * std::sqrt(norm));
}

TEST_CASE("checkpoint round trip and config guard") {
  const auto dir = testutil::scratch_dir("gan_ckpt");
  GeneratorConfig c = toy_config();
  c.base_width = 8;
  Generator<float> g(c);
  RngStream rng(10, 0);
  randomize_head(g, rng);
  const Tensor<float> x = random_tensor({2, 2, 32, 32}, rng).cast<float>();
  g.forward(x, Mode::train);  // moves the running statistics away from their init
  save_checkpoint(dir, g);
  const auto want = g.forward(x, Mode::eval);

  GeneratorConfig c2 = read_checkpoint_config(dir);
  CHECK(c2.hash() == c.hash());
  Generator<float> other(read_checkpoint_config(dir));
  load_checkpoint(dir, other);
  CHECK(other.forward(x, Mode::eval) == want);

  GeneratorConfig changed = c;
  changed.use_lr = false;
  Generator<float> bad(changed);
  CHECK_THROWS_AS(load_checkpoint(dir, bad), FormatError);
  const std::string idx = testutil::read_file(dir / "index.txt");
  CHECK(idx.rfind("config_hash\t", 0) == 0);
  CHECK(idx.find("g.head.weight\t") != std::string::npos);
}
