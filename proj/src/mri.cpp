#include "pidd/mri.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "pidd/fft.hpp"
#include "pidd/kv_config.hpp"
#include "pidd/tensor_io.hpp"

namespace pidd {

std::string to_string(MaskKind kind) {
  switch (kind) {
    case MaskKind::gaussian2d: return "gaussian2d";
    case MaskKind::gaussian1d: return "gaussian1d";
    case MaskKind::poisson2d: return "poisson2d";
  }
  return "?";
}

MaskKind parse_mask_kind(const std::string& s) {
  if (s == "gaussian2d") return MaskKind::gaussian2d;
  if (s == "gaussian1d") return MaskKind::gaussian1d;
  if (s == "poisson2d") return MaskKind::poisson2d;
  throw InvalidInput("unknown mask kind '" + s + "' (expected gaussian2d, gaussian1d or poisson2d)");
}

SamplingMask::SamplingMask(std::size_t height, std::size_t width, std::uint8_t fill)
    : h_(height), w_(width), bits_(height * width, fill ? 1 : 0) {
  if (height < 8 || width < 8) throw InvalidInput("mask must be at least 8x8");
}

std::size_t SamplingMask::count() const noexcept {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

double SamplingMask::fraction() const noexcept {
  return bits_.empty() ? 0.0 : static_cast<double>(count()) / static_cast<double>(bits_.size());
}

SamplingMask SamplingMask::complement() const {
  SamplingMask out = *this;
  for (auto& b : out.bits_) b = b ? 0 : 1;
  return out;
}

std::size_t acs_radius_for(std::size_t h, std::size_t w) {
  return static_cast<std::size_t>(std::ceil(0.04 * static_cast<double>(std::min(h, w))));
}

namespace {

struct Keyed {
  double key;
  std::size_t index;
};

// Weighted sampling without replacement (exponential-key method): the k
// largest log(u)/weight keys form the sample.
std::vector<std::size_t> weighted_pick(const std::vector<double>& weights, const std::vector<bool>& eligible,
                                       std::size_t k, RngStream& rng) {
  std::vector<Keyed> keys;
  keys.reserve(weights.size());
  for (std::size_t p = 0; p < weights.size(); ++p) {
    const double u = rng.uniform_pos();
    if (!eligible[p]) continue;
    keys.push_back({std::log(u) / weights[p], p});
  }
  if (k > keys.size()) throw InvalidInput("not enough candidate samples for requested fraction");
  auto greater = [](const Keyed& a, const Keyed& b) { return a.key > b.key || (a.key == b.key && a.index < b.index); };
  std::nth_element(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(k), keys.end(), greater);
  std::vector<std::size_t> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = keys[i].index;
  std::sort(out.begin(), out.end());
  return out;
}

void mark_acs_disc(SamplingMask& m, std::size_t radius) {
  const double ci = static_cast<double>(m.height() / 2), cj = static_cast<double>(m.width() / 2);
  const double r2 = static_cast<double>(radius * radius);
  for (std::size_t i = 0; i < m.height(); ++i)
    for (std::size_t j = 0; j < m.width(); ++j) {
      const double di = i - ci, dj = j - cj;
      if (di * di + dj * dj <= r2) m(i, j) = 1;
    }
}

SamplingMask gaussian2d(double fraction, std::size_t h, std::size_t w, std::size_t radius, RngStream& rng) {
  SamplingMask m(h, w);
  mark_acs_disc(m, radius);
  const std::size_t target = static_cast<std::size_t>(std::llround(fraction * h * w));
  const std::size_t acs = m.count();
  if (target < acs) throw InvalidInput("fraction is below the calibration disc area");
  const double sigma = 0.15 * static_cast<double>(std::min(h, w));
  std::vector<double> weight(h * w);
  std::vector<bool> eligible(h * w);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      const double di = static_cast<double>(i) - static_cast<double>(h / 2);
      const double dj = static_cast<double>(j) - static_cast<double>(w / 2);
      weight[i * w + j] = std::exp(-(di * di + dj * dj) / (2.0 * sigma * sigma));
      eligible[i * w + j] = m(i, j) == 0;
    }
  for (auto p : weighted_pick(weight, eligible, target - acs, rng)) m(p / w, p % w) = 1;
  return m;
}

SamplingMask gaussian1d(double fraction, std::size_t h, std::size_t w, std::size_t radius, RngStream& rng) {
  SamplingMask m(h, w);
  const std::size_t target_cols = static_cast<std::size_t>(std::llround(fraction * w));
  const std::size_t cj = w / 2;
  std::vector<bool> selected(w, false);
  for (std::size_t j = 0; j < w; ++j) {
    const std::size_t d = j > cj ? j - cj : cj - j;
    if (d <= radius) selected[j] = true;
  }
  const std::size_t band = static_cast<std::size_t>(std::count(selected.begin(), selected.end(), true));
  if (target_cols < band) throw InvalidInput("fraction is below the calibration band area");
  const double sigma = 0.15 * static_cast<double>(std::min(h, w));
  std::vector<double> weight(w);
  std::vector<bool> eligible(w);
  for (std::size_t j = 0; j < w; ++j) {
    const double dj = static_cast<double>(j) - static_cast<double>(cj);
    weight[j] = std::exp(-dj * dj / (2.0 * sigma * sigma));
    eligible[j] = !selected[j];
  }
  for (auto j : weighted_pick(weight, eligible, target_cols - band, rng)) selected[j] = true;
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) m(i, j) = selected[j] ? 1 : 0;
  return m;
}

// Variable-density Poisson disc by dart throwing over a fixed random candidate
// order. The exclusion radius grows linearly with distance from the k-space
// center; its scale is bisected until the accepted count reaches the target,
// and the surplus is dropped in reverse acceptance order.
class PoissonDisc {
 public:
  PoissonDisc(std::size_t h, std::size_t w, std::size_t radius, RngStream& rng) : h_(h), w_(w), base_(h, w) {
    mark_acs_disc(base_, radius);
    const double ci = static_cast<double>(h / 2), cj = static_cast<double>(w / 2);
    const double rmax = std::sqrt(ci * ci + cj * cj);
    rho_.resize(h * w);
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        const double di = i - ci, dj = j - cj;
        rho_[i * w + j] = std::sqrt(di * di + dj * dj) / rmax;
      }
    for (std::size_t p = 0; p < h * w; ++p)
      if (!base_[p]) order_.push_back(p);
    for (std::size_t k = order_.size(); k > 1; --k) std::swap(order_[k - 1], order_[rng.below(k)]);
  }

  std::size_t acs_count() const { return base_.count(); }

  /// Accepted candidates (in acceptance order) for exclusion scale r0.
  std::vector<std::size_t> run(double r0) {
    const double rmax_excl = r0 * kSlopeMax;
    ensure_offsets(rmax_excl);
    std::vector<std::uint8_t> occ(base_.bits());
    std::vector<std::size_t> accepted;
    for (auto p : order_) {
      const double r = r0 * (1.0 + kSlope * rho_[p]);
      const double r2 = r * r;
      const long pi = static_cast<long>(p / w_), pj = static_cast<long>(p % w_);
      bool free = true;
      for (const auto& o : offsets_) {
        if (o.d2 >= r2) break;
        const long qi = pi + o.di, qj = pj + o.dj;
        if (qi < 0 || qj < 0 || qi >= static_cast<long>(h_) || qj >= static_cast<long>(w_)) continue;
        if (occ[static_cast<std::size_t>(qi) * w_ + static_cast<std::size_t>(qj)]) {
          free = false;
          break;
        }
      }
      if (free) {
        occ[p] = 1;
        accepted.push_back(p);
      }
    }
    return accepted;
  }

  SamplingMask build(std::size_t target) {
    const std::size_t acs = acs_count();
    if (target < acs) throw InvalidInput("fraction is below the calibration disc area");
    const std::size_t need = target - acs;
    double lo = 0.0, hi = 1.0;
    while (run(hi).size() > need && hi < static_cast<double>(h_ + w_)) hi *= 2.0;
    std::vector<std::size_t> best = run(lo);
    const std::size_t slack = std::max<std::size_t>(1, h_ * w_ / 1000);
    for (int it = 0; it < 40 && best.size() - need > slack; ++it) {
      const double mid = 0.5 * (lo + hi);
      auto acc = run(mid);
      if (acc.size() >= need) {
        lo = mid;
        best = std::move(acc);
      } else {
        hi = mid;
      }
    }
    best.resize(need);
    SamplingMask m = base_;
    for (auto p : best) m(p / w_, p % w_) = 1;
    return m;
  }

 private:
  static constexpr double kSlope = 2.0;
  static constexpr double kSlopeMax = 1.0 + kSlope;

  struct Offset {
    long di, dj;
    double d2;
  };

  void ensure_offsets(double rmax) {
    const long R = static_cast<long>(std::ceil(rmax));
    if (R <= offsets_radius_) return;
    offsets_.clear();
    for (long di = -R; di <= R; ++di)
      for (long dj = -R; dj <= R; ++dj) {
        if (di == 0 && dj == 0) continue;
        const double d2 = static_cast<double>(di * di + dj * dj);
        if (d2 <= static_cast<double>(R * R)) offsets_.push_back({di, dj, d2});
      }
    std::stable_sort(offsets_.begin(), offsets_.end(), [](const Offset& a, const Offset& b) { return a.d2 < b.d2; });
    offsets_radius_ = R;
  }

  std::size_t h_, w_;
  SamplingMask base_;
  std::vector<double> rho_;
  std::vector<std::size_t> order_;
  std::vector<Offset> offsets_;
  long offsets_radius_ = -1;
};

}  // namespace

SamplingMask make_mask(MaskKind kind, double fraction, std::size_t h, std::size_t w, RngStream& rng) {
  if (!(fraction >= 0.05 && fraction <= 1.0)) throw InvalidInput("mask fraction must lie in [0.05, 1.0]");
  const std::size_t radius = acs_radius_for(h, w);
  SamplingMask m;
  if (fraction == 1.0) {
    m = SamplingMask(h, w, 1);
  } else {
    switch (kind) {
      case MaskKind::gaussian2d: m = gaussian2d(fraction, h, w, radius, rng); break;
      case MaskKind::gaussian1d: m = gaussian1d(fraction, h, w, radius, rng); break;
      case MaskKind::poisson2d: {
        PoissonDisc pd(h, w, radius, rng);
        m = pd.build(static_cast<std::size_t>(std::llround(fraction * h * w)));
        break;
      }
    }
  }
  m.kind = kind;
  m.target_fraction = fraction;
  m.seed = rng.seed();
  m.acs_radius = radius;
  return m;
}

void save_mask(const std::filesystem::path& path, const SamplingMask& mask) {
  Tensor<float> t(1, 1, mask.height(), mask.width());
  for (std::size_t k = 0; k < mask.size(); ++k) t[k] = mask[k] ? 1.0f : 0.0f;
  auto rec = to_record(t);
  rec.dims = {mask.height(), mask.width()};
  save_record(path, rec);
  KeyValues meta;
  meta.set("kind", to_string(mask.kind));
  meta.set("fraction", format_double(mask.target_fraction));
  meta.set("seed", std::to_string(mask.seed));
  meta.set("acs_radius", std::to_string(mask.acs_radius));
  meta.write(path.string() + ".meta");
}

SamplingMask load_mask(const std::filesystem::path& path) {
  const auto rec = load_record(path);
  if (rec.dims.size() != 2) throw FormatError(path.string() + ": mask must have rank 2");
  const auto t = real_from_record<float>(rec);
  SamplingMask m(t.h(), t.w());
  for (std::size_t i = 0; i < m.height(); ++i)
    for (std::size_t j = 0; j < m.width(); ++j) {
      const float v = t.at(0, 0, i, j);
      if (v != 0.0f && v != 1.0f) throw FormatError(path.string() + ": mask values must be 0 or 1");
      m(i, j) = v == 1.0f ? 1 : 0;
    }
  const std::filesystem::path meta_path = path.string() + ".meta";
  if (std::filesystem::exists(meta_path)) {
    const auto meta = KeyValues::read(meta_path);
    m.kind = parse_mask_kind(meta.get("kind"));
    m.target_fraction = meta.get_double("fraction");
    m.seed = meta.get_uint("seed");
    m.acs_radius = meta.get_uint("acs_radius");
  } else {
    m.target_fraction = m.fraction();
    m.acs_radius = acs_radius_for(m.height(), m.width());
  }
  return m;
}

namespace {

template <typename A, typename B>
void require_same_plane(const A& a, const B& b, const char* what) {
  if (a.height() != b.height() || a.width() != b.width()) throw InvalidInput(std::string("shape mismatch in ") + what);
}

}  // namespace

MultiCoilKSpace forward_encode(const ComplexImage& x, const SensitivityMaps& maps, const SamplingMask& mask) {
  require_same_plane(x, maps, "forward_encode");
  require_same_plane(x, mask, "forward_encode");
  const std::size_t h = x.height(), w = x.width();
  MultiCoilKSpace y(maps.coils(), h, w);
  for (std::size_t q = 0; q < maps.coils(); ++q) {
    auto plane = y.coil(q);
    auto c = maps.coil(q);
    for (std::size_t p = 0; p < h * w; ++p) plane[p] = c[p] * x[p];
    fft2_centered_inplace(plane, h, w);
    for (std::size_t p = 0; p < h * w; ++p)
      if (!mask[p]) plane[p] = 0.0;
  }
  return y;
}

ComplexImage adjoint_encode(const MultiCoilKSpace& y, const SensitivityMaps& maps, const SamplingMask& mask) {
  if (!y.same_shape(maps)) throw InvalidInput("shape mismatch in adjoint_encode: k-space vs maps");
  require_same_plane(y, mask, "adjoint_encode");
  const std::size_t h = y.height(), w = y.width();
  ComplexImage x(h, w);
  std::vector<std::complex<double>> buf(h * w);
  for (std::size_t q = 0; q < maps.coils(); ++q) {
    auto yq = y.coil(q);
    for (std::size_t p = 0; p < h * w; ++p) buf[p] = mask[p] ? yq[p] : 0.0;
    ifft2_centered_inplace(buf, h, w);
    auto c = maps.coil(q);
    for (std::size_t p = 0; p < h * w; ++p) x[p] += std::conj(c[p]) * buf[p];
  }
  return x;
}

ComplexImage zero_filled(const MultiCoilKSpace& y, const SensitivityMaps& maps, const SamplingMask& mask) {
  return adjoint_encode(y, maps, mask);
}

ComplexImage restrict_to_support(ComplexImage x, const SensitivityMaps& maps) {
  require_same_plane(x, maps, "restrict_to_support");
  for (std::size_t p = 0; p < x.size(); ++p) {
    bool covered = false;
    for (std::size_t q = 0; q < maps.coils() && !covered; ++q) covered = maps.coil(q)[p] != 0.0;
    if (!covered) x[p] = 0.0;
  }
  return x;
}

CoilImages coil_images(const ComplexImage& x, const SensitivityMaps& maps) {
  require_same_plane(x, maps, "coil_images");
  CoilImages out(maps.coils(), x.height(), x.width());
  for (std::size_t q = 0; q < maps.coils(); ++q) {
    auto c = maps.coil(q);
    auto o = out.coil(q);
    for (std::size_t p = 0; p < x.size(); ++p) o[p] = c[p] * x[p];
  }
  return out;
}

ComplexImage combine_coils(const CoilImages& images, const SensitivityMaps& maps) {
  if (!images.same_shape(maps)) throw InvalidInput("shape mismatch in combine_coils");
  ComplexImage x(images.height(), images.width());
  for (std::size_t q = 0; q < maps.coils(); ++q) {
    auto c = maps.coil(q);
    auto v = images.coil(q);
    for (std::size_t p = 0; p < x.size(); ++p) x[p] += std::conj(c[p]) * v[p];
  }
  return x;
}

MultiCoilKSpace coil_kspace(const CoilImages& images) {
  MultiCoilKSpace k(images.coils(), images.height(), images.width());
  for (std::size_t q = 0; q < images.coils(); ++q) {
    auto src = images.coil(q);
    auto dst = k.coil(q);
    std::copy(src.begin(), src.end(), dst.begin());
    fft2_centered_inplace(dst, images.height(), images.width());
  }
  return k;
}

MultiCoilKSpace inject_noise(const MultiCoilKSpace& y, const SamplingMask& mask, double noise_level, RngStream& rng) {
  if (!(noise_level >= 0.0 && noise_level <= 0.95)) {
    throw InvalidInput("noise level must lie in [0, 0.95]");
  }
  require_same_plane(y, mask, "inject_noise");
  MultiCoilKSpace out = y;
  if (noise_level == 0.0) return out;
  double signal = 0.0;
  std::size_t acquired = 0;
  for (std::size_t q = 0; q < y.coils(); ++q) {
    auto yq = y.coil(q);
    for (std::size_t p = 0; p < yq.size(); ++p)
      if (mask[p]) {
        signal += std::norm(yq[p]);
        ++acquired;
      }
  }
  if (acquired == 0) return out;
  signal /= static_cast<double>(acquired);
  const double noise_power = noise_level / (1.0 - noise_level) * signal;
  const double sd = std::sqrt(noise_power / 2.0);
  for (std::size_t q = 0; q < y.coils(); ++q) {
    auto oq = out.coil(q);
    for (std::size_t p = 0; p < oq.size(); ++p) {
      if (!mask[p]) continue;
      const double re = rng.normal();
      const double im = rng.normal();
      oq[p] += std::complex<double>(sd * re, sd * im);
    }
  }
  return out;
}

double measured_noise_level(const MultiCoilKSpace& clean, const MultiCoilKSpace& noisy, const SamplingMask& mask) {
  if (!clean.same_shape(noisy)) throw InvalidInput("shape mismatch in measured_noise_level");
  double s = 0.0, n = 0.0;
  std::size_t count = 0;
  for (std::size_t q = 0; q < clean.coils(); ++q) {
    auto a = clean.coil(q);
    auto b = noisy.coil(q);
    for (std::size_t p = 0; p < a.size(); ++p)
      if (mask[p]) {
        s += std::norm(a[p]);
        n += std::norm(b[p] - a[p]);
        ++count;
      }
  }
  if (count == 0 || s + n == 0.0) return 0.0;
  return n / (n + s);
}

namespace {

struct Gradients {
  std::vector<std::complex<double>> dx, dy;
};

Gradients finite_differences(const ComplexImage& x) {
  const std::size_t h = x.height(), w = x.width();
  Gradients g{std::vector<std::complex<double>>(h * w), std::vector<std::complex<double>>(h * w)};
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      if (j + 1 < w) g.dx[i * w + j] = x(i, j + 1) - x(i, j);
      if (i + 1 < h) g.dy[i * w + j] = x(i + 1, j) - x(i, j);
    }
  return g;
}

double huber(double t, double eps) { return t <= eps ? t * t / (2.0 * eps) : t - eps / 2.0; }

double tv_value(const ComplexImage& x, double eps) {
  const auto g = finite_differences(x);
  double s = 0.0;
  for (std::size_t p = 0; p < g.dx.size(); ++p) s += huber(std::sqrt(std::norm(g.dx[p]) + std::norm(g.dy[p])), eps);
  return s;
}

/// Gradient of the smoothed TV: D^T(phi . Dx), phi = 1 / max(|Dx|, eps).
ComplexImage tv_gradient(const ComplexImage& x, double eps) {
  const std::size_t h = x.height(), w = x.width();
  auto g = finite_differences(x);
  for (std::size_t p = 0; p < g.dx.size(); ++p) {
    const double t = std::sqrt(std::norm(g.dx[p]) + std::norm(g.dy[p]));
    const double phi = 1.0 / std::max(t, eps);
    g.dx[p] *= phi;
    g.dy[p] *= phi;
  }
  ComplexImage out(h, w);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      std::complex<double> v = 0.0;
      if (j > 0) v += g.dx[i * w + j - 1];
      if (j + 1 < w) v -= g.dx[i * w + j];
      if (i > 0) v += g.dy[(i - 1) * w + j];
      if (i + 1 < h) v -= g.dy[i * w + j];
      out(i, j) = v;
    }
  return out;
}

double data_residual(const ComplexImage& x, const MultiCoilKSpace& y, const SensitivityMaps& maps,
                     const SamplingMask& mask) {
  const auto ex = forward_encode(x, maps, mask);
  double s = 0.0;
  for (std::size_t q = 0; q < y.coils(); ++q) {
    auto a = ex.coil(q);
    auto b = y.coil(q);
    for (std::size_t p = 0; p < a.size(); ++p)
      if (mask[p]) s += std::norm(a[p] - b[p]);
  }
  return 0.5 * s;
}

}  // namespace

double tv_objective(const ComplexImage& x, const MultiCoilKSpace& y, const SensitivityMaps& maps,
                    const SamplingMask& mask, double lambda, double eps) {
  return data_residual(x, y, maps, mask) + (lambda == 0.0 ? 0.0 : lambda * tv_value(x, eps));
}

TvResult tv_reconstruct(const MultiCoilKSpace& y, const SensitivityMaps& maps, const SamplingMask& mask,
                        const TvOptions& opts) {
  if (opts.iters < 1) throw InvalidInput("TV reconstruction needs at least one iteration");
  if (opts.lambda < 0.0 || opts.eps <= 0.0) throw InvalidInput("TV lambda must be >= 0 and eps > 0");
  const double step = opts.step > 0.0 ? opts.step : 1.0 / (1.0 + 8.0 * opts.lambda / opts.eps);

  TvResult res;
  res.image = zero_filled(y, maps, mask);
  auto& x = res.image;
  double f = tv_objective(x, y, maps, mask, opts.lambda, opts.eps);
  res.objective.push_back(f);
  int rising = 0;
  for (std::size_t it = 0; it < opts.iters; ++it) {
    // grad = E^H (E x - y) + lambda * TV'(x)
    auto r = forward_encode(x, maps, mask);
    for (std::size_t q = 0; q < r.coils(); ++q) {
      auto rq = r.coil(q);
      auto yq = y.coil(q);
      for (std::size_t p = 0; p < rq.size(); ++p) rq[p] -= mask[p] ? yq[p] : 0.0;
    }
    auto grad = adjoint_encode(r, maps, mask);
    if (opts.lambda != 0.0) {
      const auto tg = tv_gradient(x, opts.eps);
      for (std::size_t p = 0; p < grad.size(); ++p) grad[p] += opts.lambda * tg[p];
    }
    for (std::size_t p = 0; p < x.size(); ++p) x[p] -= step * grad[p];

    const double next = tv_objective(x, y, maps, mask, opts.lambda, opts.eps);
    if (!std::isfinite(next)) throw NumericError("TV objective became non-finite at iteration " + std::to_string(it));
    // rounding-level wobble near a fixed point is not divergence
    rising = next > f + 1e-8 * std::max(1.0, std::abs(f)) ? rising + 1 : 0;
    if (rising >= 5) {
      throw NumericError("TV objective increased for 5 consecutive iterations; reduce the step size");
    }
    f = next;
    res.objective.push_back(f);
  }
  return res;
}

}  // namespace pidd
