#include "pidd/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "pidd/tensor_io.hpp"

namespace pidd {

void PhantomSpec::validate() const {
  if (size < 32) throw InvalidInput("phantom size must be at least 32");
  if (coils < 1) throw InvalidInput("phantom coil count must be at least 1");
  if (ellipses_min > ellipses_max) throw InvalidInput("phantom ellipse range is empty");
  if (!(intensity_min >= 0.0 && intensity_max <= 1.0 && intensity_min <= intensity_max)) {
    throw InvalidInput("phantom intensities must satisfy 0 <= min <= max <= 1");
  }
}

KeyValues PhantomSpec::to_kv() const {
  KeyValues kv;
  kv.set("size", std::to_string(size));
  kv.set("ellipses_min", std::to_string(ellipses_min));
  kv.set("ellipses_max", std::to_string(ellipses_max));
  kv.set("intensity_min", format_double(intensity_min));
  kv.set("intensity_max", format_double(intensity_max));
  kv.set("coils", std::to_string(coils));
  kv.set("seed", std::to_string(seed));
  return kv;
}

PhantomSpec PhantomSpec::from_kv(const KeyValues& kv) {
  const auto unknown =
      kv.unknown_keys({"size", "ellipses_min", "ellipses_max", "intensity_min", "intensity_max", "coils", "seed"});
  if (!unknown.empty()) throw FormatError("unknown phantom key '" + unknown.front() + "'");
  PhantomSpec s;
  if (kv.has("size")) s.size = kv.get_uint("size");
  if (kv.has("ellipses_min")) s.ellipses_min = kv.get_uint("ellipses_min");
  if (kv.has("ellipses_max")) s.ellipses_max = kv.get_uint("ellipses_max");
  if (kv.has("intensity_min")) s.intensity_min = kv.get_double("intensity_min");
  if (kv.has("intensity_max")) s.intensity_max = kv.get_double("intensity_max");
  if (kv.has("coils")) s.coils = kv.get_uint("coils");
  if (kv.has("seed")) s.seed = kv.get_uint("seed");
  s.validate();
  return s;
}

std::vector<std::uint8_t> support_disc(std::size_t h, std::size_t w) {
  std::vector<std::uint8_t> s(h * w);
  const double ci = (static_cast<double>(h) - 1.0) / 2.0, cj = (static_cast<double>(w) - 1.0) / 2.0;
  const double r = 0.47 * static_cast<double>(std::min(h, w));
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      const double di = static_cast<double>(i) - ci, dj = static_cast<double>(j) - cj;
      s[i * w + j] = di * di + dj * dj <= r * r;
    }
  return s;
}

SensitivityMaps trivial_maps(std::size_t h, std::size_t w) {
  SensitivityMaps m(1, h, w);
  for (auto& v : m.data()) v = 1.0;
  return m;
}

namespace {

struct Ellipse {
  double cx, cy, a, b, theta, value;
  bool contains(double x, double y) const {
    const double c = std::cos(theta), s = std::sin(theta);
    const double u = (x - cx) * c + (y - cy) * s;
    const double v = -(x - cx) * s + (y - cy) * c;
    return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
  }
};

double between(RngStream& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

}  // namespace

Phantom gen_phantom(const PhantomSpec& spec, RngStream& rng) {
  spec.validate();
  const std::size_t n = spec.size;
  const double pi = std::numbers::pi;
  // normalized coordinates: the support disc has radius 0.94
  const double c = (static_cast<double>(n) - 1.0) / 2.0, half = static_cast<double>(n) / 2.0;

  std::vector<Ellipse> shapes;
  const double scale = between(rng, 0.85, 1.0);
  const double tilt = between(rng, -0.15, 0.15);
  shapes.push_back({0.0, 0.0, 0.69 * scale, 0.92 * scale, tilt, between(rng, 0.6, 0.9)});
  shapes.push_back({0.0, -0.0184 * scale, 0.6624 * scale, 0.874 * scale, tilt, -between(rng, 0.3, 0.5)});
  const std::size_t extra = spec.ellipses_min + rng.below(spec.ellipses_max - spec.ellipses_min + 1);
  for (std::size_t e = 0; e < extra; ++e) {
    const double rad = 0.55 * scale * std::sqrt(rng.uniform());
    const double ang = between(rng, 0.0, 2.0 * pi);
    Ellipse el{rad * std::cos(ang),
               rad * std::sin(ang),
               between(rng, 0.04, 0.22) * scale,
               between(rng, 0.04, 0.22) * scale,
               between(rng, 0.0, pi),
               between(rng, spec.intensity_min, spec.intensity_max) * (rng.uniform() < 0.3 ? -0.5 : 0.6)};
    shapes.push_back(el);
  }
  const double px = between(rng, -1.0, 1.0), py = between(rng, -1.0, 1.0), p0 = between(rng, -pi, pi);

  std::vector<double> mag(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double x = (static_cast<double>(j) - c) / half, y = (static_cast<double>(i) - c) / half;
      double v = 0.0;
      for (const auto& s : shapes)
        if (s.contains(x, y)) v += s.value;
      mag[i * n + j] = std::max(0.0, v);
    }
  const double peak = *std::max_element(mag.begin(), mag.end());
  if (!(peak > 0.0)) throw NumericError("phantom came out empty");

  const auto support = support_disc(n, n);
  Phantom out{ComplexImage(n, n), CoilImages(spec.coils, n, n), SensitivityMaps(spec.coils, n, n)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t k = i * n + j;
      if (!support[k]) continue;
      const double x = (static_cast<double>(j) - c) / half, y = (static_cast<double>(i) - c) / half;
      std::complex<double> z = std::polar(mag[k] / peak, p0 + px * x + py * y);
      while (std::abs(z) > 1.0) z *= 1.0 - 0x1p-52;
      out.truth[k] = z;
    }

  // coil lobes centered on a ring outside the support
  const double ring = between(rng, 1.0, 1.2);
  const double offset = between(rng, 0.0, 2.0 * pi);
  std::vector<double> ang(spec.coils), width(spec.coils), phase(spec.coils), tx(spec.coils), ty(spec.coils);
  for (std::size_t q = 0; q < spec.coils; ++q) {
    ang[q] = offset + 2.0 * pi * static_cast<double>(q) / static_cast<double>(spec.coils);
    width[q] = between(rng, 0.6, 0.9);
    phase[q] = between(rng, -pi, pi);
    tx[q] = between(rng, -0.5, 0.5);
    ty[q] = between(rng, -0.5, 0.5);
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t k = i * n + j;
      if (!support[k]) continue;
      const double x = (static_cast<double>(j) - c) / half, y = (static_cast<double>(i) - c) / half;
      double ss = 0.0;
      for (std::size_t q = 0; q < spec.coils; ++q) {
        const double dx = x - ring * std::cos(ang[q]), dy = y - ring * std::sin(ang[q]);
        const double g = std::exp(-(dx * dx + dy * dy) / (2.0 * width[q] * width[q]));
        const std::complex<double> v = std::polar(g, phase[q] + tx[q] * x + ty[q] * y);
        out.maps(q, i, j) = v;
        ss += std::norm(v);
      }
      const double inv = 1.0 / std::sqrt(ss);
      for (std::size_t q = 0; q < spec.coils; ++q) {
        out.maps(q, i, j) *= inv;
        out.coil_images(q, i, j) = out.maps(q, i, j) * out.truth[k];
      }
    }
  return out;
}

// ------------------------------------------------------------- manifest

std::vector<const ManifestEntry*> DatasetManifest::split(const std::string& tag) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries)
    if (e.split == tag) out.push_back(&e);
  return out;
}

void DatasetManifest::write(const std::filesystem::path& file) const {
  std::ofstream f(file, std::ios::trunc | std::ios::binary);
  if (!f) throw IoError("cannot write manifest " + file.string());
  for (const auto& e : entries) f << e.split << '\t' << e.image.generic_string() << '\t' << e.maps.generic_string() << '\n';
  if (!f) throw IoError("write failed: " + file.string());
}

DatasetManifest DatasetManifest::read(const std::filesystem::path& file) {
  std::ifstream f(file);
  if (!f) throw IoError("cannot open manifest " + file.string());
  DatasetManifest m;
  m.root = file.parent_path();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::size_t start = 0;
    for (;;) {
      const auto t = line.find('\t', start);
      cols.push_back(line.substr(start, t - start));
      if (t == std::string::npos) break;
      start = t + 1;
    }
    if (cols.size() < 2 || cols.size() > 3 || cols[1].empty()) {
      throw FormatError(file.string() + ":" + std::to_string(lineno) + ": expected split<TAB>image<TAB>maps");
    }
    if (cols[0] != "train" && cols[0] != "val" && cols[0] != "test") {
      throw FormatError(file.string() + ":" + std::to_string(lineno) + ": unknown split '" + cols[0] + "'");
    }
    m.entries.push_back({cols[0], cols[1], cols.size() == 3 ? cols[2] : std::string()});
  }
  return m;
}

DatasetManifest build_dataset(const PhantomSpec& spec, std::size_t count, std::array<double, 3> ratios,
                              const std::filesystem::path& out_dir) {
  spec.validate();
  if (count < 10) throw InvalidInput("dataset needs at least 10 samples");
  const double total = ratios[0] + ratios[1] + ratios[2];
  if (!(ratios[0] >= 0 && ratios[1] >= 0 && ratios[2] >= 0 && total > 0)) {
    throw InvalidInput("split ratios must be non-negative with a positive sum");
  }
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) {
    throw IoError("cannot create dataset directory " + out_dir.string() + (ec ? ": " + ec.message() : ""));
  }
  const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(count) * ratios[0] / total));
  const auto n_val = std::min(count - n_train,
                              static_cast<std::size_t>(std::llround(static_cast<double>(count) * ratios[1] / total)));
  // split assignment from a stream id no sample uses
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  RngStream split_rng(spec.seed, 0xffffffffffffffffULL);
  for (std::size_t i = count; i > 1; --i) std::swap(order[i - 1], order[split_rng.below(i)]);
  std::vector<std::string> tag(count);
  for (std::size_t r = 0; r < count; ++r) tag[order[r]] = r < n_train ? "train" : r < n_train + n_val ? "val" : "test";

  DatasetManifest m;
  m.root = out_dir;
  for (std::size_t i = 0; i < count; ++i) {
    RngStream rng(spec.seed, i);
    const Phantom p = gen_phantom(spec, rng);
    char stem[32];
    std::snprintf(stem, sizeof stem, "s%04zu", i);
    const std::string img = std::string(stem) + ".img.pidt", maps = std::string(stem) + ".maps.pidt";
    tensor_save(out_dir / img, p.truth);
    save_record(out_dir / maps, to_record(p.maps));
    m.entries.push_back({tag[i], img, maps});
  }
  m.write(out_dir / kManifestName);
  spec.to_kv().write(out_dir / "phantom.cfg");
  return m;
}

namespace {

ComplexImage image_from_record(const PidtRecord& rec, const std::filesystem::path& path) {
  const bool complex = rec.dtype == DType::c128 || rec.dtype == DType::c64;
  // real images may carry leading singleton dims (1x1xHxW)
  bool ok = rec.dims.size() == 2;
  if (!complex && rec.dims.size() > 2 && rec.dims.size() <= 4)
    ok = std::all_of(rec.dims.begin(), rec.dims.end() - 2, [](std::uint64_t d) { return d == 1; });
  if (!ok) {
    throw FormatError(path.string() + ": expected a single 2-D image, found rank " + std::to_string(rec.dims.size()));
  }
  if (complex) return complex_from_record<double>(rec);
  const Tensor<double> t = real_from_record<double>(rec);
  ComplexImage img(t.h(), t.w());
  for (std::size_t k = 0; k < img.size(); ++k) img[k] = t[k];
  return img;
}

}  // namespace

std::vector<LoadedSample> load_external(const std::filesystem::path& path, Layout layout) {
  std::vector<LoadedSample> out;
  if (layout == Layout::manifest) {
    const auto file = std::filesystem::is_directory(path) ? path / kManifestName : path;
    if (!std::filesystem::exists(file)) throw FormatError("manifest layout: missing " + file.string());
    const DatasetManifest m = DatasetManifest::read(file);
    for (const auto& e : m.entries) {
      const auto ip = m.root / e.image;
      if (!std::filesystem::exists(ip)) throw IoError("missing image file " + ip.string());
      LoadedSample s{e.image.filename().string(), e.split, image_from_record(load_record(ip), ip), {}, false};
      if (auto dot = s.id.find('.'); dot != std::string::npos) s.id.resize(dot);
      if (e.maps.empty()) {
        s.maps = trivial_maps(s.image.height(), s.image.width());
        s.synthesized_maps = true;
      } else {
        const auto mp = m.root / e.maps;
        if (!std::filesystem::exists(mp)) throw IoError("missing maps file " + mp.string());
        s.maps = coils_from_record<SensitivityMapsTag>(load_record(mp));
        if (s.maps.height() != s.image.height() || s.maps.width() != s.image.width()) {
          throw FormatError(mp.string() + ": maps shape does not match image " + ip.string());
        }
      }
      out.push_back(std::move(s));
    }
    return out;
  }
  if (!std::filesystem::is_directory(path)) throw FormatError("images layout: " + path.string() + " is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& de : std::filesystem::directory_iterator(path))
    if (de.is_regular_file() && de.path().extension() == ".pidt") files.push_back(de.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw FormatError("images layout: no .pidt files in " + path.string());
  for (const auto& f : files) {
    LoadedSample s{f.stem().string(), "test", image_from_record(load_record(f), f), {}, true};
    s.maps = trivial_maps(s.image.height(), s.image.width());
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace pidd
