#include "pidd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "pidd/kv_config.hpp"

namespace pidd {

namespace {

void require_pair(const RealImage& a, const RealImage& b, const char* what) {
  if (a.h != b.h || a.w != b.w || a.v.size() != a.h * a.w || b.v.size() != b.h * b.w || a.v.empty()) {
    throw InvalidInput(std::string(what) + ": image shapes differ or are empty");
  }
}

}  // namespace

RealImage abs_image(const ComplexImage& img) {
  RealImage r(img.height(), img.width());
  for (std::size_t k = 0; k < img.size(); ++k) r.v[k] = std::abs(img[k]);
  return r;
}

void normalize_to_reference(RealImage& pred, RealImage& gt) {
  if (pred.h != gt.h || pred.w != gt.w) throw InvalidInput("metric images differ in shape");
  const double peak = gt.v.empty() ? 0.0 : *std::max_element(gt.v.begin(), gt.v.end());
  if (!(peak > 0)) return;
  for (auto& v : pred.v) v /= peak;
  for (auto& v : gt.v) v /= peak;
}

double nmse(const RealImage& pred, const RealImage& gt) {
  require_pair(pred, gt, "nmse");
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < gt.v.size(); ++k) {
    const double d = pred.v[k] - gt.v[k];
    num += d * d;
    den += gt.v[k] * gt.v[k];
  }
  if (den == 0.0) throw UndefinedReference("nmse: reference image is all zeros");
  return num / den;
}

double psnr(const RealImage& pred, const RealImage& gt, double peak) {
  require_pair(pred, gt, "psnr");
  double se = 0.0;
  for (std::size_t k = 0; k < gt.v.size(); ++k) {
    const double d = pred.v[k] - gt.v[k];
    se += d * d;
  }
  const double mse = se / static_cast<double>(gt.v.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

double ssim(const RealImage& x, const RealImage& y) {
  require_pair(x, y, "ssim");
  const std::size_t win = std::min<std::size_t>({11, x.h, x.w});
  const double sigma = 1.5;
  std::vector<double> g(win);
  double gs = 0.0;
  const double mid = (static_cast<double>(win) - 1.0) / 2.0;
  for (std::size_t i = 0; i < win; ++i) {
    const double d = static_cast<double>(i) - mid;
    g[i] = std::exp(-d * d / (2 * sigma * sigma));
    gs += g[i];
  }
  for (auto& v : g) v /= gs;
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const std::size_t oh = x.h - win + 1, ow = x.w - win + 1;
  double total = 0.0;
  for (std::size_t i = 0; i < oh; ++i)
    for (std::size_t j = 0; j < ow; ++j) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (std::size_t a = 0; a < win; ++a)
        for (std::size_t b = 0; b < win; ++b) {
          const double wt = g[a] * g[b];
          const double xv = x(i + a, j + b), yv = y(i + a, j + b);
          mx += wt * xv;
          my += wt * yv;
          sxx += wt * xv * xv;
          syy += wt * yv * yv;
          sxy += wt * xv * yv;
        }
      const double vx = sxx - mx * mx, vy = syy - my * my, cxy = sxy - mx * my;
      total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
  return total / static_cast<double>(oh * ow);
}

MetricRow MetricReport::mean() const {
  MetricRow m{"mean"};
  if (rows.empty()) return m;
  for (const auto& r : rows) {
    m.nmse += r.nmse;
    m.psnr += r.psnr;
    m.ssim += r.ssim;
  }
  const double n = static_cast<double>(rows.size());
  m.nmse /= n;
  m.psnr /= n;
  m.ssim /= n;
  return m;
}

MetricRow MetricReport::stddev() const {
  MetricRow s{"std"};
  if (rows.size() < 2) return s;
  const MetricRow m = mean();
  for (const auto& r : rows) {
    s.nmse += (r.nmse - m.nmse) * (r.nmse - m.nmse);
    s.psnr += (r.psnr - m.psnr) * (r.psnr - m.psnr);
    s.ssim += (r.ssim - m.ssim) * (r.ssim - m.ssim);
  }
  const double d = static_cast<double>(rows.size() - 1);
  s.nmse = std::sqrt(s.nmse / d);
  s.psnr = std::sqrt(s.psnr / d);
  s.ssim = std::sqrt(s.ssim / d);
  return s;
}

std::string MetricReport::csv() const {
  std::ostringstream os;
  os << "image_id,nmse,psnr,ssim\n";
  auto line = [&](const MetricRow& r) {
    os << r.image_id << ',' << format_double(r.nmse) << ',' << format_double(r.psnr) << ',' << format_double(r.ssim)
       << '\n';
  };
  for (const auto& r : rows) line(r);
  line(mean());
  line(stddev());
  return os.str();
}

void MetricReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << csv();
  if (!f) throw IoError("write failed: " + path.string());
}

MetricReport evaluate(const std::vector<std::string>& ids, const ReconFn& predict, const ReconFn& truth) {
  MetricReport rep;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const RealImage p = predict(i);
    const RealImage t = truth(i);
    rep.rows.push_back({ids[i], nmse(p, t), psnr(p, t), ssim(p, t)});
  }
  return rep;
}

}  // namespace pidd
