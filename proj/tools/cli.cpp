#include "cli.hpp"

#include <png.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include "pidd/edge.hpp"
#include "pidd/metrics.hpp"
#include "pidd/mri.hpp"
#include "pidd/phantom.hpp"
#include "pidd/tensor_io.hpp"
#include "pidd/train.hpp"

namespace pidd::cli {

namespace fs = std::filesystem;

namespace {

struct OptSpec {
  std::string key;
  std::string fallback;
  std::string help;
  bool flag = false;  // bare switch on the command line, true/false in config files
};

std::string dashed(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep))
    if (!cur.empty()) out.push_back(cur);
  return out;
}

/// Options of one subcommand. Values resolve as default < config file < flag.
class Command {
 public:
  Command(CLI::App& app, const std::string& name, const std::string& about, std::vector<OptSpec> specs)
      : specs_(std::move(specs)) {
    sub_ = app.add_subcommand(name, about);
    sub_->add_option("--config", config_, "key = value file; explicit flags take precedence")->type_name("FILE");
    for (const auto& s : specs_) {
      if (s.flag) {
        opts_[s.key] = sub_->add_flag("--" + dashed(s.key), s.help);
        continue;
      }
      auto* o = sub_->add_option("--" + dashed(s.key), given_[s.key], s.help)->type_name("VALUE");
      if (!s.fallback.empty()) o->default_str(s.fallback);
      opts_[s.key] = o;
    }
  }

  CLI::App* app() { return sub_; }
  bool selected() const { return sub_->parsed(); }

  KeyValues resolve() const {
    std::map<std::string, std::string> v;
    for (const auto& s : specs_) v[s.key] = s.fallback;
    if (!config_.empty()) {
      const KeyValues file = KeyValues::read(config_);
      std::vector<std::string> known;
      for (const auto& s : specs_) known.push_back(s.key);
      const auto unknown = file.unknown_keys(known);
      if (!unknown.empty()) throw InvalidInput(config_ + ": unknown key '" + unknown.front() + "'");
      for (const auto& [k, val] : file.entries()) v[k] = val;
    }
    for (const auto& s : specs_)
      if (opts_.at(s.key)->count() > 0) v[s.key] = s.flag ? "true" : given_.at(s.key);
    KeyValues kv;
    for (const auto& s : specs_) kv.set(s.key, v[s.key]);
    return kv;
  }

 private:
  CLI::App* sub_ = nullptr;
  std::vector<OptSpec> specs_;
  std::string config_;
  std::map<std::string, std::string> given_;
  std::map<std::string, CLI::Option*> opts_;
};

const std::string& require(const KeyValues& kv, const std::string& key) {
  const auto& v = kv.get(key);
  if (v.empty()) throw InvalidInput("--" + dashed(key) + " is required");
  return v;
}

void log_config(std::ostream& out, const std::string& cmd, const KeyValues& kv) {
  out << "# " << cmd << "\n";
  std::istringstream is(kv.str());
  for (std::string line; std::getline(is, line);) out << "#   " << line << "\n";
}

// ----------------------------------------------------------------- images

void write_png(const fs::path& path, std::size_t h, std::size_t w, const std::vector<std::uint8_t>& px) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), std::fclose);
  if (!fp) throw IoError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t i = 0; i < h; ++i) png_write_row(png, const_cast<png_bytep>(px.data() + i * w));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

/// Per-image min-max scaling to 8 bits (display only).
void write_png_minmax(const fs::path& path, const RealImage& img) {
  const auto [lo, hi] = std::minmax_element(img.v.begin(), img.v.end());
  const double range = *hi - *lo;
  std::vector<std::uint8_t> px(img.v.size());
  for (std::size_t k = 0; k < px.size(); ++k)
    px[k] = range > 0 ? static_cast<std::uint8_t>(std::lround(255.0 * (img.v[k] - *lo) / range)) : 0;
  write_png(path, img.h, img.w, px);
}

/// |a - b| x 15, clamped at 1.
void write_png_difference(const fs::path& path, const RealImage& a, const RealImage& b) {
  std::vector<std::uint8_t> px(a.v.size());
  for (std::size_t k = 0; k < px.size(); ++k)
    px[k] = static_cast<std::uint8_t>(std::lround(255.0 * std::min(1.0, 15.0 * std::abs(a.v[k] - b.v[k]))));
  write_png(path, a.h, a.w, px);
}

RealImage edge_image(const RealImage& m) {
  Tensor<double> t(1, 1, m.h, m.w);
  std::copy(m.v.begin(), m.v.end(), t.ptr());
  const auto e = sobel(t);
  RealImage out(m.h, m.w);
  std::copy(e.data().begin(), e.data().end(), out.v.begin());
  return out;
}

// ---------------------------------------------------------------- samples

struct Case {
  std::string id;
  Sample sample;
};

const std::vector<OptSpec>& input_specs() {
  static const std::vector<OptSpec> s{
      {"data", "", "dataset directory"},
      {"layout", "manifest", "manifest | images"},
      {"split", "test", "train | val | test | all (manifest layout)"},
      {"mode", "PIDD", "PIDD | PISD | nPIDD (nPIDD combines coils and uses unit maps)"},
      {"mask_file", "", "sampling mask container; overrides the generated mask"},
      {"mask_kind", "gaussian2d", "gaussian1d | gaussian2d | poisson2d"},
      {"mask_fraction", "0.3", "sampled fraction of k-space"},
      {"mask_seed", "1", "mask seed"},
      {"noise_level", "0", "complex Gaussian noise level on acquired samples"},
      {"seed", "1", "noise seed"},
  };
  return s;
}

std::vector<Case> load_cases(const KeyValues& kv, SamplingMask& mask) {
  const std::string& layout = kv.get("layout");
  if (layout != "manifest" && layout != "images") throw InvalidInput("unknown layout '" + layout + "'");
  const std::string& split_tag = kv.get("split");
  if (split_tag != "train" && split_tag != "val" && split_tag != "test" && split_tag != "all")
    throw InvalidInput("unknown split '" + split_tag + "'");
  const TrainMode mode = parse_train_mode(kv.get("mode"));
  auto loaded = load_external(require(kv, "data"), layout == "images" ? Layout::images : Layout::manifest);
  if (loaded.empty()) throw FormatError("no images in " + kv.get("data"));
  const std::size_t h = loaded.front().image.height(), w = loaded.front().image.width();
  if (!kv.get("mask_file").empty()) {
    mask = load_mask(kv.get("mask_file"));
  } else {
    RngStream mrng(kv.get_uint("mask_seed"), 0);
    mask = make_mask(parse_mask_kind(kv.get("mask_kind")), kv.get_double("mask_fraction"), h, w, mrng);
  }
  if (mask.height() != h || mask.width() != w) throw InvalidInput("mask shape does not match the images");
  std::vector<Case> out;
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    auto& ls = loaded[i];
    if (split_tag != "all" && ls.split != split_tag) continue;
    if (ls.image.height() != h || ls.image.width() != w) throw FormatError("images differ in size");
    if (mode == TrainMode::nPIDD && !ls.synthesized_maps) {
      ls.image = combine_coils(coil_images(ls.image, ls.maps), ls.maps);
      ls.maps = trivial_maps(h, w);
    }
    // index i matches the training-time noise stream for manifest datasets
    out.push_back({ls.id, make_sample(ls.image, ls.maps, mask, kv.get_double("noise_level"), kv.get_uint("seed"), i)});
  }
  if (out.empty()) throw InvalidInput("split '" + split_tag + "' is empty");
  return out;
}

std::unique_ptr<Generator<float>> load_generator(const fs::path& dir) {
  auto g = std::make_unique<Generator<float>>(read_checkpoint_config(dir));
  load_checkpoint(dir, *g);
  return g;
}

std::vector<ComplexImage> run_model(Generator<float>& g, const std::vector<Case>& cases) {
  std::vector<const ComplexImage*> in;
  for (const auto& c : cases) in.push_back(&c.sample.x_u);
  auto rec = reconstruct(g, in, 8);
  for (std::size_t i = 0; i < rec.size(); ++i) rec[i] = restrict_to_support(std::move(rec[i]), cases[i].sample.maps);
  return rec;
}

// --------------------------------------------------------------- commands

int cmd_phantom(const KeyValues& kv, std::ostream& out) {
  PhantomSpec spec;
  spec.size = kv.get_uint("size");
  spec.coils = kv.get_uint("coils");
  spec.seed = kv.get_uint("seed");
  spec.ellipses_min = kv.get_uint("ellipses_min");
  spec.ellipses_max = kv.get_uint("ellipses_max");
  const auto r = split(kv.get("ratios"), ',');
  if (r.size() != 3) throw InvalidInput("--ratios needs three comma-separated values");
  const std::array<double, 3> ratios{std::stod(r[0]), std::stod(r[1]), std::stod(r[2])};
  const auto man = build_dataset(spec, kv.get_uint("count"), ratios, require(kv, "out"));
  out << "wrote " << man.entries.size() << " phantoms (" << man.split("train").size() << " train, "
      << man.split("val").size() << " val, " << man.split("test").size() << " test) to " << kv.get("out") << "\n";
  return kOk;
}

int cmd_mask(const KeyValues& kv, std::ostream& out) {
  const std::size_t n = kv.get_uint("size");
  const std::size_t h = kv.get("height").empty() ? n : kv.get_uint("height");
  const std::size_t w = kv.get("width").empty() ? n : kv.get_uint("width");
  RngStream rng(kv.get_uint("seed"), 0);
  const SamplingMask m = make_mask(parse_mask_kind(kv.get("kind")), kv.get_double("fraction"), h, w, rng);
  save_mask(require(kv, "out"), m);
  out << "mask " << h << "x" << w << " sampled fraction " << format_double(double(m.count()) / double(m.size()))
      << " -> " << kv.get("out") << "\n";
  return kOk;
}

int cmd_train(const KeyValues& kv, std::ostream& out) {
  KeyValues tk;
  for (const auto& [k, v] : kv.entries())
    if (k != "ablate" && k != "variants") tk.set(k, v);
  const TrainConfig cfg = TrainConfig::from_kv(tk);
  require(kv, "data");
  require(kv, "out");
  if (kv.get_bool("ablate")) {
    const AblationResult r = run_ablation(cfg, split(kv.get("variants"), ','));
    for (std::size_t i = 0; i < r.variants.size(); ++i) {
      const auto& last = r.results[i].epochs.back();
      out << r.variants[i] << ": " << r.results[i].epochs.size() << " epochs, final val NMSE "
          << format_double(last.nmse) << "\n";
    }
    return kOk;
  }
  const TrainResult r = train(cfg);
  out << "trained " << r.steps << " steps over " << r.epochs.size() << " epochs; best val NMSE "
      << format_double(r.best_nmse) << " at epoch " << r.best_epoch << (r.stopped_early ? " (early stop)" : "") << "\n";
  return kOk;
}

int cmd_recon(const KeyValues& kv, std::ostream& out) {
  SamplingMask mask;
  const auto cases = load_cases(kv, mask);
  auto g = load_generator(require(kv, "checkpoint"));
  const auto rec = run_model(*g, cases);
  const fs::path dir = require(kv, "out");
  fs::create_directories(dir);
  kv.write(dir / "recon.cfg");
  const bool png = kv.get_bool("png");
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& c = cases[i];
    tensor_save(dir / (c.id + ".recon.pidt"), rec[i]);
    tensor_save(dir / (c.id + ".zf.pidt"), c.sample.x_u);
    if (!png) continue;
    const RealImage r = abs_image(rec[i]), z = abs_image(c.sample.x_u), t = abs_image(c.sample.x_t);
    write_png_minmax(dir / (c.id + ".recon.png"), r);
    write_png_minmax(dir / (c.id + ".zf.png"), z);
    write_png_minmax(dir / (c.id + ".truth.png"), t);
    write_png_minmax(dir / (c.id + ".edge.png"), edge_image(r));
    // differences on the reference-normalized scale
    for (const auto& [img, suffix] : {std::pair{&r, ".diff.png"}, std::pair{&z, ".zf_diff.png"}}) {
      RealImage p = *img, ref = t;
      normalize_to_reference(p, ref);
      write_png_difference(dir / (c.id + suffix), p, ref);
    }
  }
  out << "reconstructed " << cases.size() << " images into " << dir.string() << "\n";
  return kOk;
}

int cmd_eval(const KeyValues& kv, std::ostream& out) {
  SamplingMask mask;
  const auto cases = load_cases(kv, mask);
  const fs::path dir = require(kv, "out");
  fs::create_directories(dir);
  kv.write(dir / "eval.cfg");
  std::vector<std::string> ids;
  for (const auto& c : cases) ids.push_back(c.id);
  for (const auto& method : split(kv.get("methods"), ',')) {
    std::vector<ComplexImage> pred;
    if (method == "zf") {
      for (const auto& c : cases) pred.push_back(c.sample.x_u);
    } else if (method == "tv") {
      TvOptions o;
      o.lambda = kv.get_double("tv_lambda");
      o.iters = kv.get_uint("tv_iters");
      for (const auto& c : cases)
        pred.push_back(restrict_to_support(tv_reconstruct(c.sample.y_mask, c.sample.maps, mask, o).image, c.sample.maps));
    } else if (method == "model") {
      auto g = load_generator(require(kv, "checkpoint"));
      pred = run_model(*g, cases);
    } else {
      throw InvalidInput("unknown method '" + method + "' (zf, tv, model)");
    }
    std::vector<RealImage> p, t;
    for (std::size_t i = 0; i < cases.size(); ++i) {
      p.push_back(abs_image(pred[i]));
      t.push_back(abs_image(cases[i].sample.x_t));
      normalize_to_reference(p.back(), t.back());
    }
    const MetricReport rep = evaluate(
        ids, [&](std::size_t i) { return p[i]; }, [&](std::size_t i) { return t[i]; });
    rep.write_csv(dir / ("eval_" + method + ".csv"));
    const MetricRow m = rep.mean(), s = rep.stddev();
    out << method << ": NMSE " << format_double(m.nmse) << " +/- " << format_double(s.nmse) << ", PSNR "
        << format_double(m.psnr) << " +/- " << format_double(s.psnr) << ", SSIM " << format_double(m.ssim)
        << " +/- " << format_double(s.ssim) << " (" << rep.rows.size() << " images)\n";
  }
  return kOk;
}

std::vector<OptSpec> train_specs() {
  static const std::map<std::string, std::string> help{
      {"data", "dataset directory (manifest layout)"},
      {"out", "output directory"},
      {"mode", "PIDD | PISD | nPIDD"},
      {"epochs", "maximum number of epochs"},
      {"batch", "batch size (at least 2)"},
      {"max_steps", "stop after this many steps (0 = no limit)"},
      {"lr_init", "initial learning rate"},
      {"lr_min", "learning-rate floor"},
      {"lr_decay", "learning-rate factor per decay period"},
      {"lr_step", "decay period in epochs"},
      {"adam_beta1", "Adam first-moment decay"},
      {"adam_beta2", "Adam second-moment decay"},
      {"adam_eps", "Adam epsilon"},
      {"patience", "early-stopping patience in epochs"},
      {"early_stop", "enable early stopping (true | false)"},
      {"seed", "run seed (initialization, shuffling, noise)"},
      {"mask_kind", "gaussian1d | gaussian2d | poisson2d"},
      {"mask_fraction", "sampled fraction of k-space"},
      {"mask_seed", "mask seed"},
      {"mask_file", "sampling mask container; overrides the generated mask"},
      {"noise_level", "complex Gaussian noise level on acquired samples"},
      {"alpha", "image-domain MSE weight"},
      {"beta", "frequency-domain MSE weight"},
      {"gamma", "perceptual loss weight"},
      {"mu", "image discriminator weight"},
      {"nu", "edge discriminator weight"},
      {"base_width", "generator channels at the first level"},
      {"use_gr", "global residual: add the input to the output (true | false)"},
      {"use_lr", "local residual shortcuts in the encoder (true | false)"},
      {"attention", "fca | se | none"},
      {"fca_parts", "frequency groups in FCA"},
      {"fca_freqs", "one u,v pair per group, space separated"},
      {"fca_reduction", "attention bottleneck reduction"},
      {"disc_width", "discriminator channels at the first level"},
      {"keep_d2", "allocate the edge discriminator even in PISD mode"},
  };
  const KeyValues defaults = TrainConfig{}.to_kv();
  std::vector<OptSpec> specs;
  for (const auto& key : TrainConfig::keys()) {
    const auto it = help.find(key);
    specs.push_back({key, defaults.has(key) ? defaults.get(key) : "", it == help.end() ? key : it->second});
  }
  specs.push_back({"ablate", "false", "run the GR/LR ablation instead of a single training run", true});
  specs.push_back({"variants", "GRLR,GRnLR,nGRLR,nGRnLR", "ablation variants, comma separated"});
  return specs;
}

std::vector<OptSpec> with_inputs(std::vector<OptSpec> extra) {
  std::vector<OptSpec> s = input_specs();
  s.insert(s.end(), extra.begin(), extra.end());
  return s;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Parallel-imaging dual-discriminator GAN reconstruction toolkit", "pidd"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");
  app.get_formatter()->column_width(42);

  Command phantom(app, "phantom", "synthesize a phantom dataset",
                  {{"out", "", "output directory"},
                   {"count", "200", "number of phantoms (at least 10)"},
                   {"size", "64", "image side length"},
                   {"coils", "4", "coil count"},
                   {"ellipses_min", "4", "fewest random ellipses"},
                   {"ellipses_max", "10", "most random ellipses"},
                   {"ratios", "0.5,0.2,0.3", "train,val,test fractions"},
                   {"seed", "1", "dataset seed"}});
  Command mask(app, "mask", "generate a k-space sampling mask",
               {{"out", "", "output mask container"},
                {"kind", "gaussian2d", "gaussian1d | gaussian2d | poisson2d"},
                {"fraction", "0.3", "sampled fraction of k-space"},
                {"size", "256", "side length when height/width are not given"},
                {"height", "", "rows"},
                {"width", "", "columns"},
                {"seed", "1", "mask seed"}});
  Command trainc(app, "train", "train a generator (or the GR/LR ablation with --ablate)", train_specs());
  Command recon(app, "recon", "reconstruct undersampled images with a checkpoint",
                with_inputs({{"checkpoint", "", "checkpoint directory"},
                             {"out", "", "output directory"},
                             {"png", "true", "also write 8-bit PNG previews, edges and x15 differences"}}));
  Command eval(app, "eval", "score reconstructions (zero-filled, TV, model) against ground truth",
               with_inputs({{"methods", "zf,tv,model", "comma-separated subset of zf, tv, model"},
                            {"checkpoint", "", "checkpoint directory (model method)"},
                            {"tv_lambda", "0.001", "TV weight"},
                            {"tv_iters", "100", "TV gradient iterations"},
                            {"out", "", "output directory for eval_<method>.csv"}}));

  try {
    app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    struct Entry {
      Command* cmd;
      const char* name;
      int (*fn)(const KeyValues&, std::ostream&);
    };
    for (const Entry& e : {Entry{&phantom, "phantom", cmd_phantom}, Entry{&mask, "mask", cmd_mask},
                           Entry{&trainc, "train", cmd_train}, Entry{&recon, "recon", cmd_recon},
                           Entry{&eval, "eval", cmd_eval}}) {
      if (!e.cmd->selected()) continue;
      const KeyValues kv = e.cmd->resolve();
      log_config(out, e.name, kv);
      return e.fn(kv, out);
    }
    return kUsage;
  } catch (const InvalidInput& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kFormat;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kFormat;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << "\n";
    return kNumeric;
  } catch (const UndefinedReference& e) {
    err << "error: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::invalid_argument& e) {
    err << "error: malformed number (" << e.what() << ")\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace pidd::cli
