#include "pidd/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "pidd/edge.hpp"
#include "pidd/metrics.hpp"

namespace pidd {

std::string to_string(TrainMode m) {
  switch (m) {
    case TrainMode::PIDD: return "PIDD";
    case TrainMode::PISD: return "PISD";
    case TrainMode::nPIDD: return "nPIDD";
  }
  return "PIDD";
}

TrainMode parse_train_mode(const std::string& s) {
  if (s == "PIDD") return TrainMode::PIDD;
  if (s == "PISD") return TrainMode::PISD;
  if (s == "nPIDD") return TrainMode::nPIDD;
  throw InvalidInput("unknown mode '" + s + "' (expected PIDD, PISD or nPIDD)");
}

// ---------------------------------------------------------------- config

const std::vector<std::string>& TrainConfig::keys() {
  static const std::vector<std::string> k{
      "data",          "out",          "mode",          "epochs",       "batch",        "max_steps",
      "lr_init",       "lr_min",       "lr_decay",      "lr_step",      "adam_beta1",   "adam_beta2",
      "adam_eps",      "patience",     "early_stop",    "seed",         "mask_kind",    "mask_fraction",
      "mask_seed",     "mask_file",    "noise_level",   "alpha",        "beta",         "gamma",
      "mu",            "nu",           "base_width",    "use_gr",       "use_lr",       "attention",
      "fca_parts",     "fca_freqs",    "fca_reduction", "disc_width",   "keep_d2"};
  return k;
}

void TrainConfig::validate() const {
  if (!(lr_min > 0 && lr_min <= lr_init)) throw InvalidInput("need 0 < lr_min <= lr_init");
  if (!(lr_decay > 0 && lr_decay <= 1)) throw InvalidInput("lr_decay must be in (0, 1]");
  if (lr_step < 1) throw InvalidInput("lr_step must be at least 1");
  if (patience < 1) throw InvalidInput("patience must be at least 1");
  if (batch < 2) throw InvalidInput("batch must be at least 2 (batch normalization)");
  if (epochs < 1) throw InvalidInput("epochs must be at least 1");
  if (!(noise_level >= 0 && noise_level <= 0.95)) throw InvalidInput("noise_level must be in [0, 0.95]");
  const auto& w = weights;
  if (w.alpha < 0 || w.beta < 0 || w.gamma < 0 || w.mu < 0 || w.nu < 0) {
    throw InvalidInput("loss weights must be non-negative");
  }
  if (disc_width == 0) throw InvalidInput("disc_width must be positive");
}

KeyValues TrainConfig::to_kv() const {
  KeyValues kv;
  kv.set("data", data.string());
  kv.set("out", out.string());
  kv.set("mode", to_string(mode));
  kv.set("epochs", std::to_string(epochs));
  kv.set("batch", std::to_string(batch));
  kv.set("max_steps", std::to_string(max_steps));
  kv.set("lr_init", format_double(lr_init));
  kv.set("lr_min", format_double(lr_min));
  kv.set("lr_decay", format_double(lr_decay));
  kv.set("lr_step", std::to_string(lr_step));
  kv.set("adam_beta1", format_double(adam_beta1));
  kv.set("adam_beta2", format_double(adam_beta2));
  kv.set("adam_eps", format_double(adam_eps));
  kv.set("patience", std::to_string(patience));
  kv.set("early_stop", early_stop ? "true" : "false");
  kv.set("seed", std::to_string(seed));
  kv.set("mask_kind", to_string(mask_kind));
  kv.set("mask_fraction", format_double(mask_fraction));
  kv.set("mask_seed", std::to_string(mask_seed));
  kv.set("mask_file", mask_file.string());
  kv.set("noise_level", format_double(noise_level));
  kv.set("alpha", format_double(weights.alpha));
  kv.set("beta", format_double(weights.beta));
  kv.set("gamma", format_double(weights.gamma));
  kv.set("mu", format_double(weights.mu));
  kv.set("nu", format_double(weights.nu));
  const KeyValues gkv = generator.to_kv();
  for (const auto& [k, v] : gkv.entries())
    if (k != "seed") kv.set(k, v);
  kv.set("disc_width", std::to_string(disc_width));
  kv.set("keep_d2", keep_d2 ? "true" : "false");
  return kv;
}

TrainConfig TrainConfig::from_kv(const KeyValues& kv) {
  const auto unknown = kv.unknown_keys(keys());
  if (!unknown.empty()) throw InvalidInput("unknown training config key '" + unknown.front() + "'");
  TrainConfig c;
  if (kv.has("data")) c.data = kv.get("data");
  if (kv.has("out")) c.out = kv.get("out");
  if (kv.has("mode")) c.mode = parse_train_mode(kv.get("mode"));
  if (kv.has("epochs")) c.epochs = kv.get_uint("epochs");
  if (kv.has("batch")) c.batch = kv.get_uint("batch");
  if (kv.has("max_steps")) c.max_steps = kv.get_uint("max_steps");
  if (kv.has("lr_init")) c.lr_init = kv.get_double("lr_init");
  if (kv.has("lr_min")) c.lr_min = kv.get_double("lr_min");
  if (kv.has("lr_decay")) c.lr_decay = kv.get_double("lr_decay");
  if (kv.has("lr_step")) c.lr_step = kv.get_uint("lr_step");
  if (kv.has("adam_beta1")) c.adam_beta1 = kv.get_double("adam_beta1");
  if (kv.has("adam_beta2")) c.adam_beta2 = kv.get_double("adam_beta2");
  if (kv.has("adam_eps")) c.adam_eps = kv.get_double("adam_eps");
  if (kv.has("patience")) c.patience = kv.get_uint("patience");
  if (kv.has("early_stop")) c.early_stop = kv.get_bool("early_stop");
  if (kv.has("seed")) c.seed = kv.get_uint("seed");
  if (kv.has("mask_kind")) c.mask_kind = parse_mask_kind(kv.get("mask_kind"));
  if (kv.has("mask_fraction")) c.mask_fraction = kv.get_double("mask_fraction");
  if (kv.has("mask_seed")) c.mask_seed = kv.get_uint("mask_seed");
  if (kv.has("mask_file")) c.mask_file = kv.get("mask_file");
  if (kv.has("noise_level")) c.noise_level = kv.get_double("noise_level");
  if (kv.has("alpha")) c.weights.alpha = kv.get_double("alpha");
  if (kv.has("beta")) c.weights.beta = kv.get_double("beta");
  if (kv.has("gamma")) c.weights.gamma = kv.get_double("gamma");
  if (kv.has("mu")) c.weights.mu = kv.get_double("mu");
  if (kv.has("nu")) c.weights.nu = kv.get_double("nu");
  KeyValues g;
  for (const char* k : {"base_width", "use_gr", "use_lr", "attention", "fca_parts", "fca_freqs", "fca_reduction"})
    if (kv.has(k)) g.set(k, kv.get(k));
  c.generator = GeneratorConfig::from_kv(g);
  if (kv.has("disc_width")) c.disc_width = kv.get_uint("disc_width");
  if (kv.has("keep_d2")) c.keep_d2 = kv.get_bool("keep_d2");
  c.generator.seed = c.seed;
  c.validate();
  return c;
}

LossWeights TrainConfig::effective_weights() const {
  LossWeights w = weights;
  if (mode == TrainMode::PISD) {
    w.mu = 1.0;
    w.nu = 0.0;
  }
  return w;
}

double lr_at(const TrainConfig& cfg, std::size_t epoch) {
  const double lr = cfg.lr_init * std::pow(cfg.lr_decay, static_cast<double>(epoch / cfg.lr_step));
  return std::max(cfg.lr_min, lr);
}

// ------------------------------------------------------------------ Adam

template <typename T>
void Adam::step(const std::vector<Param<T>*>& params, double lr) {
  if (m_.empty()) {
    for (auto* p : params) {
      m_.emplace_back(p->trainable ? p->value.size() : 0, 0.0);
      v_.emplace_back(p->trainable ? p->value.size() : 0, 0.0);
    }
  }
  if (m_.size() != params.size()) throw InvalidInput("adam: parameter list changed between steps");
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param<T>& p = *params[i];
    if (!p.trainable) continue;
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < m.size(); ++k) {
      const double g = p.grad[k];
      m[k] = b1_ * m[k] + (1.0 - b1_) * g;
      v[k] = b2_ * v[k] + (1.0 - b2_) * g * g;
      const double mh = m[k] / c1, vh = v[k] / c2;
      p.value[k] = static_cast<T>(p.value[k] - lr * mh / (std::sqrt(vh) + eps_));
    }
  }
}

template void Adam::step(const std::vector<Param<float>*>&, double);
template void Adam::step(const std::vector<Param<double>*>&, double);

bool EarlyStopping::update(std::size_t epoch, double value) {
  if (!has_best_ || value < best_) {
    has_best_ = true;
    best_ = value;
    best_epoch_ = epoch;
    return true;
  }
  return false;
}

// ------------------------------------------------------------------ data

Sample make_sample(const ComplexImage& image, const SensitivityMaps& maps, const SamplingMask& mask, double noise_level,
                   std::uint64_t seed, std::size_t index) {
  Sample s;
  s.maps = maps;
  s.mask = mask;
  s.xt_coils = coil_images(image, maps);
  s.x_t = combine_coils(s.xt_coils, maps);
  const MultiCoilKSpace full = coil_kspace(s.xt_coils);
  s.y_mask = MultiCoilKSpace(maps.coils(), maps.height(), maps.width());
  s.y_unmask = s.y_mask;
  const std::size_t hw = maps.plane_size();
  for (std::size_t q = 0; q < maps.coils(); ++q) {
    auto f = full.coil(q);
    auto ym = s.y_mask.coil(q);
    auto yu = s.y_unmask.coil(q);
    for (std::size_t k = 0; k < hw; ++k) (mask[k] ? ym[k] : yu[k]) = f[k];
  }
  if (noise_level > 0.0) {
    RngStream rng(seed, 1000000 + index);
    s.y_mask = inject_noise(s.y_mask, mask, noise_level, rng);
  }
  s.x_u = zero_filled(s.y_mask, maps, mask);
  return s;
}

PreparedData prepare_data(const TrainConfig& cfg) {
  auto loaded = load_external(cfg.data, Layout::manifest);
  if (loaded.empty()) throw FormatError("dataset " + cfg.data.string() + " is empty");
  const std::size_t h = loaded.front().image.height(), w = loaded.front().image.width();
  PreparedData d;
  if (!cfg.mask_file.empty()) {
    d.mask = load_mask(cfg.mask_file);
  } else {
    RngStream mrng(cfg.mask_seed, 0);
    d.mask = make_mask(cfg.mask_kind, cfg.mask_fraction, h, w, mrng);
  }
  if (d.mask.height() != h || d.mask.width() != w) throw InvalidInput("mask shape does not match dataset images");
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    auto& ls = loaded[i];
    if (ls.image.height() != h || ls.image.width() != w) throw FormatError("dataset mixes image sizes");
    if (cfg.mode == TrainMode::nPIDD && !ls.synthesized_maps) {
      // single-channel imaging: the combined truth with unit sensitivity
      const ComplexImage x = combine_coils(coil_images(ls.image, ls.maps), ls.maps);
      ls.image = x;
      ls.maps = trivial_maps(h, w);
    }
    Sample s = make_sample(ls.image, ls.maps, d.mask, cfg.noise_level, cfg.seed, i);
    if (ls.split == "train") {
      d.train.push_back(std::move(s));
    } else if (ls.split == "val") {
      d.val.push_back(std::move(s));
    } else {
      d.test.push_back(std::move(s));
      d.test_ids.push_back(ls.id);
    }
  }
  if (d.train.size() < 2) throw InvalidInput("training split needs at least 2 samples");
  if (d.val.empty()) throw InvalidInput("validation split is empty");
  return d;
}

// --------------------------------------------------------------- trainer

namespace {

template <typename T>
Tensor<T> edge_input(const Tensor<T>& two_channel) {
  return sobel(magnitude(two_channel));
}

template <typename T>
Tensor<T> edge_input_backward(const Tensor<T>& two_channel, const Tensor<T>& g) {
  return magnitude_backward(two_channel, sobel_backward(magnitude(two_channel), g));
}

std::vector<const ComplexImage*> pick(const std::vector<Sample>& set, const std::vector<std::size_t>& idx,
                                      ComplexImage Sample::*field) {
  std::vector<const ComplexImage*> out;
  for (auto i : idx) out.push_back(&(set[i].*field));
  return out;
}

/// Runs d on `x`, returns mean BCE against `label` and backpropagates
/// scale * dBCE/dp (averaged over the batch). Returns the gradient w.r.t. x
/// through `dx` when given.
double disc_pass(Discriminator<float>& d, const Tensor<float>& x, bool label, double scale, Tensor<float>* dx) {
  const Tensor<float> p = d.forward(x, Mode::train);
  Tensor<float> g(p.shape());
  double loss = 0.0;
  const double inv_n = 1.0 / static_cast<double>(p.n());
  for (std::size_t n = 0; n < p.n(); ++n) {
    double dp = 0.0;
    loss += bce(p[n], label, &dp) * inv_n;
    g[n] = static_cast<float>(scale * dp * inv_n);
  }
  Tensor<float> back = d.backward(g);
  if (dx) *dx = std::move(back);
  return loss;
}

bool finite(const StepLog& s) {
  return std::isfinite(s.parts.imse) && std::isfinite(s.parts.fmse_mask) && std::isfinite(s.parts.fmse_unmask) &&
         std::isfinite(s.parts.perc) && std::isfinite(s.parts.adv_g) && std::isfinite(s.loss_d1) &&
         std::isfinite(s.loss_d2);
}

}  // namespace

Trainer::Trainer(const TrainConfig& cfg, std::vector<Sample> train, std::vector<Sample> val)
    : cfg_(cfg),
      w_(cfg.effective_weights()),
      train_(std::move(train)),
      val_(std::move(val)),
      opt_g_(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps),
      opt_d1_(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps),
      opt_d2_(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps) {
  cfg_.validate();
  if (train_.empty()) throw InvalidInput("empty training set");
  GeneratorConfig gc = cfg.generator;
  gc.seed = cfg.seed;
  cfg_.generator = gc;
  g_ = std::make_unique<Generator<float>>(gc);
  const std::size_t h = train_.front().x_u.height(), w = train_.front().x_u.width();
  RngStream r1(cfg.seed, 2), r2(cfg.seed, 3);
  d1_ = std::make_unique<Discriminator<float>>("d1", 2, h, w, cfg.disc_width, r1);
  if (cfg.mode != TrainMode::PISD || cfg.keep_d2) {
    d2_ = std::make_unique<Discriminator<float>>("d2", 1, h, w, cfg.disc_width, r2);
  }
}

Trainer::~Trainer() = default;

const char* Trainer::csv_header() {
  return "step,epoch,lr,L_iMSE,L_fMSE_mask,L_fMSE_1mask,L_perc,L_adv_G,L_D1,L_D2,val_NMSE,val_PSNR,val_SSIM";
}

namespace {

[[noreturn]] void throw_nonfinite(const StepLog& log) {
  std::ostringstream os;
  os << "non-finite loss at step " << log.step << ": L_iMSE=" << log.parts.imse << " L_fMSE_mask="
     << log.parts.fmse_mask << " L_fMSE_1mask=" << log.parts.fmse_unmask << " L_perc=" << log.parts.perc
     << " L_adv_G=" << log.parts.adv_g << " L_D1=" << log.loss_d1 << " L_D2=" << log.loss_d2;
  throw NumericError(os.str());
}

}  // namespace

StepLog Trainer::step(const std::vector<std::size_t>& idx, std::size_t epoch) {
  if (idx.size() < 2) throw InvalidInput("a training batch needs at least 2 samples");
  StepLog log;
  log.step = global_step_;
  log.epoch = epoch;
  log.lr = lr_at(cfg_, epoch);
  const Tensor<float> xu = pack_images<float>(pick(train_, idx, &Sample::x_u));
  const Tensor<float> xt = pack_images<float>(pick(train_, idx, &Sample::x_t));
  const auto g_params = g_->params();
  zero_grads(g_params);
  const Tensor<float> xhat = g_->forward(xu, Mode::train);
  // a non-finite output poisons every term; stop before the discriminators see it
  if (!std::all_of(xhat.data().begin(), xhat.data().end(), [](float v) { return std::isfinite(v); })) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    log.parts = {nan, nan, nan, nan, nan};
    log.loss_d1 = log.loss_d2 = nan;
    throw_nonfinite(log);
  }

  // discriminator update on the current generator output
  const auto d1p = d1_->params();
  zero_grads(d1p);
  log.loss_d1 = w_.mu * (disc_pass(*d1_, xt, true, w_.mu, nullptr) + disc_pass(*d1_, xhat, false, w_.mu, nullptr));
  opt_d1_.step(d1p, log.lr);
  Tensor<float> et, ehat;
  if (d2_) {
    et = edge_input(xt);
    ehat = edge_input(xhat);
    const auto d2p = d2_->params();
    zero_grads(d2p);
    log.loss_d2 = w_.nu * (disc_pass(*d2_, et, true, w_.nu, nullptr) + disc_pass(*d2_, ehat, false, w_.nu, nullptr));
    opt_d2_.step(d2p, log.lr);
  }

  // generator update
  std::vector<const Sample*> batch;
  for (auto i : idx) batch.push_back(&train_[i]);
  Tensor<float> grad(xhat.shape());
  log.parts = content_losses(xhat, batch, w_, &grad);
  Tensor<float> gp;
  log.parts.perc = loss_perceptual(perc_, xhat, xt, &gp);
  gp *= static_cast<float>(w_.gamma);
  grad += gp;
  Tensor<float> ga;
  log.parts.adv_g = w_.mu * disc_pass(*d1_, xhat, true, w_.mu, &ga);
  grad += ga;
  if (d2_) {
    Tensor<float> ge;
    log.parts.adv_g += w_.nu * disc_pass(*d2_, ehat, true, w_.nu, &ge);
    grad += edge_input_backward(xhat, ge);
  }
  log.total_g = loss_total(log.parts, w_);
  if (!finite(log)) throw_nonfinite(log);
  g_->backward(grad);
  opt_g_.step(g_params, log.lr);
  ++global_step_;
  return log;
}

EpochMetrics Trainer::validate(const std::vector<Sample>& set) {
  std::vector<const ComplexImage*> in;
  for (const auto& s : set) in.push_back(&s.x_u);
  const auto rec = reconstruct(*g_, in, cfg_.batch);
  EpochMetrics m;
  for (std::size_t i = 0; i < set.size(); ++i) {
    RealImage p = abs_image(restrict_to_support(rec[i], set[i].maps)), t = abs_image(set[i].x_t);
    normalize_to_reference(p, t);
    m.nmse += nmse(p, t);
    m.psnr += psnr(p, t);
    m.ssim += ssim(p, t);
  }
  const double n = static_cast<double>(set.size());
  m.nmse /= n;
  m.psnr /= n;
  m.ssim /= n;
  return m;
}

TrainResult Trainer::run() {
  std::error_code ec;
  std::filesystem::create_directories(cfg_.out, ec);
  if (ec) throw IoError("cannot create output directory " + cfg_.out.string() + ": " + ec.message());
  cfg_.to_kv().write(cfg_.out / "config.txt");
  std::ofstream csv(cfg_.out / "train_log.csv", std::ios::trunc | std::ios::binary);
  std::ofstream timing(cfg_.out / "timing.csv", std::ios::trunc | std::ios::binary);
  if (!csv || !timing) throw IoError("cannot write logs in " + cfg_.out.string());
  csv << csv_header() << '\n';
  timing << "epoch,seconds\n";

  TrainResult res;
  EarlyStopping stopper(cfg_.patience);
  const auto t0 = std::chrono::steady_clock::now();
  bool out_of_steps = false;
  for (std::size_t epoch = 0; epoch < cfg_.epochs && !out_of_steps; ++epoch) {
    std::vector<std::size_t> order(train_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    RngStream shuf(cfg_.seed, 100 + epoch);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuf.below(i)]);

    std::vector<StepLog> logs;
    for (std::size_t start = 0; start < order.size(); start += cfg_.batch) {
      const std::size_t end = std::min(order.size(), start + cfg_.batch);
      if (end - start < 2) break;
      if (cfg_.max_steps && global_step_ >= cfg_.max_steps) {
        out_of_steps = true;
        break;
      }
      logs.push_back(step({order.begin() + static_cast<long>(start), order.begin() + static_cast<long>(end)}, epoch));
    }
    if (logs.empty()) break;
    EpochMetrics em = validate(val_);
    em.epoch = epoch;
    for (const auto& l : logs) em.mean_g_loss += l.total_g / static_cast<double>(logs.size());
    res.epochs.push_back(em);
    for (std::size_t i = 0; i < logs.size(); ++i) {
      const auto& l = logs[i];
      csv << l.step << ',' << l.epoch << ',' << format_double(l.lr) << ',' << format_double(l.parts.imse) << ','
          << format_double(l.parts.fmse_mask) << ',' << format_double(l.parts.fmse_unmask) << ','
          << format_double(l.parts.perc) << ',' << format_double(l.parts.adv_g) << ',' << format_double(l.loss_d1)
          << ',' << format_double(l.loss_d2);
      if (i + 1 == logs.size()) {
        csv << ',' << format_double(em.nmse) << ',' << format_double(em.psnr) << ',' << format_double(em.ssim);
      } else {
        csv << ",,,";
      }
      csv << '\n';
    }
    csv.flush();
    timing << epoch << ','
           << format_double(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()) << '\n';
    if (stopper.update(epoch, em.nmse)) save_checkpoint(cfg_.out / "checkpoint", *g_);
    if (cfg_.early_stop && stopper.should_stop(epoch)) {
      res.stopped_early = true;
      break;
    }
  }
  res.steps = global_step_;
  res.best_epoch = stopper.best_epoch();
  res.best_nmse = stopper.best_value();
  if (!csv) throw IoError("write failed: train_log.csv");
  return res;
}

std::vector<ComplexImage> reconstruct(Generator<float>& g, const std::vector<const ComplexImage*>& inputs,
                                      std::size_t batch) {
  std::vector<ComplexImage> out;
  for (std::size_t start = 0; start < inputs.size(); start += batch) {
    const std::size_t end = std::min(inputs.size(), start + batch);
    const std::vector<const ComplexImage*> chunk(inputs.begin() + static_cast<long>(start),
                                                 inputs.begin() + static_cast<long>(end));
    const Tensor<float> y = g.forward(pack_images<float>(chunk), Mode::eval);
    for (std::size_t n = 0; n < chunk.size(); ++n) out.push_back(unpack_image(y, n));
  }
  return out;
}

TrainResult train(const TrainConfig& cfg, const PreparedData& data) {
  Trainer t(cfg, data.train, data.val);
  return t.run();
}

TrainResult train(const TrainConfig& cfg) {
  return train(cfg, prepare_data(cfg));
}

AblationResult run_ablation(const TrainConfig& cfg, const std::vector<std::string>& variants) {
  const PreparedData data = prepare_data(cfg);
  AblationResult out;
  std::ostringstream merged;
  merged << "variant,epoch,val_NMSE,val_PSNR,val_SSIM,G_loss\n";
  for (const auto& v : variants) {
    TrainConfig c = cfg;
    if (v == "GRLR") {
      c.generator.use_gr = true, c.generator.use_lr = true;
    } else if (v == "GRnLR") {
      c.generator.use_gr = true, c.generator.use_lr = false;
    } else if (v == "nGRLR") {
      c.generator.use_gr = false, c.generator.use_lr = true;
    } else if (v == "nGRnLR") {
      c.generator.use_gr = false, c.generator.use_lr = false;
    } else {
      throw InvalidInput("unknown ablation variant '" + v + "'");
    }
    c.early_stop = false;
    c.out = cfg.out / v;
    TrainResult r = train(c, data);
    for (const auto& e : r.epochs) {
      merged << v << ',' << e.epoch << ',' << format_double(e.nmse) << ',' << format_double(e.psnr) << ','
             << format_double(e.ssim) << ',' << format_double(e.mean_g_loss) << '\n';
    }
    out.variants.push_back(v);
    out.results.push_back(std::move(r));
  }
  std::ofstream f(cfg.out / "ablation.csv", std::ios::trunc | std::ios::binary);
  if (!f) throw IoError("cannot write " + (cfg.out / "ablation.csv").string());
  f << merged.str();
  return out;
}

}  // namespace pidd
