#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pidd/gan.hpp"
#include "pidd/losses.hpp"
#include "pidd/phantom.hpp"

namespace pidd {

enum class TrainMode { PIDD, PISD, nPIDD };
std::string to_string(TrainMode m);
TrainMode parse_train_mode(const std::string& s);

struct TrainConfig {
  std::filesystem::path data;  // dataset directory (manifest layout)
  std::filesystem::path out;   // output directory
  TrainMode mode = TrainMode::PIDD;
  std::size_t epochs = 30;
  std::size_t batch = 8;
  std::size_t max_steps = 0;  // 0 = no limit
  double lr_init = 1e-3;
  double lr_min = 1e-5;
  double lr_decay = 0.5;
  std::size_t lr_step = 5;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t patience = 8;
  bool early_stop = true;
  std::uint64_t seed = 1;
  MaskKind mask_kind = MaskKind::gaussian2d;
  double mask_fraction = 0.3;
  std::uint64_t mask_seed = 1;
  std::filesystem::path mask_file;  // overrides the generated mask when set
  double noise_level = 0.0;
  LossWeights weights{};
  GeneratorConfig generator{};
  std::size_t disc_width = 16;
  bool keep_d2 = false;  // allocate D2 even in PISD mode (diagnostics)

  void validate() const;
  KeyValues to_kv() const;
  static TrainConfig from_kv(const KeyValues& kv);
  static const std::vector<std::string>& keys();
  /// Effective loss weights: PISD forces mu = 1, nu = 0.
  LossWeights effective_weights() const;
};

/// lr_init * lr_decay^floor(epoch / lr_step), floored at lr_min (epoch 0-based).
double lr_at(const TrainConfig& cfg, std::size_t epoch);

/// Adam with bias correction. Non-trainable parameters are skipped.
class Adam {
 public:
  Adam(double beta1, double beta2, double eps) : b1_(beta1), b2_(beta2), eps_(eps) {}
  template <typename T>
  void step(const std::vector<Param<T>*>& params, double lr);
  std::size_t steps() const noexcept { return t_; }

 private:
  double b1_, b2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

/// Tracks the best (lowest) validation value; stop once `patience` epochs
/// have passed without improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}
  /// Returns true when `value` improves on the best so far.
  bool update(std::size_t epoch, double value);
  bool should_stop(std::size_t epoch) const { return has_best_ && epoch - best_epoch_ >= patience_; }
  std::size_t best_epoch() const noexcept { return best_epoch_; }
  double best_value() const noexcept { return best_; }

 private:
  std::size_t patience_;
  bool has_best_ = false;
  std::size_t best_epoch_ = 0;
  double best_ = 0.0;
};

/// Builds training samples: per-coil truth, acquired data M.F(C x) plus
/// optional noise (stream 1000000 + index of `seed`), the unacquired
/// complement, and the zero-filled input. nPIDD callers pass trivial maps.
Sample make_sample(const ComplexImage& image, const SensitivityMaps& maps, const SamplingMask& mask, double noise_level,
                   std::uint64_t seed, std::size_t index);

struct StepLog {
  std::size_t step = 0, epoch = 0;
  double lr = 0.0;
  LossParts parts;
  double loss_d1 = 0.0, loss_d2 = 0.0;
  double total_g = 0.0;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double nmse = 0.0, psnr = 0.0, ssim = 0.0;
  double mean_g_loss = 0.0;
};

struct TrainResult {
  std::vector<EpochMetrics> epochs;
  std::size_t steps = 0;
  std::size_t best_epoch = 0;
  double best_nmse = 0.0;
  bool stopped_early = false;
};

/// Alternating optimization: per batch, one discriminator update (D1 and,
/// unless PISD, D2) on the current generator output, then one generator
/// update on loss_total with the refreshed discriminators.
class Trainer {
 public:
  Trainer(const TrainConfig& cfg, std::vector<Sample> train, std::vector<Sample> val);
  ~Trainer();

  /// One D step then one G step on `batch` (indices into the training set).
  StepLog step(const std::vector<std::size_t>& batch, std::size_t epoch);
  /// Mean magnitude NMSE/PSNR/SSIM of the generator (eval mode) over `set`.
  EpochMetrics validate(const std::vector<Sample>& set);
  /// Runs epochs with schedule, early stopping, checkpointing and logging.
  TrainResult run();

  Generator<float>& generator() { return *g_; }
  Discriminator<float>& d1() { return *d1_; }
  Discriminator<float>* d2() { return d2_.get(); }
  const std::vector<Sample>& train_set() const { return train_; }
  const std::vector<Sample>& val_set() const { return val_; }

  static const char* csv_header();

 private:
  TrainConfig cfg_;
  LossWeights w_;
  std::vector<Sample> train_, val_;
  std::unique_ptr<Generator<float>> g_;
  std::unique_ptr<Discriminator<float>> d1_, d2_;
  PerceptualNet<float> perc_;
  Adam opt_g_, opt_d1_, opt_d2_;
  std::size_t global_step_ = 0;
};

/// Generator reconstruction of zero-filled images (eval mode), in batches.
std::vector<ComplexImage> reconstruct(Generator<float>& g, const std::vector<const ComplexImage*>& inputs,
                                      std::size_t batch = 8);

/// Loads the dataset and mask named by cfg and builds (train, val, test) samples.
struct PreparedData {
  SamplingMask mask;
  std::vector<Sample> train, val, test;
  std::vector<std::string> test_ids;
};
PreparedData prepare_data(const TrainConfig& cfg);

/// Full training run writing into cfg.out: resolved config (config.txt),
/// train_log.csv, timing.csv and checkpoint/ (best validation NMSE).
TrainResult train(const TrainConfig& cfg);
TrainResult train(const TrainConfig& cfg, const PreparedData& data);

struct AblationResult {
  std::vector<std::string> variants;
  std::vector<TrainResult> results;
};

/// GRLR, GRnLR, nGRLR, nGRnLR with identical seed and data, early stopping
/// off. Each variant logs to out/<variant>/; the merged per-epoch curves go
/// to out/ablation.csv.
AblationResult run_ablation(const TrainConfig& cfg, const std::vector<std::string>& variants = {"GRLR", "GRnLR",
                                                                                                 "nGRLR", "nGRnLR"});

}  // namespace pidd
