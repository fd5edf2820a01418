#pragma once

#include <torch/torch.h>

#include "ganseg/dataset.hpp"
#include "ganseg/models.hpp"

namespace ganseg {

struct ClassifierConfig {
  std::string arch = "vgg16_bn";  // or "small_cnn"
  std::int64_t base_width = 16;   // small_cnn only
  std::int64_t epochs = 100;
  std::int64_t batch_size = 32;
  double weight_decay = 0.1;
  double lr = 5e-6;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  // Reduce-on-plateau: lr /= plateau_factor when validation loss improves by
  // less than plateau_min_delta over plateau_patience epochs.
  double plateau_factor = 10.0;
  double plateau_min_delta = 1e-4;
  std::int64_t plateau_patience = 5;
  std::int64_t upsample_factor = 2;  // bilinear, in {1, 2}
  bool balanced_sampling = true;
  bool deterministic = false;

  static ClassifierConfig from_json(const json& j);
  json to_json() const;
  void validate() const;
};

/// Trained classifier handle: immutable after training, safe for concurrent
/// read-only inference.
struct Classifier {
  ClassifierConfig cfg;
  std::int64_t in_channels = 1;
  std::shared_ptr<torch::nn::Module> net;

  /// (N, c, H, W) in [0,1] -> (N) probabilities. Applies the configured
  /// bilinear upsampling internally; pure function of (weights, images).
  /// `apply_upsample=false` feeds the images to the network as-is, for
  /// callers that already operate at the upsampled resolution.
  torch::Tensor predict_batch(const torch::Tensor& images, bool apply_upsample = true) const;
  /// Single image (c, H, W) -> probability.
  double predict(const torch::Tensor& image) const;

  void save(const fs::path& dir) const;
  static Classifier load(const fs::path& dir);
};

struct EpochLog {
  std::int64_t epoch;
  double train_loss;
  double val_loss;
  double val_auc;
  double lr;
};

/// Trains the binary tumor-presence classifier on the training cohort,
/// monitoring the validation cohort. Persists checkpoint + per-epoch log
/// under `out_dir`. Errors out before training on a single-class dataset.
Classifier train_classifier(const SliceDataset& ds, const ClassifierConfig& cfg,
                            std::uint64_t rng_seed, const fs::path& out_dir);

struct ClassifierMetrics {
  std::optional<double> auc;  // absent for a one-class cohort
  double sensitivity;
  double specificity;
};

/// AUC by the rank statistic plus sensitivity/specificity at threshold 0.5.
ClassifierMetrics eval_classifier(const Classifier& clf, const SliceDataset& ds, Cohort cohort);

/// Rank-statistic AUC over (score, label) pairs; nullopt when one class is
/// missing.
std::optional<double> auc_rank(const std::vector<double>& scores, const std::vector<int>& labels);

}  // namespace ganseg
