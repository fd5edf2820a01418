#pragma once

#include <torch/torch.h>

#include <map>

#include "ganseg/classifier.hpp"
#include "ganseg/dataset.hpp"
#include "ganseg/gan.hpp"

namespace ganseg {

struct SegLossWeights {
  double delta = 4.0;   // seed loss
  double epsilon = 1.0; // variation loss
  double zeta = 0.25;   // size loss
  bool allow_unordered = false;

  static SegLossWeights from_json(const json& j);
  json to_json() const;
  /// Enforces delta > epsilon > zeta > 0 unless allow_unordered (used by the
  /// seed-only baseline, which zeroes epsilon and zeta).
  void validate() const;
};

struct SegConfig {
  std::int64_t epochs = 200;
  std::int64_t batch_size = 32;
  double lr = 2e-4;
  std::int64_t lr_half_every = 50;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  std::int64_t base_width = 64;
  bool deterministic = false;

  static SegConfig from_json(const json& j);
  json to_json() const;
};

/// -(sum_{s+} log m + sum_{s-} log(1-m)) / (|s+| + |s-|) per image, averaged
/// over the batch; log clamped at 1e-8. Unseeded images contribute zero.
torch::Tensor seed_loss(const torch::Tensor& m, const torch::Tensor& s_pos,
                        const torch::Tensor& s_neg);

/// sum (1-m) |x - xhat| / max(sum(1-m), eps) per image, batch-averaged.
torch::Tensor var_loss(const torch::Tensor& m, const torch::Tensor& x_flair,
                       const torch::Tensor& xhat_flair);

/// Mean of the probability mask over all pixels, batch-averaged.
torch::Tensor size_loss(const torch::Tensor& m);

struct SegmenterHandle {
  ConverterUNet net{nullptr};
  std::int64_t in_channels;
  std::int64_t base_width;

  /// (c, H, W) -> (H, W) probability mask, deterministic.
  torch::Tensor predict(const torch::Tensor& image) const;
  torch::Tensor predict_batch(const torch::Tensor& images) const;

  void save(const fs::path& dir) const;
  static SegmenterHandle load(const fs::path& dir);
};

/// Variants keyed by record id; absent entries mean "identical to the input"
/// (the convention for non-cancerous images).
using VariantMap = std::map<std::string, torch::Tensor>;

/// Trains a seed-guided segmentation U-Net (fresh initialization) on the
/// given training records with loss delta*L_seed + epsilon*L_var +
/// zeta*L_size. `flair_channel` selects the channel compared against the
/// variant.
SegmenterHandle train_segmentation(const SliceDataset& ds,
                                   const std::vector<std::size_t>& train_records,
                                   const SeedSet& seeds, const VariantMap& variants,
                                   const SegLossWeights& weights, const SegConfig& cfg,
                                   std::uint64_t rng_seed, const fs::path& out_dir,
                                   std::int64_t flair_channel = 0);

struct ComponentAudit {
  std::string record_id;
  int component;
  std::vector<double> masked_scores;  // one per dilation radius
  double mean_score;
  bool accepted;
};

struct RefinementOutcome {
  std::map<std::string, torch::Tensor> new_positive_seeds;  // only retained ids
  std::vector<std::string> retained_ids;                    // X_C,r
  std::vector<ComponentAudit> audit;

  json audit_json() const;
};

/// Classifier-feedback seed refinement: binarize the initial masks at 0.5,
/// split into 8-connected components, mask each dilated component out of the
/// image across all channels, and accept the component when the classifier's
/// mean score over the dilation radii falls below 0.5.
RefinementOutcome refine_seeds(const SegmenterHandle& seg0, const Classifier& clf,
                               const SliceDataset& ds, const std::vector<std::size_t>& xc_records,
                               const std::vector<int>& radii = {1, 2, 3, 4, 5});

struct CombinedMask {
  torch::Tensor m1;  // blended probability map
  torch::Tensor m2;  // binarized at 0.5
  double w;
};

/// w = 2(p - 0.5); m1 = w*m_os + (1-w)*m_us; m2 = [m1 > 0.5]. The caller
/// handles p <= 0.5 with an empty mask; passing such p here is an error.
CombinedMask combine(double p, const torch::Tensor& m_os, const torch::Tensor& m_us);

}  // namespace ganseg
