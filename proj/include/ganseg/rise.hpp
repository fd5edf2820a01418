#pragma once

#include <torch/torch.h>

#include <functional>
#include <map>

#include "ganseg/classifier.hpp"
#include "ganseg/dataset.hpp"

namespace ganseg {

/// Black-box scoring interface: (B, c, H, W) images -> (B) scores in [0,1].
using ImageScorer = std::function<torch::Tensor(const torch::Tensor&)>;

struct RiseConfig {
  std::int64_t n_masks = 4000;
  std::int64_t grid = 7;            // low-resolution mask grid (grid x grid)
  double keep_probability = 0.5;
  std::int64_t batch_size = 64;     // masked images per scorer call
  double pos_threshold = 0.8;
  double neg_threshold = 0.2;
  bool explain_at_input_res = true; // run at the classifier's upsampled size
  std::uint64_t rng_seed = 0;

  static RiseConfig from_json(const json& j);
  json to_json() const;
  void validate() const;
};

struct ExplanationMap {
  torch::Tensor e;         // (H, W) in [0,1]; all zeros when degenerate
  bool degenerate = false; // scorer was constant across masks
};

/// Monte-Carlo saliency: random low-resolution binary masks are bilinearly
/// upsampled with a random shift, applied to the image, and averaged weighted
/// by the scorer's output, then normalized to [0,1]. Deterministic under
/// cfg.rng_seed.
ExplanationMap rise_explain(const ImageScorer& scorer, const torch::Tensor& image,
                            const RiseConfig& cfg);

struct SeedPair {
  torch::Tensor positive;  // (128, 128) binary float
  torch::Tensor negative;
};

/// Thresholds a normalized explanation map into disjoint seed maps. Label-0
/// images get all-zero positive and all-one negative seeds regardless of the
/// map.
SeedPair make_seeds(const ExplanationMap& e, int label, double pos_threshold = 0.8,
                    double neg_threshold = 0.2);

struct OverlapMetric {
  std::optional<double> pos_overlap;  // |s+ ∧ gt| / |s+|, absent if s+ empty
  std::optional<double> neg_overlap;  // |s- ∧ ¬gt| / |s-|, absent if s- empty
};

OverlapMetric overlap_metric(const SeedPair& seeds, const torch::Tensor& gt_mask);

struct SeedFlags {
  bool degenerate = false;
  bool classifier_correct = false;
  bool in_conversion_set = false;  // classifier true positive (X_C membership)
  double p = 0.0;                  // classifier score
};

struct SeedSet {
  std::map<std::string, SeedPair> seeds;   // record id -> seeds
  std::map<std::string, SeedFlags> flags;
};

/// Generates seeds for every record in the dataset. RISE runs only where the
/// label is 1; each image owns an RNG stream derived from (seed, image id) so
/// results are order-independent. Persists to `out_dir` when non-empty.
SeedSet gen_seeds(const SliceDataset& ds, const Classifier& clf, const RiseConfig& cfg,
                  const fs::path& out_dir = {});

void save_seed_set(const fs::path& dir, const SeedSet& s);
SeedSet load_seed_set(const fs::path& dir);

}  // namespace ganseg
