#pragma once

#include <torch/torch.h>

#include <optional>
#include <string>
#include <vector>

#include "ganseg/io.hpp"

namespace ganseg {

struct ScoredSegmentation {
  std::string id;
  torch::Tensor m2;  // binary mask, may be undefined when only scores are carried
  double p = 0.0;    // classifier score
  double w = 0.0;    // combination weight
  double d = 1.0;    // difference score in [0, 1]
  std::optional<double> dice;  // evaluation only
};

/// Mean |x - xhat| over the support of the binary mask; exactly 1 when the
/// mask is empty. Inputs in [0, 1] with equal shapes.
double difference_score(const torch::Tensor& x_flair, const torch::Tensor& xhat_flair,
                        const torch::Tensor& m2);

struct FilterResult {
  std::vector<ScoredSegmentation> kept;     // d >= t, stable order
  std::vector<ScoredSegmentation> removed;  // d < t
};

FilterResult filter_by_threshold(const std::vector<ScoredSegmentation>& items, double t);

/// 2|A n B| / (|A| + |B|); 1 when both masks are empty.
double dice(const torch::Tensor& pred, const torch::Tensor& gt);

/// Standard Pearson r; absent when either list has zero variance or n < 2.
std::optional<double> pearson(const std::vector<double>& xs, const std::vector<double>& ys);

struct SweepRow {
  double threshold;
  std::optional<double> kept_dice;
  std::optional<double> removed_dice;  // absent at t = 0 (nothing removed)
  double percent_removed;
};

/// One row per threshold; writes a CSV (removed dice "N/A" when absent) and a
/// static line plot when paths are given.
std::vector<SweepRow> sweep_report(const std::vector<ScoredSegmentation>& items,
                                   const std::vector<double>& thresholds,
                                   const fs::path& out_csv = {}, const fs::path& out_svg = {});

struct MeanCi {
  double mean;
  double ci95;  // normal-approximation half width; 0 for a single run
};

MeanCi mean_ci(const std::vector<double>& values);

void save_scores_csv(const fs::path& path, const std::vector<ScoredSegmentation>& items);
std::vector<ScoredSegmentation> load_scores_csv(const fs::path& path);

}  // namespace ganseg
