#pragma once

#include <torch/torch.h>

#include "ganseg/classifier.hpp"
#include "ganseg/filter_eval.hpp"
#include "ganseg/gan.hpp"
#include "ganseg/phantom.hpp"
#include "ganseg/preprocess.hpp"
#include "ganseg/rise.hpp"
#include "ganseg/segmenter.hpp"

namespace ganseg {

/// 2D median filter with edge replication; window must be odd.
torch::Tensor median_filter2d(const torch::Tensor& img, std::int64_t window);

/// Residual baseline: threshold the median-filtered |x - xhat| map.
/// Monotone in threshold (higher threshold => subset mask).
torch::Tensor baseline_l1(const torch::Tensor& x_flair, const torch::Tensor& xhat_flair,
                          std::int64_t median_window, double threshold);

struct WholeImageResult {
  torch::Tensor mask;  // (H, W) binary
  torch::Tensor prob;  // (H, W) averaged probability before binarization
  std::vector<double> patch_scores;
};

/// Patch-based whole-image inference: 128x128 tiles at the given stride with
/// the final row/column aligned flush to the border; patches with classifier
/// score <= 0.5 contribute an all-zero probability map, others the blended
/// over/under-segmenting map; overlaps averaged, then binarized at 0.5.
WholeImageResult segment_whole_image(const torch::Tensor& image, const Classifier& clf,
                                     const SegmenterHandle& s_os, const SegmenterHandle& s_us,
                                     std::int64_t stride = 64, std::int64_t patch = 128);

struct PipelineConfig {
  fs::path output_root;
  std::uint64_t seed = 1;
  bool deterministic = false;

  // Data source: generated phantoms or a pre-built dataset directory.
  std::string data_kind = "phantom";  // "phantom" | "dataset"
  PhantomSpec phantom;
  fs::path dataset_path;

  ClassifierConfig classifier;
  RiseConfig rise;
  ConverterConfig converter;
  SegConfig segmenter;
  SegLossWeights seg_weights;
  std::vector<int> refine_radii = {1, 2, 3, 4, 5};
  double filter_threshold = 0.2;
  double baseline_l1_threshold = 0.15;
  std::int64_t baseline_l1_window = 5;
  std::int64_t patch_stride = 64;
  std::int64_t flair_channel = 0;

  static PipelineConfig from_json(const json& j);
  json to_json() const;
  void validate() const;
};

PipelineConfig load_pipeline_config(const fs::path& path);

/// Runs the full pipeline: data -> classifier -> seeds -> generator ->
/// converter -> variants -> initial segmentation -> refinement -> OS/US
/// models -> baselines -> scoring -> report. Every stage persists its
/// artifacts and drops a completion marker; with `resume` completed stages
/// are skipped. Returns the run directory (config.output_root).
fs::path run_pipeline(const PipelineConfig& cfg, bool resume);

/// Aggregates completed runs: per-metric mean with a 95% confidence interval
/// across runs, plus a run-averaged difference-score sweep.
void multi_run_report(const std::vector<fs::path>& run_dirs, const fs::path& out_dir);

}  // namespace ganseg
