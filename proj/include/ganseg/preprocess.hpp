#pragma once

#include <torch/torch.h>

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ganseg/common.hpp"
#include "ganseg/dataset.hpp"

namespace ganseg {

/// A 3D acquisition: per-channel voxel stacks plus an optional ground-truth
/// segmentation volume used only to derive weak labels and evaluation masks.
struct Volume {
  torch::Tensor voxels;                   // (channels, slices, H, W) float
  std::vector<std::string> channels;      // ordered modality names
  std::optional<torch::Tensor> gt;        // (slices, H, W), raw label values
  std::string id;
};

struct PreprocessConfig {
  bool bounding_box_crop = true;   // false selects the noisy-background path
  int downsample_factor = 1;       // used instead of the crop when crop is off
  double clip_lo_pct = 1.0;
  double clip_hi_pct = 99.0;
  std::int64_t target_size = 128;  // in-plane crop/pad target (training mode)
  bool training_mode = true;       // false keeps the whole in-plane extent
  std::uint64_t rng_seed = 0;      // drives the random crop/pad placement
};

/// Loads co-registered channel volumes (one file per channel) in NIfTI-1 or
/// flat-binary+sidecar form. A shape mismatch across channels is a hard error
/// naming the offending channel.
Volume load_volume(const std::vector<fs::path>& channel_paths,
                   const std::vector<std::string>& channel_names, const std::string& format,
                   const std::string& volume_id, const std::optional<fs::path>& gt_path = {});

/// Bounding-box crop (or factor downsample), per-channel percentile clip of
/// nonzero intensities, min-max scale to [0,1], then random in-plane crop/pad
/// to the target size in training mode. The ground-truth volume follows the
/// same spatial transforms.
Volume preprocess_volume(const Volume& v, const PreprocessConfig& cfg);

/// 1 iff the binarized mask survives erosion by a disk of the given radius.
int derive_label(const torch::Tensor& gt_mask, int erosion_radius);

/// Splits a preprocessed volume into axial SliceRecords: drops the first and
/// last `drop_edges` slices and any slice with more than 50% zero voxels
/// (counted over `zero_filter_channel`). Labels come from derive_label.
std::vector<SliceRecord> slice_volume(const Volume& v, Cohort cohort, int drop_edges = 30,
                                      int erosion_radius = 1, std::int64_t zero_filter_channel = 0);

/// Volume-level 80/10/10 cohort split, deterministic under the seed.
std::map<std::string, Cohort> split_cohorts(const std::vector<std::string>& volume_ids,
                                            std::uint64_t rng_seed, double train_frac = 0.8,
                                            double val_frac = 0.1);

}  // namespace ganseg
