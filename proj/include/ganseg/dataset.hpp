#pragma once

#include <torch/torch.h>

#include <optional>
#include <string>
#include <vector>

#include "ganseg/common.hpp"
#include "ganseg/io.hpp"

namespace ganseg {

enum class Cohort { Training, Validation, Test };

const char* cohort_name(Cohort c);
Cohort cohort_from_name(const std::string& s);

/// One 2D multi-channel image with its weak binary label. The ground-truth
/// mask, when present, is carried for evaluation only and never enters
/// training.
struct SliceRecord {
  torch::Tensor image;  // (c, H, W) float in [0,1]
  int label = 0;        // 0 = non-cancerous, 1 = cancerous
  Cohort cohort = Cohort::Training;
  std::optional<torch::Tensor> gt_mask;  // (H, W) binary, evaluation only
  std::string volume_id;
  std::int64_t slice_index = 0;

  std::string id() const { return volume_id + "/" + std::to_string(slice_index); }
};

struct SliceDataset {
  std::vector<SliceRecord> records;
  std::vector<std::string> channels;

  std::vector<std::size_t> cohort_indices(Cohort c) const;
  /// Indices with the given label within a cohort.
  std::vector<std::size_t> label_indices(Cohort c, int label) const;
  /// Stacks images of the given record indices into a (N, c, H, W) batch.
  torch::Tensor stack_images(const std::vector<std::size_t>& idx) const;
};

/// Writes <cohort>/<volume_id>/<slice_index>.bin (+ sidecars, + gt masks) and
/// a top-level manifest.json with per-cohort class counts.
void save_dataset(const fs::path& root, const SliceDataset& ds);

SliceDataset load_dataset(const fs::path& root);

/// Per-cohort class counts in manifest.json form.
json dataset_manifest(const SliceDataset& ds);

}  // namespace ganseg
