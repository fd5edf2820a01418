#pragma once

#include "ganseg/dataset.hpp"

namespace ganseg {

/// Synthetic textured-ellipse "brain" slices with planted bright blobs,
/// sized for desk-scale verification of the whole pipeline.
struct PhantomSpec {
  std::int64_t image_size = 128;
  std::int64_t volumes_train = 80;
  std::int64_t volumes_val = 10;
  std::int64_t volumes_test = 10;
  std::int64_t slices_per_volume = 25;
  std::int64_t channels = 1;             // 1 or 4; channel 0 is FLAIR
  double tumor_probability = 0.6;        // per slice
  double tumor_radius_min = 6.0;         // pixels
  double tumor_radius_max = 14.0;
  double tumor_contrast_min = 0.18;      // additive intensity delta (peak)
  double tumor_contrast_max = 0.35;
  // Heterogeneous enhancement: per-pixel contrast is modulated down to
  // (1 - tumor_heterogeneity) of the peak by a fine noise field.
  double tumor_heterogeneity = 0.6;
  std::int64_t tumor_texture_grid = 32;
  double brain_base_intensity = 0.40;
  double texture_amplitude = 0.08;
  std::int64_t texture_grid = 8;         // coarse value-noise grid
  int erosion_radius = 1;                // weak-label derivation
  std::uint64_t rng_seed = 0;

  static PhantomSpec from_json(const json& j);
  json to_json() const;
};

/// Deterministic under rng_seed: the same spec always yields a bitwise
/// identical dataset.
SliceDataset gen_phantoms(const PhantomSpec& spec);

}  // namespace ganseg
