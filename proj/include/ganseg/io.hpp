#pragma once

#include <torch/torch.h>

#include <nlohmann/json_fwd.hpp>
#include <string>
#include <vector>

#include "ganseg/common.hpp"

namespace ganseg {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Flat binary tensor cache: raw little-endian float32 in <name>.bin plus a
// JSON sidecar <name>.json carrying shape/dtype and caller metadata.
// ---------------------------------------------------------------------------

/// Writes `t` (converted to contiguous float32) and a sidecar. `meta` entries
/// are merged into the sidecar next to the "shape"/"dtype" keys.
void save_tensor(const fs::path& bin_path, const torch::Tensor& t, const json& meta);

/// Loads a tensor previously written by save_tensor. If `meta_out` is non-null
/// the full sidecar is returned through it.
torch::Tensor load_tensor(const fs::path& bin_path, json* meta_out = nullptr);

json read_json(const fs::path& path);
void write_json(const fs::path& path, const json& j);

// ---------------------------------------------------------------------------
// NIfTI-1
// ---------------------------------------------------------------------------

/// Reads a .nii or .nii.gz file into a (slices, H, W) float tensor with raw
/// intensities. Supports the scalar dtypes that appear in practice (uint8,
/// int16, int32, float32, float64) and applies scl_slope/scl_inter when set.
torch::Tensor read_nifti(const fs::path& path);

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

void write_csv(const fs::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

/// Minimal static line plot (SVG) for report output. One polyline per series.
void write_svg_lines(const fs::path& path, const std::string& title,
                     const std::vector<double>& x,
                     const std::vector<std::pair<std::string, std::vector<double>>>& series);

}  // namespace ganseg
