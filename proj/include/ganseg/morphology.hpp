#pragma once

#include <torch/torch.h>

#include <vector>

namespace ganseg {

/// Disk structuring element offsets: all (dy, dx) with dy^2 + dx^2 <= r^2.
std::vector<std::pair<int, int>> disk_offsets(int radius);

/// Binary erosion of a (H, W) mask by a disk of the given radius. Pixels
/// outside the image count as background, so the border always erodes.
torch::Tensor erode_disk(const torch::Tensor& mask, int radius);

/// Binary dilation of a (H, W) mask by a disk of the given radius.
torch::Tensor dilate_disk(const torch::Tensor& mask, int radius);

/// Connected components of a (H, W) binary mask. Returns one binary mask per
/// component, in scan order. 8-connectivity by default.
std::vector<torch::Tensor> connected_components(const torch::Tensor& mask, bool eight_connect = true);

}  // namespace ganseg
