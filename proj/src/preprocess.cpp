#include "ganseg/preprocess.hpp"

#include <algorithm>
#include <iostream>
#include <random>

#include "ganseg/io.hpp"
#include "ganseg/morphology.hpp"

namespace ganseg {

Volume load_volume(const std::vector<fs::path>& channel_paths,
                   const std::vector<std::string>& channel_names, const std::string& format,
                   const std::string& volume_id, const std::optional<fs::path>& gt_path) {
  if (channel_paths.size() != channel_names.size() || channel_paths.empty())
    throw ConfigError("channel paths and names must match and be nonempty");
  if (channel_paths.size() != 1 && channel_paths.size() != 4)
    throw ConfigError("channel count must be 1 or 4, got " +
                      std::to_string(channel_paths.size()));

  auto read_one = [&](const fs::path& p) -> torch::Tensor {
    if (!fs::exists(p)) throw StageError("volume not found: " + p.string());
    if (format == "nifti") return read_nifti(p);
    if (format == "flat") return load_tensor(p);
    throw ConfigError("unknown volume format: " + format);
  };

  Volume v;
  v.id = volume_id;
  v.channels = channel_names;
  std::vector<torch::Tensor> chans;
  for (std::size_t i = 0; i < channel_paths.size(); ++i) {
    auto t = read_one(channel_paths[i]);
    if (!chans.empty() && t.sizes() != chans.front().sizes())
      throw StageError("shape mismatch across channels: channel '" + channel_names[i] +
                       "' does not match '" + channel_names.front() + "' in volume " + volume_id);
    chans.push_back(t);
  }
  v.voxels = torch::stack(chans);  // (c, slices, H, W)
  if (gt_path) {
    auto g = read_one(*gt_path);
    if (g.sizes() != chans.front().sizes())
      throw StageError("shape mismatch: gt volume does not match channels in volume " + volume_id);
    v.gt = g;
  }
  TORCH_CHECK(v.voxels.isfinite().all().item<bool>(), "non-finite voxels in volume ", volume_id);
  return v;
}

namespace {

/// Percentile of the nonzero entries of a channel volume (linear interpolation).
double nonzero_percentile(const torch::Tensor& chan, double pct) {
  auto nz = chan.masked_select(chan != 0);
  if (nz.numel() == 0) return 0.0;
  auto sorted = std::get<0>(nz.sort());
  double pos = pct / 100.0 * static_cast<double>(sorted.numel() - 1);
  auto lo = static_cast<std::int64_t>(std::floor(pos));
  auto hi = std::min(lo + 1, sorted.numel() - 1);
  double frac = pos - static_cast<double>(lo);
  return sorted[lo].item<double>() * (1.0 - frac) + sorted[hi].item<double>() * frac;
}

}  // namespace

Volume preprocess_volume(const Volume& v, const PreprocessConfig& cfg) {
  Volume out;
  out.id = v.id;
  out.channels = v.channels;
  auto vox = v.voxels.clone();
  auto gt = v.gt ? std::optional<torch::Tensor>(v.gt->clone()) : std::nullopt;

  if (cfg.bounding_box_crop) {
    auto any_nz = (vox != 0).any(/*dim=*/0);  // (slices, H, W)
    auto idx = any_nz.nonzero();
    if (idx.size(0) > 0) {
      auto lo = std::get<0>(idx.min(0));
      auto hi = std::get<0>(idx.max(0));
      using torch::indexing::Slice;
      auto s0 = lo[0].item<std::int64_t>(), s1 = hi[0].item<std::int64_t>() + 1;
      auto y0 = lo[1].item<std::int64_t>(), y1 = hi[1].item<std::int64_t>() + 1;
      auto x0 = lo[2].item<std::int64_t>(), x1 = hi[2].item<std::int64_t>() + 1;
      vox = vox.index({Slice(), Slice(s0, s1), Slice(y0, y1), Slice(x0, x1)});
      if (gt) gt = gt->index({Slice(s0, s1), Slice(y0, y1), Slice(x0, x1)});
    }
  } else if (cfg.downsample_factor > 1) {
    const auto f = cfg.downsample_factor;
    // In-plane average-pool downsample; slices untouched.
    vox = torch::nn::functional::avg_pool2d(
        vox.flatten(0, 1).unsqueeze(1),
        torch::nn::functional::AvgPool2dFuncOptions(f).stride(f))
              .squeeze(1)
              .unflatten(0, {v.voxels.size(0), v.voxels.size(1)});
    if (gt) {
      // Nearest-neighbor keeps the mask binary-valued.
      using torch::indexing::Slice;
      gt = gt->index({Slice(), Slice(0, torch::indexing::None, f),
                      Slice(0, torch::indexing::None, f)});
    }
  }

  // Per-channel percentile clip of nonzero intensities, then min-max.
  for (std::int64_t c = 0; c < vox.size(0); ++c) {
    auto chan = vox[c];
    double lo = nonzero_percentile(chan, cfg.clip_lo_pct);
    double hi = nonzero_percentile(chan, cfg.clip_hi_pct);
    auto nz = chan != 0;
    chan.masked_scatter_(nz, chan.masked_select(nz).clamp(lo, hi));
    double mn = chan.min().item<double>();
    double mx = chan.max().item<double>();
    if (mx - mn < 1e-12) {
      std::cerr << "[ganseg] warning: constant channel '" << v.channels[c] << "' in volume "
                << v.id << "; output set to zeros\n";
      chan.zero_();
    } else {
      chan.sub_(mn).div_(mx - mn);
    }
  }

  if (cfg.training_mode) {
    const auto T = cfg.target_size;
    std::mt19937_64 rng(derive_seed(cfg.rng_seed, "croppad/" + v.id));
    auto place = [&](std::int64_t cur) -> std::pair<std::int64_t, std::int64_t> {
      // Returns (src_offset, dst_offset) for one axis.
      if (cur > T) {
        std::uniform_int_distribution<std::int64_t> d(0, cur - T);
        return {d(rng), 0};
      }
      if (cur < T) {
        std::uniform_int_distribution<std::int64_t> d(0, T - cur);
        return {0, d(rng)};
      }
      return {0, 0};
    };
    auto [sy, dy] = place(vox.size(2));
    auto [sx, dx] = place(vox.size(3));
    auto ny = std::min(vox.size(2), T), nx = std::min(vox.size(3), T);
    auto canvas = torch::zeros({vox.size(0), vox.size(1), T, T}, vox.options());
    using torch::indexing::Slice;
    canvas.index_put_({Slice(), Slice(), Slice(dy, dy + ny), Slice(dx, dx + nx)},
                      vox.index({Slice(), Slice(), Slice(sy, sy + ny), Slice(sx, sx + nx)}));
    vox = canvas;
    if (gt) {
      auto gcanvas = torch::zeros({gt->size(0), T, T}, gt->options());
      gcanvas.index_put_({Slice(), Slice(dy, dy + ny), Slice(dx, dx + nx)},
                         gt->index({Slice(), Slice(sy, sy + ny), Slice(sx, sx + nx)}));
      gt = gcanvas;
    }
  }

  out.voxels = vox;
  out.gt = gt;
  return out;
}

int derive_label(const torch::Tensor& gt_mask, int erosion_radius) {
  auto bin = gt_mask > 0;
  return erode_disk(bin, erosion_radius).any().item<bool>() ? 1 : 0;
}

std::vector<SliceRecord> slice_volume(const Volume& v, Cohort cohort, int drop_edges,
                                      int erosion_radius, std::int64_t zero_filter_channel) {
  std::vector<SliceRecord> out;
  const auto n_slices = v.voxels.size(1);
  if (n_slices <= 2 * drop_edges) {
    std::cerr << "[ganseg] warning: volume " << v.id << " has only " << n_slices
              << " slices; nothing survives drop_edges=" << drop_edges << "\n";
    return out;
  }
  TORCH_CHECK(zero_filter_channel >= 0 && zero_filter_channel < v.voxels.size(0),
              "zero_filter_channel out of range");
  for (std::int64_t s = drop_edges; s < n_slices - drop_edges; ++s) {
    auto ref = v.voxels[zero_filter_channel][s];
    double zero_frac = (ref == 0).to(torch::kFloat32).mean().item<double>();
    if (zero_frac > 0.5) continue;
    SliceRecord r;
    r.image = v.voxels.index({torch::indexing::Slice(), s}).clone();
    r.cohort = cohort;
    r.volume_id = v.id;
    r.slice_index = s;
    if (v.gt) {
      auto g = ((*v.gt)[s] > 0).to(torch::kFloat32);
      r.gt_mask = g;
      r.label = derive_label(g, erosion_radius);
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::map<std::string, Cohort> split_cohorts(const std::vector<std::string>& volume_ids,
                                            std::uint64_t rng_seed, double train_frac,
                                            double val_frac) {
  const auto n = static_cast<std::int64_t>(volume_ids.size());
  if (n < 3) throw ConfigError("cohort split needs at least 3 volumes");
  auto ids = volume_ids;
  std::sort(ids.begin(), ids.end());
  std::mt19937_64 rng(rng_seed);
  std::shuffle(ids.begin(), ids.end(), rng);

  auto n_train = static_cast<std::int64_t>(std::floor(train_frac * static_cast<double>(n)));
  auto n_val = static_cast<std::int64_t>(std::llround(val_frac * static_cast<double>(n)));
  n_val = std::max<std::int64_t>(1, n_val);
  auto n_test = n - n_train - n_val;
  if (n_test < 1) {
    n_test = 1;
    n_train = n - n_val - n_test;
  }

  std::map<std::string, Cohort> out;
  for (std::int64_t i = 0; i < n; ++i) {
    Cohort c = i < n_train              ? Cohort::Training
               : i < n_train + n_val    ? Cohort::Validation
                                        : Cohort::Test;
    out[ids[i]] = c;
  }
  return out;
}

}  // namespace ganseg
