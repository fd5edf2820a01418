#include "ganseg/phantom.hpp"

#include <cmath>
#include <nlohmann/json.hpp>
#include <random>

#include "ganseg/preprocess.hpp"

namespace ganseg {

PhantomSpec PhantomSpec::from_json(const json& j) {
  PhantomSpec s;
  s.image_size = j.value("image_size", s.image_size);
  s.volumes_train = j.value("volumes_train", s.volumes_train);
  s.volumes_val = j.value("volumes_val", s.volumes_val);
  s.volumes_test = j.value("volumes_test", s.volumes_test);
  s.slices_per_volume = j.value("slices_per_volume", s.slices_per_volume);
  s.channels = j.value("channels", s.channels);
  s.tumor_probability = j.value("tumor_probability", s.tumor_probability);
  s.tumor_radius_min = j.value("tumor_radius_min", s.tumor_radius_min);
  s.tumor_radius_max = j.value("tumor_radius_max", s.tumor_radius_max);
  s.tumor_contrast_min = j.value("tumor_contrast_min", s.tumor_contrast_min);
  s.tumor_contrast_max = j.value("tumor_contrast_max", s.tumor_contrast_max);
  s.tumor_heterogeneity = j.value("tumor_heterogeneity", s.tumor_heterogeneity);
  s.tumor_texture_grid = j.value("tumor_texture_grid", s.tumor_texture_grid);
  s.brain_base_intensity = j.value("brain_base_intensity", s.brain_base_intensity);
  s.texture_amplitude = j.value("texture_amplitude", s.texture_amplitude);
  s.texture_grid = j.value("texture_grid", s.texture_grid);
  s.erosion_radius = j.value("erosion_radius", s.erosion_radius);
  s.rng_seed = j.value("rng_seed", s.rng_seed);
  return s;
}

json PhantomSpec::to_json() const {
  return json{{"image_size", image_size},
              {"volumes_train", volumes_train},
              {"volumes_val", volumes_val},
              {"volumes_test", volumes_test},
              {"slices_per_volume", slices_per_volume},
              {"channels", channels},
              {"tumor_probability", tumor_probability},
              {"tumor_radius_min", tumor_radius_min},
              {"tumor_radius_max", tumor_radius_max},
              {"tumor_contrast_min", tumor_contrast_min},
              {"tumor_contrast_max", tumor_contrast_max},
              {"tumor_heterogeneity", tumor_heterogeneity},
              {"tumor_texture_grid", tumor_texture_grid},
              {"brain_base_intensity", brain_base_intensity},
              {"texture_amplitude", texture_amplitude},
              {"texture_grid", texture_grid},
              {"erosion_radius", erosion_radius},
              {"rng_seed", rng_seed}};
}

namespace {

struct Ellipse {
  double cy, cx, a, b;  // semi-axis a along y, b along x
  bool contains(double y, double x, double margin = 1.0) const {
    double dy = (y - cy) / (a * margin), dx = (x - cx) / (b * margin);
    return dy * dy + dx * dx <= 1.0;
  }
};

/// Coarse value-noise field bilinearly interpolated to (S, S), range [-1, 1].
torch::Tensor value_noise(std::mt19937_64& rng, std::int64_t grid, std::int64_t S) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto coarse = torch::empty({1, 1, grid, grid}, torch::kFloat32);
  auto ca = coarse.accessor<float, 4>();
  for (std::int64_t y = 0; y < grid; ++y)
    for (std::int64_t x = 0; x < grid; ++x) ca[0][0][y][x] = static_cast<float>(u(rng));
  return torch::nn::functional::interpolate(
             coarse, torch::nn::functional::InterpolateFuncOptions()
                         .size(std::vector<std::int64_t>{S, S})
                         .mode(torch::kBilinear)
                         .align_corners(true))
      .squeeze();
}

}  // namespace

SliceDataset gen_phantoms(const PhantomSpec& spec) {
  const auto S = spec.image_size;
  if (spec.tumor_radius_min <= 0 || spec.tumor_radius_max < spec.tumor_radius_min)
    throw ConfigError("invalid tumor radius range");
  if (spec.tumor_radius_max >= 0.4 * static_cast<double>(S))
    throw ConfigError("infeasible geometry: tumor radius exceeds brain extent");
  if (spec.channels != 1 && spec.channels != 4)
    throw ConfigError("phantom channels must be 1 or 4");

  SliceDataset ds;
  if (spec.channels == 1)
    ds.channels = {"flair"};
  else
    ds.channels = {"flair", "t1", "t1ce", "t2"};

  // Per-channel rendering variants: intensity offset and tumor contrast scale.
  std::vector<std::pair<double, double>> chan_variant = {
      {0.0, 1.0}, {-0.06, 0.6}, {0.05, 0.8}, {0.03, 0.9}};

  auto render_cohort = [&](Cohort cohort, std::int64_t n_volumes) {
    for (std::int64_t v = 0; v < n_volumes; ++v) {
      std::string vid = std::string(cohort_name(cohort)) + "_vol" + std::to_string(v);
      std::mt19937_64 rng(derive_seed(spec.rng_seed, "phantom/" + vid));
      std::uniform_real_distribution<double> u01(0.0, 1.0);

      for (std::int64_t s = 0; s < spec.slices_per_volume; ++s) {
        std::uniform_real_distribution<double> jitter(-0.02, 0.02);
        Ellipse brain{(0.5 + jitter(rng)) * static_cast<double>(S),
                      (0.5 + jitter(rng)) * static_cast<double>(S),
                      (0.46 + 0.02 * u01(rng)) * static_cast<double>(S),
                      (0.42 + 0.02 * u01(rng)) * static_cast<double>(S)};
        auto noise = value_noise(rng, spec.texture_grid, S);
        auto na = noise.accessor<float, 2>();

        // Tumor geometry (shared across channels).
        auto gt = torch::zeros({S, S}, torch::kFloat32);
        bool has_tumor = u01(rng) < spec.tumor_probability;
        if (has_tumor) {
          int n_blobs = u01(rng) < 0.3 ? 2 : 1;
          auto ga = gt.accessor<float, 2>();
          for (int bidx = 0; bidx < n_blobs; ++bidx) {
            std::uniform_real_distribution<double> rr(spec.tumor_radius_min,
                                                      spec.tumor_radius_max);
            double r = rr(rng);
            // Place the blob center well inside the brain.
            double ang = 2.0 * M_PI * u01(rng);
            double rad = 0.6 * std::sqrt(u01(rng));
            double by = brain.cy + rad * brain.a * std::sin(ang);
            double bx = brain.cx + rad * brain.b * std::cos(ang);
            // Irregular boundary: radius modulated by low harmonics.
            double h2a = 0.15 * (2 * u01(rng) - 1), h2p = 2.0 * M_PI * u01(rng);
            double h3a = 0.12 * (2 * u01(rng) - 1), h3p = 2.0 * M_PI * u01(rng);
            std::int64_t y0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(by - 1.5 * r));
            std::int64_t y1 = std::min<std::int64_t>(S, static_cast<std::int64_t>(by + 1.5 * r) + 1);
            std::int64_t x0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(bx - 1.5 * r));
            std::int64_t x1 = std::min<std::int64_t>(S, static_cast<std::int64_t>(bx + 1.5 * r) + 1);
            for (std::int64_t y = y0; y < y1; ++y) {
              for (std::int64_t x = x0; x < x1; ++x) {
                double dy = static_cast<double>(y) - by, dx = static_cast<double>(x) - bx;
                double theta = std::atan2(dy, dx);
                double rb = r * (1.0 + h2a * std::cos(2 * theta + h2p) +
                                 h3a * std::cos(3 * theta + h3p));
                if (dy * dy + dx * dx <= rb * rb &&
                    brain.contains(static_cast<double>(y), static_cast<double>(x), 0.95))
                  ga[y][x] = 1.0f;
              }
            }
          }
          has_tumor = gt.any().item<bool>();
        }
        std::uniform_real_distribution<double> cc(spec.tumor_contrast_min,
                                                  spec.tumor_contrast_max);
        double contrast = has_tumor ? cc(rng) : 0.0;
        // Heterogeneous enhancement inside the blob: a fine per-slice noise
        // field scales the contrast between (1 - heterogeneity) and 1.
        auto tumor_tex = value_noise(rng, spec.tumor_texture_grid, S);
        auto ta = tumor_tex.accessor<float, 2>();

        auto image = torch::zeros({spec.channels, S, S}, torch::kFloat32);
        auto ia = image.accessor<float, 3>();
        auto ga = gt.accessor<float, 2>();
        for (std::int64_t c = 0; c < spec.channels; ++c) {
          auto [off, cscale] = chan_variant[static_cast<std::size_t>(c)];
          for (std::int64_t y = 0; y < S; ++y) {
            for (std::int64_t x = 0; x < S; ++x) {
              if (!brain.contains(static_cast<double>(y), static_cast<double>(x))) continue;
              double val = spec.brain_base_intensity + off +
                           spec.texture_amplitude * static_cast<double>(na[y][x]);
              if (ga[y][x] > 0) {
                double het = 1.0 - spec.tumor_heterogeneity *
                                       (0.5 + 0.5 * static_cast<double>(ta[y][x]));
                val += contrast * cscale * het;
              }
              ia[c][y][x] = static_cast<float>(std::clamp(val, 0.0, 1.0));
            }
          }
        }

        SliceRecord rec;
        rec.image = image;
        rec.cohort = cohort;
        rec.volume_id = vid;
        rec.slice_index = s;
        rec.gt_mask = gt;
        rec.label = derive_label(gt, spec.erosion_radius);
        ds.records.push_back(std::move(rec));
      }
    }
  };

  render_cohort(Cohort::Training, spec.volumes_train);
  render_cohort(Cohort::Validation, spec.volumes_val);
  render_cohort(Cohort::Test, spec.volumes_test);
  return ds;
}

}  // namespace ganseg
