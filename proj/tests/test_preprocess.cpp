#include <doctest.h>
#include <torch/torch.h>

#include "ganseg/preprocess.hpp"
#include "helpers.hpp"

using namespace ganseg;

namespace {
Volume make_volume(torch::Tensor voxels, const std::string& id = "v0") {
  Volume v;
  v.voxels = voxels.unsqueeze(0);  // single channel
  v.channels = {"flair"};
  v.id = id;
  return v;
}
}  // namespace

TEST_CASE("preprocessing clips outliers to the 99th percentile") {
  auto vox = torch::rand({10, 40, 40}) * 0.5 + 0.25;
  vox[5][20][20] = 100.0;  // extreme outlier
  auto v = make_volume(vox);
  PreprocessConfig cfg;
  cfg.target_size = 32;
  auto out = preprocess_volume(v, cfg);
  // After clipping, the outlier cannot dominate: the second-largest value
  // region keeps meaningful dynamic range instead of collapsing near zero.
  auto flat = out.voxels.flatten();
  CHECK(flat.max().item<double>() == doctest::Approx(1.0));
  double frac_above_half = (flat > 0.5).to(torch::kFloat32).mean().item<double>();
  CHECK(frac_above_half > 0.05);
}

TEST_CASE("preprocessed values stay in [0, 1]") {
  auto v = make_volume(torch::rand({8, 50, 60}) * 37.0 - 5.0);
  PreprocessConfig cfg;
  cfg.target_size = 48;
  auto out = preprocess_volume(v, cfg);
  CHECK(out.voxels.min().item<double>() >= 0.0);
  CHECK(out.voxels.max().item<double>() <= 1.0);
}

TEST_CASE("constant volume degenerates to zeros") {
  auto v = make_volume(torch::full({4, 16, 16}, 3.0));
  PreprocessConfig cfg;
  cfg.target_size = 16;
  auto out = preprocess_volume(v, cfg);
  CHECK(out.voxels.abs().max().item<double>() == 0.0);
}

TEST_CASE("downsampling path halves the in-plane extent") {
  auto v = make_volume(torch::rand({4, 64, 64}));
  PreprocessConfig cfg;
  cfg.bounding_box_crop = false;
  cfg.downsample_factor = 2;
  cfg.training_mode = false;
  auto out = preprocess_volume(v, cfg);
  CHECK(out.voxels.size(2) == 32);
  CHECK(out.voxels.size(3) == 32);
}

TEST_CASE("slice filtering drops edges and mostly-zero slices") {
  // 70 slices: with drop_edges=30 only the middle 10 remain eligible.
  auto vox = torch::full({70, 16, 16}, 0.5f);
  vox[35].zero_();
  vox[36].slice(0, 0, 10).zero_();  // 62.5% zeros -> dropped
  vox[37].slice(0, 0, 6).zero_();   // 37.5% zeros -> kept
  Volume v = make_volume(vox);
  v.gt = torch::zeros({70, 16, 16});
  auto slices = slice_volume(v, Cohort::Training, 30, 1);
  std::vector<std::int64_t> kept;
  for (const auto& s : slices) kept.push_back(s.slice_index);
  CHECK(std::find(kept.begin(), kept.end(), 35) == kept.end());
  CHECK(std::find(kept.begin(), kept.end(), 36) == kept.end());
  CHECK(std::find(kept.begin(), kept.end(), 37) != kept.end());
  for (auto i : kept) {
    CHECK(i >= 30);
    CHECK(i < 40);
  }
}

TEST_CASE("short volumes yield no slices") {
  auto v = make_volume(torch::rand({10, 16, 16}));
  CHECK(slice_volume(v, Cohort::Training, 30, 1).empty());
}

TEST_CASE("cohort split arithmetic and determinism") {
  SUBCASE("369 volumes split 295/37/37") {
    std::vector<std::string> ids;
    for (int i = 0; i < 369; ++i) ids.push_back("vol" + std::to_string(i));
    auto split = split_cohorts(ids, 42);
    std::size_t tr = 0, va = 0, te = 0;
    for (const auto& [id, c] : split) {
      if (c == Cohort::Training) ++tr;
      else if (c == Cohort::Validation) ++va;
      else ++te;
    }
    CHECK(tr == 295);
    CHECK(va == 37);
    CHECK(te == 37);
  }
  SUBCASE("10 volumes split 8/1/1") {
    std::vector<std::string> ids;
    for (int i = 0; i < 10; ++i) ids.push_back("v" + std::to_string(i));
    auto split = split_cohorts(ids, 1);
    std::size_t tr = 0, va = 0, te = 0;
    for (const auto& [id, c] : split) {
      if (c == Cohort::Training) ++tr;
      else if (c == Cohort::Validation) ++va;
      else ++te;
    }
    CHECK(tr == 8);
    CHECK(va == 1);
    CHECK(te == 1);
  }
  SUBCASE("same seed gives the same assignment, partition is exact") {
    std::vector<std::string> ids;
    for (int i = 0; i < 37; ++i) ids.push_back("x" + std::to_string(i));
    auto a = split_cohorts(ids, 123);
    auto b = split_cohorts(ids, 123);
    CHECK(a == b);
    CHECK(a.size() == ids.size());
  }
}

TEST_CASE("volume loading errors") {
  try {
    load_volume({"/nonexistent/file.nii.gz"}, {"flair"}, "nifti", "v");
    FAIL("expected an error for a missing volume");
  } catch (const StageError& e) {
    CHECK(std::string(e.what()).find("volume not found") != std::string::npos);
  }
}
