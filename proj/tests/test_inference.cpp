#include <doctest.h>
#include <torch/torch.h>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <random>

#include "ganseg/pipeline.hpp"
#include "helpers.hpp"

using namespace ganseg;

TEST_CASE("median filter matches brute force with edge replication") {
  std::mt19937_64 rng(3);
  auto img = torch::rand({9, 11});
  auto out = median_filter2d(img, 3);
  REQUIRE(out.sizes() == img.sizes());
  for (std::int64_t y = 0; y < 9; ++y)
    for (std::int64_t x = 0; x < 11; ++x) {
      std::vector<float> vals;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          auto yy = std::clamp<std::int64_t>(y + dy, 0, 8);
          auto xx = std::clamp<std::int64_t>(x + dx, 0, 10);
          vals.push_back(img[yy][xx].item<float>());
        }
      std::nth_element(vals.begin(), vals.begin() + 4, vals.end());
      CHECK(out[y][x].item<float>() == doctest::Approx(vals[4]));
    }
}

TEST_CASE("residual baseline examples") {
  auto x = torch::rand({16, 16});
  SUBCASE("identical variant -> empty mask for any positive threshold") {
    CHECK(baseline_l1(x, x, 5, 0.05).sum().item<double>() == 0.0);
  }
  SUBCASE("uniform diff 0.5 above threshold 0.4 -> full mask") {
    CHECK(baseline_l1(x, x + 0.5, 5, 0.4).mean().item<double>() == doctest::Approx(1.0));
  }
  SUBCASE("monotone in threshold") {
    auto xhat = torch::rand({16, 16});
    auto lo = baseline_l1(x, xhat, 5, 0.1);
    auto hi = baseline_l1(x, xhat, 5, 0.3);
    CHECK(((hi - lo) <= 0).all().item<bool>());  // higher threshold => subset
  }
}

namespace {
SegmenterHandle random_segmenter(std::uint64_t seed) {
  torch::manual_seed(seed);
  SegmenterHandle h;
  h.in_channels = 1;
  h.base_width = 8;
  h.net = ConverterUNet(1, 8, 1);
  return h;
}
}  // namespace

TEST_CASE("whole-image inference") {
  torch::set_num_threads(1);
  auto s_os = random_segmenter(101);
  auto s_us = random_segmenter(102);

  SUBCASE("images smaller than a patch are rejected") {
    auto clf = testutil::constant_classifier(0.8);
    CHECK_THROWS_AS(segment_whole_image(torch::rand({1, 64, 64}), clf, s_os, s_us), StageError);
  }

  SUBCASE("single patch with low classifier score -> all-zero mask") {
    auto clf = testutil::constant_classifier(0.3);
    auto res = segment_whole_image(torch::rand({1, 128, 128}), clf, s_os, s_us);
    CHECK(res.mask.abs().max().item<double>() == 0.0);
    CHECK(res.patch_scores.size() == 1);
  }

  SUBCASE("single patch equals the direct combined call") {
    auto clf = testutil::constant_classifier(0.8);
    auto img = torch::rand({1, 128, 128});
    auto res = segment_whole_image(img, clf, s_os, s_us);
    double p = clf.predict(img);
    auto direct = combine(p, s_os.predict(img), s_us.predict(img));
    CHECK(torch::equal(res.mask, direct.m2));
    CHECK(torch::allclose(res.prob, direct.m1));
  }

  SUBCASE("overlapping patches average their probability maps") {
    auto clf = testutil::constant_classifier(0.9);
    auto img = torch::rand({1, 128, 192});
    auto res = segment_whole_image(img, clf, s_os, s_us, 64);
    REQUIRE(res.patch_scores.size() == 2);  // x starts 0 and 64 (flush to border)
    using torch::indexing::Slice;
    auto tile = [&](std::int64_t x0) { return img.index({Slice(), Slice(), Slice(x0, x0 + 128)}); };
    auto m1_a = combine(clf.predict(tile(0)), s_os.predict(tile(0)), s_us.predict(tile(0))).m1;
    auto m1_b = combine(clf.predict(tile(64)), s_os.predict(tile(64)), s_us.predict(tile(64))).m1;
    // Overlap columns 64..128 hold the mean of the two patch maps.
    auto overlap = res.prob.index({Slice(), Slice(64, 128)});
    auto expected = (m1_a.index({Slice(), Slice(64, 128)}) +
                     m1_b.index({Slice(), Slice(0, 64)})) / 2.0;
    CHECK(torch::allclose(overlap, expected, 1e-5, 1e-6));
    // Non-overlapping left edge is patch A alone.
    CHECK(torch::allclose(res.prob.index({Slice(), Slice(0, 64)}),
                          m1_a.index({Slice(), Slice(0, 64)}), 1e-5, 1e-6));
  }

  SUBCASE("stride 128 with p > 0.5 reproduces patchwise maps exactly") {
    auto clf = testutil::constant_classifier(0.8);
    auto img = torch::rand({1, 128, 256});
    auto res = segment_whole_image(img, clf, s_os, s_us, 128);
    using torch::indexing::Slice;
    auto right = img.index({Slice(), Slice(), Slice(128, 256)});
    auto direct = combine(clf.predict(right), s_os.predict(right), s_us.predict(right)).m1;
    CHECK(torch::allclose(res.prob.index({Slice(), Slice(128, 256)}), direct));
  }
}

TEST_CASE("pipeline config validation") {
  PipelineConfig cfg;
  cfg.output_root = "x";
  CHECK_NOTHROW(cfg.validate());
  SUBCASE("dataset kind needs a path") {
    cfg.data_kind = "dataset";
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SUBCASE("unknown data kind") {
    cfg.data_kind = "database";
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SUBCASE("threshold range") {
    cfg.filter_threshold = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SUBCASE("json round trip") {
    auto j = cfg.to_json();
    auto back = PipelineConfig::from_json(j);
    CHECK(back.to_json() == j);
  }
}
