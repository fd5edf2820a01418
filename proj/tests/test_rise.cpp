#include <doctest.h>
#include <torch/torch.h>

#include "ganseg/rise.hpp"
#include "helpers.hpp"

using namespace ganseg;

TEST_CASE("constant scorer yields the flagged all-zero map") {
  RiseConfig cfg;
  cfg.n_masks = 100;
  cfg.rng_seed = 4;
  ImageScorer constant = [](const torch::Tensor& x) {
    return torch::full({x.size(0)}, 0.7, torch::kFloat32);
  };
  auto e = rise_explain(constant, torch::rand({1, 64, 64}), cfg);
  CHECK(e.degenerate);
  CHECK(e.e.abs().max().item<double>() == 0.0);
}

TEST_CASE("non-degenerate maps are normalized to span [0, 1]") {
  RiseConfig cfg;
  cfg.n_masks = 200;
  cfg.rng_seed = 9;
  ImageScorer pixel = [](const torch::Tensor& x) { return x.index({torch::indexing::Slice(), 0, 20, 30}); };
  auto e = rise_explain(pixel, torch::ones({1, 64, 64}), cfg);
  REQUIRE(!e.degenerate);
  CHECK(e.e.min().item<double>() == doctest::Approx(0.0));
  CHECK(e.e.max().item<double>() == doctest::Approx(1.0));
}

TEST_CASE("single-pixel oracle: saliency peaks near the scored pixel") {
  RiseConfig cfg;
  cfg.n_masks = 1500;
  cfg.rng_seed = 13;
  const std::int64_t py = 40, px = 25;
  ImageScorer pixel = [&](const torch::Tensor& x) {
    return x.index({torch::indexing::Slice(), 0, py, px});
  };
  auto e = rise_explain(pixel, torch::ones({1, 64, 64}), cfg);
  REQUIRE(!e.degenerate);
  auto flat_argmax = e.e.flatten().argmax().item<std::int64_t>();
  auto ay = flat_argmax / 64, ax = flat_argmax % 64;
  CHECK(std::abs(ay - py) <= 2);
  CHECK(std::abs(ax - px) <= 2);
}

TEST_CASE("determinism under a fixed seed") {
  RiseConfig cfg;
  cfg.n_masks = 300;
  cfg.rng_seed = 77;
  ImageScorer pixel = [](const torch::Tensor& x) { return x.index({torch::indexing::Slice(), 0, 10, 10}); };
  auto img = torch::rand({1, 32, 32});
  auto a = rise_explain(pixel, img, cfg);
  auto b = rise_explain(pixel, img, cfg);
  CHECK(torch::equal(a.e, b.e));
}

TEST_CASE("seed maps from thresholds") {
  auto e_map = torch::full({8, 8}, 0.1f);
  e_map[3][4] = 0.9f;
  ExplanationMap e{e_map, false};
  SUBCASE("label 1: one positive pixel, the rest negative") {
    auto s = make_seeds(e, 1);
    CHECK(s.positive.sum().item<double>() == 1.0);
    CHECK(s.positive[3][4].item<float>() == 1.0f);
    CHECK(s.negative.sum().item<double>() == 63.0);
    CHECK(s.negative[3][4].item<float>() == 0.0f);
  }
  SUBCASE("label 0 ignores the map entirely") {
    auto s = make_seeds(e, 0);
    CHECK(s.positive.sum().item<double>() == 0.0);
    CHECK(s.negative.sum().item<double>() == 64.0);
  }
  SUBCASE("degenerate zero map, label 1: empty positive, full negative") {
    ExplanationMap zero{torch::zeros({8, 8}), true};
    auto s = make_seeds(zero, 1);
    CHECK(s.positive.sum().item<double>() == 0.0);
    CHECK(s.negative.sum().item<double>() == 64.0);
  }
  SUBCASE("disjointness and threshold monotonicity") {
    auto em = torch::rand({16, 16});
    ExplanationMap r{em, false};
    auto s = make_seeds(r, 1);
    CHECK((s.positive * s.negative).sum().item<double>() == 0.0);
    auto stricter = make_seeds(r, 1, 0.9, 0.2);
    CHECK(((stricter.positive - s.positive) <= 0).all().item<bool>());
  }
}

TEST_CASE("overlap metric") {
  auto gt = torch::zeros({8, 8});
  gt.slice(0, 0, 4).fill_(1.0);
  SUBCASE("positives inside gt, negatives outside -> both 1") {
    SeedPair s;
    s.positive = torch::zeros({8, 8});
    s.positive[1][1] = 1;
    s.negative = torch::zeros({8, 8});
    s.negative[6][6] = 1;
    auto m = overlap_metric(s, gt);
    CHECK(*m.pos_overlap == doctest::Approx(1.0));
    CHECK(*m.neg_overlap == doctest::Approx(1.0));
  }
  SUBCASE("empty sides are reported absent") {
    SeedPair s;
    s.positive = torch::zeros({8, 8});
    s.negative = torch::ones({8, 8});
    auto m = overlap_metric(s, gt);
    CHECK(!m.pos_overlap.has_value());
    CHECK(*m.neg_overlap == doctest::Approx(0.5));
  }
}

TEST_CASE("seed set persistence round trip") {
  testutil::TempDir tmp("seeds_rt");
  SeedSet s;
  SeedPair p;
  p.positive = (torch::rand({16, 16}) > 0.8).to(torch::kFloat32);
  p.negative = (torch::rand({16, 16}) > 0.5).to(torch::kFloat32);
  s.seeds["vol1/3"] = p;
  s.flags["vol1/3"] = SeedFlags{false, true, true, 0.9};
  save_seed_set(tmp.path, s);
  auto back = load_seed_set(tmp.path);
  REQUIRE(back.seeds.count("vol1/3") == 1);
  CHECK(torch::equal(back.seeds["vol1/3"].positive, p.positive));
  CHECK(torch::equal(back.seeds["vol1/3"].negative, p.negative));
  CHECK(back.flags["vol1/3"].in_conversion_set);
  CHECK(back.flags["vol1/3"].p == doctest::Approx(0.9));
}
