#include <doctest.h>
#include <torch/torch.h>

#include <random>

#include "ganseg/morphology.hpp"
#include "ganseg/preprocess.hpp"

using namespace ganseg;

namespace {
// Brute-force disk erosion: pixel survives iff every offset within the disk
// stays on a foreground pixel inside the image.
torch::Tensor erode_oracle(const torch::Tensor& m, int r) {
  auto out = torch::zeros_like(m);
  const auto H = m.size(0), W = m.size(1);
  for (std::int64_t y = 0; y < H; ++y)
    for (std::int64_t x = 0; x < W; ++x) {
      bool keep = m[y][x].item<float>() > 0;
      for (int dy = -r; keep && dy <= r; ++dy)
        for (int dx = -r; keep && dx <= r; ++dx) {
          if (dy * dy + dx * dx > r * r) continue;
          auto yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= H || xx < 0 || xx >= W || m[yy][xx].item<float>() <= 0) keep = false;
        }
      if (keep) out[y][x] = 1;
    }
  return out;
}

torch::Tensor filled_disk(std::int64_t size, double cy, double cx, double r) {
  auto m = torch::zeros({size, size});
  for (std::int64_t y = 0; y < size; ++y)
    for (std::int64_t x = 0; x < size; ++x)
      if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r) m[y][x] = 1;
  return m;
}
}  // namespace

TEST_CASE("erosion matches the brute-force oracle on random masks") {
  torch::manual_seed(5);
  for (int t = 0; t < 20; ++t) {
    auto m = (torch::rand({12, 12}) > 0.4).to(torch::kFloat32);
    for (int r : {1, 2}) {
      CHECK(torch::equal(erode_disk(m, r), erode_oracle(m, r)));
    }
  }
}

TEST_CASE("dilation of a point is a rasterized disk") {
  auto m = torch::zeros({11, 11});
  m[5][5] = 1;
  auto d = dilate_disk(m, 3);
  CHECK(torch::equal(d, filled_disk(11, 5, 5, 3)));
}

TEST_CASE("erosion-based weak labels") {
  SUBCASE("empty mask -> 0") { CHECK(derive_label(torch::zeros({16, 16}), 1) == 0); }
  SUBCASE("single pixel eroded away at radius 1") {
    auto m = torch::zeros({16, 16});
    m[8][8] = 1;
    CHECK(derive_label(m, 1) == 0);
  }
  SUBCASE("filled disk of radius 10 survives radius-1 erosion") {
    CHECK(derive_label(filled_disk(32, 16, 16, 10), 1) == 1);
  }
  SUBCASE("binarizes values > 0 before eroding") {
    CHECK(derive_label(filled_disk(32, 16, 16, 10) * 4.0, 1) == 1);  // raw label values
  }
  SUBCASE("monotone under mask growth") {
    std::mt19937_64 rng(9);
    for (int t = 0; t < 25; ++t) {
      auto a = (torch::rand({16, 16}) > 0.6).to(torch::kFloat32);
      auto grown = torch::max(a, (torch::rand({16, 16}) > 0.7).to(torch::kFloat32));
      CHECK(derive_label(grown, 1) >= derive_label(a, 1));
    }
  }
}

TEST_CASE("connected components") {
  auto m = torch::zeros({8, 8});
  m[0][0] = 1;
  m[1][1] = 1;  // diagonal: same component under 8-connectivity
  m[5][5] = 1;
  m[5][6] = 1;
  SUBCASE("8-connectivity merges diagonals") {
    auto comps = connected_components(m, true);
    CHECK(comps.size() == 2);
    torch::Tensor uni = torch::zeros_like(m);
    for (const auto& c : comps) uni = torch::max(uni, c.to(torch::kFloat32));
    CHECK(torch::equal(uni, m));
  }
  SUBCASE("4-connectivity splits diagonals") {
    CHECK(connected_components(m, false).size() == 3);
  }
  SUBCASE("empty mask -> no components") {
    CHECK(connected_components(torch::zeros({4, 4}), true).empty());
  }
}
