#include <doctest.h>
#include <torch/torch.h>

#include <random>

#include "ganseg/filter_eval.hpp"
#include "helpers.hpp"

using namespace ganseg;

TEST_CASE("difference score examples") {
  auto x = torch::full({4, 4}, 0.5f);
  SUBCASE("empty mask -> exactly 1") {
    CHECK(difference_score(x, torch::rand({4, 4}), torch::zeros({4, 4})) == 1.0);
  }
  SUBCASE("identical variant, nonempty mask -> 0") {
    CHECK(difference_score(x, x, torch::ones({4, 4})) == doctest::Approx(0.0));
  }
  SUBCASE("two-pixel mask with diffs 0.8 and 0.0 -> 0.4") {
    auto xhat = x.clone();
    xhat[0][0] = 1.3f;  // |0.5 - 1.3| = 0.8
    auto m = torch::zeros({4, 4});
    m[0][0] = 1;
    m[1][1] = 1;  // diff 0 there
    CHECK(difference_score(x, xhat, m) == doctest::Approx(0.4).epsilon(1e-6));
  }
  SUBCASE("invariant to values outside the mask support") {
    auto m = torch::zeros({4, 4});
    m[2][2] = 1;
    auto xa = torch::rand({4, 4});
    auto xb = xa.clone();
    xb[0][0] = 0.0f;
    CHECK(difference_score(x, xa, m) == doctest::Approx(difference_score(x, xb, m)).epsilon(1e-12));
  }
  SUBCASE("shape mismatch is an error") {
    CHECK_THROWS(difference_score(x, torch::rand({5, 5}), torch::ones({4, 4})));
  }
}

TEST_CASE("dice examples and brute-force oracle") {
  SUBCASE("identical nonempty masks -> 1") {
    auto m = (torch::rand({8, 8}) > 0.5).to(torch::kFloat32);
    m[0][0] = 1;
    CHECK(dice(m, m) == doctest::Approx(1.0));
  }
  SUBCASE("disjoint nonempty -> 0") {
    auto a = torch::zeros({4, 4});
    auto b = torch::zeros({4, 4});
    a[0][0] = 1;
    b[3][3] = 1;
    CHECK(dice(a, b) == doctest::Approx(0.0));
  }
  SUBCASE("2 vs 2 pixels, overlap 1 -> 0.5") {
    auto a = torch::zeros({2, 2});
    auto b = torch::zeros({2, 2});
    a[0][0] = a[0][1] = 1;
    b[0][0] = b[1][1] = 1;
    CHECK(dice(a, b) == doctest::Approx(0.5));
  }
  SUBCASE("both empty -> 1, one empty -> 0") {
    auto z = torch::zeros({4, 4});
    auto o = torch::ones({4, 4});
    CHECK(dice(z, z) == doctest::Approx(1.0));
    CHECK(dice(z, o) == doctest::Approx(0.0));
  }
  SUBCASE("matches set arithmetic on 1000 random masks and is symmetric") {
    std::mt19937_64 rng(7);
    for (int t = 0; t < 1000; ++t) {
      std::int64_t h = 1 + static_cast<std::int64_t>(rng() % 16);
      std::int64_t w = 1 + static_cast<std::int64_t>(rng() % 16);
      auto a = torch::zeros({h, w});
      auto b = torch::zeros({h, w});
      std::size_t na = 0, nb = 0, ni = 0;
      for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) {
          bool ia = rng() % 2, ib = rng() % 2;
          if (ia) { a[y][x] = 1; ++na; }
          if (ib) { b[y][x] = 1; ++nb; }
          if (ia && ib) ++ni;
        }
      double expected = (na + nb) == 0 ? 1.0 : 2.0 * static_cast<double>(ni) /
                                                    static_cast<double>(na + nb);
      CHECK(dice(a, b) == doctest::Approx(expected).epsilon(1e-9));
      CHECK(dice(b, a) == doctest::Approx(dice(a, b)).epsilon(1e-12));
    }
  }
}

TEST_CASE("pearson examples") {
  CHECK(*pearson({1, 2, 3, 4}, {2, 4, 6, 8}) == doctest::Approx(1.0));
  CHECK(*pearson({1, 2, 3, 4}, {8, 6, 4, 2}) == doctest::Approx(-1.0));
  CHECK(!pearson({1, 1, 1}, {1, 2, 3}).has_value());  // zero variance
  CHECK(!pearson({1}, {1}).has_value());
}

namespace {
std::vector<ScoredSegmentation> random_items(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<ScoredSegmentation> items;
  for (std::size_t i = 0; i < n; ++i) {
    ScoredSegmentation s;
    s.id = "v/" + std::to_string(i);
    s.d = u(rng);
    s.dice = u(rng);
    items.push_back(s);
  }
  return items;
}
}  // namespace

TEST_CASE("filtering boundaries and monotonicity") {
  auto items = random_items(500, 3);
  SUBCASE("t = 0 removes nothing") {
    CHECK(filter_by_threshold(items, 0.0).removed.empty());
  }
  SUBCASE("t = 1 keeps only d = 1 items") {
    ScoredSegmentation empty_mask;
    empty_mask.id = "e/0";
    empty_mask.d = 1.0;
    auto with_empty = items;
    with_empty.push_back(empty_mask);
    auto fr = filter_by_threshold(with_empty, 1.0);
    for (const auto& k : fr.kept) CHECK(k.d == 1.0);
    CHECK(fr.kept.size() >= 1);
  }
  SUBCASE("removed sets nest as the threshold grows") {
    std::size_t prev = 0;
    for (double t = 0.0; t <= 0.91; t += 0.1) {
      auto fr = filter_by_threshold(items, t);
      CHECK(fr.removed.size() >= prev);
      for (const auto& r : fr.removed) CHECK(r.d < t);
      prev = fr.removed.size();
    }
  }
  SUBCASE("stable order preserved") {
    auto fr = filter_by_threshold(items, 0.5);
    for (std::size_t i = 1; i < fr.kept.size(); ++i) {
      auto a = std::stoul(fr.kept[i - 1].id.substr(2));
      auto b = std::stoul(fr.kept[i].id.substr(2));
      CHECK(a < b);
    }
  }
}

TEST_CASE("sweep report shape") {
  testutil::TempDir tmp("sweep");
  auto items = random_items(200, 11);
  std::vector<double> thresholds;
  for (int k = 0; k <= 9; ++k) thresholds.push_back(0.1 * k);
  auto rows = sweep_report(items, thresholds, tmp.path / "sweep.csv", tmp.path / "sweep.svg");
  REQUIRE(rows.size() == 10);
  CHECK(rows[0].percent_removed == 0.0);
  CHECK(!rows[0].removed_dice.has_value());
  for (std::size_t i = 1; i < rows.size(); ++i)
    CHECK(rows[i].percent_removed >= rows[i - 1].percent_removed);
  CHECK(fs::exists(tmp.path / "sweep.csv"));
  CHECK(fs::exists(tmp.path / "sweep.svg"));
}

TEST_CASE("scores csv round trip") {
  testutil::TempDir tmp("scores");
  auto items = random_items(25, 5);
  items[3].dice.reset();
  save_scores_csv(tmp.path / "scores.csv", items);
  auto back = load_scores_csv(tmp.path / "scores.csv");
  REQUIRE(back.size() == items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    CHECK(back[i].id == items[i].id);
    CHECK(back[i].d == doctest::Approx(items[i].d).epsilon(1e-5));
    CHECK(back[i].dice.has_value() == items[i].dice.has_value());
  }
}

TEST_CASE("mean with confidence interval") {
  auto m = mean_ci({1.0, 2.0, 3.0});
  CHECK(m.mean == doctest::Approx(2.0));
  CHECK(m.ci95 == doctest::Approx(1.96 * 1.0 / std::sqrt(3.0)).epsilon(1e-3));
  CHECK(mean_ci({5.0}).ci95 == 0.0);
}
