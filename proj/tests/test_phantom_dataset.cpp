#include <doctest.h>
#include <torch/torch.h>

#include <nlohmann/json.hpp>

#include "ganseg/phantom.hpp"
#include "ganseg/preprocess.hpp"
#include "helpers.hpp"

using namespace ganseg;

namespace {
PhantomSpec tiny_spec() {
  PhantomSpec s;
  s.volumes_train = 3;
  s.volumes_val = 1;
  s.volumes_test = 1;
  s.slices_per_volume = 6;
  s.rng_seed = 11;
  return s;
}
}  // namespace

TEST_CASE("phantom generation is a pure function of its spec") {
  auto a = gen_phantoms(tiny_spec());
  auto b = gen_phantoms(tiny_spec());
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(torch::equal(a.records[i].image, b.records[i].image));
    CHECK(a.records[i].label == b.records[i].label);
  }
}

TEST_CASE("phantom images live in [0,1] with zero background") {
  auto ds = gen_phantoms(tiny_spec());
  for (const auto& r : ds.records) {
    CHECK(r.image.min().item<double>() >= 0.0);
    CHECK(r.image.max().item<double>() <= 1.0);
    // Corner stays outside the brain ellipse.
    CHECK(r.image[0][0][0].item<double>() == 0.0);
  }
}

TEST_CASE("zero tumor probability yields only negative labels") {
  auto spec = tiny_spec();
  spec.tumor_probability = 0.0;
  for (const auto& r : gen_phantoms(spec).records) CHECK(r.label == 0);
}

TEST_CASE("planted blobs are brighter than the surrounding brain") {
  auto ds = gen_phantoms(tiny_spec());
  int checked = 0;
  for (const auto& r : ds.records) {
    if (r.label != 1) continue;
    REQUIRE(r.gt_mask.has_value());
    auto gt = *r.gt_mask;
    auto img = r.image[0];
    auto brain = (img > 0) & (gt < 0.5);
    double tumor_mean = img.masked_select(gt > 0.5).mean().item<double>();
    double brain_mean = img.masked_select(brain).mean().item<double>();
    CHECK(tumor_mean > brain_mean);
    ++checked;
  }
  CHECK(checked > 0);
}

TEST_CASE("labels agree with erosion of the ground truth") {
  auto ds = gen_phantoms(tiny_spec());
  for (const auto& r : ds.records) {
    if (!r.gt_mask) continue;
    CHECK(r.label == derive_label(*r.gt_mask, 1));
  }
}

TEST_CASE("infeasible tumor geometry is rejected") {
  auto spec = tiny_spec();
  spec.tumor_radius_max = 60.0;  // comparable to the brain itself
  CHECK_THROWS_AS(gen_phantoms(spec), ConfigError);
}

TEST_CASE("multi-channel phantoms share geometry across channels") {
  auto spec = tiny_spec();
  spec.channels = 4;
  auto ds = gen_phantoms(spec);
  CHECK(ds.channels.size() == 4);
  for (const auto& r : ds.records) {
    CHECK(r.image.size(0) == 4);
    // Support (nonzero region) matches between channels.
    auto s0 = r.image[0] > 0;
    for (int c = 1; c < 4; ++c) CHECK(torch::equal(s0, r.image[c] > 0));
  }
}

TEST_CASE("dataset save/load round trip") {
  testutil::TempDir tmp("dataset_rt");
  auto ds = gen_phantoms(tiny_spec());
  save_dataset(tmp.path, ds);
  auto back = load_dataset(tmp.path);
  REQUIRE(back.records.size() == ds.records.size());
  // Loading sorts deterministically; compare via id lookup.
  std::map<std::string, const SliceRecord*> by_id;
  for (const auto& r : ds.records) by_id[r.id()] = &r;
  for (const auto& r : back.records) {
    const auto* orig = by_id.at(r.id());
    CHECK(torch::equal(r.image, orig->image));
    CHECK(r.label == orig->label);
    CHECK(r.cohort == orig->cohort);
    CHECK(r.gt_mask.has_value() == orig->gt_mask.has_value());
    if (r.gt_mask) CHECK(torch::equal(*r.gt_mask, *orig->gt_mask));
  }
  CHECK(fs::exists(tmp.path / "manifest.json"));
}
