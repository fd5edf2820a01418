#include <doctest.h>
#include <torch/torch.h>

#include <random>

#include "ganseg/classifier.hpp"
#include "ganseg/phantom.hpp"
#include "helpers.hpp"

using namespace ganseg;

TEST_CASE("rank AUC matches brute-force pairwise comparison") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 10; ++t) {
    std::vector<double> scores;
    std::vector<int> labels;
    for (int i = 0; i < 200; ++i) {
      double s = u(rng);
      if (rng() % 4 == 0) s = 0.5;  // force ties
      scores.push_back(s);
      labels.push_back(static_cast<int>(rng() % 2));
    }
    auto auc = auc_rank(scores, labels);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i)
      for (std::size_t j = 0; j < scores.size(); ++j) {
        if (labels[i] != 1 || labels[j] != 0) continue;
        den += 1.0;
        if (scores[i] > scores[j]) num += 1.0;
        else if (scores[i] == scores[j]) num += 0.5;
      }
    if (den == 0.0) {
      CHECK(!auc.has_value());
    } else {
      REQUIRE(auc.has_value());
      CHECK(*auc == doctest::Approx(num / den).epsilon(1e-9));
    }
  }
}

TEST_CASE("rank AUC is absent for one-class inputs") {
  CHECK(!auc_rank({0.1, 0.9}, {1, 1}).has_value());
  CHECK(!auc_rank({0.1, 0.9}, {0, 0}).has_value());
}

TEST_CASE("classifier config validation") {
  ClassifierConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.upsample_factor = 3;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.upsample_factor = 2;
  cfg.lr = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.lr = 1e-4;
  cfg.arch = "resnet";
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("constant classifier behaves as configured") {
  auto clf = testutil::constant_classifier(0.7);
  auto img = torch::rand({1, 128, 128});
  CHECK(clf.predict(img) == doctest::Approx(0.7).epsilon(1e-5));
  // Deterministic: repeated calls agree bit for bit.
  CHECK(clf.predict(img) == clf.predict(img));
}

TEST_CASE("prediction rejects wrong channel counts") {
  auto clf = testutil::constant_classifier(0.6, 1);
  CHECK_THROWS_AS(clf.predict(torch::rand({4, 128, 128})), StageError);
}

TEST_CASE("upsampling invariance: internal equals external") {
  torch::manual_seed(31);
  Classifier clf;
  clf.cfg.arch = "small_cnn";
  clf.cfg.base_width = 8;
  clf.cfg.upsample_factor = 2;
  clf.in_channels = 1;
  clf.net = SmallCnn(1, 8).ptr();
  auto img = torch::rand({1, 1, 128, 128});
  auto up = torch::nn::functional::interpolate(
      img, torch::nn::functional::InterpolateFuncOptions()
               .scale_factor(std::vector<double>{2.0, 2.0})
               .mode(torch::kBilinear)
               .align_corners(false));
  auto a = clf.predict_batch(img, true);
  auto b = clf.predict_batch(up, false);
  CHECK(a[0].item<double>() == doctest::Approx(b[0].item<double>()).epsilon(1e-6));
}

TEST_CASE("training rejects single-class datasets") {
  testutil::TempDir tmp("clf_single_class");
  PhantomSpec spec;
  spec.volumes_train = 2;
  spec.volumes_val = 1;
  spec.volumes_test = 1;
  spec.slices_per_volume = 4;
  spec.tumor_probability = 0.0;
  spec.rng_seed = 3;
  auto ds = gen_phantoms(spec);
  ClassifierConfig cfg;
  cfg.arch = "small_cnn";
  cfg.epochs = 1;
  CHECK_THROWS_AS(train_classifier(ds, cfg, 1, tmp.path), StageError);
}

TEST_CASE("eval metrics at threshold 0.5") {
  SUBCASE("constant 0.7 classifier: perfect sensitivity, zero specificity") {
    PhantomSpec spec;
    spec.volumes_train = 1;
    spec.volumes_val = 1;
    spec.volumes_test = 2;
    spec.slices_per_volume = 8;
    spec.rng_seed = 5;
    auto ds = gen_phantoms(spec);
    auto m = eval_classifier(testutil::constant_classifier(0.7), ds, Cohort::Test);
    CHECK(m.sensitivity == doctest::Approx(1.0));
    CHECK(m.specificity == doctest::Approx(0.0));
    REQUIRE(m.auc.has_value());
    CHECK(*m.auc == doctest::Approx(0.5).epsilon(1e-9));  // constant scores tie every pair
  }
}

TEST_CASE("classifier checkpoint round trip") {
  testutil::TempDir tmp("clf_rt");
  auto clf = testutil::constant_classifier(0.8);
  clf.save(tmp.path);
  auto back = Classifier::load(tmp.path);
  auto img = torch::rand({1, 128, 128});
  CHECK(back.predict(img) == doctest::Approx(clf.predict(img)).epsilon(1e-9));
}
