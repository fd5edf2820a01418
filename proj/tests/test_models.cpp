#include <doctest.h>
#include <torch/torch.h>

#include <nlohmann/json.hpp>

#include "ganseg/models.hpp"
#include "helpers.hpp"

using namespace ganseg;

TEST_CASE("generator maps latents to sigmoid-bounded 128x128 images") {
  torch::manual_seed(1);
  DcganGenerator g(16, 1);
  torch::NoGradGuard ng;
  auto out = g->forward(torch::randn({2, kLatentDim}));
  CHECK(out.sizes() == torch::IntArrayRef({2, 1, 128, 128}));
  CHECK(out.min().item<double>() >= 0.0);
  CHECK(out.max().item<double>() <= 1.0);
}

TEST_CASE("encoder produces latent vectors and five intermediate features") {
  torch::manual_seed(2);
  ConvEncoder e(1, 16, kLatentDim, /*sigmoid_head=*/false);
  torch::NoGradGuard ng;
  auto [feats, z] = e->forward_features(torch::rand({2, 1, 128, 128}));
  CHECK(z.sizes() == torch::IntArrayRef({2, kLatentDim}));
  CHECK(feats.size() == 5);
  std::int64_t res = 64;
  for (const auto& f : feats) {
    CHECK(f.size(2) == res);
    res /= 2;
  }
}

TEST_CASE("discriminator outputs probabilities") {
  torch::manual_seed(3);
  auto d = make_discriminator(1, 16);
  torch::NoGradGuard ng;
  auto out = d->forward(torch::rand({4, 1, 128, 128}));
  CHECK(out.sizes() == torch::IntArrayRef({4, 1}));
  CHECK(out.min().item<double>() >= 0.0);
  CHECK(out.max().item<double>() <= 1.0);
}

TEST_CASE("converter U-Net forward shape and decoder initialization") {
  torch::manual_seed(4);
  DcganGenerator g(16, 1);
  ConverterUNet u(1, 16, 1);
  u->init_decoder_from(g);

  SUBCASE("decoder weights are bit-identical to the pretrained generator") {
    auto gp = g->named_parameters();
    auto dp = u->decoder->named_parameters();
    REQUIRE(gp.size() == dp.size());
    for (const auto& item : gp) {
      CHECK(torch::equal(item.value(), *dp.find(item.key())));
    }
    auto gb = g->named_buffers();
    auto db = u->decoder->named_buffers();
    for (const auto& item : gb) {
      CHECK(torch::equal(item.value(), *db.find(item.key())));
    }
  }

  SUBCASE("forward yields an image and a latent") {
    torch::NoGradGuard ng;
    auto [img, z] = u->forward(torch::rand({2, 1, 128, 128}));
    CHECK(img.sizes() == torch::IntArrayRef({2, 1, 128, 128}));
    CHECK(z.sizes() == torch::IntArrayRef({2, kLatentDim}));
    CHECK(img.min().item<double>() >= 0.0);
    CHECK(img.max().item<double>() <= 1.0);
  }
}

TEST_CASE("small classifier backbones produce one logit") {
  torch::manual_seed(5);
  torch::NoGradGuard ng;
  SmallCnn cnn(4, 8);
  CHECK(cnn->forward(torch::rand({3, 4, 128, 128})).sizes() == torch::IntArrayRef({3, 1}));
  Vgg16Bn vgg(1);
  CHECK(vgg->forward(torch::rand({1, 1, 64, 64})).sizes() == torch::IntArrayRef({1, 1}));
}

TEST_CASE("checkpoint round trip restores weights exactly") {
  testutil::TempDir tmp("ckpt");
  torch::manual_seed(6);
  DcganGenerator g(8, 1);
  save_checkpoint(tmp.path, *g, json{{"kind", "test"}, {"base_width", 8}});
  CHECK(load_checkpoint_config(tmp.path).at("base_width") == 8);
  DcganGenerator g2(8, 1);
  load_weights(tmp.path, *g2);
  for (const auto& item : g->named_parameters())
    CHECK(torch::equal(item.value(), *g2->named_parameters().find(item.key())));
  CHECK(!checkpoint_hash(tmp.path).empty());
}
