#include "ganseg/models.hpp"

#include <fstream>
#include <nlohmann/json.hpp>

namespace ganseg {

// ---------------------------------------------------------------------------
// Vgg16Bn
// ---------------------------------------------------------------------------

Vgg16BnImpl::Vgg16BnImpl(std::int64_t in_channels) {
  // Configuration D with batch norm: M marks 2x2 max pooling.
  const std::vector<std::int64_t> cfg = {64,  64,  -1, 128, 128, -1, 256, 256, 256, -1,
                                         512, 512, 512, -1, 512, 512, 512, -1};
  features = torch::nn::Sequential();
  std::int64_t c_in = in_channels;
  for (auto c : cfg) {
    if (c == -1) {
      features->push_back(torch::nn::MaxPool2d(torch::nn::MaxPool2dOptions(2).stride(2)));
    } else {
      features->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(c_in, c, 3).padding(1)));
      features->push_back(torch::nn::BatchNorm2d(c));
      features->push_back(torch::nn::ReLU(torch::nn::ReLUOptions().inplace(true)));
      c_in = c;
    }
  }
  pool = torch::nn::AdaptiveAvgPool2d(torch::nn::AdaptiveAvgPool2dOptions(7));
  head = torch::nn::Sequential(
      torch::nn::Linear(512 * 7 * 7, 4096), torch::nn::ReLU(torch::nn::ReLUOptions().inplace(true)),
      torch::nn::Dropout(0.5), torch::nn::Linear(4096, 4096),
      torch::nn::ReLU(torch::nn::ReLUOptions().inplace(true)), torch::nn::Dropout(0.5),
      torch::nn::Linear(4096, 1));
  register_module("features", features);
  register_module("pool", pool);
  register_module("head", head);
}

torch::Tensor Vgg16BnImpl::forward(torch::Tensor x) {
  x = features->forward(x);
  x = pool(x);
  return head->forward(x.flatten(1));
}

// ---------------------------------------------------------------------------
// SmallCnn
// ---------------------------------------------------------------------------

SmallCnnImpl::SmallCnnImpl(std::int64_t in_channels, std::int64_t base_width) {
  features = torch::nn::Sequential();
  std::int64_t c_in = in_channels;
  for (int i = 0; i < 4; ++i) {
    std::int64_t c_out = base_width << i;
    features->push_back(
        torch::nn::Conv2d(torch::nn::Conv2dOptions(c_in, c_out, 3).stride(2).padding(1)));
    features->push_back(torch::nn::BatchNorm2d(c_out));
    features->push_back(torch::nn::ReLU(torch::nn::ReLUOptions().inplace(true)));
    c_in = c_out;
  }
  fc = torch::nn::Linear(c_in, 1);
  register_module("features", features);
  register_module("fc", fc);
}

torch::Tensor SmallCnnImpl::forward(torch::Tensor x) {
  x = features->forward(x);
  x = torch::adaptive_avg_pool2d(x, {1, 1}).flatten(1);
  return fc(x);
}

// ---------------------------------------------------------------------------
// DcganGenerator
// ---------------------------------------------------------------------------

DcganGeneratorImpl::DcganGeneratorImpl(std::int64_t w, std::int64_t out_channels)
    : base_width(w) {
  const std::int64_t w2 = std::max<std::int64_t>(w / 2, 4);
  // 1x1 -> 4 -> 8 -> 16 -> 32 -> 64 -> 128
  const std::vector<std::int64_t> chans = {kLatentDim, 8 * w, 4 * w, 2 * w, w, w2, out_channels};
  for (int i = 0; i < 6; ++i) {
    torch::nn::Sequential block;
    auto opts = torch::nn::ConvTranspose2dOptions(chans[i], chans[i + 1], 4);
    if (i == 0)
      opts.stride(1).padding(0);
    else
      opts.stride(2).padding(1);
    block->push_back(torch::nn::ConvTranspose2d(opts));
    if (i < 5) {
      block->push_back(torch::nn::BatchNorm2d(chans[i + 1]));
      block->push_back(torch::nn::ReLU(torch::nn::ReLUOptions().inplace(true)));
    } else {
      block->push_back(torch::nn::Sigmoid());
    }
    blocks.push_back(block);
    register_module("block" + std::to_string(i), block);
  }
}

torch::Tensor DcganGeneratorImpl::forward(torch::Tensor z) {
  auto x = z.view({z.size(0), kLatentDim, 1, 1});
  for (auto& b : blocks) x = b->forward(x);
  return x;
}

torch::Tensor DcganGeneratorImpl::stage(int i, torch::Tensor x) { return blocks[i]->forward(x); }

// ---------------------------------------------------------------------------
// ConvEncoder
// ---------------------------------------------------------------------------

ConvEncoderImpl::ConvEncoderImpl(std::int64_t in_channels, std::int64_t w,
                                 std::int64_t out_features, bool sigmoid)
    : base_width(w), sigmoid_head(sigmoid) {
  const std::int64_t w2 = std::max<std::int64_t>(w / 2, 4);
  // 128 -> 64 -> 32 -> 16 -> 8 -> 4 -> 1
  const std::vector<std::int64_t> chans = {in_channels, w2, w, 2 * w, 4 * w, 8 * w, out_features};
  for (int i = 0; i < 6; ++i) {
    torch::nn::Sequential block;
    auto opts = torch::nn::Conv2dOptions(chans[i], chans[i + 1], 4);
    if (i == 5)
      opts.stride(1).padding(0);
    else
      opts.stride(2).padding(1);
    block->push_back(torch::nn::Conv2d(opts));
    if (i < 5) {
      if (i != 0) block->push_back(torch::nn::BatchNorm2d(chans[i + 1]));
      block->push_back(torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)));
    } else if (sigmoid_head) {
      block->push_back(torch::nn::Sigmoid());
    }
    blocks.push_back(block);
    register_module("block" + std::to_string(i), block);
  }
}

torch::Tensor ConvEncoderImpl::forward(torch::Tensor x) {
  for (auto& b : blocks) x = b->forward(x);
  return x.flatten(1);
}

std::pair<std::vector<torch::Tensor>, torch::Tensor> ConvEncoderImpl::forward_features(
    torch::Tensor x) {
  std::vector<torch::Tensor> feats;
  for (int i = 0; i < 5; ++i) {
    x = blocks[i]->forward(x);
    feats.push_back(x);
  }
  auto out = blocks[5]->forward(x).flatten(1);
  return {feats, out};
}

Discriminator make_discriminator(std::int64_t in_channels, std::int64_t base_width) {
  return Discriminator(in_channels, base_width, 1, /*sigmoid_head=*/true);
}

// ---------------------------------------------------------------------------
// ConverterUNet
// ---------------------------------------------------------------------------

ConverterUNetImpl::ConverterUNetImpl(std::int64_t in_channels, std::int64_t w,
                                     std::int64_t out_channels)
    : base_width(w) {
  encoder = ConvEncoder(in_channels, w, kLatentDim, /*sigmoid_head=*/false);
  decoder = DcganGenerator(w, out_channels);
  register_module("encoder", encoder);
  register_module("decoder", decoder);
  const std::int64_t w2 = std::max<std::int64_t>(w / 2, 4);
  // Encoder features, highest resolution first: 64², 32², 16², 8², 4².
  const std::vector<std::int64_t> chans = {w2, w, 2 * w, 4 * w, 8 * w};
  for (int i = 0; i < 5; ++i) {
    auto c = chans[static_cast<std::size_t>(i)];
    torch::nn::Sequential pre(
        torch::nn::Conv2d(torch::nn::Conv2dOptions(c, c, 3).padding(1)),
        torch::nn::ReLU(torch::nn::ReLUOptions().inplace(true)));
    torch::nn::Sequential post(
        torch::nn::Conv2d(torch::nn::Conv2dOptions(2 * c, c, 3).padding(1)),
        torch::nn::ReLU(torch::nn::ReLUOptions().inplace(true)));
    skip_pre.push_back(pre);
    skip_post.push_back(post);
    register_module("skip_pre" + std::to_string(i), pre);
    register_module("skip_post" + std::to_string(i), post);
  }
}

std::pair<torch::Tensor, torch::Tensor> ConverterUNetImpl::forward(torch::Tensor x) {
  auto [feats, z] = encoder->forward_features(x);
  // feats: 64²(w/2), 32²(w), 16²(2w), 8²(4w), 4²(8w)
  auto d = decoder->stage(0, z.view({z.size(0), kLatentDim, 1, 1}));  // 4², 8w
  for (int level = 4; level >= 0; --level) {
    auto s = skip_pre[static_cast<std::size_t>(level)]->forward(feats[static_cast<std::size_t>(level)]);
    d = skip_post[static_cast<std::size_t>(level)]->forward(torch::cat({s, d}, 1));
    d = decoder->stage(5 - level, d);
  }
  return {d, z};
}

void ConverterUNetImpl::init_decoder_from(const DcganGenerator& g) {
  torch::NoGradGuard ng;
  auto src = g->named_parameters();
  auto dst = decoder->named_parameters();
  for (const auto& item : src) {
    dst[item.key()].copy_(item.value());
  }
  auto src_b = g->named_buffers();
  auto dst_b = decoder->named_buffers();
  for (const auto& item : src_b) {
    dst_b[item.key()].copy_(item.value());
  }
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

void save_checkpoint(const fs::path& dir, torch::nn::Module& module, const json& config) {
  fs::create_directories(dir);
  torch::serialize::OutputArchive archive;
  module.save(archive);
  archive.save_to((dir / "model.pt").string());
  json cfg = config;
  cfg["config_hash"] = hex64(fnv1a(config.dump()));
  write_json(dir / "config.json", cfg);
}

json load_checkpoint_config(const fs::path& dir) {
  if (!fs::exists(dir / "config.json"))
    throw StageError("checkpoint config not found in " + dir.string());
  return read_json(dir / "config.json");
}

void load_weights(const fs::path& dir, torch::nn::Module& module) {
  if (!fs::exists(dir / "model.pt")) throw StageError("checkpoint not found in " + dir.string());
  torch::serialize::InputArchive archive;
  archive.load_from((dir / "model.pt").string());
  module.load(archive);
}

std::string checkpoint_hash(const fs::path& dir) {
  return load_checkpoint_config(dir).value("config_hash", "");
}

}  // namespace ganseg
