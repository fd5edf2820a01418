#pragma once

#include <torch/torch.h>

#include <string>
#include <vector>

#include "ganseg/common.hpp"
#include "ganseg/io.hpp"

namespace ganseg {

constexpr std::int64_t kLatentDim = 100;

// ---------------------------------------------------------------------------
// Classifier backbones
// ---------------------------------------------------------------------------

/// VGG16 with batch normalization; first conv takes `in_channels`, the head
/// ends in a single logit.
struct Vgg16BnImpl : torch::nn::Module {
  Vgg16BnImpl(std::int64_t in_channels);
  torch::Tensor forward(torch::Tensor x);  // (N, 1) logits

  torch::nn::Sequential features{nullptr};
  torch::nn::AdaptiveAvgPool2d pool{nullptr};
  torch::nn::Sequential head{nullptr};
};
TORCH_MODULE(Vgg16Bn);

/// Compact CNN classifier for desk-scale runs: strided conv blocks, global
/// average pooling, one logit.
struct SmallCnnImpl : torch::nn::Module {
  SmallCnnImpl(std::int64_t in_channels, std::int64_t base_width = 16);
  torch::Tensor forward(torch::Tensor x);

  torch::nn::Sequential features{nullptr};
  torch::nn::Linear fc{nullptr};
};
TORCH_MODULE(SmallCnn);

// ---------------------------------------------------------------------------
// GAN components
// ---------------------------------------------------------------------------

/// Six transposed-convolution blocks mapping a latent vector to a 1x128x128
/// image. Batch norm + ReLU on all but the last block, which uses a sigmoid.
struct DcganGeneratorImpl : torch::nn::Module {
  DcganGeneratorImpl(std::int64_t base_width = 64, std::int64_t out_channels = 1);
  /// z: (N, 100) -> (N, out_channels, 128, 128)
  torch::Tensor forward(torch::Tensor z);
  /// One decoder stage; used by the U-Net which interleaves skip fusion.
  torch::Tensor stage(int i, torch::Tensor x);

  std::int64_t base_width;
  std::vector<torch::nn::Sequential> blocks;  // 6 stages
};
TORCH_MODULE(DcganGenerator);

/// Six convolution blocks, leaky ReLU 0.2, batch norm on all but the first
/// and last. `out_features` is 1 for discriminators (sigmoid head) and 100
/// for U-Net encoders (linear head).
struct ConvEncoderImpl : torch::nn::Module {
  ConvEncoderImpl(std::int64_t in_channels, std::int64_t base_width, std::int64_t out_features,
                  bool sigmoid_head);
  /// Returns the final (N, out_features) output.
  torch::Tensor forward(torch::Tensor x);
  /// Returns intermediate features (one per stage, highest resolution first)
  /// plus the final output.
  std::pair<std::vector<torch::Tensor>, torch::Tensor> forward_features(torch::Tensor x);

  std::int64_t base_width;
  bool sigmoid_head;
  std::vector<torch::nn::Sequential> blocks;  // 6 stages
};
TORCH_MODULE(ConvEncoder);

using Discriminator = ConvEncoder;

Discriminator make_discriminator(std::int64_t in_channels, std::int64_t base_width);

/// Encoder + generator joined by skip blocks. Each skip connection is two
/// conv+ReLU stages: the first transforms the encoder feature, its output is
/// concatenated with the decoder feature and passed through the second.
struct ConverterUNetImpl : torch::nn::Module {
  ConverterUNetImpl(std::int64_t in_channels, std::int64_t base_width = 64,
                    std::int64_t out_channels = 1);
  /// Returns (output image, latent encoding z-hat).
  std::pair<torch::Tensor, torch::Tensor> forward(torch::Tensor x);

  /// Copies pretrained generator weights into the decoder, bit for bit.
  void init_decoder_from(const DcganGenerator& g);

  std::int64_t base_width;
  ConvEncoder encoder{nullptr};
  DcganGenerator decoder{nullptr};
  std::vector<torch::nn::Sequential> skip_pre;   // on encoder features
  std::vector<torch::nn::Sequential> skip_post;  // after concatenation
};
TORCH_MODULE(ConverterUNet);

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

/// Writes <dir>/model.pt plus <dir>/config.json carrying the architecture
/// parameters and an FNV-1a hash for provenance.
void save_checkpoint(const fs::path& dir, torch::nn::Module& module, const json& config);

/// Reads <dir>/config.json; the caller rebuilds the module from it and then
/// calls load_weights.
json load_checkpoint_config(const fs::path& dir);
void load_weights(const fs::path& dir, torch::nn::Module& module);

std::string checkpoint_hash(const fs::path& dir);

}  // namespace ganseg
