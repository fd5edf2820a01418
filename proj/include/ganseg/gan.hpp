#pragma once

#include <torch/torch.h>

#include "ganseg/dataset.hpp"
#include "ganseg/models.hpp"
#include "ganseg/rise.hpp"

namespace ganseg {

struct ConverterConfig {
  double alpha = 10.0;   // reconstruction scale
  double beta = 0.05;    // adversarial scale
  double gamma = 1.0;    // KL scale
  std::int64_t g_epochs = 100;
  std::int64_t u_epochs = 200;
  std::int64_t batch_size = 32;
  double lr = 2e-4;
  std::int64_t lr_half_every = 50;  // epochs between halvings
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double real_target = 0.9;  // one-sided label smoothing
  double fake_target = 0.1;
  std::int64_t base_width = 64;
  bool deterministic = false;

  static ConverterConfig from_json(const json& j);
  json to_json() const;
  void validate() const;
};

/// BCE of discriminator outputs against a constant (smoothed) target.
/// At D = 0.5 this evaluates to log 2 regardless of the target.
torch::Tensor smoothed_bce(const torch::Tensor& d_out, double target);

/// Per-vector Gaussian divergence penalty on latent encodings, as a mean over
/// the batch of -((2 log sigma) - sigma^2 - mu^2 + 1); mu and sigma are the
/// mean and (population) standard deviation across the vector's elements.
torch::Tensor kl_loss(const torch::Tensor& z_batch);

/// Masked L1 reconstruction: per image the mean |x - xhat| over the negative
/// seed support, averaged over the batch. Images with an empty support are
/// skipped with a warning.
torch::Tensor recon_loss(const torch::Tensor& x, const torch::Tensor& xhat,
                         const torch::Tensor& s_neg);

struct GanHandle {
  DcganGenerator g{nullptr};
  Discriminator d0{nullptr};
  std::int64_t base_width;

  void save(const fs::path& dir) const;
  static GanHandle load(const fs::path& dir);
};

/// DCGAN pretraining of the generator on non-cancerous FLAIR slices with
/// one-sided label smoothing. `nc_flair` is (N, 1, 128, 128).
GanHandle train_generator(const torch::Tensor& nc_flair, const ConverterConfig& cfg,
                          std::uint64_t rng_seed, const fs::path& out_dir);

/// Keeps record ids whose negative-seed pixel fraction is strictly below 0.5.
std::vector<std::string> select_conversion_subset(const std::vector<std::string>& candidate_ids,
                                                  const SeedSet& seeds);

struct ConverterHandle {
  ConverterUNet u{nullptr};
  std::int64_t base_width;

  void save(const fs::path& dir) const;
  static ConverterHandle load(const fs::path& dir);
};

/// Trains the skip-connected conversion U-Net, decoder initialized from the
/// pretrained generator. `xc_flair` are the selected cancerous FLAIR slices
/// with their negative seeds; `nc_flair` supplies the real batches for the
/// new discriminator.
ConverterHandle train_converter(const GanHandle& gan, const torch::Tensor& xc_flair,
                                const torch::Tensor& xc_neg_seeds, const torch::Tensor& nc_flair,
                                const ConverterConfig& cfg, std::uint64_t rng_seed,
                                const fs::path& out_dir);

/// Deterministic conversion of a (1, 128, 128) FLAIR slice to its
/// non-cancerous variant.
torch::Tensor convert(const ConverterHandle& conv, const torch::Tensor& x_flair);

}  // namespace ganseg
