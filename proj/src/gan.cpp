#include "ganseg/gan.hpp"

#include <iostream>
#include <nlohmann/json.hpp>
#include <random>

namespace ganseg {

namespace {
constexpr double kLogEps = 1e-8;
}

ConverterConfig ConverterConfig::from_json(const json& j) {
  ConverterConfig c;
  c.alpha = j.value("alpha", c.alpha);
  c.beta = j.value("beta", c.beta);
  c.gamma = j.value("gamma", c.gamma);
  c.g_epochs = j.value("g_epochs", c.g_epochs);
  c.u_epochs = j.value("u_epochs", c.u_epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.lr_half_every = j.value("lr_half_every", c.lr_half_every);
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
  c.real_target = j.value("real_target", c.real_target);
  c.fake_target = j.value("fake_target", c.fake_target);
  c.base_width = j.value("base_width", c.base_width);
  c.deterministic = j.value("deterministic", c.deterministic);
  c.validate();
  return c;
}

json ConverterConfig::to_json() const {
  return json{{"alpha", alpha},
              {"beta", beta},
              {"gamma", gamma},
              {"g_epochs", g_epochs},
              {"u_epochs", u_epochs},
              {"batch_size", batch_size},
              {"lr", lr},
              {"lr_half_every", lr_half_every},
              {"adam_beta1", adam_beta1},
              {"adam_beta2", adam_beta2},
              {"real_target", real_target},
              {"fake_target", fake_target},
              {"base_width", base_width},
              {"deterministic", deterministic}};
}

void ConverterConfig::validate() const {
  if (alpha < 0 || beta < 0 || gamma < 0)
    throw ConfigError("loss scales must be non-negative");
  if (lr <= 0) throw ConfigError("lr must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

torch::Tensor smoothed_bce(const torch::Tensor& d_out, double target) {
  auto d = d_out.clamp(kLogEps, 1.0 - kLogEps);
  return -(target * d.log() + (1.0 - target) * (1.0 - d).log()).mean();
}

torch::Tensor kl_loss(const torch::Tensor& z_batch) {
  TORCH_CHECK(z_batch.dim() == 2, "expected (N, latent) batch");
  auto mu = z_batch.mean(1);
  auto sigma = z_batch.std(1, /*unbiased=*/false);
  auto term = 2.0 * (sigma + kLogEps).log() - sigma.square() - mu.square() + 1.0;
  return -term.mean();
}

torch::Tensor recon_loss(const torch::Tensor& x, const torch::Tensor& xhat,
                         const torch::Tensor& s_neg) {
  TORCH_CHECK(x.sizes() == xhat.sizes(), "x / xhat shape mismatch");
  auto diff = (x - xhat).abs().flatten(1);        // (N, H*W), single channel
  auto mask = s_neg.flatten(1).to(diff.dtype());  // (N, H*W)
  auto support = mask.sum(1);                     // (N)
  auto nonempty = support > 0;
  if (!nonempty.any().item<bool>()) {
    std::cerr << "[ganseg] warning: all images in batch have empty negative seeds\n";
    return torch::zeros({}, diff.options());
  }
  if (!nonempty.all().item<bool>())
    std::cerr << "[ganseg] warning: image with empty negative seeds skipped from recon loss\n";
  auto per_image = (diff * mask).sum(1) / support.clamp_min(1.0);
  return per_image.masked_select(nonempty).mean();
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

void GanHandle::save(const fs::path& dir) const {
  auto g_ = g;  // holder copy: shared module, non-const access
  auto d_ = d0;
  save_checkpoint(dir / "g", *g_, json{{"kind", "dcgan_generator"}, {"base_width", base_width}});
  save_checkpoint(dir / "d0", *d_, json{{"kind", "discriminator"}, {"base_width", base_width}});
}

GanHandle GanHandle::load(const fs::path& dir) {
  GanHandle h;
  auto cfg = load_checkpoint_config(dir / "g");
  h.base_width = cfg.at("base_width").get<std::int64_t>();
  h.g = DcganGenerator(h.base_width, 1);
  load_weights(dir / "g", *h.g);
  h.d0 = make_discriminator(1, h.base_width);
  load_weights(dir / "d0", *h.d0);
  return h;
}

void ConverterHandle::save(const fs::path& dir) const {
  auto u_ = u;
  save_checkpoint(dir, *u_, json{{"kind", "converter_unet"}, {"base_width", base_width}});
}

ConverterHandle ConverterHandle::load(const fs::path& dir) {
  ConverterHandle h;
  auto cfg = load_checkpoint_config(dir);
  h.base_width = cfg.at("base_width").get<std::int64_t>();
  h.u = ConverterUNet(1, h.base_width, 1);
  load_weights(dir, *h.u);
  return h;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

void set_lr(torch::optim::Adam& opt, double lr) {
  for (auto& g : opt.param_groups())
    static_cast<torch::optim::AdamOptions&>(g.options()).lr(lr);
}

torch::Tensor shuffled_batch(const torch::Tensor& data, std::mt19937_64& rng, std::int64_t B) {
  std::vector<std::int64_t> idx(static_cast<std::size_t>(B));
  std::uniform_int_distribution<std::int64_t> d(0, data.size(0) - 1);
  for (auto& i : idx) i = d(rng);
  return data.index_select(0, torch::tensor(idx));
}

}  // namespace

GanHandle train_generator(const torch::Tensor& nc_flair, const ConverterConfig& cfg,
                          std::uint64_t rng_seed, const fs::path& out_dir) {
  if (nc_flair.numel() == 0 || nc_flair.size(0) == 0)
    throw StageError("generator pretraining needs a nonempty non-cancerous FLAIR set");
  cfg.validate();
  set_determinism(rng_seed, cfg.deterministic);

  GanHandle h;
  h.base_width = cfg.base_width;
  h.g = DcganGenerator(cfg.base_width, 1);
  h.d0 = make_discriminator(1, cfg.base_width);

  torch::optim::Adam opt_g(h.g->parameters(), torch::optim::AdamOptions(cfg.lr).betas(
                                                  {cfg.adam_beta1, cfg.adam_beta2}));
  torch::optim::Adam opt_d(h.d0->parameters(), torch::optim::AdamOptions(cfg.lr).betas(
                                                   {cfg.adam_beta1, cfg.adam_beta2}));
  std::mt19937_64 rng(derive_seed(rng_seed, "gan"));
  const auto B = cfg.batch_size;
  const auto steps = std::max<std::int64_t>(1, nc_flair.size(0) / B);

  std::vector<std::vector<std::string>> log_rows;
  double lr = cfg.lr;
  for (std::int64_t epoch = 0; epoch < cfg.g_epochs; ++epoch) {
    if (epoch > 0 && cfg.lr_half_every > 0 && epoch % cfg.lr_half_every == 0) {
      lr *= 0.5;
      set_lr(opt_g, lr);
      set_lr(opt_d, lr);
    }
    double ep_d = 0.0, ep_g = 0.0;
    h.g->train();
    h.d0->train();
    for (std::int64_t step = 0; step < steps; ++step) {
      auto real = shuffled_batch(nc_flair, rng, B);
      auto z = torch::randn({B, kLatentDim});
      auto fake = h.g->forward(z);

      // Discriminator: one real batch, one generated batch, equal size.
      opt_d.zero_grad();
      auto loss_real = smoothed_bce(h.d0->forward(real), cfg.real_target);
      auto loss_fake = smoothed_bce(h.d0->forward(fake.detach()), cfg.fake_target);
      loss_real.backward();
      loss_fake.backward();
      opt_d.step();

      // Generator: maximize log D0(g).
      opt_g.zero_grad();
      auto loss_g = -(h.d0->forward(fake).clamp_min(kLogEps)).log().mean();
      loss_g.backward();
      opt_g.step();

      ep_d += (loss_real + loss_fake).item<double>() / 2.0;
      ep_g += loss_g.item<double>();
    }
    ep_d /= static_cast<double>(steps);
    ep_g /= static_cast<double>(steps);
    log_rows.push_back({std::to_string(epoch), std::to_string(ep_d), std::to_string(ep_g),
                        std::to_string(lr)});
    std::cerr << "[ganseg] gan epoch " << epoch << " d_loss=" << ep_d << " g_loss=" << ep_g
              << "\n";
    if (!std::isfinite(ep_d) || !std::isfinite(ep_g))
      throw StageError("non-finite GAN loss at epoch " + std::to_string(epoch));
  }

  if (!out_dir.empty()) {
    h.save(out_dir);
    write_csv(out_dir / "train_log.csv", {"epoch", "d0_loss", "g_loss", "lr"}, log_rows);
  }
  return h;
}

std::vector<std::string> select_conversion_subset(const std::vector<std::string>& candidate_ids,
                                                  const SeedSet& seeds) {
  std::vector<std::string> kept;
  if (candidate_ids.empty())
    throw StageError(
        "conversion subset is empty: no cancerous image was classified positive; the classifier "
        "needs more training before conversion");
  for (const auto& id : candidate_ids) {
    const auto& neg = seeds.seeds.at(id).negative;
    double frac = neg.mean().item<double>();
    if (frac < 0.5) kept.push_back(id);
  }
  if (kept.empty())
    throw StageError(
        "conversion subset is empty: every candidate's negative seeds cover >= 50% of the "
        "image; consider adjusting the seed thresholds");
  return kept;
}

ConverterHandle train_converter(const GanHandle& gan, const torch::Tensor& xc_flair,
                                const torch::Tensor& xc_neg_seeds, const torch::Tensor& nc_flair,
                                const ConverterConfig& cfg, std::uint64_t rng_seed,
                                const fs::path& out_dir) {
  if (!gan.g) throw StageError("converter training requires a pretrained generator");
  if (xc_flair.size(0) == 0) throw StageError("empty conversion training set");
  cfg.validate();
  set_determinism(rng_seed, cfg.deterministic);

  ConverterHandle h;
  h.base_width = gan.base_width;
  h.u = ConverterUNet(1, gan.base_width, 1);
  h.u->init_decoder_from(gan.g);
  auto d1 = make_discriminator(1, gan.base_width);

  torch::optim::Adam opt_u(h.u->parameters(), torch::optim::AdamOptions(cfg.lr).betas(
                                                  {cfg.adam_beta1, cfg.adam_beta2}));
  torch::optim::Adam opt_d(d1->parameters(), torch::optim::AdamOptions(cfg.lr).betas(
                                                 {cfg.adam_beta1, cfg.adam_beta2}));
  std::mt19937_64 rng(derive_seed(rng_seed, "converter"));
  const auto B = std::min(cfg.batch_size, xc_flair.size(0));
  const auto steps = std::max<std::int64_t>(1, xc_flair.size(0) / B);

  std::vector<std::vector<std::string>> log_rows;
  double lr = cfg.lr;
  for (std::int64_t epoch = 0; epoch < cfg.u_epochs; ++epoch) {
    if (epoch > 0 && cfg.lr_half_every > 0 && epoch % cfg.lr_half_every == 0) {
      lr *= 0.5;
      set_lr(opt_u, lr);
      set_lr(opt_d, lr);
    }
    double ep_d = 0.0, ep_recon = 0.0, ep_adv = 0.0, ep_kl = 0.0;
    h.u->train();
    d1->train();
    for (std::int64_t step = 0; step < steps; ++step) {
      std::vector<std::int64_t> ci(static_cast<std::size_t>(B));
      std::uniform_int_distribution<std::int64_t> cd(0, xc_flair.size(0) - 1);
      for (auto& i : ci) i = cd(rng);
      auto idx = torch::tensor(ci);
      auto xc = xc_flair.index_select(0, idx);
      auto sneg = xc_neg_seeds.index_select(0, idx);
      auto real = shuffled_batch(nc_flair, rng, B);

      auto [xhat, zhat] = h.u->forward(xc);

      opt_d.zero_grad();
      auto loss_real = smoothed_bce(d1->forward(real), cfg.real_target);
      auto loss_fake = smoothed_bce(d1->forward(xhat.detach()), cfg.fake_target);
      loss_real.backward();
      loss_fake.backward();
      opt_d.step();

      opt_u.zero_grad();
      auto l_adv = -(d1->forward(xhat).clamp_min(kLogEps)).log().mean();
      auto l_recon = recon_loss(xc, xhat, sneg);
      auto l_kl = kl_loss(zhat);
      auto loss_u = cfg.alpha * l_recon + cfg.beta * l_adv + cfg.gamma * l_kl;
      loss_u.backward();
      opt_u.step();

      ep_d += (loss_real + loss_fake).item<double>() / 2.0;
      ep_recon += l_recon.item<double>();
      ep_adv += l_adv.item<double>();
      ep_kl += l_kl.item<double>();
    }
    ep_d /= static_cast<double>(steps);
    ep_recon /= static_cast<double>(steps);
    ep_adv /= static_cast<double>(steps);
    ep_kl /= static_cast<double>(steps);
    log_rows.push_back({std::to_string(epoch), std::to_string(ep_d), std::to_string(ep_recon),
                        std::to_string(ep_adv), std::to_string(ep_kl), std::to_string(lr)});
    std::cerr << "[ganseg] converter epoch " << epoch << " d1=" << ep_d << " recon=" << ep_recon
              << " adv=" << ep_adv << " kl=" << ep_kl << "\n";
    if (!std::isfinite(ep_recon) || !std::isfinite(ep_adv) || !std::isfinite(ep_kl))
      throw StageError("non-finite converter loss at epoch " + std::to_string(epoch));
  }

  if (!out_dir.empty()) {
    h.save(out_dir);
    save_checkpoint(out_dir / "d1", *d1,
                    json{{"kind", "discriminator"}, {"base_width", gan.base_width}});
    write_csv(out_dir / "train_log.csv",
              {"epoch", "d1_loss", "recon_loss", "adv_loss", "kl_loss", "lr"}, log_rows);
  }
  return h;
}

torch::Tensor convert(const ConverterHandle& conv, const torch::Tensor& x_flair) {
  TORCH_CHECK(x_flair.dim() == 3 && x_flair.size(0) == 1, "expected (1, H, W) FLAIR input");
  torch::NoGradGuard ng;
  auto u_ = conv.u;
  u_->eval();
  auto [xhat, zhat] = u_->forward(x_flair.unsqueeze(0));
  return xhat.squeeze(0);
}

}  // namespace ganseg
