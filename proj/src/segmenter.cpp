#include "ganseg/segmenter.hpp"

#include <iostream>
#include <nlohmann/json.hpp>
#include <random>

#include "ganseg/morphology.hpp"

namespace ganseg {

namespace {
constexpr double kLogEps = 1e-8;
}

SegLossWeights SegLossWeights::from_json(const json& j) {
  SegLossWeights w;
  w.delta = j.value("delta", w.delta);
  w.epsilon = j.value("epsilon", w.epsilon);
  w.zeta = j.value("zeta", w.zeta);
  w.allow_unordered = j.value("allow_unordered", w.allow_unordered);
  w.validate();
  return w;
}

json SegLossWeights::to_json() const {
  return json{{"delta", delta}, {"epsilon", epsilon}, {"zeta", zeta},
              {"allow_unordered", allow_unordered}};
}

void SegLossWeights::validate() const {
  if (allow_unordered) {
    if (delta <= 0 || epsilon < 0 || zeta < 0)
      throw ConfigError("seg loss weights must be non-negative with delta > 0");
    return;
  }
  if (!(delta > epsilon && epsilon > zeta && zeta > 0))
    throw ConfigError(
        "seg loss weights must satisfy delta > epsilon > zeta > 0 (set allow_unordered to "
        "override)");
}

SegConfig SegConfig::from_json(const json& j) {
  SegConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.lr_half_every = j.value("lr_half_every", c.lr_half_every);
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
  c.base_width = j.value("base_width", c.base_width);
  c.deterministic = j.value("deterministic", c.deterministic);
  return c;
}

json SegConfig::to_json() const {
  return json{{"epochs", epochs},
              {"batch_size", batch_size},
              {"lr", lr},
              {"lr_half_every", lr_half_every},
              {"adam_beta1", adam_beta1},
              {"adam_beta2", adam_beta2},
              {"base_width", base_width},
              {"deterministic", deterministic}};
}

torch::Tensor seed_loss(const torch::Tensor& m, const torch::Tensor& s_pos,
                        const torch::Tensor& s_neg) {
  auto mf = m.flatten(1);
  auto sp = s_pos.flatten(1).to(mf.dtype());
  auto sn = s_neg.flatten(1).to(mf.dtype());
  auto n_seed = sp.sum(1) + sn.sum(1);  // per image
  auto log_m = mf.clamp_min(kLogEps).log();
  auto log_1m = (1.0 - mf).clamp_min(kLogEps).log();
  auto per_image = -(sp * log_m + sn * log_1m).sum(1) / n_seed.clamp_min(1.0);
  auto seeded = n_seed > 0;
  if (!seeded.all().item<bool>())
    std::cerr << "[ganseg] warning: image with no seeded pixels contributes 0 to seed loss\n";
  return (per_image * seeded.to(per_image.dtype())).sum() /
         static_cast<double>(per_image.size(0));
}

torch::Tensor var_loss(const torch::Tensor& m, const torch::Tensor& x_flair,
                       const torch::Tensor& xhat_flair) {
  auto mf = m.flatten(1);
  auto diff = (x_flair - xhat_flair).abs().flatten(1);
  auto weight = 1.0 - mf;
  auto denom = weight.sum(1).clamp_min(kLogEps);
  auto per_image = (weight * diff).sum(1) / denom;
  return per_image.mean();
}

torch::Tensor size_loss(const torch::Tensor& m) { return m.flatten(1).mean(1).mean(); }

// ---------------------------------------------------------------------------
// SegmenterHandle
// ---------------------------------------------------------------------------

torch::Tensor SegmenterHandle::predict_batch(const torch::Tensor& images) const {
  torch::NoGradGuard ng;
  auto net_ = net;  // holder copy: shared module, non-const access
  net_->eval();
  auto [m, z] = net_->forward(images);
  return m.squeeze(1);  // (N, H, W)
}

torch::Tensor SegmenterHandle::predict(const torch::Tensor& image) const {
  return predict_batch(image.unsqueeze(0)).squeeze(0);
}

void SegmenterHandle::save(const fs::path& dir) const {
  auto net_ = net;
  save_checkpoint(dir, *net_,
                  json{{"kind", "segmenter"},
                       {"in_channels", in_channels},
                       {"base_width", base_width}});
}

SegmenterHandle SegmenterHandle::load(const fs::path& dir) {
  auto cfg = load_checkpoint_config(dir);
  SegmenterHandle h;
  h.in_channels = cfg.at("in_channels").get<std::int64_t>();
  h.base_width = cfg.at("base_width").get<std::int64_t>();
  h.net = ConverterUNet(h.in_channels, h.base_width, 1);
  load_weights(dir, *h.net);
  return h;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

SegmenterHandle train_segmentation(const SliceDataset& ds,
                                   const std::vector<std::size_t>& train_records,
                                   const SeedSet& seeds, const VariantMap& variants,
                                   const SegLossWeights& weights, const SegConfig& cfg,
                                   std::uint64_t rng_seed, const fs::path& out_dir,
                                   std::int64_t flair_channel) {
  weights.validate();
  if (train_records.empty()) throw StageError("no training records for segmentation");
  set_determinism(rng_seed, cfg.deterministic);

  const auto c = ds.records.front().image.size(0);
  SegmenterHandle h;
  h.in_channels = c;
  h.base_width = cfg.base_width;
  h.net = ConverterUNet(c, cfg.base_width, 1);
  {
    // Background prior: bias the sigmoid output layer negative so masks start
    // near empty. Unseeded pixels then default to background; left at the
    // symmetric init they linger around 0.5 and half of them binarize to
    // foreground, which the weak size pressure cannot drain in short runs.
    torch::NoGradGuard ng;
    h.net->named_parameters()["decoder.block5.0.bias"].fill_(-2.0);
  }

  // Pre-assemble tensors once; desk-scale datasets fit in memory.
  std::vector<torch::Tensor> xs, sps, sns, xf, xhf;
  for (auto i : train_records) {
    const auto& r = ds.records[i];
    xs.push_back(r.image);
    const auto& sp = seeds.seeds.at(r.id());
    sps.push_back(sp.positive);
    sns.push_back(sp.negative);
    auto flair = r.image[flair_channel];
    xf.push_back(flair);
    auto it = variants.find(r.id());
    xhf.push_back(it != variants.end() ? it->second.squeeze() : flair);
  }
  auto X = torch::stack(xs);
  auto SP = torch::stack(sps);
  auto SN = torch::stack(sns);
  auto XF = torch::stack(xf);
  auto XHF = torch::stack(xhf);

  torch::optim::Adam opt(h.net->parameters(), torch::optim::AdamOptions(cfg.lr).betas(
                                                  {cfg.adam_beta1, cfg.adam_beta2}));
  std::mt19937_64 rng(derive_seed(rng_seed, "seg"));
  const auto N = X.size(0);
  const auto B = std::min(cfg.batch_size, N);
  const auto steps = std::max<std::int64_t>(1, N / B);

  std::vector<std::vector<std::string>> log_rows;
  double lr = cfg.lr;
  for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (epoch > 0 && cfg.lr_half_every > 0 && epoch % cfg.lr_half_every == 0) {
      lr *= 0.5;
      for (auto& g : opt.param_groups())
        static_cast<torch::optim::AdamOptions&>(g.options()).lr(lr);
    }
    h.net->train();
    double ep_seed = 0.0, ep_var = 0.0, ep_size = 0.0;
    for (std::int64_t step = 0; step < steps; ++step) {
      std::vector<std::int64_t> bi(static_cast<std::size_t>(B));
      std::uniform_int_distribution<std::int64_t> d(0, N - 1);
      for (auto& i : bi) i = d(rng);
      auto idx = torch::tensor(bi);
      auto [m, z] = h.net->forward(X.index_select(0, idx));
      auto mb = m.squeeze(1);
      auto l_seed = seed_loss(mb, SP.index_select(0, idx), SN.index_select(0, idx));
      auto l_var = var_loss(mb, XF.index_select(0, idx), XHF.index_select(0, idx));
      auto l_size = size_loss(mb);
      auto loss = weights.delta * l_seed + weights.epsilon * l_var + weights.zeta * l_size;
      opt.zero_grad();
      loss.backward();
      opt.step();
      ep_seed += l_seed.item<double>();
      ep_var += l_var.item<double>();
      ep_size += l_size.item<double>();
    }
    ep_seed /= static_cast<double>(steps);
    ep_var /= static_cast<double>(steps);
    ep_size /= static_cast<double>(steps);
    double total = weights.delta * ep_seed + weights.epsilon * ep_var + weights.zeta * ep_size;
    log_rows.push_back({std::to_string(epoch), std::to_string(ep_seed), std::to_string(ep_var),
                        std::to_string(ep_size), std::to_string(total), std::to_string(lr)});
    std::cerr << "[ganseg] seg epoch " << epoch << " seed=" << ep_seed << " var=" << ep_var
              << " size=" << ep_size << " total=" << total << "\n";
  }

  if (!out_dir.empty()) {
    h.save(out_dir);
    write_csv(out_dir / "train_log.csv",
              {"epoch", "seed_loss", "var_loss", "size_loss", "total_loss", "lr"}, log_rows);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Refinement
// ---------------------------------------------------------------------------

json RefinementOutcome::audit_json() const {
  json j = json::array();
  for (const auto& a : audit) {
    j.push_back(json{{"record_id", a.record_id},
                     {"component", a.component},
                     {"masked_scores", a.masked_scores},
                     {"mean_score", a.mean_score},
                     {"accepted", a.accepted}});
  }
  return j;
}

RefinementOutcome refine_seeds(const SegmenterHandle& seg0, const Classifier& clf,
                               const SliceDataset& ds, const std::vector<std::size_t>& xc_records,
                               const std::vector<int>& radii) {
  RefinementOutcome out;
  for (auto ri : xc_records) {
    const auto& r = ds.records[ri];
    auto m0 = seg0.predict(r.image);
    auto bin = m0 > 0.5;
    auto comps = connected_components(bin, /*eight_connect=*/true);
    torch::Tensor accepted_union;
    int comp_idx = 0;
    for (const auto& comp : comps) {
      std::vector<double> scores;
      std::vector<torch::Tensor> masked_batch;
      for (int rad : radii) {
        auto dilated = dilate_disk(comp, rad).to(torch::kFloat32);
        // Inverse mask applied across all channels.
        masked_batch.push_back(r.image * (1.0 - dilated).unsqueeze(0));
      }
      auto probs = clf.predict_batch(torch::stack(masked_batch));
      for (std::int64_t k = 0; k < probs.size(0); ++k) scores.push_back(probs[k].item<double>());
      double mean_score = 0.0;
      for (double s : scores) mean_score += s;
      mean_score /= static_cast<double>(scores.size());
      bool accept = mean_score < 0.5;
      out.audit.push_back({r.id(), comp_idx, scores, mean_score, accept});
      if (accept) {
        auto cf = comp.to(torch::kFloat32);
        accepted_union = accepted_union.defined() ? torch::max(accepted_union, cf) : cf;
      }
      ++comp_idx;
    }
    if (accepted_union.defined()) {
      out.new_positive_seeds[r.id()] = accepted_union;
      out.retained_ids.push_back(r.id());
    }
  }
  if (out.retained_ids.empty())
    std::cerr << "[ganseg] warning: refinement retained no cancerous images\n";
  return out;
}

CombinedMask combine(double p, const torch::Tensor& m_os, const torch::Tensor& m_us) {
  if (!(p > 0.5 && p <= 1.0))
    throw StageError("combine requires 0.5 < p <= 1; caller handles p <= 0.5 with empty masks");
  CombinedMask out;
  out.w = 2.0 * (p - 0.5);
  out.m1 = out.w * m_os + (1.0 - out.w) * m_us;
  out.m2 = (out.m1 > 0.5).to(torch::kFloat32);
  return out;
}

}  // namespace ganseg
