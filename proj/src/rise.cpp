#include "ganseg/rise.hpp"

#include <iostream>
#include <nlohmann/json.hpp>
#include <random>

#include "ganseg/io.hpp"

namespace ganseg {

RiseConfig RiseConfig::from_json(const json& j) {
  RiseConfig c;
  c.n_masks = j.value("n_masks", c.n_masks);
  c.grid = j.value("grid", c.grid);
  c.keep_probability = j.value("keep_probability", c.keep_probability);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.pos_threshold = j.value("pos_threshold", c.pos_threshold);
  c.neg_threshold = j.value("neg_threshold", c.neg_threshold);
  c.explain_at_input_res = j.value("explain_at_input_res", c.explain_at_input_res);
  c.rng_seed = j.value("rng_seed", c.rng_seed);
  c.validate();
  return c;
}

json RiseConfig::to_json() const {
  return json{{"n_masks", n_masks},
              {"grid", grid},
              {"keep_probability", keep_probability},
              {"batch_size", batch_size},
              {"pos_threshold", pos_threshold},
              {"neg_threshold", neg_threshold},
              {"explain_at_input_res", explain_at_input_res},
              {"rng_seed", rng_seed}};
}

void RiseConfig::validate() const {
  if (n_masks < 1) throw ConfigError("n_masks must be >= 1");
  if (keep_probability <= 0.0 || keep_probability >= 1.0)
    throw ConfigError("keep_probability must be in (0, 1)");
  if (grid < 2) throw ConfigError("grid must be >= 2");
}

ExplanationMap rise_explain(const ImageScorer& scorer, const torch::Tensor& image,
                            const RiseConfig& cfg) {
  TORCH_CHECK(image.dim() == 3, "expected (c, H, W) image");
  const auto H = image.size(1), W = image.size(2);
  const auto cell_h = (H + cfg.grid - 1) / cfg.grid;
  const auto cell_w = (W + cfg.grid - 1) / cfg.grid;
  const auto up_h = (cfg.grid + 1) * cell_h;
  const auto up_w = (cfg.grid + 1) * cell_w;

  std::mt19937_64 rng(cfg.rng_seed);
  std::bernoulli_distribution keep(cfg.keep_probability);
  std::uniform_int_distribution<std::int64_t> shift_y(0, cell_h - 1);
  std::uniform_int_distribution<std::int64_t> shift_x(0, cell_w - 1);

  auto accum = torch::zeros({H, W}, torch::kFloat32);
  auto coverage = torch::zeros({H, W}, torch::kFloat32);
  double score_sum = 0.0;
  double score_min = 1e300, score_max = -1e300;
  std::int64_t done = 0;
  while (done < cfg.n_masks) {
    const auto B = std::min(cfg.batch_size, cfg.n_masks - done);
    auto grid_masks = torch::empty({B, 1, cfg.grid, cfg.grid}, torch::kFloat32);
    auto ga = grid_masks.accessor<float, 4>();
    std::vector<std::int64_t> dys(static_cast<std::size_t>(B)), dxs(static_cast<std::size_t>(B));
    for (std::int64_t b = 0; b < B; ++b) {
      for (std::int64_t gy = 0; gy < cfg.grid; ++gy)
        for (std::int64_t gx = 0; gx < cfg.grid; ++gx)
          ga[b][0][gy][gx] = keep(rng) ? 1.0f : 0.0f;
      dys[static_cast<std::size_t>(b)] = shift_y(rng);
      dxs[static_cast<std::size_t>(b)] = shift_x(rng);
    }
    auto up = torch::nn::functional::interpolate(
        grid_masks, torch::nn::functional::InterpolateFuncOptions()
                        .size(std::vector<std::int64_t>{up_h, up_w})
                        .mode(torch::kBilinear)
                        .align_corners(false));
    auto masks = torch::empty({B, 1, H, W}, torch::kFloat32);
    using torch::indexing::Slice;
    for (std::int64_t b = 0; b < B; ++b) {
      auto dy = dys[static_cast<std::size_t>(b)], dx = dxs[static_cast<std::size_t>(b)];
      masks[b] = up.index({b, Slice(), Slice(dy, dy + H), Slice(dx, dx + W)});
    }
    auto scores = scorer(image.unsqueeze(0) * masks);
    TORCH_CHECK(scores.dim() == 1 && scores.size(0) == B, "scorer must return (B) scores");
    score_min = std::min(score_min, scores.min().item<double>());
    score_max = std::max(score_max, scores.max().item<double>());
    score_sum += scores.sum().item<double>();
    accum += (masks.squeeze(1) * scores.view({B, 1, 1})).sum(0);
    coverage += masks.squeeze(1).sum(0);
    done += B;
  }

  ExplanationMap out;
  if (score_max - score_min < 1e-9) {
    // Constant scorer: every mask gets the same weight and the map carries no
    // localization signal.
    out.e = torch::zeros({H, W}, torch::kFloat32);
    out.degenerate = true;
    return out;
  }
  // Center the scores before weighting: subtracting the mean score removes the
  // mask-coverage noise term (a constant times E[mask] after normalization)
  // without changing the expected map. Saturated classifiers leave only a few
  // percent of score variation, where the raw estimator is all coverage noise.
  accum -= (score_sum / static_cast<double>(cfg.n_masks)) * coverage;
  accum /= static_cast<double>(cfg.n_masks) * cfg.keep_probability;
  double mn = accum.min().item<double>();
  double mx = accum.max().item<double>();
  if (mx - mn < 1e-12) {
    out.e = torch::zeros({H, W}, torch::kFloat32);
    out.degenerate = true;
    return out;
  }
  out.e = (accum - mn) / (mx - mn);
  return out;
}

SeedPair make_seeds(const ExplanationMap& e, int label, double pos_threshold,
                    double neg_threshold) {
  SeedPair s;
  if (label == 0) {
    s.positive = torch::zeros_like(e.e);
    s.negative = torch::ones_like(e.e);
    return s;
  }
  s.positive = (e.e > pos_threshold).to(torch::kFloat32);
  s.negative = (e.e < neg_threshold).to(torch::kFloat32);
  return s;
}

OverlapMetric overlap_metric(const SeedPair& seeds, const torch::Tensor& gt_mask) {
  auto gt = (gt_mask > 0.5).to(torch::kFloat32);
  OverlapMetric m;
  double n_pos = seeds.positive.sum().item<double>();
  double n_neg = seeds.negative.sum().item<double>();
  if (n_pos > 0) m.pos_overlap = (seeds.positive * gt).sum().item<double>() / n_pos;
  if (n_neg > 0) m.neg_overlap = (seeds.negative * (1.0 - gt)).sum().item<double>() / n_neg;
  return m;
}

SeedSet gen_seeds(const SliceDataset& ds, const Classifier& clf, const RiseConfig& cfg,
                  const fs::path& out_dir) {
  SeedSet out;
  const bool upsampled_explain = cfg.explain_at_input_res && clf.cfg.upsample_factor > 1;
  std::size_t n_done = 0;
  for (const auto& r : ds.records) {
    SeedFlags flags;
    flags.p = clf.predict(r.image);
    flags.classifier_correct = (flags.p > 0.5) == (r.label == 1);
    flags.in_conversion_set = r.label == 1 && flags.p > 0.5;

    SeedPair seeds;
    if (r.label == 0) {
      ExplanationMap zero{torch::zeros({r.image.size(1), r.image.size(2)}, torch::kFloat32), false};
      seeds = make_seeds(zero, 0);
    } else {
      RiseConfig icfg = cfg;
      icfg.rng_seed = derive_seed(cfg.rng_seed, "rise/" + r.id());
      torch::Tensor ximg = r.image;
      ImageScorer scorer;
      if (upsampled_explain) {
        ximg = torch::nn::functional::interpolate(
                   r.image.unsqueeze(0),
                   torch::nn::functional::InterpolateFuncOptions()
                       .scale_factor(std::vector<double>{
                           static_cast<double>(clf.cfg.upsample_factor),
                           static_cast<double>(clf.cfg.upsample_factor)})
                       .mode(torch::kBilinear)
                       .align_corners(false))
                   .squeeze(0);
        scorer = [&clf](const torch::Tensor& x) { return clf.predict_batch(x, false); };
      } else {
        scorer = [&clf](const torch::Tensor& x) { return clf.predict_batch(x, true); };
      }
      auto e = rise_explain(scorer, ximg, icfg);
      flags.degenerate = e.degenerate;
      if (e.e.size(0) != r.image.size(1)) {
        // Seeds live at the native 128x128 resolution; renormalize after the
        // downsample so the thresholds keep their meaning.
        e.e = torch::nn::functional::interpolate(
                  e.e.unsqueeze(0).unsqueeze(0),
                  torch::nn::functional::InterpolateFuncOptions()
                      .size(std::vector<std::int64_t>{r.image.size(1), r.image.size(2)})
                      .mode(torch::kBilinear)
                      .align_corners(false))
                  .squeeze();
        if (!e.degenerate) {
          double mn = e.e.min().item<double>(), mx = e.e.max().item<double>();
          if (mx - mn > 1e-12) e.e = (e.e - mn) / (mx - mn);
        }
      }
      seeds = make_seeds(e, 1, cfg.pos_threshold, cfg.neg_threshold);
    }
    out.seeds[r.id()] = std::move(seeds);
    out.flags[r.id()] = flags;
    if (++n_done % 200 == 0)
      std::cerr << "[ganseg] seeds " << n_done << "/" << ds.records.size() << "\n";
  }
  if (!out_dir.empty()) save_seed_set(out_dir, out);
  return out;
}

void save_seed_set(const fs::path& dir, const SeedSet& s) {
  json index;
  for (const auto& [id, seeds] : s.seeds) {
    save_tensor(dir / (id + ".pos.bin"), seeds.positive, json{{"kind", "positive_seed"}});
    save_tensor(dir / (id + ".neg.bin"), seeds.negative, json{{"kind", "negative_seed"}});
    const auto& f = s.flags.at(id);
    index[id] = json{{"degenerate", f.degenerate},
                     {"classifier_correct", f.classifier_correct},
                     {"in_conversion_set", f.in_conversion_set},
                     {"p", f.p}};
  }
  write_json(dir / "index.json", index);
}

SeedSet load_seed_set(const fs::path& dir) {
  SeedSet s;
  json index = read_json(dir / "index.json");
  for (auto& [id, fj] : index.items()) {
    SeedPair pair;
    pair.positive = load_tensor(dir / (id + ".pos.bin"));
    pair.negative = load_tensor(dir / (id + ".neg.bin"));
    SeedFlags f;
    f.degenerate = fj.value("degenerate", false);
    f.classifier_correct = fj.value("classifier_correct", false);
    f.in_conversion_set = fj.value("in_conversion_set", false);
    f.p = fj.value("p", 0.0);
    s.seeds[id] = std::move(pair);
    s.flags[id] = f;
  }
  return s;
}

}  // namespace ganseg
