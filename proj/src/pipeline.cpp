#include "ganseg/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>

namespace ganseg {

// ---------------------------------------------------------------------------
// Whole-image inference
// ---------------------------------------------------------------------------

torch::Tensor median_filter2d(const torch::Tensor& img, std::int64_t window) {
  TORCH_CHECK(img.dim() == 2, "median_filter2d expects (H, W)");
  TORCH_CHECK(window % 2 == 1 && window >= 1, "window must be odd");
  const auto pad = window / 2;
  namespace F = torch::nn::functional;
  auto padded = F::pad(img.unsqueeze(0).unsqueeze(0),
                       F::PadFuncOptions({pad, pad, pad, pad}).mode(torch::kReplicate))
                    .squeeze(0)
                    .squeeze(0);
  auto patches = padded.unfold(0, window, 1).unfold(1, window, 1);  // (H, W, w, w)
  return std::get<0>(patches.flatten(2).median(2));
}

torch::Tensor baseline_l1(const torch::Tensor& x_flair, const torch::Tensor& xhat_flair,
                          std::int64_t median_window, double threshold) {
  auto filtered = median_filter2d((x_flair - xhat_flair).abs(), median_window);
  return (filtered > threshold).to(torch::kFloat32);
}

namespace {
std::vector<std::int64_t> tile_starts(std::int64_t extent, std::int64_t patch,
                                      std::int64_t stride) {
  std::vector<std::int64_t> starts;
  for (std::int64_t s = 0;; s += stride) {
    if (s + patch >= extent) {
      starts.push_back(extent - patch);  // flush to the border, no padding
      break;
    }
    starts.push_back(s);
  }
  return starts;
}
}  // namespace

WholeImageResult segment_whole_image(const torch::Tensor& image, const Classifier& clf,
                                     const SegmenterHandle& s_os, const SegmenterHandle& s_us,
                                     std::int64_t stride, std::int64_t patch) {
  TORCH_CHECK(image.dim() == 3, "expected (c, H, W)");
  const auto H = image.size(1), W = image.size(2);
  if (H < patch || W < patch)
    throw StageError("image smaller than the patch size; pad the input to at least " +
                     std::to_string(patch) + " pixels per side");
  using torch::indexing::Slice;
  auto accum = torch::zeros({H, W}, torch::kFloat32);
  auto count = torch::zeros({H, W}, torch::kFloat32);
  WholeImageResult out;
  for (auto y : tile_starts(H, patch, stride)) {
    for (auto x : tile_starts(W, patch, stride)) {
      auto tile = image.index({Slice(), Slice(y, y + patch), Slice(x, x + patch)});
      double p = clf.predict(tile);
      out.patch_scores.push_back(p);
      torch::Tensor prob;
      if (p <= 0.5) {
        prob = torch::zeros({patch, patch}, torch::kFloat32);
      } else {
        prob = combine(p, s_os.predict(tile), s_us.predict(tile)).m1;
      }
      accum.index({Slice(y, y + patch), Slice(x, x + patch)}) += prob;
      count.index({Slice(y, y + patch), Slice(x, x + patch)}) += 1.0;
    }
  }
  out.prob = accum / count;
  out.mask = (out.prob > 0.5).to(torch::kFloat32);
  return out;
}

// ---------------------------------------------------------------------------
// Pipeline configuration
// ---------------------------------------------------------------------------

PipelineConfig PipelineConfig::from_json(const json& j) {
  PipelineConfig c;
  c.output_root = j.value("output_root", std::string("run"));
  c.seed = j.value("seed", c.seed);
  c.deterministic = j.value("deterministic", c.deterministic);
  c.data_kind = j.value("data_kind", c.data_kind);
  if (j.contains("phantom")) c.phantom = PhantomSpec::from_json(j.at("phantom"));
  c.dataset_path = j.value("dataset_path", std::string());
  if (j.contains("classifier")) c.classifier = ClassifierConfig::from_json(j.at("classifier"));
  if (j.contains("rise")) c.rise = RiseConfig::from_json(j.at("rise"));
  if (j.contains("converter")) c.converter = ConverterConfig::from_json(j.at("converter"));
  if (j.contains("segmenter")) c.segmenter = SegConfig::from_json(j.at("segmenter"));
  if (j.contains("seg_weights")) c.seg_weights = SegLossWeights::from_json(j.at("seg_weights"));
  if (j.contains("refine_radii")) c.refine_radii = j.at("refine_radii").get<std::vector<int>>();
  c.filter_threshold = j.value("filter_threshold", c.filter_threshold);
  c.baseline_l1_threshold = j.value("baseline_l1_threshold", c.baseline_l1_threshold);
  c.baseline_l1_window = j.value("baseline_l1_window", c.baseline_l1_window);
  c.patch_stride = j.value("patch_stride", c.patch_stride);
  c.flair_channel = j.value("flair_channel", c.flair_channel);
  c.validate();
  return c;
}

json PipelineConfig::to_json() const {
  return json{{"output_root", output_root.string()},
              {"seed", seed},
              {"deterministic", deterministic},
              {"data_kind", data_kind},
              {"phantom", phantom.to_json()},
              {"dataset_path", dataset_path.string()},
              {"classifier", classifier.to_json()},
              {"rise", rise.to_json()},
              {"converter", converter.to_json()},
              {"segmenter", segmenter.to_json()},
              {"seg_weights", seg_weights.to_json()},
              {"refine_radii", refine_radii},
              {"filter_threshold", filter_threshold},
              {"baseline_l1_threshold", baseline_l1_threshold},
              {"baseline_l1_window", baseline_l1_window},
              {"patch_stride", patch_stride},
              {"flair_channel", flair_channel}};
}

void PipelineConfig::validate() const {
  if (data_kind != "phantom" && data_kind != "dataset")
    throw ConfigError("data_kind must be 'phantom' or 'dataset'");
  if (data_kind == "dataset" && dataset_path.empty())
    throw ConfigError("dataset_path required when data_kind is 'dataset'");
  if (output_root.empty()) throw ConfigError("output_root must be set");
  if (patch_stride < 1) throw ConfigError("patch_stride must be >= 1");
  if (filter_threshold < 0.0 || filter_threshold > 1.0)
    throw ConfigError("filter_threshold must be in [0, 1]");
  classifier.validate();
  rise.validate();
  converter.validate();
  seg_weights.validate();
  if (refine_radii.empty()) throw ConfigError("refine_radii must be non-empty");
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  return PipelineConfig::from_json(read_json(path));
}

// ---------------------------------------------------------------------------
// Orchestration
// ---------------------------------------------------------------------------

namespace {

bool stage_done(const fs::path& run, const std::string& stage) {
  return fs::exists(run / ("stage." + stage + ".ok"));
}

void mark_done(const fs::path& run, const std::string& stage) {
  std::ofstream(run / ("stage." + stage + ".ok")) << "ok\n";
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

torch::Tensor flair_batch(const SliceDataset& ds, const std::vector<std::size_t>& idx,
                          std::int64_t flair_channel) {
  std::vector<torch::Tensor> xs;
  for (auto i : idx) xs.push_back(ds.records[i].image[flair_channel].unsqueeze(0));
  return torch::stack(xs);  // (N, 1, H, W)
}

}  // namespace

fs::path run_pipeline(const PipelineConfig& cfg, bool resume) {
  const fs::path run = cfg.output_root;
  if (!resume && fs::exists(run)) fs::remove_all(run);
  fs::create_directories(run);
  write_json(run / "config.json", cfg.to_json());

  auto stage_seed = [&](const std::string& name) { return derive_seed(cfg.seed, name); };

  // Lazily loaded shared state; stages reload persisted artifacts on resume.
  std::optional<SliceDataset> ds_cache;
  auto dataset = [&]() -> SliceDataset& {
    if (!ds_cache) ds_cache = load_dataset(run / "data");
    return *ds_cache;
  };
  std::optional<Classifier> clf_cache;
  auto classifier = [&]() -> Classifier& {
    if (!clf_cache) clf_cache = Classifier::load(run / "classifier");
    return *clf_cache;
  };
  std::optional<SeedSet> seed_cache;
  auto seeds = [&]() -> SeedSet& {
    if (!seed_cache) seed_cache = load_seed_set(run / "seeds");
    return *seed_cache;
  };
  auto variant_of = [&](const std::string& id) -> torch::Tensor {
    return load_tensor(run / "variants" / (id + ".bin"));
  };
  auto has_variant = [&](const std::string& id) {
    return fs::exists(run / "variants" / (id + ".bin"));
  };

  // --- stage 1: data -------------------------------------------------------
  if (!stage_done(run, "data")) {
    std::cerr << "[ganseg] stage data\n";
    SliceDataset ds;
    if (cfg.data_kind == "phantom") {
      PhantomSpec spec = cfg.phantom;
      spec.rng_seed = derive_seed(cfg.seed, "phantom");
      ds = gen_phantoms(spec);
    } else {
      ds = load_dataset(cfg.dataset_path);
    }
    save_dataset(run / "data", ds);
    ds_cache = std::move(ds);
    mark_done(run, "data");
  }

  // --- stage 2: classifier -------------------------------------------------
  if (!stage_done(run, "classifier")) {
    std::cerr << "[ganseg] stage classifier\n";
    ClassifierConfig ccfg = cfg.classifier;
    ccfg.deterministic = cfg.deterministic;
    clf_cache = train_classifier(dataset(), ccfg, stage_seed("classifier"), run / "classifier");
    json metrics;
    for (auto cohort : {Cohort::Validation, Cohort::Test}) {
      auto m = eval_classifier(*clf_cache, dataset(), cohort);
      metrics[cohort_name(cohort)] = json{{"auc", m.auc ? json(*m.auc) : json()},
                                          {"sensitivity", m.sensitivity},
                                          {"specificity", m.specificity}};
    }
    write_json(run / "classifier" / "metrics.json", metrics);
    mark_done(run, "classifier");
  }

  // --- stage 3: seeds (training + test cohorts) ----------------------------
  if (!stage_done(run, "seeds")) {
    std::cerr << "[ganseg] stage seeds\n";
    SliceDataset sub;
    sub.channels = dataset().channels;
    for (const auto& r : dataset().records)
      if (r.cohort != Cohort::Validation) sub.records.push_back(r);
    RiseConfig rcfg = cfg.rise;
    rcfg.rng_seed = stage_seed("rise");
    seed_cache = gen_seeds(sub, classifier(), rcfg, run / "seeds");
    mark_done(run, "seeds");
  }

  // --- stage 4: generator pretraining --------------------------------------
  if (!stage_done(run, "generator")) {
    std::cerr << "[ganseg] stage generator\n";
    auto nc_idx = dataset().label_indices(Cohort::Training, 0);
    if (nc_idx.empty()) throw StageError("no non-cancerous training slices");
    ConverterConfig gcfg = cfg.converter;
    gcfg.deterministic = cfg.deterministic;
    train_generator(flair_batch(dataset(), nc_idx, cfg.flair_channel), gcfg,
                    stage_seed("generator"), run / "generator");
    mark_done(run, "generator");
  }

  // --- stage 5: converter ---------------------------------------------------
  if (!stage_done(run, "converter")) {
    std::cerr << "[ganseg] stage converter\n";
    auto& s = seeds();
    std::vector<std::string> candidates;
    std::vector<std::size_t> cand_idx;
    auto ca_idx = dataset().label_indices(Cohort::Training, 1);
    for (auto i : ca_idx) {
      const auto& id = dataset().records[i].id();
      if (s.flags.at(id).in_conversion_set) {
        candidates.push_back(id);
        cand_idx.push_back(i);
      }
    }
    auto selected = select_conversion_subset(candidates, s);
    write_json(run / "converter_selection.json", json{{"selected", selected}});
    std::vector<std::size_t> sel_idx;
    std::vector<torch::Tensor> negs;
    for (std::size_t k = 0; k < candidates.size(); ++k) {
      if (std::find(selected.begin(), selected.end(), candidates[k]) != selected.end()) {
        sel_idx.push_back(cand_idx[k]);
        negs.push_back(s.seeds.at(candidates[k]).negative);
      }
    }
    auto nc_idx = dataset().label_indices(Cohort::Training, 0);
    ConverterConfig ucfg = cfg.converter;
    ucfg.deterministic = cfg.deterministic;
    auto gan = GanHandle::load(run / "generator");
    train_converter(gan, flair_batch(dataset(), sel_idx, cfg.flair_channel),
                    torch::stack(negs), flair_batch(dataset(), nc_idx, cfg.flair_channel), ucfg,
                    stage_seed("converter"), run / "converter");
    mark_done(run, "converter");
  }

  // --- stage 6: non-cancerous variants --------------------------------------
  if (!stage_done(run, "variants")) {
    std::cerr << "[ganseg] stage variants\n";
    auto conv = ConverterHandle::load(run / "converter");
    auto selected =
        read_json(run / "converter_selection.json").at("selected").get<std::vector<std::string>>();
    std::map<std::string, std::size_t> by_id;
    for (std::size_t i = 0; i < dataset().records.size(); ++i)
      by_id[dataset().records[i].id()] = i;
    auto emit = [&](const std::string& id) {
      auto x = dataset().records.at(by_id.at(id)).image[cfg.flair_channel].unsqueeze(0);
      save_tensor(run / "variants" / (id + ".bin"), convert(conv, x),
                  json{{"kind", "variant"}});
    };
    for (const auto& id : selected) emit(id);
    for (auto i : dataset().cohort_indices(Cohort::Test)) emit(dataset().records[i].id());
    mark_done(run, "variants");
  }

  // --- stage 7: initial segmentation ----------------------------------------
  auto train_idx = [&]() { return dataset().cohort_indices(Cohort::Training); };
  auto build_variant_map = [&](const std::vector<std::size_t>& idx) {
    VariantMap vm;
    for (auto i : idx) {
      const auto& id = dataset().records[i].id();
      if (has_variant(id)) vm[id] = variant_of(id);
    }
    return vm;
  };

  SegConfig scfg = cfg.segmenter;
  scfg.deterministic = cfg.deterministic;

  if (!stage_done(run, "seg_initial")) {
    std::cerr << "[ganseg] stage seg_initial\n";
    auto idx = train_idx();
    train_segmentation(dataset(), idx, seeds(), build_variant_map(idx), cfg.seg_weights, scfg,
                       stage_seed("seg_initial"), run / "seg_initial", cfg.flair_channel);
    mark_done(run, "seg_initial");
  }

  // --- stage 8: seed refinement ---------------------------------------------
  if (!stage_done(run, "refine")) {
    std::cerr << "[ganseg] stage refine\n";
    auto seg0 = SegmenterHandle::load(run / "seg_initial");
    std::vector<std::size_t> xc;
    for (auto i : dataset().label_indices(Cohort::Training, 1))
      if (seeds().flags.at(dataset().records[i].id()).in_conversion_set) xc.push_back(i);
    auto outcome = refine_seeds(seg0, classifier(), dataset(), xc, cfg.refine_radii);
    fs::create_directories(run / "refine");
    write_json(run / "refine" / "audit.json",
               json{{"retained", outcome.retained_ids}, {"components", outcome.audit_json()}});
    for (const auto& [id, s] : outcome.new_positive_seeds)
      save_tensor(run / "refine" / (id + ".pos.bin"), s, json{{"kind", "refined_positive_seed"}});
    mark_done(run, "refine");
  }

  auto refined = [&]() {
    auto retained =
        read_json(run / "refine" / "audit.json").at("retained").get<std::vector<std::string>>();
    SeedSet r = seeds();
    for (const auto& id : retained)
      r.seeds[id].positive = load_tensor(run / "refine" / (id + ".pos.bin"));
    return std::pair{retained, std::move(r)};
  };

  // --- stage 9: over/under-segmenting models --------------------------------
  if (!stage_done(run, "seg_os") || !stage_done(run, "seg_us")) {
    auto [retained, rseeds] = refined();
    if (retained.empty())
      throw StageError(
          "refinement retained no cancerous images; fall back to the initial model or adjust "
          "seed thresholds");
    std::map<std::string, std::size_t> by_id;
    for (std::size_t i = 0; i < dataset().records.size(); ++i)
      by_id[dataset().records[i].id()] = i;
    std::vector<std::size_t> os_idx;
    for (const auto& id : retained) os_idx.push_back(by_id.at(id));
    std::sort(os_idx.begin(), os_idx.end());
    if (!stage_done(run, "seg_os")) {
      std::cerr << "[ganseg] stage seg_os\n";
      train_segmentation(dataset(), os_idx, rseeds, build_variant_map(os_idx), cfg.seg_weights,
                         scfg, stage_seed("seg_os"), run / "seg_os", cfg.flair_channel);
      mark_done(run, "seg_os");
    }
    if (!stage_done(run, "seg_us")) {
      std::cerr << "[ganseg] stage seg_us\n";
      auto us_idx = os_idx;
      for (auto i : dataset().label_indices(Cohort::Training, 0)) us_idx.push_back(i);
      std::sort(us_idx.begin(), us_idx.end());
      train_segmentation(dataset(), us_idx, rseeds, build_variant_map(us_idx), cfg.seg_weights,
                         scfg, stage_seed("seg_us"), run / "seg_us", cfg.flair_channel);
      mark_done(run, "seg_us");
    }
  }

  // --- stage 10: seed-only baseline -----------------------------------------
  if (!stage_done(run, "baseline_seed")) {
    std::cerr << "[ganseg] stage baseline_seed\n";
    SegLossWeights w;
    w.delta = cfg.seg_weights.delta;
    w.epsilon = 0.0;
    w.zeta = 0.0;
    w.allow_unordered = true;
    auto idx = train_idx();
    train_segmentation(dataset(), idx, seeds(), VariantMap{}, w, scfg,
                       stage_seed("baseline_seed"), run / "baseline_seed", cfg.flair_channel);
    mark_done(run, "baseline_seed");
  }

  // --- stage 11: scoring on the test cohort ---------------------------------
  if (!stage_done(run, "score")) {
    std::cerr << "[ganseg] stage score\n";
    auto s_os = SegmenterHandle::load(run / "seg_os");
    auto s_us = SegmenterHandle::load(run / "seg_us");
    auto s_seed = SegmenterHandle::load(run / "baseline_seed");
    auto& clf = classifier();
    std::vector<ScoredSegmentation> combined_items;
    std::vector<std::vector<std::string>> baseline_rows;
    for (auto i : dataset().cohort_indices(Cohort::Test)) {
      const auto& r = dataset().records[i];
      auto flair = r.image[cfg.flair_channel];
      double p = clf.predict(r.image);
      ScoredSegmentation item;
      item.id = r.id();
      item.p = p;
      torch::Tensor m_seed_only, m_l1;
      if (p <= 0.5) {
        item.m2 = torch::zeros_like(flair);
        item.w = 0.0;
        item.d = 1.0;
        m_seed_only = torch::zeros_like(flair);
        m_l1 = torch::zeros_like(flair);
      } else {
        auto c = combine(p, s_os.predict(r.image), s_us.predict(r.image));
        item.m2 = c.m2;
        item.w = c.w;
        auto xhat = variant_of(r.id()).reshape(flair.sizes());
        item.d = difference_score(flair, xhat, c.m2);
        m_seed_only = (s_seed.predict(r.image) > 0.5).to(torch::kFloat32);
        m_l1 = baseline_l1(flair, xhat, cfg.baseline_l1_window, cfg.baseline_l1_threshold);
      }
      if (r.gt_mask) {
        item.dice = dice(item.m2, *r.gt_mask);
        baseline_rows.push_back({r.id(), fmt(dice(m_seed_only, *r.gt_mask)),
                                 fmt(dice(m_l1, *r.gt_mask))});
      }
      combined_items.push_back(std::move(item));
    }
    fs::create_directories(run / "score");
    save_scores_csv(run / "score" / "scores.csv", combined_items);
    write_csv(run / "score" / "baseline_dice.csv", {"id", "seed_only_dice", "l1_dice"},
              baseline_rows);
    mark_done(run, "score");
  }

  // --- stage 12: report ------------------------------------------------------
  if (!stage_done(run, "report")) {
    std::cerr << "[ganseg] stage report\n";
    const fs::path rep = run / "report";
    fs::create_directories(rep);
    auto items = load_scores_csv(run / "score" / "scores.csv");

    // Classifier metrics.
    {
      auto metrics = read_json(run / "classifier" / "metrics.json");
      std::vector<std::vector<std::string>> rows;
      for (auto& [cohort, m] : metrics.items())
        rows.push_back({cohort, m.at("auc").is_null() ? "N/A" : fmt(m.at("auc").get<double>()),
                        fmt(m.at("sensitivity").get<double>()),
                        fmt(m.at("specificity").get<double>())});
      write_csv(rep / "classifier.csv", {"cohort", "auc", "sensitivity", "specificity"}, rows);
    }

    // Seed overlap on cancerous test slices with ground truth.
    {
      auto& s = seeds();
      std::vector<double> pos, neg;
      for (auto i : dataset().label_indices(Cohort::Test, 1)) {
        const auto& r = dataset().records[i];
        if (!r.gt_mask) continue;
        auto it = s.seeds.find(r.id());
        if (it == s.seeds.end()) continue;
        auto om = overlap_metric(it->second, *r.gt_mask);
        if (om.pos_overlap) pos.push_back(*om.pos_overlap);
        if (om.neg_overlap) neg.push_back(*om.neg_overlap);
      }
      auto pm = mean_ci(pos), nm = mean_ci(neg);
      write_csv(rep / "seed_overlap.csv", {"metric", "mean", "n"},
                {{"positive_overlap", fmt(pm.mean), std::to_string(pos.size())},
                 {"negative_overlap", fmt(nm.mean), std::to_string(neg.size())}});
    }

    // Dice summary: combined vs baselines.
    {
      std::vector<double> comb;
      for (const auto& it : items)
        if (it.dice) comb.push_back(*it.dice);
      std::vector<double> seed_only, l1;
      std::ifstream in(run / "score" / "baseline_dice.csv");
      std::string line;
      std::getline(in, line);
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string id, a, b;
        std::getline(ss, id, ',');
        std::getline(ss, a, ',');
        std::getline(ss, b, ',');
        seed_only.push_back(std::stod(a));
        l1.push_back(std::stod(b));
      }
      write_csv(rep / "dice_summary.csv", {"model", "mean_dice", "n"},
                {{"combined", fmt(mean_ci(comb).mean), std::to_string(comb.size())},
                 {"seed_only", fmt(mean_ci(seed_only).mean), std::to_string(seed_only.size())},
                 {"l1_residual", fmt(mean_ci(l1).mean), std::to_string(l1.size())}});
    }

    // Difference-score sweep + filtering at the configured threshold.
    {
      std::vector<double> thresholds;
      for (int k = 0; k <= 9; ++k) thresholds.push_back(0.1 * k);
      sweep_report(items, thresholds, rep / "sweep.csv", rep / "sweep.svg");
      auto fr = filter_by_threshold(items, cfg.filter_threshold);
      std::vector<double> kept, all;
      for (const auto& it : fr.kept)
        if (it.dice) kept.push_back(*it.dice);
      for (const auto& it : items)
        if (it.dice) all.push_back(*it.dice);
      write_csv(rep / "filtering.csv",
                {"set", "threshold", "mean_dice", "n"},
                {{"unfiltered", "0", fmt(mean_ci(all).mean), std::to_string(all.size())},
                 {"kept", fmt(cfg.filter_threshold), fmt(mean_ci(kept).mean),
                  std::to_string(kept.size())}});
    }

    // Difference score vs Dice correlation.
    {
      std::vector<double> dsv, dicev;
      for (const auto& it : items)
        if (it.dice) {
          dsv.push_back(it.d);
          dicev.push_back(*it.dice);
        }
      auto r = pearson(dsv, dicev);
      write_csv(rep / "pearson.csv", {"pair", "r", "n"},
                {{"difference_score_vs_dice", r ? fmt(*r) : "N/A", std::to_string(dsv.size())}});
    }

    // Run manifest with provenance hashes.
    {
      json manifest;
      manifest["config_hash"] = hex64(fnv1a(cfg.to_json().dump()));
      manifest["seed"] = cfg.seed;
      manifest["deterministic"] = cfg.deterministic;
      for (const auto& name :
           {"classifier", "converter", "seg_initial", "seg_os", "seg_us", "baseline_seed"})
        manifest["checkpoints"][name] = checkpoint_hash(run / name);
      manifest["checkpoints"]["generator"] = checkpoint_hash(run / "generator" / "g");
      write_json(run / "run_manifest.json", manifest);
    }
    mark_done(run, "report");
  }

  std::cerr << "[ganseg] pipeline complete: " << run << "\n";
  return run;
}

void multi_run_report(const std::vector<fs::path>& run_dirs, const fs::path& out_dir) {
  if (run_dirs.empty()) throw ConfigError("no run directories given");
  fs::create_directories(out_dir);
  std::vector<double> dice_means, pearsons;
  std::vector<std::vector<SweepRow>> sweeps;
  std::vector<double> thresholds;
  for (int k = 0; k <= 9; ++k) thresholds.push_back(0.1 * k);
  for (const auto& rd : run_dirs) {
    auto items = load_scores_csv(rd / "score" / "scores.csv");
    std::vector<double> dicev, dsv;
    for (const auto& it : items)
      if (it.dice) {
        dicev.push_back(*it.dice);
        dsv.push_back(it.d);
      }
    if (!dicev.empty()) dice_means.push_back(mean_ci(dicev).mean);
    if (auto r = pearson(dsv, dicev)) pearsons.push_back(*r);
    sweeps.push_back(sweep_report(items, thresholds));
  }
  auto dm = mean_ci(dice_means);
  auto pm = mean_ci(pearsons);
  write_csv(out_dir / "summary.csv", {"metric", "mean", "ci95", "n_runs"},
            {{"combined_dice", fmt(dm.mean), fmt(dm.ci95), std::to_string(dice_means.size())},
             {"pearson_d_dice", fmt(pm.mean), fmt(pm.ci95), std::to_string(pearsons.size())}});

  std::vector<std::vector<std::string>> rows;
  std::vector<double> kept_series, pct_series;
  for (std::size_t ti = 0; ti < thresholds.size(); ++ti) {
    std::vector<double> kept, removed, pct;
    for (const auto& sw : sweeps) {
      if (sw[ti].kept_dice) kept.push_back(*sw[ti].kept_dice);
      if (sw[ti].removed_dice) removed.push_back(*sw[ti].removed_dice);
      pct.push_back(sw[ti].percent_removed);
    }
    auto km = mean_ci(kept), rm = mean_ci(removed), cm = mean_ci(pct);
    rows.push_back({fmt(thresholds[ti]), kept.empty() ? "N/A" : fmt(km.mean), fmt(km.ci95),
                    removed.empty() ? "N/A" : fmt(rm.mean), fmt(rm.ci95), fmt(cm.mean)});
    kept_series.push_back(kept.empty() ? 0.0 : km.mean);
    pct_series.push_back(cm.mean / 100.0);
  }
  write_csv(out_dir / "sweep.csv",
            {"threshold", "kept_dice_mean", "kept_dice_ci95", "removed_dice_mean",
             "removed_dice_ci95", "percent_removed_mean"},
            rows);
  write_svg_lines(out_dir / "sweep.svg", "difference-score sweep (run average)", thresholds,
                  {{"kept_dice", kept_series}, {"fraction_removed", pct_series}});
}

}  // namespace ganseg
