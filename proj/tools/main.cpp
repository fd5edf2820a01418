// ganseg: weakly supervised brain-tumor segmentation pipeline CLI.
#include <CLI11.hpp>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>

#include "ganseg/pipeline.hpp"

using namespace ganseg;

namespace {

json read_config_or(const std::string& path, const json& fallback) {
  return path.empty() ? fallback : read_json(path);
}

std::map<std::string, std::size_t> index_by_id(const SliceDataset& ds) {
  std::map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < ds.records.size(); ++i) by_id[ds.records[i].id()] = i;
  return by_id;
}

// Channel discovery by filename token; "t1" must not swallow "t1ce".
std::optional<fs::path> find_channel_file(const fs::path& dir, const std::string& token) {
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    auto name = e.path().filename().string();
    if (name.find(token) == std::string::npos) continue;
    if (token == "t1" && name.find("t1ce") != std::string::npos) continue;
    return e.path();
  }
  return std::nullopt;
}

void cmd_prepare_data(const std::string& input, const std::string& format,
                      const std::string& out, int erosion_radius, std::uint64_t seed,
                      int drop_edges, bool bbox_crop, int downsample_factor) {
  std::vector<fs::path> vol_dirs;
  for (const auto& e : fs::directory_iterator(input))
    if (e.is_directory()) vol_dirs.push_back(e.path());
  std::sort(vol_dirs.begin(), vol_dirs.end());
  if (vol_dirs.empty()) throw ConfigError("no volume directories under " + input);

  std::vector<std::string> ids;
  for (const auto& d : vol_dirs) ids.push_back(d.filename().string());
  auto cohorts = split_cohorts(ids, derive_seed(seed, "split"));

  const std::vector<std::string> all_channels = {"flair", "t1", "t1ce", "t2"};
  SliceDataset ds;
  for (const auto& d : vol_dirs) {
    std::vector<fs::path> paths;
    std::vector<std::string> names;
    for (const auto& ch : all_channels)
      if (auto p = find_channel_file(d, ch)) {
        paths.push_back(*p);
        names.push_back(ch);
      }
    if (paths.empty()) throw ConfigError("no channel files in " + d.string());
    auto gt = find_channel_file(d, "seg");
    auto vid = d.filename().string();
    auto v = load_volume(paths, names, format, vid,
                         gt ? std::optional<fs::path>(*gt) : std::nullopt);
    PreprocessConfig pc;
    pc.bounding_box_crop = bbox_crop;
    pc.downsample_factor = downsample_factor;
    pc.rng_seed = derive_seed(seed, "crop/" + vid);
    auto pv = preprocess_volume(v, pc);
    auto slices = slice_volume(pv, cohorts.at(vid), drop_edges, erosion_radius);
    ds.records.insert(ds.records.end(), slices.begin(), slices.end());
    if (ds.channels.empty()) ds.channels = pv.channels;
    std::cerr << "[ganseg] " << vid << ": " << slices.size() << " slices\n";
  }
  save_dataset(out, ds);
}

void cmd_train_converter(const std::string& gan_dir, const std::string& data,
                         const std::string& seeds_dir, const std::string& out,
                         const std::string& config, std::uint64_t seed, bool deterministic,
                         std::int64_t flair_channel) {
  auto ds = load_dataset(data);
  auto seeds = load_seed_set(seeds_dir);
  auto cfg = ConverterConfig::from_json(read_config_or(config, json::object()));
  cfg.deterministic = deterministic;
  std::vector<std::string> candidates;
  std::vector<std::size_t> cand_idx;
  for (auto i : ds.label_indices(Cohort::Training, 1)) {
    const auto& id = ds.records[i].id();
    auto f = seeds.flags.find(id);
    if (f != seeds.flags.end() && f->second.in_conversion_set) {
      candidates.push_back(id);
      cand_idx.push_back(i);
    }
  }
  auto selected = select_conversion_subset(candidates, seeds);
  std::vector<torch::Tensor> xc, negs;
  for (std::size_t k = 0; k < candidates.size(); ++k)
    if (std::find(selected.begin(), selected.end(), candidates[k]) != selected.end()) {
      xc.push_back(ds.records[cand_idx[k]].image[flair_channel].unsqueeze(0));
      negs.push_back(seeds.seeds.at(candidates[k]).negative);
    }
  std::vector<torch::Tensor> nc;
  for (auto i : ds.label_indices(Cohort::Training, 0))
    nc.push_back(ds.records[i].image[flair_channel].unsqueeze(0));
  auto gan = GanHandle::load(gan_dir);
  train_converter(gan, torch::stack(xc), torch::stack(negs), torch::stack(nc), cfg,
                  derive_seed(seed, "converter"), out);
  write_json(fs::path(out) / "selection.json", json{{"selected", selected}});
}

void cmd_train_seg(const std::string& stage, const std::string& data,
                   const std::string& seeds_dir, const std::string& variants_dir,
                   const std::string& refine_dir, const std::string& out,
                   const std::string& config, std::uint64_t seed, bool deterministic,
                   std::int64_t flair_channel) {
  auto ds = load_dataset(data);
  auto seeds = load_seed_set(seeds_dir);
  json j = read_config_or(config, json::object());
  auto cfg = SegConfig::from_json(j.value("segmenter", j));
  cfg.deterministic = deterministic;
  auto weights = j.contains("seg_weights") ? SegLossWeights::from_json(j.at("seg_weights"))
                                           : SegLossWeights{};

  VariantMap vm;
  if (!variants_dir.empty())
    for (const auto& r : ds.records) {
      auto p = fs::path(variants_dir) / (r.id() + ".bin");
      if (fs::exists(p)) vm[r.id()] = load_tensor(p);
    }

  std::vector<std::size_t> idx;
  if (stage == "initial") {
    idx = ds.cohort_indices(Cohort::Training);
  } else {
    if (refine_dir.empty()) throw ConfigError("--refine required for refined stages");
    auto retained = read_json(fs::path(refine_dir) / "audit.json")
                        .at("retained")
                        .get<std::vector<std::string>>();
    if (retained.empty())
      throw StageError("refinement retained no images; use the initial model instead");
    auto by_id = index_by_id(ds);
    for (const auto& id : retained) {
      idx.push_back(by_id.at(id));
      seeds.seeds[id].positive = load_tensor(fs::path(refine_dir) / (id + ".pos.bin"));
    }
    if (stage == "refined-us")
      for (auto i : ds.label_indices(Cohort::Training, 0)) idx.push_back(i);
    std::sort(idx.begin(), idx.end());
  }
  train_segmentation(ds, idx, seeds, vm, weights, cfg, derive_seed(seed, "seg/" + stage), out,
                     flair_channel);
}

void cmd_combine(const std::string& clf_dir, const std::string& os_dir,
                 const std::string& us_dir, const std::string& data, const std::string& cohort,
                 const std::string& out, std::int64_t stride) {
  auto ds = load_dataset(data);
  auto clf = Classifier::load(clf_dir);
  auto s_os = SegmenterHandle::load(os_dir);
  auto s_us = SegmenterHandle::load(us_dir);
  json index;
  for (auto i : ds.cohort_indices(cohort_from_name(cohort))) {
    const auto& r = ds.records[i];
    auto res = segment_whole_image(r.image, clf, s_os, s_us, stride);
    save_tensor(fs::path(out) / (r.id() + ".bin"), res.mask, json{{"kind", "combined_mask"}});
    double p = clf.predict(r.image);
    index[r.id()] = json{{"p", p}, {"w", p > 0.5 ? 2.0 * (p - 0.5) : 0.0}};
  }
  write_json(fs::path(out) / "index.json", index);
}

void cmd_score(const std::string& data, const std::string& variants, const std::string& masks,
               const std::string& out, std::int64_t flair_channel) {
  auto ds = load_dataset(data);
  auto by_id = index_by_id(ds);
  json index = read_json(fs::path(masks) / "index.json");
  std::vector<ScoredSegmentation> items;
  for (auto& [id, meta] : index.items()) {
    const auto& r = ds.records.at(by_id.at(id));
    auto flair = r.image[flair_channel];
    ScoredSegmentation item;
    item.id = id;
    item.p = meta.value("p", 0.0);
    item.w = meta.value("w", 0.0);
    item.m2 = load_tensor(fs::path(masks) / (id + ".bin"));
    auto vp = fs::path(variants) / (id + ".bin");
    if (fs::exists(vp)) {
      item.d = difference_score(flair, load_tensor(vp).reshape(flair.sizes()), item.m2);
    } else {
      item.d = 1.0;  // no variant: empty-mask convention
    }
    if (r.gt_mask) item.dice = dice(item.m2, *r.gt_mask);
    items.push_back(std::move(item));
  }
  save_scores_csv(out, items);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"weakly supervised brain-tumor segmentation pipeline"};
  app.require_subcommand(1);

  std::string config, data, out, ckpt, input, format = "nifti", cohort = "test";
  std::string spec_file, gan_dir, seeds_dir, variants_dir, refine_dir, masks_dir;
  std::string clf_dir, os_dir, us_dir, seg_dir, stage = "initial", runs;
  std::uint64_t seed = 1;
  bool deterministic = false, resume = false;
  int erosion_radius = 1, drop_edges = 30, downsample_factor = 2;
  bool no_bbox_crop = false;
  std::int64_t n_masks = 0, stride = 64, flair_channel = 0;
  std::vector<int> radii = {1, 2, 3, 4, 5};

  auto* gen_phantoms_cmd = app.add_subcommand("gen-phantoms", "generate the synthetic dataset");
  gen_phantoms_cmd->add_option("--spec", spec_file, "phantom spec JSON");
  gen_phantoms_cmd->add_option("--out", out)->required();
  gen_phantoms_cmd->add_option("--seed", seed);

  auto* prep = app.add_subcommand("prepare-data", "preprocess volumes into slice records");
  prep->add_option("--input", input)->required();
  prep->add_option("--format", format)->check(CLI::IsMember({"nifti", "flat"}));
  prep->add_option("--out", out)->required();
  prep->add_option("--erosion-radius", erosion_radius);
  prep->add_option("--seed", seed);
  prep->add_option("--drop-edges", drop_edges);
  prep->add_flag("--no-bbox-crop", no_bbox_crop, "downsample instead of bounding-box crop");
  prep->add_option("--downsample-factor", downsample_factor);

  auto* tc = app.add_subcommand("train-classifier", "train the tumor-presence classifier");
  tc->add_option("--data", data)->required();
  tc->add_option("--config", config);
  tc->add_option("--out", out)->required();
  tc->add_option("--seed", seed);
  tc->add_flag("--deterministic", deterministic);

  auto* ec = app.add_subcommand("eval-classifier", "evaluate a classifier checkpoint");
  ec->add_option("--ckpt", ckpt)->required();
  ec->add_option("--data", data)->required();
  ec->add_option("--cohort", cohort);

  auto* gs = app.add_subcommand("gen-seeds", "derive explanation seeds");
  gs->add_option("--ckpt", ckpt)->required();
  gs->add_option("--data", data)->required();
  gs->add_option("--out", out)->required();
  gs->add_option("--n-masks", n_masks);
  gs->add_option("--config", config);
  gs->add_option("--seed", seed);

  auto* tg = app.add_subcommand("train-gan", "pretrain the generator on healthy slices");
  tg->add_option("--data", data)->required();
  tg->add_option("--out", out)->required();
  tg->add_option("--config", config);
  tg->add_option("--seed", seed);
  tg->add_flag("--deterministic", deterministic);
  tg->add_option("--flair-channel", flair_channel);

  auto* tu = app.add_subcommand("train-converter", "train the healthy-variant converter");
  tu->add_option("--gan", gan_dir)->required();
  tu->add_option("--data", data)->required();
  tu->add_option("--seeds", seeds_dir)->required();
  tu->add_option("--out", out)->required();
  tu->add_option("--config", config);
  tu->add_option("--seed", seed);
  tu->add_flag("--deterministic", deterministic);
  tu->add_option("--flair-channel", flair_channel);

  auto* cv = app.add_subcommand("convert", "write healthy variants for a cohort");
  cv->add_option("--ckpt", ckpt)->required();
  cv->add_option("--data", data)->required();
  cv->add_option("--out", out)->required();
  cv->add_option("--cohort", cohort);
  cv->add_option("--flair-channel", flair_channel);

  auto* ts = app.add_subcommand("train-seg", "train a segmentation model");
  ts->add_option("--stage", stage)->check(CLI::IsMember({"initial", "refined-os", "refined-us"}));
  ts->add_option("--data", data)->required();
  ts->add_option("--seeds", seeds_dir)->required();
  ts->add_option("--variants", variants_dir);
  ts->add_option("--refine", refine_dir);
  ts->add_option("--out", out)->required();
  ts->add_option("--config", config);
  ts->add_option("--seed", seed);
  ts->add_flag("--deterministic", deterministic);
  ts->add_option("--flair-channel", flair_channel);

  auto* rf = app.add_subcommand("refine-seeds", "classifier-feedback seed refinement");
  rf->add_option("--seg", seg_dir)->required();
  rf->add_option("--clf", clf_dir)->required();
  rf->add_option("--data", data)->required();
  rf->add_option("--out", out)->required();
  rf->add_option("--radii", radii)->delimiter(',');

  auto* cb = app.add_subcommand("combine", "blend over/under-segmenting models");
  cb->add_option("--clf", clf_dir)->required();
  cb->add_option("--os", os_dir)->required();
  cb->add_option("--us", us_dir)->required();
  cb->add_option("--data", data)->required();
  cb->add_option("--cohort", cohort);
  cb->add_option("--out", out)->required();
  cb->add_option("--stride", stride);

  auto* sc = app.add_subcommand("score", "difference-score masks against variants");
  sc->add_option("--data", data)->required();
  sc->add_option("--variants", variants_dir)->required();
  sc->add_option("--masks", masks_dir)->required();
  sc->add_option("--out", out)->required();
  sc->add_option("--flair-channel", flair_channel);

  auto* rp = app.add_subcommand("report", "aggregate one or more completed runs");
  rp->add_option("--runs", runs, "comma-separated run directories")->required();
  rp->add_option("--out", out)->required();

  auto* rn = app.add_subcommand("run", "run the full pipeline from a config file");
  rn->add_option("--config", config)->required();
  rn->add_option("--seed", seed);
  rn->add_flag("--deterministic", deterministic);
  rn->add_flag("--resume", resume);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (gen_phantoms_cmd->parsed()) {
      auto spec = PhantomSpec::from_json(read_config_or(spec_file, json::object()));
      if (gen_phantoms_cmd->count("--seed")) spec.rng_seed = seed;
      save_dataset(out, gen_phantoms(spec));
    } else if (prep->parsed()) {
      cmd_prepare_data(input, format, out, erosion_radius, seed, drop_edges, !no_bbox_crop,
                       downsample_factor);
    } else if (tc->parsed()) {
      auto ds = load_dataset(data);
      json j = read_config_or(config, json::object());
      auto cfg = ClassifierConfig::from_json(j.value("classifier", j));
      if (deterministic) cfg.deterministic = true;
      train_classifier(ds, cfg, derive_seed(seed, "classifier"), out);
    } else if (ec->parsed()) {
      auto ds = load_dataset(data);
      auto clf = Classifier::load(ckpt);
      auto m = eval_classifier(clf, ds, cohort_from_name(cohort));
      std::cout << json{{"cohort", cohort},
                        {"auc", m.auc ? json(*m.auc) : json()},
                        {"sensitivity", m.sensitivity},
                        {"specificity", m.specificity}}
                       .dump(2)
                << "\n";
    } else if (gs->parsed()) {
      auto ds = load_dataset(data);
      auto clf = Classifier::load(ckpt);
      json j = read_config_or(config, json::object());
      auto cfg = RiseConfig::from_json(j.value("rise", j));
      if (n_masks > 0) cfg.n_masks = n_masks;
      cfg.rng_seed = derive_seed(seed, "rise");
      gen_seeds(ds, clf, cfg, out);
    } else if (tg->parsed()) {
      auto ds = load_dataset(data);
      json j = read_config_or(config, json::object());
      auto cfg = ConverterConfig::from_json(j.value("converter", j));
      if (deterministic) cfg.deterministic = true;
      std::vector<torch::Tensor> nc;
      for (auto i : ds.label_indices(Cohort::Training, 0))
        nc.push_back(ds.records[i].image[flair_channel].unsqueeze(0));
      if (nc.empty()) throw StageError("no non-cancerous training slices");
      train_generator(torch::stack(nc), cfg, derive_seed(seed, "generator"), out);
    } else if (tu->parsed()) {
      cmd_train_converter(gan_dir, data, seeds_dir, out, config, seed, deterministic,
                          flair_channel);
    } else if (cv->parsed()) {
      auto ds = load_dataset(data);
      auto conv = ConverterHandle::load(ckpt);
      json index = json::array();
      for (auto i : ds.cohort_indices(cohort_from_name(cohort))) {
        const auto& r = ds.records[i];
        auto x = r.image[flair_channel].unsqueeze(0);
        save_tensor(fs::path(out) / (r.id() + ".bin"), convert(conv, x),
                    json{{"kind", "variant"}});
        index.push_back(r.id());
      }
      write_json(fs::path(out) / "index.json", index);
    } else if (ts->parsed()) {
      cmd_train_seg(stage, data, seeds_dir, variants_dir, refine_dir, out, config, seed,
                    deterministic, flair_channel);
    } else if (rf->parsed()) {
      auto ds = load_dataset(data);
      auto seg0 = SegmenterHandle::load(seg_dir);
      auto clf = Classifier::load(clf_dir);
      std::vector<std::size_t> xc;
      for (auto i : ds.label_indices(Cohort::Training, 1)) xc.push_back(i);
      auto outcome = refine_seeds(seg0, clf, ds, xc, radii);
      fs::create_directories(out);
      write_json(fs::path(out) / "audit.json", json{{"retained", outcome.retained_ids},
                                                    {"components", outcome.audit_json()}});
      for (const auto& [id, s] : outcome.new_positive_seeds)
        save_tensor(fs::path(out) / (id + ".pos.bin"), s,
                    json{{"kind", "refined_positive_seed"}});
    } else if (cb->parsed()) {
      cmd_combine(clf_dir, os_dir, us_dir, data, cohort, out, stride);
    } else if (sc->parsed()) {
      cmd_score(data, variants_dir, masks_dir, out, flair_channel);
    } else if (rp->parsed()) {
      std::vector<fs::path> run_dirs;
      std::stringstream ss(runs);
      std::string piece;
      while (std::getline(ss, piece, ','))
        if (!piece.empty()) run_dirs.emplace_back(piece);
      multi_run_report(run_dirs, out);
    } else if (rn->parsed()) {
      auto cfg = load_pipeline_config(config);
      if (rn->count("--seed")) cfg.seed = seed;
      if (deterministic) cfg.deterministic = true;
      run_pipeline(cfg, resume);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const StageError& e) {
    std::cerr << "stage failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "stage failure: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
