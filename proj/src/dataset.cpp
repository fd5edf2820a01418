#include "ganseg/dataset.hpp"

#include <algorithm>
#include <nlohmann/json.hpp>

namespace ganseg {

const char* cohort_name(Cohort c) {
  switch (c) {
    case Cohort::Training: return "training";
    case Cohort::Validation: return "validation";
    case Cohort::Test: return "test";
  }
  return "?";
}

Cohort cohort_from_name(const std::string& s) {
  if (s == "training") return Cohort::Training;
  if (s == "validation") return Cohort::Validation;
  if (s == "test") return Cohort::Test;
  throw ConfigError("unknown cohort: " + s);
}

std::vector<std::size_t> SliceDataset::cohort_indices(Cohort c) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].cohort == c) out.push_back(i);
  return out;
}

std::vector<std::size_t> SliceDataset::label_indices(Cohort c, int label) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].cohort == c && records[i].label == label) out.push_back(i);
  return out;
}

torch::Tensor SliceDataset::stack_images(const std::vector<std::size_t>& idx) const {
  std::vector<torch::Tensor> imgs;
  imgs.reserve(idx.size());
  for (auto i : idx) imgs.push_back(records[i].image);
  return torch::stack(imgs);
}

json dataset_manifest(const SliceDataset& ds) {
  json m;
  m["channels"] = ds.channels;
  for (Cohort c : {Cohort::Training, Cohort::Validation, Cohort::Test}) {
    json cj;
    cj["no_tumor"] = ds.label_indices(c, 0).size();
    cj["tumor"] = ds.label_indices(c, 1).size();
    cj["total"] = ds.cohort_indices(c).size();
    m["cohorts"][cohort_name(c)] = cj;
  }
  return m;
}

void save_dataset(const fs::path& root, const SliceDataset& ds) {
  for (const auto& r : ds.records) {
    fs::path dir = root / cohort_name(r.cohort) / r.volume_id;
    fs::path bin = dir / (std::to_string(r.slice_index) + ".bin");
    json meta;
    meta["label"] = r.label;
    meta["cohort"] = cohort_name(r.cohort);
    meta["volume_id"] = r.volume_id;
    meta["slice_index"] = r.slice_index;
    meta["channels"] = ds.channels;
    meta["has_gt"] = r.gt_mask.has_value();
    save_tensor(bin, r.image, meta);
    if (r.gt_mask) {
      save_tensor(dir / (std::to_string(r.slice_index) + ".gt.bin"), *r.gt_mask,
                  json{{"kind", "gt_mask"}});
    }
  }
  write_json(root / "manifest.json", dataset_manifest(ds));
}

SliceDataset load_dataset(const fs::path& root) {
  SliceDataset ds;
  json manifest = read_json(root / "manifest.json");
  ds.channels = manifest.value("channels", std::vector<std::string>{});
  for (Cohort c : {Cohort::Training, Cohort::Validation, Cohort::Test}) {
    fs::path cdir = root / cohort_name(c);
    if (!fs::exists(cdir)) continue;
    std::vector<fs::path> vols;
    for (const auto& e : fs::directory_iterator(cdir))
      if (e.is_directory()) vols.push_back(e.path());
    std::sort(vols.begin(), vols.end());
    for (const auto& vdir : vols) {
      std::vector<std::int64_t> slices;
      for (const auto& e : fs::directory_iterator(vdir)) {
        auto name = e.path().filename().string();
        if (e.path().extension() == ".bin" && name.find(".gt.") == std::string::npos)
          slices.push_back(std::stoll(e.path().stem().string()));
      }
      std::sort(slices.begin(), slices.end());
      for (auto s : slices) {
        SliceRecord r;
        json meta;
        r.image = load_tensor(vdir / (std::to_string(s) + ".bin"), &meta);
        r.label = meta.at("label").get<int>();
        r.cohort = c;
        r.volume_id = vdir.filename().string();
        r.slice_index = s;
        if (meta.value("has_gt", false))
          r.gt_mask = load_tensor(vdir / (std::to_string(s) + ".gt.bin"));
        ds.records.push_back(std::move(r));
      }
    }
  }
  return ds;
}

}  // namespace ganseg
