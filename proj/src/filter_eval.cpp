#include "ganseg/filter_eval.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace ganseg {

double difference_score(const torch::Tensor& x_flair, const torch::Tensor& xhat_flair,
                        const torch::Tensor& m2) {
  TORCH_CHECK(x_flair.sizes() == xhat_flair.sizes() && x_flair.sizes() == m2.sizes(),
              "difference_score: shape mismatch");
  auto mask = (m2 > 0.5).to(torch::kFloat32);
  double support = mask.sum().item<double>();
  if (support == 0.0) return 1.0;
  return ((x_flair - xhat_flair).abs() * mask).sum().item<double>() / support;
}

FilterResult filter_by_threshold(const std::vector<ScoredSegmentation>& items, double t) {
  if (t < 0.0 || t > 1.0) throw ConfigError("filter threshold must be in [0, 1]");
  FilterResult out;
  for (const auto& it : items) (it.d < t ? out.removed : out.kept).push_back(it);
  return out;
}

double dice(const torch::Tensor& pred, const torch::Tensor& gt) {
  TORCH_CHECK(pred.sizes() == gt.sizes(), "dice: shape mismatch");
  auto p = (pred > 0.5).to(torch::kFloat32);
  auto g = (gt > 0.5).to(torch::kFloat32);
  double np = p.sum().item<double>();
  double ng = g.sum().item<double>();
  if (np == 0.0 && ng == 0.0) return 1.0;
  double inter = (p * g).sum().item<double>();
  return 2.0 * inter / (np + ng);
}

std::optional<double> pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2) return std::nullopt;
  const auto n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double dx = xs[i] - mx, dy = ys[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

namespace {
std::optional<double> mean_dice(const std::vector<ScoredSegmentation>& v) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& it : v)
    if (it.dice) {
      s += *it.dice;
      ++n;
    }
  if (n == 0) return std::nullopt;
  return s / static_cast<double>(n);
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}
}  // namespace

std::vector<SweepRow> sweep_report(const std::vector<ScoredSegmentation>& items,
                                   const std::vector<double>& thresholds, const fs::path& out_csv,
                                   const fs::path& out_svg) {
  std::vector<SweepRow> rows;
  for (double t : thresholds) {
    auto fr = filter_by_threshold(items, t);
    SweepRow row;
    row.threshold = t;
    row.kept_dice = mean_dice(fr.kept);
    row.removed_dice = mean_dice(fr.removed);
    row.percent_removed =
        items.empty() ? 0.0
                      : 100.0 * static_cast<double>(fr.removed.size()) /
                            static_cast<double>(items.size());
    rows.push_back(row);
  }
  if (!out_csv.empty()) {
    std::vector<std::vector<std::string>> csv;
    for (const auto& r : rows)
      csv.push_back({fmt(r.threshold), r.kept_dice ? fmt(*r.kept_dice) : "N/A",
                     r.removed_dice ? fmt(*r.removed_dice) : "N/A", fmt(r.percent_removed)});
    write_csv(out_csv, {"threshold", "kept_dice", "removed_dice", "percent_removed"}, csv);
  }
  if (!out_svg.empty()) {
    std::vector<double> xs, kept, pct;
    for (const auto& r : rows) {
      xs.push_back(r.threshold);
      kept.push_back(r.kept_dice.value_or(0.0));
      pct.push_back(r.percent_removed / 100.0);
    }
    write_svg_lines(out_svg, "difference-score sweep",
                    xs, {{"kept_dice", kept}, {"fraction_removed", pct}});
  }
  return rows;
}

MeanCi mean_ci(const std::vector<double>& values) {
  MeanCi out{0.0, 0.0};
  if (values.empty()) return out;
  const auto n = static_cast<double>(values.size());
  for (double v : values) out.mean += v;
  out.mean /= n;
  if (values.size() < 2) return out;
  double var = 0.0;
  for (double v : values) var += (v - out.mean) * (v - out.mean);
  var /= (n - 1.0);
  out.ci95 = 1.959963984540054 * std::sqrt(var / n);
  return out;
}

void save_scores_csv(const fs::path& path, const std::vector<ScoredSegmentation>& items) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& it : items)
    rows.push_back({it.id, fmt(it.p), fmt(it.w), fmt(it.d), it.dice ? fmt(*it.dice) : "N/A"});
  write_csv(path, {"id", "p", "w", "d", "dice"}, rows);
}

std::vector<ScoredSegmentation> load_scores_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scores csv: " + path.string());
  std::vector<ScoredSegmentation> out;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string id, p, w, d, dc;
    std::getline(ss, id, ',');
    std::getline(ss, p, ',');
    std::getline(ss, w, ',');
    std::getline(ss, d, ',');
    std::getline(ss, dc, ',');
    ScoredSegmentation s;
    s.id = id;
    s.p = std::stod(p);
    s.w = std::stod(w);
    s.d = std::stod(d);
    if (dc != "N/A" && !dc.empty()) s.dice = std::stod(dc);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace ganseg
