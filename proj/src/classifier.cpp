#include "ganseg/classifier.hpp"

#include <algorithm>
#include <iostream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <random>

namespace ganseg {

ClassifierConfig ClassifierConfig::from_json(const json& j) {
  ClassifierConfig c;
  c.arch = j.value("arch", c.arch);
  c.base_width = j.value("base_width", c.base_width);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.lr = j.value("lr", c.lr);
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
  c.plateau_factor = j.value("plateau_factor", c.plateau_factor);
  c.plateau_min_delta = j.value("plateau_min_delta", c.plateau_min_delta);
  c.plateau_patience = j.value("plateau_patience", c.plateau_patience);
  c.upsample_factor = j.value("upsample_factor", c.upsample_factor);
  c.balanced_sampling = j.value("balanced_sampling", c.balanced_sampling);
  c.deterministic = j.value("deterministic", c.deterministic);
  c.validate();
  return c;
}

json ClassifierConfig::to_json() const {
  return json{{"arch", arch},
              {"base_width", base_width},
              {"epochs", epochs},
              {"batch_size", batch_size},
              {"weight_decay", weight_decay},
              {"lr", lr},
              {"adam_beta1", adam_beta1},
              {"adam_beta2", adam_beta2},
              {"plateau_factor", plateau_factor},
              {"plateau_min_delta", plateau_min_delta},
              {"plateau_patience", plateau_patience},
              {"upsample_factor", upsample_factor},
              {"balanced_sampling", balanced_sampling},
              {"deterministic", deterministic}};
}

void ClassifierConfig::validate() const {
  if (lr <= 0) throw ConfigError("classifier lr must be positive");
  if (upsample_factor != 1 && upsample_factor != 2)
    throw ConfigError("upsample_factor must be 1 or 2");
  if (arch != "vgg16_bn" && arch != "small_cnn")
    throw ConfigError("unknown classifier arch: " + arch);
}

namespace {

std::shared_ptr<torch::nn::Module> make_net(const ClassifierConfig& cfg, std::int64_t in_channels) {
  if (cfg.arch == "vgg16_bn") return Vgg16Bn(in_channels).ptr();
  return SmallCnn(in_channels, cfg.base_width).ptr();
}

torch::Tensor forward_logits(torch::nn::Module& net, const torch::Tensor& x) {
  if (auto* vgg = net.as<Vgg16BnImpl>()) return vgg->forward(x);
  if (auto* cnn = net.as<SmallCnnImpl>()) return cnn->forward(x);
  throw StageError("unknown classifier module type");
}

torch::Tensor maybe_upsample(const torch::Tensor& x, std::int64_t factor) {
  if (factor == 1) return x;
  return torch::nn::functional::interpolate(
      x, torch::nn::functional::InterpolateFuncOptions()
             .scale_factor(std::vector<double>{static_cast<double>(factor),
                                               static_cast<double>(factor)})
             .mode(torch::kBilinear)
             .align_corners(false));
}

}  // namespace

torch::Tensor Classifier::predict_batch(const torch::Tensor& images, bool apply_upsample) const {
  TORCH_CHECK(images.dim() == 4, "expected (N, c, H, W) batch");
  if (images.size(1) != in_channels)
    throw StageError("classifier expects " + std::to_string(in_channels) + " channels, got " +
                     std::to_string(images.size(1)));
  torch::NoGradGuard ng;
  net->eval();
  auto x = apply_upsample ? maybe_upsample(images, cfg.upsample_factor) : images;
  return torch::sigmoid(forward_logits(*net, x)).squeeze(1);
}

double Classifier::predict(const torch::Tensor& image) const {
  return predict_batch(image.unsqueeze(0))[0].item<double>();
}

void Classifier::save(const fs::path& dir) const {
  json cfg_j = cfg.to_json();
  cfg_j["in_channels"] = in_channels;
  cfg_j["kind"] = "classifier";
  save_checkpoint(dir, *net, cfg_j);
}

Classifier Classifier::load(const fs::path& dir) {
  json j = load_checkpoint_config(dir);
  Classifier clf;
  clf.cfg = ClassifierConfig::from_json(j);
  clf.in_channels = j.at("in_channels").get<std::int64_t>();
  clf.net = make_net(clf.cfg, clf.in_channels);
  load_weights(dir, *clf.net);
  return clf;
}

Classifier train_classifier(const SliceDataset& ds, const ClassifierConfig& cfg,
                            std::uint64_t rng_seed, const fs::path& out_dir) {
  cfg.validate();
  auto pos = ds.label_indices(Cohort::Training, 1);
  auto neg = ds.label_indices(Cohort::Training, 0);
  if (pos.empty() || neg.empty())
    throw StageError("classifier training needs both classes; got " + std::to_string(pos.size()) +
                     " tumor / " + std::to_string(neg.size()) + " non-tumor training images");

  set_determinism(rng_seed, cfg.deterministic);
  const auto in_channels = ds.records.front().image.size(0);
  Classifier clf;
  clf.cfg = cfg;
  clf.in_channels = in_channels;
  clf.net = make_net(cfg, in_channels);

  auto val_idx = ds.cohort_indices(Cohort::Validation);
  torch::Tensor val_x, val_y;
  if (!val_idx.empty()) {
    val_x = ds.stack_images(val_idx);
    std::vector<float> vy;
    for (auto i : val_idx) vy.push_back(static_cast<float>(ds.records[i].label));
    val_y = torch::tensor(vy);
  }

  torch::optim::Adam opt(clf.net->parameters(),
                         torch::optim::AdamOptions(cfg.lr)
                             .betas({cfg.adam_beta1, cfg.adam_beta2})
                             .weight_decay(cfg.weight_decay));
  std::mt19937_64 rng(derive_seed(rng_seed, "classifier"));
  auto train_idx = ds.cohort_indices(Cohort::Training);
  const auto steps_per_epoch =
      std::max<std::int64_t>(1, static_cast<std::int64_t>(train_idx.size()) / cfg.batch_size);

  double lr = cfg.lr;
  double best_val = std::numeric_limits<double>::infinity();
  std::int64_t since_improve = 0;
  std::vector<EpochLog> logs;

  for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    clf.net->train();
    double epoch_loss = 0.0;
    for (std::int64_t step = 0; step < steps_per_epoch; ++step) {
      std::vector<std::size_t> batch_idx;
      batch_idx.reserve(static_cast<std::size_t>(cfg.batch_size));
      for (std::int64_t b = 0; b < cfg.batch_size; ++b) {
        if (cfg.balanced_sampling) {
          // Equal-probability class draw, then uniform within the class.
          bool take_pos = std::bernoulli_distribution(0.5)(rng);
          const auto& pool = take_pos ? pos : neg;
          batch_idx.push_back(pool[std::uniform_int_distribution<std::size_t>(
              0, pool.size() - 1)(rng)]);
        } else {
          batch_idx.push_back(train_idx[std::uniform_int_distribution<std::size_t>(
              0, train_idx.size() - 1)(rng)]);
        }
      }
      auto x = maybe_upsample(ds.stack_images(batch_idx), cfg.upsample_factor);
      std::vector<float> yv;
      for (auto i : batch_idx) yv.push_back(static_cast<float>(ds.records[i].label));
      auto y = torch::tensor(yv).unsqueeze(1);

      opt.zero_grad();
      auto logits = forward_logits(*clf.net, x);
      auto loss = torch::binary_cross_entropy_with_logits(logits, y);
      loss.backward();
      opt.step();
      epoch_loss += loss.item<double>();
    }
    epoch_loss /= static_cast<double>(steps_per_epoch);

    double val_loss = std::numeric_limits<double>::quiet_NaN();
    double val_auc = std::numeric_limits<double>::quiet_NaN();
    if (val_x.defined()) {
      torch::NoGradGuard ng;
      clf.net->eval();
      std::vector<double> scores;
      std::vector<int> labels;
      double loss_sum = 0.0;
      std::int64_t n = val_x.size(0);
      for (std::int64_t off = 0; off < n; off += cfg.batch_size) {
        auto end = std::min(off + cfg.batch_size, n);
        auto xb = maybe_upsample(val_x.slice(0, off, end), cfg.upsample_factor);
        auto yb = val_y.slice(0, off, end).unsqueeze(1);
        auto logits = forward_logits(*clf.net, xb);
        loss_sum += torch::binary_cross_entropy_with_logits(logits, yb,
                                                            {}, {}, torch::Reduction::Sum)
                        .item<double>();
        auto probs = torch::sigmoid(logits).squeeze(1);
        for (std::int64_t i = 0; i < probs.size(0); ++i) {
          scores.push_back(probs[i].item<double>());
          labels.push_back(static_cast<int>(yb[i][0].item<float>()));
        }
      }
      val_loss = loss_sum / static_cast<double>(n);
      val_auc = auc_rank(scores, labels).value_or(std::numeric_limits<double>::quiet_NaN());

      if (best_val - val_loss > cfg.plateau_min_delta) {
        best_val = val_loss;
        since_improve = 0;
      } else if (++since_improve >= cfg.plateau_patience) {
        lr /= cfg.plateau_factor;
        for (auto& group : opt.param_groups())
          static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
        since_improve = 0;
      }
    }
    logs.push_back({epoch, epoch_loss, val_loss, val_auc, lr});
    std::cerr << "[ganseg] classifier epoch " << epoch << " train_loss=" << epoch_loss
              << " val_loss=" << val_loss << " val_auc=" << val_auc << " lr=" << lr << "\n";
  }

  clf.save(out_dir);
  std::vector<std::vector<std::string>> rows;
  for (const auto& l : logs)
    rows.push_back({std::to_string(l.epoch), std::to_string(l.train_loss),
                    std::to_string(l.val_loss), std::to_string(l.val_auc), std::to_string(l.lr)});
  write_csv(out_dir / "train_log.csv", {"epoch", "train_loss", "val_loss", "val_auc", "lr"}, rows);
  return clf;
}

std::optional<double> auc_rank(const std::vector<double>& scores, const std::vector<int>& labels) {
  std::size_t n1 = 0, n0 = 0;
  for (int y : labels) (y ? n1 : n0)++;
  if (n1 == 0 || n0 == 0) return std::nullopt;

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Average ranks across ties, then the Mann-Whitney statistic.
  std::vector<double> rank(scores.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  double rank_sum_pos = 0.0;
  for (std::size_t k = 0; k < scores.size(); ++k)
    if (labels[k]) rank_sum_pos += rank[k];
  double u = rank_sum_pos - static_cast<double>(n1) * (static_cast<double>(n1) + 1.0) / 2.0;
  return u / (static_cast<double>(n1) * static_cast<double>(n0));
}

ClassifierMetrics eval_classifier(const Classifier& clf, const SliceDataset& ds, Cohort cohort) {
  auto idx = ds.cohort_indices(cohort);
  if (idx.empty()) throw StageError("empty cohort for classifier evaluation");
  std::vector<double> scores;
  std::vector<int> labels;
  const std::int64_t B = 64;
  for (std::size_t off = 0; off < idx.size(); off += static_cast<std::size_t>(B)) {
    std::vector<std::size_t> chunk(idx.begin() + static_cast<std::ptrdiff_t>(off),
                                   idx.begin() + static_cast<std::ptrdiff_t>(
                                                     std::min(off + static_cast<std::size_t>(B),
                                                              idx.size())));
    auto probs = clf.predict_batch(ds.stack_images(chunk));
    for (std::size_t k = 0; k < chunk.size(); ++k) {
      scores.push_back(probs[static_cast<std::int64_t>(k)].item<double>());
      labels.push_back(ds.records[chunk[k]].label);
    }
  }
  ClassifierMetrics m{};
  m.auc = auc_rank(scores, labels);
  std::size_t tp = 0, fn = 0, tn = 0, fp = 0;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    bool pred = scores[k] > 0.5;
    if (labels[k]) (pred ? tp : fn)++;
    else (pred ? fp : tn)++;
  }
  m.sensitivity = (tp + fn) ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  m.specificity = (tn + fp) ? static_cast<double>(tn) / static_cast<double>(tn + fp) : 0.0;
  return m;
}

}  // namespace ganseg
