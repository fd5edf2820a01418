#pragma once

#include <torch/torch.h>

#include <string>

#include "ganseg/classifier.hpp"
#include "ganseg/common.hpp"

namespace ganseg::testutil {

/// Fresh scratch directory under the build tree; wiped on construction.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / "ganseg_tests" / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
};

/// Classifier whose output is a constant probability: zeroed final layer with
/// a fixed bias logit.
inline Classifier constant_classifier(double p, std::int64_t in_channels = 1) {
  Classifier clf;
  clf.cfg.arch = "small_cnn";
  clf.cfg.base_width = 4;
  clf.cfg.upsample_factor = 1;
  clf.in_channels = in_channels;
  auto net = SmallCnn(in_channels, 4);
  torch::NoGradGuard ng;
  net->fc->weight.zero_();
  net->fc->bias.fill_(std::log(p / (1.0 - p)));
  clf.net = net.ptr();
  return clf;
}

}  // namespace ganseg::testutil
