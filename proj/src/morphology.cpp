#include "ganseg/morphology.hpp"

#include <deque>

namespace ganseg {

std::vector<std::pair<int, int>> disk_offsets(int radius) {
  std::vector<std::pair<int, int>> offs;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx)
      if (dy * dy + dx * dx <= radius * radius) offs.emplace_back(dy, dx);
  return offs;
}

namespace {

torch::Tensor as_bool2d(const torch::Tensor& mask) {
  TORCH_CHECK(mask.dim() == 2, "expected a 2D mask, got dim=", mask.dim());
  return mask.to(torch::kBool).contiguous();
}

}  // namespace

torch::Tensor erode_disk(const torch::Tensor& mask, int radius) {
  auto m = as_bool2d(mask);
  const auto H = m.size(0), W = m.size(1);
  auto out = torch::zeros_like(m);
  auto offs = disk_offsets(radius);
  auto ma = m.accessor<bool, 2>();
  auto oa = out.accessor<bool, 2>();
  for (std::int64_t y = 0; y < H; ++y) {
    for (std::int64_t x = 0; x < W; ++x) {
      if (!ma[y][x]) continue;
      bool keep = true;
      for (auto [dy, dx] : offs) {
        std::int64_t yy = y + dy, xx = x + dx;
        if (yy < 0 || yy >= H || xx < 0 || xx >= W || !ma[yy][xx]) {
          keep = false;
          break;
        }
      }
      oa[y][x] = keep;
    }
  }
  return out;
}

torch::Tensor dilate_disk(const torch::Tensor& mask, int radius) {
  auto m = as_bool2d(mask);
  const auto H = m.size(0), W = m.size(1);
  auto out = torch::zeros_like(m);
  auto offs = disk_offsets(radius);
  auto ma = m.accessor<bool, 2>();
  auto oa = out.accessor<bool, 2>();
  for (std::int64_t y = 0; y < H; ++y) {
    for (std::int64_t x = 0; x < W; ++x) {
      if (!ma[y][x]) continue;
      for (auto [dy, dx] : offs) {
        std::int64_t yy = y + dy, xx = x + dx;
        if (yy >= 0 && yy < H && xx >= 0 && xx < W) oa[yy][xx] = true;
      }
    }
  }
  return out;
}

std::vector<torch::Tensor> connected_components(const torch::Tensor& mask, bool eight_connect) {
  auto m = as_bool2d(mask);
  const auto H = m.size(0), W = m.size(1);
  auto ma = m.accessor<bool, 2>();
  auto visited = torch::zeros({H, W}, torch::kBool);
  auto va = visited.accessor<bool, 2>();

  static const int n8[8][2] = {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1}, {0, 1}, {1, -1}, {1, 0}, {1, 1}};
  static const int n4[4][2] = {{-1, 0}, {0, -1}, {0, 1}, {1, 0}};
  const int nn = eight_connect ? 8 : 4;
  const int(*nbr)[2] = eight_connect ? n8 : n4;

  std::vector<torch::Tensor> comps;
  for (std::int64_t y0 = 0; y0 < H; ++y0) {
    for (std::int64_t x0 = 0; x0 < W; ++x0) {
      if (!ma[y0][x0] || va[y0][x0]) continue;
      auto comp = torch::zeros({H, W}, torch::kBool);
      auto ca = comp.accessor<bool, 2>();
      std::deque<std::pair<std::int64_t, std::int64_t>> q{{y0, x0}};
      va[y0][x0] = true;
      while (!q.empty()) {
        auto [y, x] = q.front();
        q.pop_front();
        ca[y][x] = true;
        for (int i = 0; i < nn; ++i) {
          std::int64_t yy = y + nbr[i][0], xx = x + nbr[i][1];
          if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
          if (ma[yy][xx] && !va[yy][xx]) {
            va[yy][xx] = true;
            q.emplace_back(yy, xx);
          }
        }
      }
      comps.push_back(comp);
    }
  }
  return comps;
}

}  // namespace ganseg
