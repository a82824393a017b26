#pragma once

#include <cstddef>
#include <vector>

namespace savvy {

inline constexpr int kNoise = -1;

/// Density clustering over `n` items visited in index order. `neighbor(i, j)`
/// must be symmetric; a point is core when it has at least `min_pts`
/// neighbors counting itself. Returns one label per item: cluster ids are
/// 0, 1, ... in order of discovery, kNoise for noise. Border points join the
/// first cluster that reaches them.
template <typename Neighbor>
std::vector<int> dbscan(std::size_t n, std::size_t min_pts, Neighbor&& neighbor) {
  constexpr int kUnvisited = -2;
  std::vector<int> label(n, kUnvisited);
  auto region = [&](std::size_t i) {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || neighbor(i, j)) out.push_back(j);
    }
    return out;
  };

  int cluster = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (label[i] != kUnvisited) continue;
    auto seeds = region(i);
    if (seeds.size() < min_pts) {
      label[i] = kNoise;
      continue;
    }
    label[i] = cluster;
    for (std::size_t k = 0; k < seeds.size(); ++k) {
      const std::size_t j = seeds[k];
      if (label[j] == kNoise) label[j] = cluster;
      if (label[j] != kUnvisited) continue;
      label[j] = cluster;
      auto more = region(j);
      if (more.size() >= min_pts) seeds.insert(seeds.end(), more.begin(), more.end());
    }
    ++cluster;
  }
  return label;
}

/// Members of each cluster in index order; noise is dropped.
inline std::vector<std::vector<std::size_t>> cluster_members(const std::vector<int>& labels) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) continue;
    const auto c = static_cast<std::size_t>(labels[i]);
    if (out.size() <= c) out.resize(c + 1);
    out[c].push_back(i);
  }
  return out;
}

}  // namespace savvy
