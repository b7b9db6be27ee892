#include "decloss/icoo.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

namespace decloss {

void IcooConfig::validate() const {
  if (patch_size < 1) throw ConfigError("icoo: patch size must be at least 1");
  if (sr_patches < 1 || hr_patches < 1) throw ConfigError("icoo: patch counts must be at least 1");
  if (rounds < 1) throw ConfigError("icoo: rounds must be at least 1");
  if (!(distance_clamp > 0.0)) throw ConfigError("icoo: distance clamp must be positive");
  if (nearest_k < 0 || nearest_k == 1)
    throw ConfigError("icoo: nearest_k must be 0 (whole pool) or at least 2");
}

std::vector<std::vector<double>> sample_mini_patches(const Tensor& image, Index count, Index size,
                                                     Rng& rng) {
  if (image.rank() != 3)
    throw ShapeError("sample_mini_patches: expected [C, H, W], got " + shape_str(image.shape()));
  if (size < 1) throw ContractError("sample_mini_patches: patch size must be at least 1");
  const Index c = image.extent(0), h = image.extent(1), w = image.extent(2);
  if (h < size || w < size)
    throw ContractError("sample_mini_patches: image " + shape_str(image.shape()) +
                        " is smaller than the " + std::to_string(size) + "-pixel patch");
  std::span<const double> v = image.values();
  std::vector<std::vector<double>> patches;
  patches.reserve(static_cast<std::size_t>(count));
  for (Index s = 0; s < count; ++s) {
    const Index top = static_cast<Index>(rng.next_below(static_cast<std::uint64_t>(h - size + 1)));
    const Index left = static_cast<Index>(rng.next_below(static_cast<std::uint64_t>(w - size + 1)));
    std::vector<double> patch(static_cast<std::size_t>(c * size * size));
    std::size_t o = 0;
    for (Index ch = 0; ch < c; ++ch)
      for (Index y = top; y < top + size; ++y)
        for (Index x = left; x < left + size; ++x) patch[o++] = v[(ch * h + y) * w + x];
    patches.push_back(std::move(patch));
  }
  return patches;
}

double p_star(std::span<const double> sr_patch, const std::vector<std::vector<double>>& hr_pool,
              double eps, Index nearest_k) {
  const Index n = static_cast<Index>(hr_pool.size());
  if (n < 2)
    throw ContractError("p_star: need at least 2 HR patches, got " + std::to_string(n));
  std::vector<double> dist(static_cast<std::size_t>(n));
  for (Index j = 0; j < n; ++j) {
    const std::vector<double>& hr = hr_pool[static_cast<std::size_t>(j)];
    if (hr.size() != sr_patch.size())
      throw ShapeError("p_star: pool patch " + std::to_string(j) + " has " +
                       std::to_string(hr.size()) + " values, sr patch has " +
                       std::to_string(sr_patch.size()));
    double acc = 0.0;
    for (std::size_t k = 0; k < hr.size(); ++k) {
      const double d = sr_patch[k] - hr[k];
      acc += d * d;
    }
    dist[static_cast<std::size_t>(j)] = std::sqrt(acc);
  }

  Index nearest = 0;
  for (Index j = 1; j < n; ++j)
    if (dist[j] < dist[nearest]) nearest = j;  // strict: ties keep the lowest index

  double denom = 0.0;
  if (nearest_k <= 0) {
    for (Index j = 0; j < n; ++j)
      if (j != nearest) denom += dist[j];
  } else {
    std::vector<std::pair<double, Index>> order(static_cast<std::size_t>(n));
    for (Index j = 0; j < n; ++j) order[j] = {dist[j], j};
    std::sort(order.begin(), order.end());
    const Index take = std::min(nearest_k, n);
    for (Index j = 1; j < take; ++j) denom += order[j].first;
  }
  if (denom == 0.0)
    throw ValueError("p_star: every non-nearest distance is zero; the ratio is undefined");
  return std::max(dist[nearest], eps) / denom;
}

IcooReport icoo(const std::vector<Tensor>& sr_images, const std::vector<Tensor>& hr_images,
                const IcooConfig& cfg) {
  cfg.validate();
  if (sr_images.empty() || hr_images.empty())
    throw ContractError("icoo: both image sets must be non-empty");

  IcooReport report;
  report.sr_patch_count = static_cast<Index>(sr_images.size()) * cfg.sr_patches;
  report.hr_patch_count = static_cast<Index>(hr_images.size()) * cfg.hr_patches;
  report.seed = cfg.seed;
  report.distance_clamp = cfg.distance_clamp;
  report.per_round.reserve(static_cast<std::size_t>(cfg.rounds));

  double sum_of_sums = 0.0;
  for (Index round = 0; round < cfg.rounds; ++round) {
    std::vector<std::vector<double>> pool;
    pool.reserve(static_cast<std::size_t>(report.hr_patch_count));
    for (std::size_t i = 0; i < hr_images.size(); ++i) {
      Rng rng(derive(cfg.seed, {static_cast<std::uint64_t>(round), 1, i}));
      for (auto& p : sample_mini_patches(hr_images[i], cfg.hr_patches, cfg.patch_size, rng))
        pool.push_back(std::move(p));
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < sr_images.size(); ++i) {
      Rng rng(derive(cfg.seed, {static_cast<std::uint64_t>(round), 0, i}));
      for (const auto& patch :
           sample_mini_patches(sr_images[i], cfg.sr_patches, cfg.patch_size, rng))
        sum += p_star(patch, pool, cfg.distance_clamp, cfg.nearest_k);
    }
    report.per_round.push_back(-10.0 * std::log10(sum));
    sum_of_sums += sum;
  }

  if (cfg.average_before_log) {
    report.score = -10.0 * std::log10(sum_of_sums / static_cast<double>(cfg.rounds));
  } else {
    double total = 0.0;
    for (double s : report.per_round) total += s;
    report.score = total / static_cast<double>(cfg.rounds);
  }
  return report;
}

}  // namespace decloss
