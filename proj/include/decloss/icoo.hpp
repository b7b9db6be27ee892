#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "decloss/rng.hpp"
#include "decloss/tensor.hpp"

namespace decloss {

// One-to-many benchmark: how concentrated is each SR patch's distance to its
// nearest HR patch, relative to the rest of the pool.
struct IcooConfig {
  Index patch_size = 12;
  Index sr_patches = 8;    // per SR image per round
  Index hr_patches = 100;  // per HR image per round
  Index rounds = 10;
  double distance_clamp = 1e-8;  // lower bound on the numerator distance
  Index nearest_k = 0;           // 0 = whole pool; otherwise top-k nearest
  std::uint64_t seed = 0;
  bool average_before_log = false;  // average round sums instead of round scores
  void validate() const;
};

struct IcooReport {
  double score = 0.0;
  std::vector<double> per_round;  // -10*log10(sum of p_star) for each round
  Index sr_patch_count = 0;       // per round
  Index hr_patch_count = 0;       // per round
  std::uint64_t seed = 0;
  double distance_clamp = 0.0;
};

// `count` uniformly random size x size crops of a [C, H, W] image, sampled
// with replacement, flattened channel-major. Deterministic given the rng
// state; draws top then left per patch.
std::vector<std::vector<double>> sample_mini_patches(const Tensor& image, Index count, Index size,
                                                     Rng& rng);

// max(distance to nearest pool patch, eps) / sum of the other distances.
// Nearest ties break to the lowest pool index; nearest_k > 0 restricts the
// denominator to the k nearest patches (the nearest itself excluded).
double p_star(std::span<const double> sr_patch, const std::vector<std::vector<double>>& hr_pool,
              double eps, Index nearest_k = 0);

IcooReport icoo(const std::vector<Tensor>& sr_images, const std::vector<Tensor>& hr_images,
                const IcooConfig& cfg);

}  // namespace decloss
