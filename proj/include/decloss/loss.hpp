#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "decloss/enhance.hpp"
#include "decloss/tensor.hpp"

namespace decloss {

// Where the temperature acts on the positive/negative scores.
// inside_exp: e^(S/t), the default; the temperature shapes the gradient.
// outside_exp: (sum of e^S)/t as a literal reading of the score definition;
// equivalent to inside_exp at t = 1 plus the constant -log(t_neg/t_pos),
// so sweeping temperatures cannot change the gradient.
enum class TempMode { inside_exp, outside_exp };

struct ContrastConfig {
  Index patch_size = 8;
  double eta = 5.0;
  double t_pos = 0.5;
  double t_neg = 1.5;
  TempMode temp_mode = TempMode::inside_exp;
  double max_value = 1.0;    // color-space upper bound
  double mask_clamp = 100.0; // stands in for the infinite mask of identical patches
  double cos_epsilon = 1e-12;
  void validate() const;
};

struct LossWeights {
  double w1 = 1e-2;
  double w2 = 0.0;   // perceptual term disabled unless a hook is supplied
  double w3 = 3e-5;
  void validate() const;
};

struct SimilarityBundle {
  Tensor s_sr_hr;                 // [n x n] cosine of SR rows against HR rows
  Tensor s_sr_sr;                 // [n x n] cosine of SR rows against themselves
  Tensor mask;                    // [n x n] HR-to-HR mask, plain values, never taped
  std::vector<std::uint8_t> pos;  // mask >= eta, row-major
};

// (i,j) = <a_i, b_j> / (max(|a_i|, eps) * max(|b_j|, eps)). The norm guard
// clamps the squared norm before the square root so flat rows contribute
// zero similarity and zero gradient instead of NaN.
Tensor cosine_similarity_matrix(const Tensor& a, const Tensor& b, double eps);

// M_ij = -20 log10(|y_i - y_j| / MAX); identical rows take cfg.mask_clamp.
// Indicator use only: the result is detached from any tape.
Tensor psnr_mask(const Tensor& hr_flat, const ContrastConfig& cfg);

SimilarityBundle similarity_bundle(const Tensor& sr_flat, const Tensor& hr_flat,
                                   const ContrastConfig& cfg);

// Mini-patch contrastive loss over flattened rows [n x d]. Every row needs at
// least one positive (the self pair guarantees it) and one negative partner,
// otherwise the batch partition is degenerate and the row is reported.
Tensor spatial_contrastive_loss(const Tensor& sr_flat, const Tensor& hr_flat,
                                const ContrastConfig& cfg);

// Full pipeline: enhance both batches, cut into mini-patches, contrast them.
// The hr path is detached; gradients reach sr only.
Tensor decloss(const Tensor& sr, const Tensor& hr, const EnhanceConfig& ecfg,
               const ContrastConfig& ccfg);

// Sum (default) or mean of absolute differences; ties get subgradient 0.
Tensor l1_loss(const Tensor& sr, const Tensor& hr, bool mean_reduce = false);

using PerceptualHook = std::function<Tensor(const Tensor& sr, const Tensor& hr)>;

// w1 * L1 + w2 * hook + w3 * contrastive term. Terms with zero weight are
// skipped entirely; a positive w2 without a hook is a configuration error.
Tensor total_loss(const Tensor& sr, const Tensor& hr, const LossWeights& w,
                  const EnhanceConfig& ecfg, const ContrastConfig& ccfg,
                  const PerceptualHook& hook = {});

}  // namespace decloss
