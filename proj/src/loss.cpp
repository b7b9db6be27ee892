#include "decloss/loss.hpp"

#include <array>
#include <cmath>
#include <string>

#include "decloss/patching.hpp"

namespace decloss {

namespace {

void require_rows(const char* op, const Tensor& t) {
  if (t.rank() != 2)
    throw ShapeError(std::string(op) + ": expected flattened rows, got " + shape_str(t.shape()));
}

// row norms with the epsilon guard baked in: sqrt(max(sum of squares, eps^2))
Tensor guarded_row_norms(const Tensor& rows, double eps) {
  static constexpr std::array<Index, 1> kCols{1};
  return sqrt(clamp_min(reduce_sum(mul(rows, rows), kCols), eps * eps));
}

}  // namespace

void ContrastConfig::validate() const {
  if (patch_size < 1) throw ConfigError("contrast: patch size must be at least 1");
  if (!(t_pos > 0.0) || !(t_neg > 0.0)) throw ConfigError("contrast: temperatures must be positive");
  if (!(max_value > 0.0)) throw ConfigError("contrast: max value must be positive");
  if (!(mask_clamp > eta)) throw ConfigError("contrast: mask clamp must exceed eta");
  if (!(cos_epsilon > 0.0)) throw ConfigError("contrast: cosine epsilon must be positive");
}

void LossWeights::validate() const {
  for (double v : {w1, w2, w3})
    if (!std::isfinite(v) || v < 0.0)
      throw ConfigError("loss weights must be finite and non-negative");
}

Tensor cosine_similarity_matrix(const Tensor& a, const Tensor& b, double eps) {
  require_rows("cosine similarity", a);
  require_rows("cosine similarity", b);
  if (a.shape() != b.shape())
    throw ShapeError("cosine similarity: row blocks " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " differ");
  const Index n = a.extent(0);
  Tensor dots = matmul(a, transpose(b));
  Tensor na = reshape(guarded_row_norms(a, eps), {n, 1});
  Tensor nb = reshape(guarded_row_norms(b, eps), {1, n});
  return div(dots, matmul(na, nb));
}

Tensor psnr_mask(const Tensor& hr_flat, const ContrastConfig& cfg) {
  require_rows("psnr mask", hr_flat);
  cfg.validate();
  const Index n = hr_flat.extent(0), d = hr_flat.extent(1);
  std::span<const double> v = hr_flat.values();
  std::vector<double> mask(static_cast<std::size_t>(n * n));
  for (Index i = 0; i < n; ++i) {
    mask[i * n + i] = cfg.mask_clamp;
    for (Index j = i + 1; j < n; ++j) {
      double acc = 0.0;
      for (Index k = 0; k < d; ++k) {
        const double diff = v[i * d + k] - v[j * d + k];
        acc += diff * diff;
      }
      const double m = acc == 0.0 ? cfg.mask_clamp
                                  : -20.0 * std::log10(std::sqrt(acc) / cfg.max_value);
      mask[i * n + j] = m;
      mask[j * n + i] = m;
    }
  }
  return Tensor::from({n, n}, std::move(mask));
}

SimilarityBundle similarity_bundle(const Tensor& sr_flat, const Tensor& hr_flat,
                                   const ContrastConfig& cfg) {
  SimilarityBundle b;
  b.s_sr_hr = cosine_similarity_matrix(sr_flat, hr_flat, cfg.cos_epsilon);
  b.s_sr_sr = cosine_similarity_matrix(sr_flat, sr_flat, cfg.cos_epsilon);
  b.mask = psnr_mask(hr_flat, cfg);
  b.pos.resize(b.mask.values().size());
  for (std::size_t i = 0; i < b.pos.size(); ++i)
    b.pos[i] = b.mask.values()[i] >= cfg.eta ? 1 : 0;
  return b;
}

Tensor spatial_contrastive_loss(const Tensor& sr_flat, const Tensor& hr_flat,
                                const ContrastConfig& cfg) {
  cfg.validate();
  SimilarityBundle bundle = similarity_bundle(sr_flat, hr_flat, cfg);
  const Index n = sr_flat.extent(0);

  std::vector<double> pos_ind(bundle.pos.size()), neg_ind(bundle.pos.size());
  for (Index i = 0; i < n; ++i) {
    Index positives = 0;
    for (Index j = 0; j < n; ++j) {
      const bool p = bundle.pos[i * n + j] != 0;
      pos_ind[i * n + j] = p ? 1.0 : 0.0;
      neg_ind[i * n + j] = p ? 0.0 : 1.0;
      positives += p;
    }
    if (positives == 0)
      throw ValueError("spatial contrastive loss: row " + std::to_string(i) +
                       " has no positive pairs");
    if (positives == n)
      throw ValueError("spatial contrastive loss: row " + std::to_string(i) +
                       " has no negative pairs: every patch mask is at or above the threshold");
  }
  Tensor pos_t = Tensor::from({n, n}, std::move(pos_ind));
  Tensor neg_t = Tensor::from({n, n}, std::move(neg_ind));

  // outside_exp is algebraically inside_exp at t = 1 shifted by a constant;
  // computing it that way keeps the gradient untouched by the temperatures
  const bool inside = cfg.temp_mode == TempMode::inside_exp;
  const double tp = inside ? cfg.t_pos : 1.0;
  const double tn = inside ? cfg.t_neg : 1.0;

  static constexpr std::array<Index, 1> kCols{1};
  auto scores = [&](const Tensor& ind, double t) {
    Tensor e = add(exp(scale(bundle.s_sr_sr, 1.0 / t)),
                   scale(exp(scale(bundle.s_sr_hr, 1.0 / t)), 2.0));
    return reduce_sum(mul(ind, e), kCols);  // [n]
  };
  Tensor ratio_logs = sub(log(scores(pos_t, tp)), log(scores(neg_t, tn)));
  Tensor ld = scale(reduce_sum(ratio_logs), -1.0 / static_cast<double>(n));
  if (!inside) ld = add_scalar(ld, -std::log(cfg.t_neg / cfg.t_pos));
  return ld;
}

Tensor decloss(const Tensor& sr, const Tensor& hr, const EnhanceConfig& ecfg,
               const ContrastConfig& ccfg) {
  if (sr.shape() != hr.shape())
    throw ShapeError("decloss: sr " + shape_str(sr.shape()) + " and hr " +
                     shape_str(hr.shape()) + " differ");
  Tensor sr_rows = patchify(enhance(sr, ecfg), ccfg.patch_size).flattened();
  Tensor hr_rows = patchify(enhance(hr.detach(), ecfg), ccfg.patch_size).flattened();
  return spatial_contrastive_loss(sr_rows, hr_rows, ccfg);
}

Tensor l1_loss(const Tensor& sr, const Tensor& hr, bool mean_reduce) {
  if (sr.shape() != hr.shape())
    throw ShapeError("l1 loss: shapes " + shape_str(sr.shape()) + " and " +
                     shape_str(hr.shape()) + " differ");
  Tensor total = reduce_sum(abs(sub(sr, hr)));
  return mean_reduce ? scale(total, 1.0 / static_cast<double>(sr.numel())) : total;
}

Tensor total_loss(const Tensor& sr, const Tensor& hr, const LossWeights& w,
                  const EnhanceConfig& ecfg, const ContrastConfig& ccfg,
                  const PerceptualHook& hook) {
  w.validate();
  if (w.w2 > 0.0 && !hook)
    throw ConfigError("total loss: perceptual weight is positive but no feature hook is set");

  Tensor acc;
  auto fold = [&acc](Tensor term, double weight) {
    term = scale(std::move(term), weight);
    acc = acc.defined() ? add(acc, term) : term;
  };
  if (w.w1 > 0.0) fold(l1_loss(sr, hr), w.w1);
  if (w.w2 > 0.0) fold(hook(sr, hr), w.w2);
  if (w.w3 > 0.0) fold(decloss(sr, hr, ecfg, ccfg), w.w3);
  return acc.defined() ? acc : Tensor::zeros({});
}

}  // namespace decloss
