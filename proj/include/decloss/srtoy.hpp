#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "decloss/loss.hpp"
#include "decloss/rng.hpp"
#include "decloss/tensor.hpp"

namespace decloss {

// Two 3x3 convolutions around a ReLU, then pixel shuffle: a deliberately tiny
// upsampler (7.4k parameters at scale 4) that exists to demonstrate the loss,
// not to compete with real backbones.
struct ToyModelParams {
  Tensor w1;  // [hidden, 3*3*3], rows are output channels
  Tensor b1;  // [hidden]
  Tensor w2;  // [3*scale^2, hidden*3*3]
  Tensor b2;  // [3*scale^2]
  Index hidden = 16;
  Index scale = 4;

  static ToyModelParams init(Index scale, std::uint64_t seed, Index hidden = 16);
  Index count() const;
  void validate() const;
};

struct TrainConfig {
  Index epochs_phase1 = 1;
  Index epochs_phase2 = 2;
  Index steps_per_epoch = 100;
  double lr_phase1 = 1e-4;
  double lr_phase2 = 2e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  Index batch = 4;
  Index lr_crop = 48;
  Index hr_crop = 192;
  Index scale = 4;
  Index hidden = 16;
  LossWeights weights{1e-2, 0.0, 3e-5};
  EnhanceConfig enhance;
  ContrastConfig contrast;
  std::uint64_t seed = 0;
  void validate() const;
};

struct TraceRow {
  Index step = 0;  // global, spanning both phases
  double l1 = 0.0;
  double ld = 0.0;
  double total = 0.0;  // the objective actually optimized at this step
};

struct TrainResult {
  ToyModelParams params;
  std::vector<TraceRow> trace;
};

// Separable cubic convolution resampling (Catmull-Rom, a = -0.5), edge
// clamped, on a [C, H, W] image. The scale overload rounds the target extents.
Tensor bicubic_resize(const Tensor& image, Index out_h, Index out_w);
Tensor bicubic_resize(const Tensor& image, double scale);

// Nearest-neighbor upscale by an integer factor; the reference floor any
// learned upsampler has to beat.
Tensor nearest_upscale(const Tensor& image, Index factor);

// conv(3->hidden) -> ReLU -> conv(hidden -> 3*scale^2) -> pixel shuffle, all
// recorded, zero padding 1 on both convolutions.
Tensor toy_forward(const ToyModelParams& params, const Tensor& lr_batch);

// 20*log10(max_value / rmse), clamped to 100 dB (identical inputs included).
double psnr(const Tensor& a, const Tensor& b, double max_value = 1.0);

// Seeded [3, h, w] images in [0, 1]: smooth gradients, sharp rectangles, and
// a global multi-frequency texture so every crop carries high frequencies.
std::vector<Tensor> synthetic_dataset(Index count, Index h, Index w, std::uint64_t seed);

// Two phases over bicubic-downsampled crops of `dataset`: L1 pre-training,
// then the weighted composite objective. Per-phase cosine learning-rate decay,
// Adam with bias correction, deterministic given cfg.seed.
TrainResult train(const std::vector<Tensor>& dataset, const TrainConfig& cfg);

void save_checkpoint(const ToyModelParams& params, const std::string& path);
ToyModelParams load_checkpoint(const std::string& path);

void save_trace_csv(const std::vector<TraceRow>& trace, const std::string& path);

}  // namespace decloss
