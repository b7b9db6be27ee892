#include "decloss/srtoy.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <memory>
#include <string>
#include <utility>

#include <json.hpp>

namespace decloss {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Catmull-Rom kernel (a = -0.5); exact zeros at t = 1, 2 keep scale-1
// resampling an identity
double cubic_weight(double t) {
  t = std::fabs(t);
  if (t <= 1.0) return (1.5 * t - 2.5) * t * t + 1.0;
  if (t < 2.0) return ((-0.5 * t + 2.5) * t - 4.0) * t + 2.0;
  return 0.0;
}

struct AxisPlan {
  std::vector<std::array<Index, 4>> idx;
  std::vector<std::array<double, 4>> wgt;
};

AxisPlan plan_axis(Index n, Index m) {
  AxisPlan p;
  p.idx.resize(static_cast<std::size_t>(m));
  p.wgt.resize(static_cast<std::size_t>(m));
  const double s = static_cast<double>(m) / static_cast<double>(n);
  for (Index o = 0; o < m; ++o) {
    const double center = (static_cast<double>(o) + 0.5) / s - 0.5;
    const Index base = static_cast<Index>(std::floor(center));
    const double f = center - static_cast<double>(base);
    const double w[4] = {cubic_weight(f + 1.0), cubic_weight(f), cubic_weight(1.0 - f),
                         cubic_weight(2.0 - f)};
    for (int k = 0; k < 4; ++k) {
      p.idx[o][k] = std::clamp<Index>(base - 1 + k, 0, n - 1);
      p.wgt[o][k] = w[k];
    }
  }
  return p;
}

}  // namespace

Tensor bicubic_resize(const Tensor& image, Index out_h, Index out_w) {
  if (image.rank() != 3)
    throw ShapeError("bicubic_resize: expected [C, H, W], got " + shape_str(image.shape()));
  if (out_h < 1 || out_w < 1)
    throw ContractError("bicubic_resize: target extents must be positive, got " +
                        std::to_string(out_h) + "x" + std::to_string(out_w));
  const Index c = image.extent(0), h = image.extent(1), w = image.extent(2);
  std::span<const double> src = image.values();

  const AxisPlan px = plan_axis(w, out_w);
  std::vector<double> mid(static_cast<std::size_t>(c * h * out_w));
  for (Index row = 0; row < c * h; ++row)
    for (Index o = 0; o < out_w; ++o) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += px.wgt[o][k] * src[row * w + px.idx[o][k]];
      mid[row * out_w + o] = acc;
    }

  const AxisPlan py = plan_axis(h, out_h);
  std::vector<double> out(static_cast<std::size_t>(c * out_h * out_w));
  for (Index ch = 0; ch < c; ++ch)
    for (Index o = 0; o < out_h; ++o)
      for (Index x = 0; x < out_w; ++x) {
        double acc = 0.0;
        for (int k = 0; k < 4; ++k) acc += py.wgt[o][k] * mid[(ch * h + py.idx[o][k]) * out_w + x];
        out[(ch * out_h + o) * out_w + x] = acc;
      }
  return Tensor::from({c, out_h, out_w}, std::move(out));
}

Tensor bicubic_resize(const Tensor& image, double scale) {
  if (!(scale > 0.0)) throw ContractError("bicubic_resize: scale must be positive");
  if (image.rank() != 3)
    throw ShapeError("bicubic_resize: expected [C, H, W], got " + shape_str(image.shape()));
  const Index out_h = static_cast<Index>(std::llround(static_cast<double>(image.extent(1)) * scale));
  const Index out_w = static_cast<Index>(std::llround(static_cast<double>(image.extent(2)) * scale));
  return bicubic_resize(image, out_h, out_w);
}

Tensor nearest_upscale(const Tensor& image, Index factor) {
  if (image.rank() != 3)
    throw ShapeError("nearest_upscale: expected [C, H, W], got " + shape_str(image.shape()));
  if (factor < 1) throw ContractError("nearest_upscale: factor must be at least 1");
  const Index c = image.extent(0), h = image.extent(1), w = image.extent(2);
  std::span<const double> src = image.values();
  std::vector<double> out(static_cast<std::size_t>(c * h * factor * w * factor));
  std::size_t o = 0;
  for (Index ch = 0; ch < c; ++ch)
    for (Index y = 0; y < h * factor; ++y)
      for (Index x = 0; x < w * factor; ++x) out[o++] = src[(ch * h + y / factor) * w + x / factor];
  return Tensor::from({c, h * factor, w * factor}, std::move(out));
}

ToyModelParams ToyModelParams::init(Index scale, std::uint64_t seed, Index hidden) {
  if (scale < 1) throw ConfigError("toy model: scale must be at least 1");
  if (hidden < 1) throw ConfigError("toy model: hidden width must be at least 1");
  Rng rng(seed);
  auto he_rows = [&rng](Index rows, Index cols) {
    std::vector<double> v(static_cast<std::size_t>(rows * cols));
    const double dev = std::sqrt(2.0 / static_cast<double>(cols));
    for (double& x : v) x = rng.next_normal() * dev;
    return v;
  };
  ToyModelParams p;
  p.hidden = hidden;
  p.scale = scale;
  p.w1 = Tensor::from({hidden, 27}, he_rows(hidden, 27));
  p.b1 = Tensor::zeros({hidden});
  p.w2 = Tensor::from({3 * scale * scale, hidden * 9}, he_rows(3 * scale * scale, hidden * 9));
  p.b2 = Tensor::zeros({3 * scale * scale});
  return p;
}

Index ToyModelParams::count() const {
  return w1.numel() + b1.numel() + w2.numel() + b2.numel();
}

void ToyModelParams::validate() const {
  if (!w1.defined() || !b1.defined() || !w2.defined() || !b2.defined())
    throw ContractError("toy model: parameters are uninitialized");
  const Shape sw1 = {hidden, 27}, sb1 = {hidden};
  const Shape sw2 = {3 * scale * scale, hidden * 9}, sb2 = {3 * scale * scale};
  if (w1.shape() != sw1 || b1.shape() != sb1 || w2.shape() != sw2 || b2.shape() != sb2)
    throw ShapeError("toy model: parameter shapes do not match hidden=" + std::to_string(hidden) +
                     " scale=" + std::to_string(scale));
  for (const Tensor* t : {&w1, &b1, &w2, &b2})
    for (double v : t->values())
      if (!std::isfinite(v)) throw ValueError("toy model: parameters contain non-finite values");
}

Tensor toy_forward(const ToyModelParams& params, const Tensor& lr_batch) {
  params.validate();
  if (lr_batch.rank() != 4)
    throw ShapeError("toy_forward: expected [B, 3, h, w], got " + shape_str(lr_batch.shape()));
  if (lr_batch.extent(1) != 3)
    throw ShapeError("toy_forward: expected 3 input channels, got " +
                     std::to_string(lr_batch.extent(1)));
  const Index b = lr_batch.extent(0), h = lr_batch.extent(2), w = lr_batch.extent(3);
  const Index s = params.scale, hid = params.hidden;
  const Index rows = b * h * w;

  // conv1 as gather + matmul: one row per output pixel, columns (ch, dy, dx)
  auto idx1 = std::make_shared<std::vector<Index>>();
  idx1->reserve(static_cast<std::size_t>(rows * 27));
  for (Index bi = 0; bi < b; ++bi)
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x)
        for (Index ch = 0; ch < 3; ++ch)
          for (Index dy = -1; dy <= 1; ++dy)
            for (Index dx = -1; dx <= 1; ++dx) {
              const Index yy = y + dy, xx = x + dx;
              idx1->push_back(yy < 0 || yy >= h || xx < 0 || xx >= w
                                  ? -1
                                  : ((bi * 3 + ch) * h + yy) * w + xx);
            }
  auto bias_rows = [rows](Index width) {
    auto idx = std::make_shared<std::vector<Index>>();
    idx->reserve(static_cast<std::size_t>(rows * width));
    for (Index r = 0; r < rows; ++r)
      for (Index ch = 0; ch < width; ++ch) idx->push_back(ch);
    return idx;
  };

  Tensor cols1 = gather(lr_batch, idx1, {rows, 27});
  Tensor act = clamp_min(add(matmul(cols1, transpose(params.w1)),
                             gather(params.b1, bias_rows(hid), {rows, hid})),
                         0.0);

  // conv2 reads the [rows, hid] activation, same neighborhood layout
  auto idx2 = std::make_shared<std::vector<Index>>();
  idx2->reserve(static_cast<std::size_t>(rows * hid * 9));
  for (Index bi = 0; bi < b; ++bi)
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x)
        for (Index ch = 0; ch < hid; ++ch)
          for (Index dy = -1; dy <= 1; ++dy)
            for (Index dx = -1; dx <= 1; ++dx) {
              const Index yy = y + dy, xx = x + dx;
              idx2->push_back(yy < 0 || yy >= h || xx < 0 || xx >= w
                                  ? -1
                                  : (((bi * h) + yy) * w + xx) * hid + ch);
            }
  Tensor cols2 = gather(act, idx2, {rows, hid * 9});
  const Index out_ch = 3 * s * s;
  Tensor head = add(matmul(cols2, transpose(params.w2)),
                    gather(params.b2, bias_rows(out_ch), {rows, out_ch}));

  // pixel shuffle: channel group c*s^2 + dy*s + dx lands at spatial offset (dy, dx)
  auto sidx = std::make_shared<std::vector<Index>>();
  sidx->reserve(static_cast<std::size_t>(b * 3 * s * h * s * w));
  for (Index bi = 0; bi < b; ++bi)
    for (Index c = 0; c < 3; ++c)
      for (Index oy = 0; oy < s * h; ++oy)
        for (Index ox = 0; ox < s * w; ++ox) {
          const Index row = (bi * h + oy / s) * w + ox / s;
          sidx->push_back(row * out_ch + c * s * s + (oy % s) * s + ox % s);
        }
  return gather(head, sidx, {b, 3, s * h, s * w});
}

double psnr(const Tensor& a, const Tensor& b, double max_value) {
  if (a.shape() != b.shape())
    throw ShapeError("psnr: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                     " differ");
  if (!(max_value > 0.0)) throw ValueError("psnr: max value must be positive");
  double acc = 0.0;
  for (Index i = 0; i < a.numel(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(a.numel());
  if (mse == 0.0) return 100.0;
  return std::min(100.0, 20.0 * std::log10(max_value / std::sqrt(mse)));
}

std::vector<Tensor> synthetic_dataset(Index count, Index h, Index w, std::uint64_t seed) {
  if (count < 1 || h < 1 || w < 1)
    throw ContractError("synthetic_dataset: count and extents must be positive");
  std::vector<Tensor> images;
  images.reserve(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) {
    Rng rng(derive(seed, {static_cast<std::uint64_t>(i)}));

    double base[3], du[3], dv[3], gain[3];
    for (int c = 0; c < 3; ++c) {
      base[c] = rng.next_in(0.25, 0.75);
      du[c] = rng.next_in(-0.25, 0.25);
      dv[c] = rng.next_in(-0.25, 0.25);
      gain[c] = rng.next_in(0.7, 1.3);
    }

    // shared texture field: oriented waves in two frequency bands, so every
    // crop keeps distinguishable high frequencies
    struct Wave {
      double fx, fy, phase, amp;
    };
    std::array<Wave, 4> waves;
    for (std::size_t k = 0; k < waves.size(); ++k) {
      const double ang = rng.next_in(0.0, 2.0 * kPi);
      const double freq = k < 2 ? rng.next_in(3.0, 8.0) : rng.next_in(8.0, 24.0);
      waves[k] = {freq * std::cos(ang), freq * std::sin(ang), rng.next_in(0.0, 2.0 * kPi),
                  rng.next_in(0.05, 0.10)};
    }

    struct Rect {
      Index x0, y0, x1, y1;
      double delta[3];
    };
    std::vector<Rect> rects(2 + static_cast<std::size_t>(rng.next_below(3)));
    for (Rect& r : rects) {
      r.x0 = static_cast<Index>(rng.next_below(static_cast<std::uint64_t>(std::max<Index>(1, w / 2))));
      r.y0 = static_cast<Index>(rng.next_below(static_cast<std::uint64_t>(std::max<Index>(1, h / 2))));
      r.x1 = std::min<Index>(w, r.x0 + 3 + static_cast<Index>(rng.next_below(
                                               static_cast<std::uint64_t>(std::max<Index>(1, w / 2)))));
      r.y1 = std::min<Index>(h, r.y0 + 3 + static_cast<Index>(rng.next_below(
                                               static_cast<std::uint64_t>(std::max<Index>(1, h / 2)))));
      for (double& d : r.delta) d = rng.next_in(-0.3, 0.3);
    }

    std::vector<double> v(static_cast<std::size_t>(3 * h * w));
    for (int c = 0; c < 3; ++c)
      for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) {
          const double u = w > 1 ? static_cast<double>(x) / static_cast<double>(w - 1) : 0.0;
          const double t = h > 1 ? static_cast<double>(y) / static_cast<double>(h - 1) : 0.0;
          double val = base[c] + du[c] * u + dv[c] * t;
          for (const Wave& wv : waves)
            val += gain[c] * wv.amp * std::sin(2.0 * kPi * (wv.fx * u + wv.fy * t) + wv.phase);
          for (const Rect& r : rects)
            if (x >= r.x0 && x < r.x1 && y >= r.y0 && y < r.y1) val += r.delta[c];
          val += rng.next_in(-0.02, 0.02);
          v[(static_cast<Index>(c) * h + y) * w + x] = val;
        }
    // affine rescale into [0.02, 0.98] rather than clamping: saturation would
    // flatten whole patches and erase the texture the loss relies on
    const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
    const double lo = *lo_it, span = *hi_it - *lo_it;
    for (double& x : v) x = span > 0.0 ? 0.02 + 0.96 * (x - lo) / span : 0.5;
    images.push_back(Tensor::from({3, h, w}, std::move(v)));
  }
  return images;
}

void TrainConfig::validate() const {
  if (epochs_phase1 < 1 || epochs_phase2 < 1 || steps_per_epoch < 1)
    throw ConfigError("train: epoch and step counts must be at least 1");
  if (batch < 1) throw ConfigError("train: batch size must be at least 1");
  if (lr_phase1 < 0.0 || lr_phase2 < 0.0)
    throw ConfigError("train: learning rates must be non-negative");
  if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0))
    throw ConfigError("train: Adam betas must lie strictly between 0 and 1");
  if (!(adam_eps > 0.0)) throw ConfigError("train: Adam epsilon must be positive");
  if (scale < 1 || hidden < 1) throw ConfigError("train: scale and hidden width must be at least 1");
  if (lr_crop < 1) throw ConfigError("train: crop size must be at least 1");
  if (hr_crop != lr_crop * scale)
    throw ConfigError("train: hr crop (" + std::to_string(hr_crop) +
                      ") must equal lr crop times scale (" + std::to_string(lr_crop * scale) + ")");
  if (hr_crop % contrast.patch_size != 0)
    throw ConfigError("train: mini-patch size " + std::to_string(contrast.patch_size) +
                      " must divide the hr crop " + std::to_string(hr_crop));
  weights.validate();
  enhance.validate();
  contrast.validate();
}

namespace {

struct AdamState {
  std::vector<double> m, v;
  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

// one bias-corrected update; returns the new parameter values
std::vector<double> adam_step(const Tensor& param, AdamState& st, double lr, double beta1,
                              double beta2, double eps, Index t) {
  std::vector<double> next(param.values().begin(), param.values().end());
  std::span<const double> g = param.grad();
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < next.size(); ++i) {
    st.m[i] = beta1 * st.m[i] + (1.0 - beta1) * g[i];
    st.v[i] = beta2 * st.v[i] + (1.0 - beta2) * g[i] * g[i];
    next[i] -= lr * (st.m[i] / bc1) / (std::sqrt(st.v[i] / bc2) + eps);
  }
  return next;
}

std::vector<double> copy_values(const Tensor& t) {
  return {t.values().begin(), t.values().end()};
}

}  // namespace

TrainResult train(const std::vector<Tensor>& dataset, const TrainConfig& cfg) {
  cfg.validate();
  if (dataset.empty()) throw ContractError("train: dataset is empty");
  if (cfg.weights.w2 > 0.0)
    throw ConfigError("train: the perceptual weight needs a feature hook; the toy trainer has none");

  std::vector<Tensor> lr_images;
  lr_images.reserve(dataset.size());
  for (const Tensor& img : dataset) {
    if (img.rank() != 3 || img.extent(0) != 3)
      throw ShapeError("train: dataset images must be [3, H, W], got " + shape_str(img.shape()));
    if (img.extent(1) % cfg.scale != 0 || img.extent(2) % cfg.scale != 0)
      throw ContractError("train: image extents " + shape_str(img.shape()) +
                          " must be divisible by scale " + std::to_string(cfg.scale));
    Tensor lr = bicubic_resize(img, img.extent(1) / cfg.scale, img.extent(2) / cfg.scale);
    if (lr.extent(1) < cfg.lr_crop || lr.extent(2) < cfg.lr_crop)
      throw ContractError("train: image " + shape_str(img.shape()) + " is too small for " +
                          std::to_string(cfg.lr_crop) + "-pixel lr crops");
    lr_images.push_back(std::move(lr));
  }

  ToyModelParams params = ToyModelParams::init(cfg.scale, derive(cfg.seed, {0}), cfg.hidden);
  TrainResult result;
  result.trace.reserve(
      static_cast<std::size_t>((cfg.epochs_phase1 + cfg.epochs_phase2) * cfg.steps_per_epoch));

  const Index lc = cfg.lr_crop, hc = cfg.hr_crop;
  Index global = 0;
  for (int phase = 1; phase <= 2; ++phase) {
    const Index steps =
        (phase == 1 ? cfg.epochs_phase1 : cfg.epochs_phase2) * cfg.steps_per_epoch;
    const double lr0 = phase == 1 ? cfg.lr_phase1 : cfg.lr_phase2;
    AdamState sw1(static_cast<std::size_t>(params.w1.numel()));
    AdamState sb1(static_cast<std::size_t>(params.b1.numel()));
    AdamState sw2(static_cast<std::size_t>(params.w2.numel()));
    AdamState sb2(static_cast<std::size_t>(params.b2.numel()));

    for (Index t = 0; t < steps; ++t, ++global) {
      const double lr =
          lr0 * 0.5 * (1.0 + std::cos(kPi * static_cast<double>(t) / static_cast<double>(steps)));

      Rng rng(derive(cfg.seed,
                     {static_cast<std::uint64_t>(phase), static_cast<std::uint64_t>(t)}));
      std::vector<double> lrv(static_cast<std::size_t>(cfg.batch * 3 * lc * lc));
      std::vector<double> hrv(static_cast<std::size_t>(cfg.batch * 3 * hc * hc));
      for (Index item = 0; item < cfg.batch; ++item) {
        const std::size_t pick = rng.next_below(lr_images.size());
        const Tensor& lr_img = lr_images[pick];
        const Tensor& hr_img = dataset[pick];
        const Index lh = lr_img.extent(1), lw = lr_img.extent(2);
        const Index ly = static_cast<Index>(rng.next_below(static_cast<std::uint64_t>(lh - lc + 1)));
        const Index lx = static_cast<Index>(rng.next_below(static_cast<std::uint64_t>(lw - lc + 1)));
        for (Index c = 0; c < 3; ++c)
          for (Index y = 0; y < lc; ++y)
            for (Index x = 0; x < lc; ++x)
              lrv[((item * 3 + c) * lc + y) * lc + x] =
                  lr_img.values()[(c * lh + ly + y) * lw + lx + x];
        const Index hy = ly * cfg.scale, hx = lx * cfg.scale;
        const Index hh = hr_img.extent(1), hw = hr_img.extent(2);
        for (Index c = 0; c < 3; ++c)
          for (Index y = 0; y < hc; ++y)
            for (Index x = 0; x < hc; ++x)
              hrv[((item * 3 + c) * hc + y) * hc + x] =
                  hr_img.values()[(c * hh + hy + y) * hw + hx + x];
      }
      Tensor lr_batch = Tensor::from({cfg.batch, 3, lc, lc}, std::move(lrv));
      Tensor hr_batch = Tensor::from({cfg.batch, 3, hc, hc}, std::move(hrv));

      Tape tape;
      ToyModelParams live;
      live.hidden = params.hidden;
      live.scale = params.scale;
      live.w1 = tape.variable(params.w1.shape(), copy_values(params.w1));
      live.b1 = tape.variable(params.b1.shape(), copy_values(params.b1));
      live.w2 = tape.variable(params.w2.shape(), copy_values(params.w2));
      live.b2 = tape.variable(params.b2.shape(), copy_values(params.b2));

      Tensor sr = toy_forward(live, lr_batch);
      Tensor l1 = l1_loss(sr, hr_batch);
      TraceRow row;
      row.step = global;
      Tensor objective;
      if (phase == 1) {
        objective = l1;
        row.l1 = l1.value();
        row.ld = 0.0;
        row.total = row.l1;
      } else {
        Tensor ld = decloss(sr, hr_batch, cfg.enhance, cfg.contrast);
        objective = add(scale(l1, cfg.weights.w1), scale(ld, cfg.weights.w3));
        row.l1 = l1.value();
        row.ld = ld.value();
        row.total = objective.value();
      }
      if (!std::isfinite(row.total) || !std::isfinite(row.l1) || !std::isfinite(row.ld))
        throw ValueError("train: non-finite loss at step " + std::to_string(global));
      tape.backward(objective);

      params.w1 = Tensor::from(params.w1.shape(),
                               adam_step(live.w1, sw1, lr, cfg.beta1, cfg.beta2, cfg.adam_eps, t + 1));
      params.b1 = Tensor::from(params.b1.shape(),
                               adam_step(live.b1, sb1, lr, cfg.beta1, cfg.beta2, cfg.adam_eps, t + 1));
      params.w2 = Tensor::from(params.w2.shape(),
                               adam_step(live.w2, sw2, lr, cfg.beta1, cfg.beta2, cfg.adam_eps, t + 1));
      params.b2 = Tensor::from(params.b2.shape(),
                               adam_step(live.b2, sb2, lr, cfg.beta1, cfg.beta2, cfg.adam_eps, t + 1));
      result.trace.push_back(row);
    }
  }
  result.params = std::move(params);
  return result;
}

void save_checkpoint(const ToyModelParams& params, const std::string& path) {
  params.validate();
  nlohmann::json header;
  header["format"] = 1;
  header["scale"] = params.scale;
  header["hidden"] = params.hidden;
  header["blocks"] = nlohmann::json::array();
  const std::pair<const char*, const Tensor*> blocks[] = {
      {"w1", &params.w1}, {"b1", &params.b1}, {"w2", &params.w2}, {"b2", &params.b2}};
  for (const auto& [name, t] : blocks) {
    nlohmann::json b;
    b["name"] = name;
    b["shape"] = t->shape();
    header["blocks"].push_back(b);
  }
  const std::string hs = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out.write("DECL1", 5);
  const std::uint32_t len = static_cast<std::uint32_t>(hs.size());
  const char lenb[4] = {static_cast<char>(len & 0xff), static_cast<char>((len >> 8) & 0xff),
                        static_cast<char>((len >> 16) & 0xff),
                        static_cast<char>((len >> 24) & 0xff)};
  out.write(lenb, 4);
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& [name, t] : blocks)
    out.write(reinterpret_cast<const char*>(t->values().data()),
              static_cast<std::streamsize>(t->numel() * static_cast<Index>(sizeof(double))));
  if (!out) throw IoError("failed writing checkpoint: " + path);
}

ToyModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[5];
  in.read(magic, 5);
  if (!in || std::string(magic, 5) != "DECL1")
    throw IoError("not a DECL1 checkpoint: " + path);
  unsigned char lenb[4];
  in.read(reinterpret_cast<char*>(lenb), 4);
  if (!in) throw IoError("truncated checkpoint header: " + path);
  const std::uint32_t len = static_cast<std::uint32_t>(lenb[0]) |
                            (static_cast<std::uint32_t>(lenb[1]) << 8) |
                            (static_cast<std::uint32_t>(lenb[2]) << 16) |
                            (static_cast<std::uint32_t>(lenb[3]) << 24);
  std::string hs(len, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError("truncated checkpoint header: " + path);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hs);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed checkpoint header in " + path + ": " + e.what());
  }
  if (!header.contains("format") || header["format"].get<int>() != 1)
    throw IoError("unsupported checkpoint format in " + path);

  ToyModelParams p;
  p.scale = header.value("scale", Index{0});
  p.hidden = header.value("hidden", Index{0});
  if (p.scale < 1 || p.hidden < 1)
    throw IoError("checkpoint header lacks a valid scale/hidden in " + path);
  const char* expected[] = {"w1", "b1", "w2", "b2"};
  Tensor* slots[] = {&p.w1, &p.b1, &p.w2, &p.b2};
  const auto& blocks = header["blocks"];
  if (!blocks.is_array() || blocks.size() != 4)
    throw IoError("checkpoint must carry exactly 4 parameter blocks: " + path);
  for (int i = 0; i < 4; ++i) {
    const auto& b = blocks[static_cast<std::size_t>(i)];
    if (b.value("name", std::string{}) != expected[i])
      throw IoError("unexpected checkpoint block order in " + path);
    const Shape shape = b["shape"].get<Shape>();
    std::vector<double> values(static_cast<std::size_t>(numel_of(shape)));
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!in) throw IoError("truncated checkpoint data: " + path);
    *slots[i] = Tensor::from(shape, std::move(values));
  }
  p.validate();
  return p;
}

void save_trace_csv(const std::vector<TraceRow>& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open trace file for writing: " + path);
  out << "step,l1,ld,total\n";
  out << std::setprecision(17);
  for (const TraceRow& r : trace)
    out << r.step << ',' << r.l1 << ',' << r.ld << ',' << r.total << '\n';
  if (!out) throw IoError("failed writing trace file: " + path);
}

}  // namespace decloss
