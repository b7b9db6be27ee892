#include "decloss/enhance.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <utility>

namespace decloss {

namespace {

void require_finite(std::span<const double> v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw ValueError(std::string(what) + ": non-finite input");
}

// c = a * b, complex dense
ComplexMat cmul(const ComplexMat& a, const ComplexMat& b) {
  if (a.cols != b.rows) throw ShapeError("complex matmul: inner extents disagree");
  ComplexMat c(a.rows, b.cols);
  for (Index i = 0; i < a.rows; ++i) {
    for (Index k = 0; k < a.cols; ++k) {
      const double ar = a.re[i * a.cols + k], ai = a.im[i * a.cols + k];
      if (ar == 0.0 && ai == 0.0) continue;
      const double* br = &b.re[k * b.cols];
      const double* bi = &b.im[k * b.cols];
      double* cr = &c.re[i * b.cols];
      double* ci = &c.im[i * b.cols];
      for (Index j = 0; j < b.cols; ++j) {
        cr[j] += ar * br[j] - ai * bi[j];
        ci[j] += ar * bi[j] + ai * br[j];
      }
    }
  }
  return c;
}

ComplexMat plan_matrix(const FourierPlan& p, bool conjugate) {
  ComplexMat m(p.n, p.n);
  m.re = p.fwd_re;
  m.im = conjugate ? p.inv_im : p.fwd_im;
  return m;
}

ComplexMat diag_of(const std::vector<double>& k) {
  ComplexMat d(static_cast<Index>(k.size()), static_cast<Index>(k.size()));
  for (std::size_t i = 0; i < k.size(); ++i) d.re[i * k.size() + i] = k[i];
  return d;
}

ComplexMat complex_of(const Tensor& y) {
  ComplexMat m(y.extent(0), y.extent(1));
  auto v = y.values();
  m.re.assign(v.begin(), v.end());
  return m;
}

Tensor real_part(const ComplexMat& m, double scale_by) {
  std::vector<double> out(m.re.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = m.re[i] * scale_by;
  return Tensor::from({m.rows, m.cols}, std::move(out));
}

// The four real matrices of the linear map y -> L1*y*R1 - L2*y*R2 that
// realizes inverse(diag(kh) * forward(y) * diag(kw)) for one channel.
struct Sandwich {
  Tensor l1, l2, r1, r2;
};

Sandwich build_sandwich(Index h, Index w, const EnhanceConfig& cfg) {
  auto ph = dft_matrix(h);
  auto pw = dft_matrix(w);
  const ComplexMat dh = diag_of(gaussian_kernel(h, cfg));
  const ComplexMat dw = diag_of(gaussian_kernel(w, cfg));
  const ComplexMat fh = plan_matrix(*ph, false);
  const ComplexMat fw = plan_matrix(*pw, false);

  ComplexMat left, right;
  if (cfg.inverse == InverseMode::exact) {
    left = cmul(plan_matrix(*ph, true), cmul(dh, fh));
    right = cmul(fw, cmul(dw, plan_matrix(*pw, true)));
  } else {
    // real inverse matrix (Re F - Im F)^T; F symmetric so the transpose is a
    // no-op, and multiplying it against the weighted spectrum keeps only the
    // spectrum's real component in the image result
    ComplexMat mh(h, h), mw(w, w);
    for (std::size_t i = 0; i < mh.re.size(); ++i) mh.re[i] = fh.re[i] - fh.im[i];
    for (std::size_t i = 0; i < mw.re.size(); ++i) mw.re[i] = fw.re[i] - fw.im[i];
    left = cmul(mh, cmul(dh, fh));
    right = cmul(fw, cmul(dw, mw));
  }

  const double sh = 1.0 / static_cast<double>(h);
  const double sw = 1.0 / static_cast<double>(w);
  auto part = [](const ComplexMat& m, const std::vector<double>& v, double s) {
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * s;
    return Tensor::from({m.rows, m.cols}, std::move(out));
  };
  return {part(left, left.re, sh), part(left, left.im, sh), part(right, right.re, sw),
          part(right, right.im, sw)};
}

}  // namespace

void EnhanceConfig::validate() const {
  if (!(alpha > 0.0)) throw ConfigError("enhance: alpha must be positive");
  if (mu && !(*mu > 0.0)) throw ConfigError("enhance: mu must be positive");
  if (!per_channel) throw ConfigError("enhance: only per-channel transforms are supported");
}

std::shared_ptr<const FourierPlan> dft_matrix(Index n) {
  if (n < 1) throw ContractError("dft_matrix: extent must be at least 1");
  static std::mutex mu;
  static std::map<Index, std::shared_ptr<const FourierPlan>> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;

  auto p = std::make_shared<FourierPlan>();
  p->n = n;
  const std::size_t nn = static_cast<std::size_t>(n * n);
  p->fwd_re.resize(nn);
  p->fwd_im.resize(nn);
  for (Index j = 0; j < n; ++j) {
    for (Index k = 0; k < n; ++k) {
      // reduce j*k mod n first so the angle stays in [0, 2*pi)
      const double angle = -2.0 * std::numbers::pi * static_cast<double>((j * k) % n) /
                           static_cast<double>(n);
      p->fwd_re[j * n + k] = std::cos(angle);
      p->fwd_im[j * n + k] = std::sin(angle);
    }
  }
  p->inv_re = p->fwd_re;
  p->inv_im.resize(nn);
  for (std::size_t i = 0; i < nn; ++i) p->inv_im[i] = -p->fwd_im[i];
  cache.emplace(n, p);
  return cache[n];
}

ComplexMat transform2d_forward(const Tensor& y) {
  if (y.rank() != 2) throw ShapeError("transform2d: expected a matrix, got " + shape_str(y.shape()));
  require_finite(y.values(), "transform2d");
  auto ph = dft_matrix(y.extent(0));
  auto pw = dft_matrix(y.extent(1));
  return cmul(cmul(plan_matrix(*ph, false), complex_of(y)), plan_matrix(*pw, false));
}

Tensor transform2d_inverse(const ComplexMat& yf) {
  if (yf.rows < 1 || yf.cols < 1) throw ShapeError("transform2d: empty spectrum");
  require_finite(yf.re, "transform2d");
  require_finite(yf.im, "transform2d");
  auto ph = dft_matrix(yf.rows);
  auto pw = dft_matrix(yf.cols);
  ComplexMat z = cmul(cmul(plan_matrix(*ph, true), yf), plan_matrix(*pw, true));
  return real_part(z, 1.0 / static_cast<double>(yf.rows * yf.cols));
}

std::vector<double> gaussian_kernel(Index n, const EnhanceConfig& cfg) {
  if (n < 1) throw ContractError("gaussian_kernel: extent must be at least 1");
  cfg.validate();
  const double mu = cfg.mu_for(n);
  const double center = static_cast<double>(n - 1) / 2.0;
  std::vector<double> k(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const double d = static_cast<double>(i) - center;
    k[i] = cfg.alpha * std::exp(-(d * d) / (2.0 * mu * mu));
  }
  return k;
}

Tensor enhance(const Tensor& y, const EnhanceConfig& cfg) {
  cfg.validate();
  if (y.rank() != 4)
    throw ShapeError("enhance: expected [batch, channel, height, width], got " +
                     shape_str(y.shape()));
  const Index b = y.extent(0), c = y.extent(1), h = y.extent(2), w = y.extent(3);
  const Sandwich s = build_sandwich(h, w, cfg);

  // y * R is computed with all (batch, channel) rows stacked; the left
  // multiply needs the height axis leading, so permute between the two.
  const Index bc = b * c;
  auto to_rows = std::make_shared<std::vector<Index>>(y.values().size());
  auto from_rows = std::make_shared<std::vector<Index>>(y.values().size());
  for (Index m = 0; m < bc; ++m)
    for (Index i = 0; i < h; ++i)
      for (Index j = 0; j < w; ++j) {
        (*to_rows)[(i * bc + m) * w + j] = (m * h + i) * w + j;
        (*from_rows)[(m * h + i) * w + j] = (i * bc + m) * w + j;
      }

  Tensor rows = reshape(y, {bc * h, w});
  auto half = [&](const Tensor& left, const Tensor& right) {
    Tensor t = matmul(rows, right);                     // [bc*h, w]
    Tensor g = gather(t, to_rows, {h, bc * w});         // height leading
    return matmul(left, g);                             // [h, bc*w]
  };
  Tensor diff = sub(half(s.l1, s.r1), half(s.l2, s.r2));
  return reshape(gather(diff, from_rows, {bc * h, w}), {b, c, h, w});
}

}  // namespace decloss
