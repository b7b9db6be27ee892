#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>

namespace oracle {

namespace {

using cd = std::complex<double>;

cd root(Index j, Index k, Index n) {
  const double ang = -2.0 * std::numbers::pi * static_cast<double>(j) * static_cast<double>(k) /
                     static_cast<double>(n);
  return {std::cos(ang), std::sin(ang)};
}

double kernel_at(Index i, Index n, double alpha, double mu) {
  const double d = static_cast<double>(i) - static_cast<double>(n - 1) / 2.0;
  return alpha * std::exp(-d * d / (2.0 * mu * mu));
}

}  // namespace

std::vector<double> enhance(std::span<const double> y, Index b, Index c, Index h, Index w,
                            double alpha, double mu_h, double mu_w, bool real_matrix) {
  std::vector<double> out(y.size());
  const Index hw = h * w;
  for (Index s = 0; s < b * c; ++s) {
    std::span<const double> img = y.subspan(s * hw, hw);

    std::vector<cd> spec(hw);
    for (Index u = 0; u < h; ++u)
      for (Index v = 0; v < w; ++v) {
        cd acc = 0.0;
        for (Index m = 0; m < h; ++m)
          for (Index n = 0; n < w; ++n) acc += root(u, m, h) * img[m * w + n] * root(n, v, w);
        spec[u * w + v] = acc * kernel_at(u, h, alpha, mu_h) * kernel_at(v, w, alpha, mu_w);
      }

    for (Index m = 0; m < h; ++m)
      for (Index n = 0; n < w; ++n) {
        cd acc = 0.0;
        for (Index u = 0; u < h; ++u)
          for (Index v = 0; v < w; ++v) {
            cd lm = real_matrix ? cd(root(m, u, h).real() - root(m, u, h).imag(), 0.0)
                                : std::conj(root(m, u, h));
            cd rm = real_matrix ? cd(root(v, n, w).real() - root(v, n, w).imag(), 0.0)
                                : std::conj(root(v, n, w));
            acc += lm * spec[u * w + v] * rm;
          }
        out[s * hw + m * w + n] = acc.real() / static_cast<double>(hw);
      }
  }
  return out;
}

double spatial_loss(std::span<const double> sr, std::span<const double> hr, Index n, Index d,
                    const ContrastParams& p) {
  auto row = [d](std::span<const double> m, Index i) { return m.subspan(i * d, d); };
  auto cosine = [&](std::span<const double> a, std::span<const double> bvec) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (Index k = 0; k < d; ++k) {
      dot += a[k] * bvec[k];
      na += a[k] * a[k];
      nb += bvec[k] * bvec[k];
    }
    return dot / (std::max(std::sqrt(na), p.cos_epsilon) * std::max(std::sqrt(nb), p.cos_epsilon));
  };

  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    double q_pos = 0.0, q_neg = 0.0;
    for (Index j = 0; j < n; ++j) {
      double dist2 = 0.0;
      for (Index k = 0; k < d; ++k) {
        const double diff = hr[i * d + k] - hr[j * d + k];
        dist2 += diff * diff;
      }
      const double dist = std::sqrt(dist2);
      const double mask =
          dist == 0.0 ? p.mask_clamp : -20.0 * std::log10(dist / p.max_value);

      const double s_ss = cosine(row(sr, i), row(sr, j));
      const double s_sh = cosine(row(sr, i), row(hr, j));
      if (mask >= p.eta) {
        q_pos += p.divide_outside
                     ? (std::exp(s_ss) + 2.0 * std::exp(s_sh)) / p.t_pos
                     : std::exp(s_ss / p.t_pos) + 2.0 * std::exp(s_sh / p.t_pos);
      } else {
        q_neg += p.divide_outside
                     ? (std::exp(s_ss) + 2.0 * std::exp(s_sh)) / p.t_neg
                     : std::exp(s_ss / p.t_neg) + 2.0 * std::exp(s_sh / p.t_neg);
      }
    }
    if (q_pos == 0.0 || q_neg == 0.0) throw std::runtime_error("oracle: degenerate row");
    total += std::log(q_pos / q_neg);
  }
  return -total / static_cast<double>(n);
}

std::vector<double> patchify(std::span<const double> x, Index b, Index c, Index h, Index w,
                             Index p) {
  const Index gh = h / p, gw = w / p;
  std::vector<double> out(x.size());
  Index o = 0;
  for (Index bi = 0; bi < b; ++bi)
    for (Index gy = 0; gy < gh; ++gy)
      for (Index gx = 0; gx < gw; ++gx)
        for (Index ci = 0; ci < c; ++ci)
          for (Index py = 0; py < p; ++py)
            for (Index px = 0; px < p; ++px)
              out[o++] = x[((bi * c + ci) * h + gy * p + py) * w + gx * p + px];
  return out;
}

double p_star(std::span<const double> sr, const std::vector<std::vector<double>>& hr_pool,
              double eps, Index nearest_k) {
  std::vector<std::pair<double, Index>> dist;
  for (Index j = 0; j < static_cast<Index>(hr_pool.size()); ++j) {
    double acc = 0.0;
    for (std::size_t k = 0; k < sr.size(); ++k) {
      const double diff = hr_pool[j][k] - sr[k];
      acc += diff * diff;
    }
    dist.emplace_back(std::sqrt(acc), j);
  }
  std::stable_sort(dist.begin(), dist.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  const Index n = static_cast<Index>(dist.size());
  const Index take = nearest_k > 0 ? std::min(nearest_k, n) : n;
  double denom = 0.0;
  for (Index j = 1; j < take; ++j) denom += dist[j].first;
  return std::max(dist[0].first, eps) / denom;
}

std::vector<double> bicubic(std::span<const double> img, Index c, Index h, Index w, Index out_h,
                            Index out_w) {
  auto weight = [](double x) {
    x = std::abs(x);
    if (x <= 1.0) return 1.5 * x * x * x - 2.5 * x * x + 1.0;
    if (x < 2.0) return -0.5 * x * x * x + 2.5 * x * x - 4.0 * x + 2.0;
    return 0.0;
  };
  auto clamp = [](Index v, Index n) { return std::max<Index>(0, std::min(v, n - 1)); };
  const double sy = static_cast<double>(out_h) / static_cast<double>(h);
  const double sx = static_cast<double>(out_w) / static_cast<double>(w);

  std::vector<double> out(static_cast<std::size_t>(c * out_h * out_w));
  for (Index ch = 0; ch < c; ++ch)
    for (Index oy = 0; oy < out_h; ++oy)
      for (Index ox = 0; ox < out_w; ++ox) {
        const double cy = (static_cast<double>(oy) + 0.5) / sy - 0.5;
        const double cx = (static_cast<double>(ox) + 0.5) / sx - 0.5;
        const Index by = static_cast<Index>(std::floor(cy));
        const Index bx = static_cast<Index>(std::floor(cx));
        double acc = 0.0;
        for (Index m = -1; m <= 2; ++m)
          for (Index n = -1; n <= 2; ++n) {
            const double wgt = weight(cy - static_cast<double>(by + m)) *
                               weight(cx - static_cast<double>(bx + n));
            acc += wgt * img[(ch * h + clamp(by + m, h)) * w + clamp(bx + n, w)];
          }
        out[(ch * out_h + oy) * out_w + ox] = acc;
      }
  return out;
}

}  // namespace oracle
