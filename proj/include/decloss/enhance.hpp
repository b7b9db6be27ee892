#pragma once

#include <complex>
#include <memory>
#include <optional>
#include <vector>

#include "decloss/tensor.hpp"

namespace decloss {

// Dense complex matrix, row-major, split real/imaginary storage.
struct ComplexMat {
  Index rows = 0, cols = 0;
  std::vector<double> re, im;

  ComplexMat() = default;
  ComplexMat(Index r, Index c)
      : rows(r), cols(c), re(static_cast<std::size_t>(r * c), 0.0),
        im(static_cast<std::size_t>(r * c), 0.0) {}

  std::complex<double> at(Index i, Index j) const {
    const auto k = static_cast<std::size_t>(i * cols + j);
    return {re[k], im[k]};
  }
};

// Transform matrices for one extent: fwd_jk = exp(-2*pi*i*j*k/n), inverse is
// the elementwise conjugate. fwd is symmetric and (1/n)*inv*fwd = identity.
struct FourierPlan {
  Index n = 0;
  std::vector<double> fwd_re, fwd_im;
  std::vector<double> inv_re, inv_im;
};

// Cached per size; safe to share across threads after construction.
std::shared_ptr<const FourierPlan> dft_matrix(Index n);

// F_h * Y * F_w for a real H x W image.
ComplexMat transform2d_forward(const Tensor& y);

// (1/HW) * conj(F_h) * Yf * conj(F_w), real component.
Tensor transform2d_inverse(const ComplexMat& yf);

// exact: inverse transform by complex conjugate matrices (roundtrip identity).
// real_matrix: inverse by the real matrix (Re F - Im F)^T instead; kept for
// comparison, not an exact inverse.
enum class InverseMode { exact, real_matrix };

struct EnhanceConfig {
  double alpha = 1.0;
  std::optional<double> mu;  // absent: extent / 4, chosen per dimension
  InverseMode inverse = InverseMode::exact;
  bool per_channel = true;  // channels are always transformed independently

  double mu_for(Index n) const { return mu ? *mu : static_cast<double>(n) / 4.0; }
  void validate() const;
};

// K_i = alpha * exp(-(i - (n-1)/2)^2 / (2 mu^2)); peak at the center index,
// which under the unshifted transform layout is the highest-frequency bin.
std::vector<double> gaussian_kernel(Index n, const EnhanceConfig& cfg);

// Per channel: inverse(kernel-weighted forward(y)). Linear in y, recorded on
// the tape with its exact adjoint. y is [B x C x H x W].
Tensor enhance(const Tensor& y, const EnhanceConfig& cfg);

}  // namespace decloss
