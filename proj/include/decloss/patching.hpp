#pragma once

#include "decloss/tensor.hpp"

namespace decloss {

// Non-overlapping P x P mini-patches of a [B, C, H, W] batch. Rows are
// ordered batch-major, then patch-grid row-major; both directions are pure
// index permutations, so gradients pass through untouched and
// unpatchify(patchify(x)) reproduces x bit-exactly.
struct MiniPatchBatch {
  Tensor patches;  // [(B*N) x C x P x P], N = H*W / P^2
  Index batch = 0, channels = 0, height = 0, width = 0, patch = 0;

  Index per_image() const { return (height / patch) * (width / patch); }
  Index rows() const { return batch * per_image(); }

  // [(B*N) x (C*P*P)] view of the same values.
  Tensor flattened() const;
};

MiniPatchBatch patchify(const Tensor& x, Index p);
Tensor unpatchify(const MiniPatchBatch& mp);

}  // namespace decloss
