#include "decloss/patching.hpp"

#include <memory>
#include <string>

namespace decloss {

Tensor MiniPatchBatch::flattened() const {
  return reshape(patches, {rows(), channels * patch * patch});
}

MiniPatchBatch patchify(const Tensor& x, Index p) {
  if (x.rank() != 4)
    throw ShapeError("patchify: expected [batch, channel, height, width], got " +
                     shape_str(x.shape()));
  if (p < 1) throw ContractError("patchify: patch size must be at least 1");
  const Index b = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
  if (h % p != 0 || w % p != 0)
    throw ContractError("patchify: patch size " + std::to_string(p) +
                        " does not divide image extents " + std::to_string(h) + "x" +
                        std::to_string(w));

  const Index gh = h / p, gw = w / p;
  auto idx = std::make_shared<std::vector<Index>>(x.values().size());
  Index o = 0;
  for (Index bi = 0; bi < b; ++bi)
    for (Index gy = 0; gy < gh; ++gy)
      for (Index gx = 0; gx < gw; ++gx)
        for (Index ci = 0; ci < c; ++ci)
          for (Index py = 0; py < p; ++py)
            for (Index px = 0; px < p; ++px)
              (*idx)[o++] = ((bi * c + ci) * h + gy * p + py) * w + gx * p + px;

  MiniPatchBatch mp;
  mp.batch = b;
  mp.channels = c;
  mp.height = h;
  mp.width = w;
  mp.patch = p;
  mp.patches = gather(x, idx, {b * gh * gw, c, p, p});
  return mp;
}

Tensor unpatchify(const MiniPatchBatch& mp) {
  const Index b = mp.batch, c = mp.channels, h = mp.height, w = mp.width, p = mp.patch;
  if (!mp.patches.defined() || b < 1 || c < 1 || p < 1 || h % p != 0 || w % p != 0)
    throw ContractError("unpatchify: inconsistent origin metadata");
  if (mp.patches.shape() != Shape{mp.rows(), c, p, p})
    throw ContractError("unpatchify: patches shape " + shape_str(mp.patches.shape()) +
                        " does not match origin " + shape_str({mp.rows(), c, p, p}));

  const Index gw = w / p;
  auto idx = std::make_shared<std::vector<Index>>(mp.patches.values().size());
  Index o = 0;
  for (Index bi = 0; bi < b; ++bi)
    for (Index ci = 0; ci < c; ++ci)
      for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) {
          const Index row = bi * mp.per_image() + (y / p) * gw + x / p;
          (*idx)[o++] = ((row * c + ci) * p + y % p) * p + x % p;
        }
  return gather(mp.patches, idx, {b, c, h, w});
}

}  // namespace decloss
