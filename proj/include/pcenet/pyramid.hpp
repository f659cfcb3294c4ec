#pragma once

#include <vector>

#include "pcenet/raster.hpp"

namespace pcenet::pyramid {

/// Band-pass levels p^0..p^{L-1} and the low-pass residual p^L.
/// Level l has side base_side / 2^l.
struct LaplacianStack {
  std::vector<Raster> levels;
  int depth = 0;  // L
  int base_side = 0;

  const Raster& residual() const { return levels.back(); }
};

/// Separable 5x5 binomial ([1 4 6 4 1]/16) smoothing with reflect-101
/// borders. Requires both sides >= 5.
Raster gaussian_blur(const Raster& img);

/// delta(.): blur, then keep even rows and columns. Sides must be even.
Raster downsample(const Raster& img);

/// mu(.): bilinear resize to target_side; target_side must be twice the input side.
Raster upsample(const Raster& img, int target_side);

/// g^0 = img, g^{l+1} = delta(g^l).
std::vector<Raster> gaussian_pyramid(const Raster& img, int depth);

LaplacianStack laplacian_decompose(const Raster& img, int depth);
inline LaplacianStack laplacian_decompose(const Image& img, int depth) {
  return laplacian_decompose(img.pixels, depth);
}

/// g^L = p^L, g^l = p^l + mu(g^{l+1}); returns g^0.
Raster laplacian_reconstruct(const LaplacianStack& stack);

}  // namespace pcenet::pyramid
