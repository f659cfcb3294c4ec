#include "pcenet/pyramid.hpp"

#include <array>
#include <string>

#include "pcenet/errors.hpp"
#include "pcenet/image_io.hpp"

namespace pcenet::pyramid {
namespace {

constexpr std::array<double, 5> kBinomial = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};

// Reflect-101: -1 -> 1, n -> n-2.
inline int reflect(int i, int n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * (n - 1) - i;
  return i;
}

void require_square(const Raster& img, const char* what) {
  if (img.height() != img.width()) {
    throw DimensionError(std::string(what) + ": expected square raster, got " +
                         std::to_string(img.height()) + "x" + std::to_string(img.width()));
  }
}

}  // namespace

Raster gaussian_blur(const Raster& img) {
  const int h = img.height();
  const int w = img.width();
  if (h < 5 || w < 5) {
    throw DimensionError("gaussian_blur needs side >= 5, got " + std::to_string(h) + "x" + std::to_string(w));
  }
  Raster tmp(img.channels(), h, w);
  Raster out(img.channels(), h, w);
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int k = -2; k <= 2; ++k) acc += kBinomial[k + 2] * img.at(c, y, reflect(x + k, w));
        tmp.at(c, y, x) = acc;
      }
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int k = -2; k <= 2; ++k) acc += kBinomial[k + 2] * tmp.at(c, reflect(y + k, h), x);
        out.at(c, y, x) = acc;
      }
    }
  }
  return out;
}

Raster downsample(const Raster& img) {
  if (img.height() % 2 != 0 || img.width() % 2 != 0) {
    throw DimensionError("downsample needs even sides, got " + std::to_string(img.height()) + "x" +
                         std::to_string(img.width()));
  }
  const Raster blurred = gaussian_blur(img);
  Raster out(img.channels(), img.height() / 2, img.width() / 2);
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < out.height(); ++y)
      for (int x = 0; x < out.width(); ++x) out.at(c, y, x) = blurred.at(c, 2 * y, 2 * x);
  return out;
}

Raster upsample(const Raster& img, int target_side) {
  require_square(img, "upsample");
  if (target_side != 2 * img.width()) {
    throw DimensionError("upsample target " + std::to_string(target_side) + " is not twice the input side " +
                         std::to_string(img.width()));
  }
  return image_io::resize_bilinear(img, target_side, target_side);
}

std::vector<Raster> gaussian_pyramid(const Raster& img, int depth) {
  if (depth < 1) throw ParameterError("pyramid depth must be >= 1");
  require_square(img, "gaussian_pyramid");
  const int s = img.width();
  if (s % (1 << depth) != 0) {
    throw DimensionError("side " + std::to_string(s) + " is not divisible by 2^" + std::to_string(depth));
  }
  std::vector<Raster> g;
  g.reserve(depth + 1);
  g.push_back(img);
  for (int l = 0; l < depth; ++l) g.push_back(downsample(g.back()));
  return g;
}

LaplacianStack laplacian_decompose(const Raster& img, int depth) {
  std::vector<Raster> g = gaussian_pyramid(img, depth);
  LaplacianStack stack;
  stack.depth = depth;
  stack.base_side = img.width();
  stack.levels.reserve(depth + 1);
  for (int l = 0; l < depth; ++l) stack.levels.push_back(g[l] - upsample(g[l + 1], g[l].width()));
  stack.levels.push_back(std::move(g[depth]));
  return stack;
}

Raster laplacian_reconstruct(const LaplacianStack& stack) {
  if (stack.depth < 0 || static_cast<int>(stack.levels.size()) != stack.depth + 1) {
    throw DimensionError("stack has " + std::to_string(stack.levels.size()) + " levels for depth " +
                         std::to_string(stack.depth));
  }
  for (int l = 0; l <= stack.depth; ++l) {
    const Raster& p = stack.levels[l];
    const int expect = stack.base_side >> l;
    if (p.height() != expect || p.width() != expect || p.channels() != stack.levels[0].channels()) {
      throw DimensionError("level " + std::to_string(l) + " has side " + std::to_string(p.width()) +
                           ", expected " + std::to_string(expect));
    }
  }
  Raster g = stack.levels[stack.depth];
  for (int l = stack.depth - 1; l >= 0; --l) g = stack.levels[l] + upsample(g, stack.levels[l].width());
  return g;
}

}  // namespace pcenet::pyramid
