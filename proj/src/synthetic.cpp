#include "pcenet/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "pcenet/image_io.hpp"
#include "pcenet/rng.hpp"

namespace pcenet::synthetic {
namespace {

struct Point {
  double y, x;
};

// Darkens pixels near the polyline with a Gaussian cross-section.
void draw_vessel(Raster& img, const std::vector<Point>& path, double width, double depth) {
  const double s2 = 2.0 * width * width;
  const int reach = static_cast<int>(std::ceil(3 * width)) + 1;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    const Point a = path[i];
    const Point b = path[i + 1];
    const int y0 = std::max(0, static_cast<int>(std::min(a.y, b.y)) - reach);
    const int y1 = std::min(img.height() - 1, static_cast<int>(std::max(a.y, b.y)) + reach);
    const int x0 = std::max(0, static_cast<int>(std::min(a.x, b.x)) - reach);
    const int x1 = std::min(img.width() - 1, static_cast<int>(std::max(a.x, b.x)) + reach);
    const double dy = b.y - a.y;
    const double dx = b.x - a.x;
    const double len2 = std::max(dy * dy + dx * dx, 1e-12);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double t = std::clamp(((y - a.y) * dy + (x - a.x) * dx) / len2, 0.0, 1.0);
        const double py = a.y + t * dy - y;
        const double px = a.x + t * dx - x;
        const double f = depth * std::exp(-(py * py + px * px) / s2);
        // max over segments so joints are not darkened twice
        img.at(0, y, x) = std::min(img.at(0, y, x), 1.0 - f);
      }
  }
}

}  // namespace

Image synthetic_fundus(int side, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x66756E64ULL));
  const Mask fov = image_io::make_fov_mask(side, image_io::kDefaultFovRadius);
  const double c = (side - 1) / 2.0;
  const double radius = image_io::kDefaultFovRadius * side / 2.0;

  const double od_angle = rng.uniform(-0.3, 0.3) + (rng.bernoulli(0.5) ? 0.0 : std::numbers::pi);
  const Point optic{c + 0.1 * radius * std::sin(od_angle), c + 0.45 * radius * std::cos(od_angle)};
  const Point macula{c, c - 0.35 * radius * std::cos(od_angle)};
  const double od_r = rng.uniform(0.10, 0.14) * radius;
  const double base_r = rng.uniform(0.70, 0.85);
  const double base_g = rng.uniform(0.32, 0.45);
  const double base_b = rng.uniform(0.12, 0.22);

  // Vessel darkening mask in channel 0 of a scratch raster (1 = no vessel).
  Raster vessels(1, side, side, 1.0);
  const int trunks = static_cast<int>(rng.uniform_int(4, 6));
  for (int t = 0; t < trunks; ++t) {
    double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    double width = rng.uniform(0.010, 0.016) * side;
    Point p = optic;
    std::vector<Point> path{p};
    const double step = 0.03 * side;
    for (int i = 0; i < 40; ++i) {
      angle += rng.uniform(-0.25, 0.25);
      p = {p.y + step * std::sin(angle), p.x + step * std::cos(angle)};
      path.push_back(p);
      if (std::hypot(p.y - c, p.x - c) > radius) break;
      if (i > 4 && i % 6 == 0 && rng.bernoulli(0.7)) {
        // side branch
        double ba = angle + (rng.bernoulli(0.5) ? 1 : -1) * rng.uniform(0.4, 0.9);
        Point q = p;
        std::vector<Point> branch{q};
        for (int j = 0; j < 15; ++j) {
          ba += rng.uniform(-0.3, 0.3);
          q = {q.y + step * 0.8 * std::sin(ba), q.x + step * 0.8 * std::cos(ba)};
          branch.push_back(q);
          if (std::hypot(q.y - c, q.x - c) > radius) break;
        }
        draw_vessel(vessels, branch, width * 0.6, 0.55);
      }
    }
    draw_vessel(vessels, path, width, 0.6);
  }

  Raster px(3, side, side);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      if (!fov.at(y, x)) continue;
      const double rr = std::hypot(y - c, x - c) / radius;
      const double vignette = 1.0 - 0.35 * rr * rr;
      const double od = std::exp(-std::pow(std::hypot(y - optic.y, x - optic.x) / od_r, 2.0));
      const double mac = std::exp(-std::pow(std::hypot(y - macula.y, x - macula.x) / (0.18 * radius), 2.0));
      const double v = vessels.at(0, y, x);
      const double r = (base_r * vignette + 0.25 * od - 0.12 * mac) * (0.75 + 0.25 * v);
      const double g = (base_g * vignette + 0.45 * od - 0.10 * mac) * v;
      const double b = (base_b * vignette + 0.35 * od - 0.05 * mac) * v;
      px.at(0, y, x) = std::clamp(r, 0.0, 1.0);
      px.at(1, y, x) = std::clamp(g, 0.0, 1.0);
      px.at(2, y, x) = std::clamp(b, 0.0, 1.0);
    }
  return Image(std::move(px), fov);
}

std::vector<training::Sample> synthetic_corpus(int count, int side, std::uint64_t seed) {
  std::vector<training::Sample> corpus;
  corpus.reserve(count);
  for (int i = 0; i < count; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "synth_%03d", i);
    corpus.push_back({id, synthetic_fundus(side, mix_seed(seed, static_cast<std::uint64_t>(i)))});
  }
  return corpus;
}

}  // namespace pcenet::synthetic
