#pragma once

#include <cmath>
#include <vector>

#include "pcenet/raster.hpp"

namespace pcenet::testing {

// Direct evaluation of the metric formulas, with no separable filtering or
// precomputed moment images.

inline double psnr_oracle(const Raster& a, const Raster& b) {
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) se += (a.values()[i] - b.values()[i]) * (a.values()[i] - b.values()[i]);
  const double mse = se / static_cast<double>(a.size());
  if (mse == 0.0) return 100.0;
  return std::min(100.0, 10.0 * std::log10(1.0 / mse));
}

inline double ssim_oracle(const Raster& a, const Raster& b) {
  const int win = 11, half = 5;
  const double sigma = 1.5, c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  std::vector<double> w(win * win);
  double wsum = 0.0;
  for (int dy = -half; dy <= half; ++dy)
    for (int dx = -half; dx <= half; ++dx)
      wsum += w[(dy + half) * win + dx + half] = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
  for (double& v : w) v /= wsum;

  double total = 0.0;
  int count = 0;
  for (int c = 0; c < a.channels(); ++c)
    for (int y = half; y + half < a.height(); ++y)
      for (int x = half; x + half < a.width(); ++x) {
        double ma = 0, mb = 0;
        for (int dy = -half; dy <= half; ++dy)
          for (int dx = -half; dx <= half; ++dx) {
            const double wt = w[(dy + half) * win + dx + half];
            ma += wt * a.at(c, y + dy, x + dx);
            mb += wt * b.at(c, y + dy, x + dx);
          }
        double va = 0, vb = 0, cov = 0;
        for (int dy = -half; dy <= half; ++dy)
          for (int dx = -half; dx <= half; ++dx) {
            const double wt = w[(dy + half) * win + dx + half];
            const double da = a.at(c, y + dy, x + dx) - ma;
            const double db = b.at(c, y + dy, x + dx) - mb;
            va += wt * da * da;
            vb += wt * db * db;
            cov += wt * da * db;
          }
        total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++count;
      }
  return total / count;
}

}  // namespace pcenet::testing
