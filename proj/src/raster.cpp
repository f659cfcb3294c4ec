#include "pcenet/raster.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pcenet/errors.hpp"

namespace pcenet {

Raster::Raster(int channels, int height, int width, double fill)
    : channels_(channels), height_(height), width_(width) {
  if (channels < 0 || height < 0 || width < 0) {
    throw DimensionError("negative raster dimension");
  }
  data_.assign(static_cast<std::size_t>(channels) * height * width, fill);
}

Raster& Raster::operator+=(const Raster& other) {
  if (!same_shape(other)) throw DimensionError("raster shape mismatch in +=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Raster& Raster::operator-=(const Raster& other) {
  if (!same_shape(other)) throw DimensionError("raster shape mismatch in -=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Raster& Raster::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(data.begin(), data.end(), std::uint8_t{1}));
}

double max_abs_diff(const Raster& a, const Raster& b) {
  if (!a.same_shape(b)) throw DimensionError("raster shape mismatch in max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

}  // namespace pcenet
