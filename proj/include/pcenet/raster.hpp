#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace pcenet {

/// Planar (channel-major) C x H x W array of doubles. Used for images,
/// pyramid levels and network activations alike.
class Raster {
 public:
  Raster() = default;
  Raster(int channels, int height, int width, double fill = 0.0);

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t plane_size() const { return static_cast<std::size_t>(height_) * width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  bool same_shape(const Raster& other) const {
    return channels_ == other.channels_ && height_ == other.height_ && width_ == other.width_;
  }

  double& at(int c, int y, int x) { return data_[index(c, y, x)]; }
  double at(int c, int y, int x) const { return data_[index(c, y, x)]; }

  std::span<double> plane(int c) { return {data_.data() + c * plane_size(), plane_size()}; }
  std::span<const double> plane(int c) const {
    return {data_.data() + c * plane_size(), plane_size()};
  }

  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  Raster& operator+=(const Raster& other);
  Raster& operator-=(const Raster& other);
  Raster& operator*=(double s);

  friend Raster operator+(Raster a, const Raster& b) { return a += b; }
  friend Raster operator-(Raster a, const Raster& b) { return a -= b; }
  friend Raster operator*(Raster a, double s) { return a *= s; }
  friend Raster operator*(double s, Raster a) { return a *= s; }
  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
  }

  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

/// Binary H x W mask, 1 = inside.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  Mask() = default;
  Mask(int h, int w, std::uint8_t fill = 0)
      : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}
  std::uint8_t at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count() const;
  friend bool operator==(const Mask&, const Mask&) = default;
};

/// RGB fundus raster with values in [0,1] and an optional field-of-view mask.
struct Image {
  Raster pixels;
  std::optional<Mask> fov_mask;

  Image() = default;
  explicit Image(Raster p, std::optional<Mask> mask = std::nullopt)
      : pixels(std::move(p)), fov_mask(std::move(mask)) {}

  int height() const { return pixels.height(); }
  int width() const { return pixels.width(); }
  // Side length s; only meaningful for square images.
  int side() const { return pixels.width(); }
};

double max_abs_diff(const Raster& a, const Raster& b);

}  // namespace pcenet
