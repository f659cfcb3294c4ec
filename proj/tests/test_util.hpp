#pragma once

#include <unistd.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>

#include "pcenet/raster.hpp"
#include "pcenet/rng.hpp"

namespace pcenet::testing {

inline Raster random_raster(int channels, int h, int w, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  Rng rng(seed);
  Raster r(channels, h, w);
  for (double& v : r.values()) v = rng.uniform(lo, hi);
  return r;
}

inline double total_variation(const Raster& r) {
  double tv = 0.0;
  for (int c = 0; c < r.channels(); ++c)
    for (int y = 0; y < r.height(); ++y)
      for (int x = 0; x < r.width(); ++x) {
        if (x + 1 < r.width()) tv += std::abs(r.at(c, y, x + 1) - r.at(c, y, x));
        if (y + 1 < r.height()) tv += std::abs(r.at(c, y + 1, x) - r.at(c, y, x));
      }
  return tv;
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("pcenet_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace pcenet::testing
