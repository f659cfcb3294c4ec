#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pcenet/raster.hpp"

namespace pcenet::degradation {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// Sampling ranges for the three simulated interferences. Blur sigma is
/// expressed in pixels at side 256 and scaled linearly with the image side.
struct DegradationConfig {
  bool enable_blur = true;
  bool enable_artifact = true;
  bool enable_transmission = true;
  Range blur_sigma_range{1.0, 5.0};
  Range artifact_count_range{1, 8};
  Range artifact_radius_range{0.05, 0.25};   // fraction of side
  Range artifact_strength_range{0.1, 0.5};
  Range transmission_gamma_range{0.6, 1.8};
  Range transmission_gain_range{0.6, 1.3};
  Range transmission_field_range{0.7, 1.3};  // must lie within [0.5, 1.5]
  int illumination_field_scale = 4;          // field grid is scale x scale
  double enable_probability = 0.8;
  double fov_radius_fraction = 0.97;
  std::uint64_t seed = 0;

  /// Throws ParameterError on inverted ranges or out-of-domain values and
  /// ConfigError when every interference is disabled.
  void validate() const;
};

struct ArtifactSpot {
  double center_y = 0.0;
  double center_x = 0.0;
  double radius = 1.0;  // pixels
  double strength = 0.0;
  int polarity = 1;     // +1 bright, -1 dark
};

/// Everything needed to replay one degraded variant from its clean image.
struct Recipe {
  std::string image_id;
  int k = 0;
  std::uint64_t seed = 0;
  bool transmission = false;
  bool blur = false;
  bool artifact = false;
  double gamma = 1.0;
  double gain = 1.0;
  int field_grid = 1;
  std::vector<double> field_values{1.0};  // row-major field_grid x field_grid
  double blur_sigma = 0.0;
  std::vector<ArtifactSpot> spots;
};

struct SeqLC {
  Image clean;
  std::vector<Image> variants;
  std::vector<Recipe> recipes;

  int K() const { return static_cast<int>(variants.size()); }
};

/// Gaussian blur with standard deviation sigma, truncated at ceil(3 sigma),
/// reflect-101 borders. sigma == 0 returns the input unchanged.
Raster apply_blur(const Raster& img, double sigma);

/// Adds polarity * strength * exp(-d^2 / (2 (radius/2)^2)) per spot, clamps to [0,1].
Raster apply_artifact(const Raster& img, const std::vector<ArtifactSpot>& spots);

/// clamp(gain * field * img^gamma). field is single-channel, same H x W as img.
Raster apply_transmission(const Raster& img, double gamma, double gain, const Raster& field);

/// Bilinear (corner-aligned) upsample of a grid x grid array of field values.
Raster make_illumination_field(const std::vector<double>& grid_values, int grid, int height, int width);

/// Samples one recipe from cfg's ranges using the stream (cfg.seed, image_id, k).
Recipe sample_recipe(const DegradationConfig& cfg, const std::string& image_id, int k, int height, int width);

/// transmission -> blur -> artifact, then pixels outside fov are restored from clean.
Raster apply_recipe(const Raster& clean, const Recipe& recipe, const Mask& fov);

/// K independently degraded variants of clean. Uses clean.fov_mask when
/// present, otherwise a centered disc of cfg.fov_radius_fraction.
SeqLC make_seqlc(const Image& clean, const DegradationConfig& cfg, int K, const std::string& image_id = "");

nlohmann::json recipe_to_json(const Recipe& r);
Recipe recipe_from_json(const nlohmann::json& j);

}  // namespace pcenet::degradation
