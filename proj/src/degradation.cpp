#include "pcenet/degradation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pcenet/errors.hpp"
#include "pcenet/image_io.hpp"
#include "pcenet/rng.hpp"

namespace pcenet::degradation {
namespace {

// Reflect-101 that also folds indices more than one period away.
int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

void check_range(const Range& r, const char* name) {
  if (!(r.lo <= r.hi) || !std::isfinite(r.lo) || !std::isfinite(r.hi)) {
    throw ParameterError(std::string(name) + ": expected lo <= hi");
  }
}

}  // namespace

void DegradationConfig::validate() const {
  check_range(blur_sigma_range, "blur_sigma_range");
  check_range(artifact_count_range, "artifact_count_range");
  check_range(artifact_radius_range, "artifact_radius_range");
  check_range(artifact_strength_range, "artifact_strength_range");
  check_range(transmission_gamma_range, "transmission_gamma_range");
  check_range(transmission_gain_range, "transmission_gain_range");
  check_range(transmission_field_range, "transmission_field_range");
  if (blur_sigma_range.lo < 0) throw ParameterError("blur sigma must be >= 0");
  if (artifact_count_range.lo < 0) throw ParameterError("artifact count must be >= 0");
  if (artifact_radius_range.lo <= 0) throw ParameterError("artifact radius must be > 0");
  if (artifact_strength_range.lo < 0 || artifact_strength_range.hi > 1) {
    throw ParameterError("artifact strength must lie in [0,1]");
  }
  if (transmission_gamma_range.lo <= 0) throw ParameterError("gamma must be > 0");
  if (transmission_gain_range.lo < 0) throw ParameterError("gain must be >= 0");
  if (transmission_field_range.lo < 0.5 || transmission_field_range.hi > 1.5) {
    throw ParameterError("illumination field must lie in [0.5, 1.5]");
  }
  if (illumination_field_scale < 1) throw ParameterError("illumination_field_scale must be >= 1");
  if (!(enable_probability > 0 && enable_probability <= 1)) {
    throw ParameterError("enable_probability must lie in (0, 1]");
  }
  if (!enable_blur && !enable_artifact && !enable_transmission) {
    throw ConfigError("all interferences are disabled");
  }
}

Raster apply_blur(const Raster& img, double sigma) {
  if (!(sigma >= 0.0)) throw ParameterError("blur sigma must be >= 0");
  if (sigma == 0.0) return img;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    total += kernel[i + radius];
  }
  for (double& k : kernel) k /= total;

  const int h = img.height();
  const int w = img.width();
  Raster tmp(img.channels(), h, w);
  Raster out(img.channels(), h, w);
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * img.at(c, y, reflect_index(x + i, w));
        tmp.at(c, y, x) = acc;
      }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * tmp.at(c, reflect_index(y + i, h), x);
        out.at(c, y, x) = acc;
      }
  }
  return out;
}

Raster apply_artifact(const Raster& img, const std::vector<ArtifactSpot>& spots) {
  if (spots.empty()) return img;
  Raster field(1, img.height(), img.width());
  for (const ArtifactSpot& s : spots) {
    if (!(s.radius > 0)) throw ParameterError("artifact radius must be > 0");
    const double spread = s.radius / 2.0;
    const double denom = 2.0 * spread * spread;
    const double amp = s.polarity * s.strength;
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) {
        const double dy = y - s.center_y;
        const double dx = x - s.center_x;
        field.at(0, y, x) += amp * std::exp(-(dy * dy + dx * dx) / denom);
      }
  }
  Raster out = img;
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x)
        out.at(c, y, x) = std::clamp(img.at(c, y, x) + field.at(0, y, x), 0.0, 1.0);
  return out;
}

Raster apply_transmission(const Raster& img, double gamma, double gain, const Raster& field) {
  if (!(gamma > 0.0)) throw ParameterError("transmission gamma must be > 0");
  if (field.channels() != 1 || field.height() != img.height() || field.width() != img.width()) {
    throw DimensionError("illumination field must be single-channel and match the image");
  }
  Raster out(img.channels(), img.height(), img.width());
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) {
        const double v = gain * field.at(0, y, x) * std::pow(std::max(img.at(c, y, x), 0.0), gamma);
        out.at(c, y, x) = std::clamp(v, 0.0, 1.0);
      }
  return out;
}

Raster make_illumination_field(const std::vector<double>& grid_values, int grid, int height, int width) {
  if (grid < 1 || static_cast<int>(grid_values.size()) != grid * grid) {
    throw DimensionError("illumination grid has wrong number of values");
  }
  Raster field(1, height, width);
  auto coord = [grid](int i, int n) { return n > 1 ? static_cast<double>(i) * (grid - 1) / (n - 1) : 0.0; };
  for (int y = 0; y < height; ++y) {
    const double gy = coord(y, height);
    const int y0 = std::min(static_cast<int>(gy), grid - 1);
    const int y1 = std::min(y0 + 1, grid - 1);
    const double wy = gy - y0;
    for (int x = 0; x < width; ++x) {
      const double gx = coord(x, width);
      const int x0 = std::min(static_cast<int>(gx), grid - 1);
      const int x1 = std::min(x0 + 1, grid - 1);
      const double wx = gx - x0;
      auto g = [&](int r, int c) { return grid_values[static_cast<std::size_t>(r) * grid + c]; };
      const double top = g(y0, x0) * (1 - wx) + g(y0, x1) * wx;
      const double bot = g(y1, x0) * (1 - wx) + g(y1, x1) * wx;
      field.at(0, y, x) = top * (1 - wy) + bot * wy;
    }
  }
  return field;
}

Recipe sample_recipe(const DegradationConfig& cfg, const std::string& image_id, int k, int height, int width) {
  cfg.validate();
  Recipe r;
  r.image_id = image_id;
  r.k = k;
  r.seed = mix_seed(cfg.seed, hash_id(image_id), static_cast<std::uint64_t>(k));
  Rng rng(r.seed);

  do {
    r.transmission = cfg.enable_transmission && rng.bernoulli(cfg.enable_probability);
    r.blur = cfg.enable_blur && rng.bernoulli(cfg.enable_probability);
    r.artifact = cfg.enable_artifact && rng.bernoulli(cfg.enable_probability);
  } while (!r.transmission && !r.blur && !r.artifact);

  const int side = std::min(height, width);
  if (r.transmission) {
    r.gamma = rng.uniform(cfg.transmission_gamma_range.lo, cfg.transmission_gamma_range.hi);
    r.gain = rng.uniform(cfg.transmission_gain_range.lo, cfg.transmission_gain_range.hi);
    r.field_grid = cfg.illumination_field_scale;
    r.field_values.resize(static_cast<std::size_t>(r.field_grid) * r.field_grid);
    for (double& v : r.field_values) v = rng.uniform(cfg.transmission_field_range.lo, cfg.transmission_field_range.hi);
  }
  if (r.blur) {
    r.blur_sigma = rng.uniform(cfg.blur_sigma_range.lo, cfg.blur_sigma_range.hi) * side / 256.0;
  }
  if (r.artifact) {
    const auto n = rng.uniform_int(static_cast<long long>(std::ceil(cfg.artifact_count_range.lo)),
                                   static_cast<long long>(std::floor(cfg.artifact_count_range.hi)));
    for (long long i = 0; i < n; ++i) {
      ArtifactSpot s;
      s.center_y = rng.uniform(0.0, height - 1.0);
      s.center_x = rng.uniform(0.0, width - 1.0);
      s.radius = rng.uniform(cfg.artifact_radius_range.lo, cfg.artifact_radius_range.hi) * side;
      s.strength = rng.uniform(cfg.artifact_strength_range.lo, cfg.artifact_strength_range.hi);
      s.polarity = rng.bernoulli(0.5) ? 1 : -1;
      r.spots.push_back(s);
    }
  }
  return r;
}

Raster apply_recipe(const Raster& clean, const Recipe& recipe, const Mask& fov) {
  if (fov.height != clean.height() || fov.width != clean.width()) {
    throw DimensionError("fov mask does not match image");
  }
  Raster out = clean;
  if (recipe.transmission) {
    out = apply_transmission(out, recipe.gamma, recipe.gain,
                             make_illumination_field(recipe.field_values, recipe.field_grid, clean.height(),
                                                     clean.width()));
  }
  if (recipe.blur) out = apply_blur(out, recipe.blur_sigma);
  if (recipe.artifact) out = apply_artifact(out, recipe.spots);

  for (int c = 0; c < out.channels(); ++c)
    for (int y = 0; y < out.height(); ++y)
      for (int x = 0; x < out.width(); ++x)
        if (!fov.at(y, x)) out.at(c, y, x) = clean.at(c, y, x);
  return out;
}

SeqLC make_seqlc(const Image& clean, const DegradationConfig& cfg, int K, const std::string& image_id) {
  if (K < 1) throw ParameterError("SeqLC length K must be >= 1");
  cfg.validate();
  const Mask fov = clean.fov_mask ? *clean.fov_mask
                                  : image_io::make_fov_mask(clean.height(), clean.width(), cfg.fov_radius_fraction);
  SeqLC seq;
  seq.clean = clean;
  seq.variants.reserve(K);
  seq.recipes.reserve(K);
  for (int k = 0; k < K; ++k) {
    Recipe r = sample_recipe(cfg, image_id, k, clean.height(), clean.width());
    seq.variants.emplace_back(apply_recipe(clean.pixels, r, fov), clean.fov_mask);
    seq.recipes.push_back(std::move(r));
  }
  return seq;
}

nlohmann::json recipe_to_json(const Recipe& r) {
  nlohmann::json spots = nlohmann::json::array();
  for (const auto& s : r.spots) {
    spots.push_back({{"center_y", s.center_y},
                     {"center_x", s.center_x},
                     {"radius", s.radius},
                     {"strength", s.strength},
                     {"polarity", s.polarity}});
  }
  return {{"image_id", r.image_id},
          {"k", r.k},
          {"seed", r.seed},
          {"transmission", r.transmission},
          {"blur", r.blur},
          {"artifact", r.artifact},
          {"gamma", r.gamma},
          {"gain", r.gain},
          {"field_grid", r.field_grid},
          {"field_values", r.field_values},
          {"blur_sigma", r.blur_sigma},
          {"spots", spots}};
}

Recipe recipe_from_json(const nlohmann::json& j) {
  try {
    Recipe r;
    r.image_id = j.at("image_id").get<std::string>();
    r.k = j.at("k").get<int>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.transmission = j.at("transmission").get<bool>();
    r.blur = j.at("blur").get<bool>();
    r.artifact = j.at("artifact").get<bool>();
    r.gamma = j.at("gamma").get<double>();
    r.gain = j.at("gain").get<double>();
    r.field_grid = j.at("field_grid").get<int>();
    r.field_values = j.at("field_values").get<std::vector<double>>();
    r.blur_sigma = j.at("blur_sigma").get<double>();
    for (const auto& s : j.at("spots")) {
      r.spots.push_back({s.at("center_y").get<double>(), s.at("center_x").get<double>(), s.at("radius").get<double>(),
                         s.at("strength").get<double>(), s.at("polarity").get<int>()});
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed recipe record: ") + e.what());
  }
}

}  // namespace pcenet::degradation
