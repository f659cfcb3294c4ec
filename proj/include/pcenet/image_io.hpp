#pragma once

#include <filesystem>

#include "pcenet/raster.hpp"

namespace pcenet::image_io {

inline constexpr int kDefaultSide = 256;
inline constexpr double kDefaultFovRadius = 0.97;

/// Decodes an 8-bit RGB (or gray, or RGBA with alpha dropped) PNG/JPEG into
/// [0,1] values without any geometric change.
/// Throws IoError when the file is missing and FormatError for 16-bit, CMYK,
/// palette-less exotic or otherwise undecodable payloads.
Raster decode_file(const std::filesystem::path& path);

/// Decode, center-crop to square, then bilinear-resize to side x side.
Image load_image(const std::filesystem::path& path, int side = kDefaultSide);

/// Writes an 8-bit RGB PNG (values clamped to [0,1], rounded to nearest).
/// Grayscale rasters are replicated to three channels.
void save_image(const Image& img, const std::filesystem::path& path);
void save_raster(const Raster& raster, const std::filesystem::path& path);

/// 1 where the distance from the raster center is <= radius_fraction * side / 2.
Mask make_fov_mask(int side, double radius_fraction = kDefaultFovRadius);
Mask make_fov_mask(int height, int width, double radius_fraction);

Raster center_crop_square(const Raster& src);

/// Half-pixel-centered bilinear resampling (edge samples clamped).
/// Resizing to the current shape is the identity.
Raster resize_bilinear(const Raster& src, int height, int width);

/// center_crop_square + resize_bilinear to side x side.
Raster preprocess(const Raster& src, int side);

/// Clamp to [0,1] and replace non-finite values by 0.
void normalize_in_place(Raster& r);

}  // namespace pcenet::image_io
