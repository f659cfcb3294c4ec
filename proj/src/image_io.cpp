#include "pcenet/image_io.hpp"

#include <jpeglib.h>
#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>

#include "pcenet/errors.hpp"

namespace pcenet::image_io {
namespace {

enum class FileKind { kPng, kJpeg, kUnknown };

FileKind sniff(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::array<unsigned char, 8> head{};
  in.read(reinterpret_cast<char*>(head.data()), head.size());
  const auto n = in.gcount();
  static constexpr std::array<unsigned char, 8> kPngSig = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  if (n == 8 && head == kPngSig) return FileKind::kPng;
  if (n >= 3 && head[0] == 0xFF && head[1] == 0xD8 && head[2] == 0xFF) return FileKind::kJpeg;
  return FileKind::kUnknown;
}

Raster from_interleaved(const unsigned char* buf, int h, int w, int comps) {
  Raster r(3, h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const unsigned char* px = buf + (static_cast<std::size_t>(y) * w + x) * comps;
      for (int c = 0; c < 3; ++c) {
        const unsigned char v = comps >= 3 ? px[c] : px[0];
        r.at(c, y, x) = v / 255.0;
      }
    }
  }
  return r;
}

Raster decode_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw FormatError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  // The simplified API reports the on-disk sample depth through the LINEAR flag.
  if (image.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&image);
    throw FormatError("16-bit PNG not supported: " + path.string());
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw FormatError("cannot decode PNG " + path.string() + ": " + msg);
  }
  return from_interleaved(buf.data(), static_cast<int>(image.height), static_cast<int>(image.width), 3);
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};

// Kept free of C++ objects with non-trivial destructors between setjmp and
// longjmp.
bool decode_jpeg_raw(std::FILE* file, std::vector<unsigned char>& buf, int& h, int& w, int& comps,
                     std::string& error) {
  jpeg_decompress_struct cinfo{};
  JpegErrorManager jerr{};
  cinfo.err = jpeg_std_error(&jerr.base);
  jerr.base.error_exit = jpeg_error_exit;
  if (setjmp(jerr.jump)) {
    error = jerr.message;
    jpeg_destroy_decompress(&cinfo);
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, file);
  jpeg_read_header(&cinfo, TRUE);
  if (cinfo.jpeg_color_space == JCS_CMYK || cinfo.jpeg_color_space == JCS_YCCK) {
    error = "CMYK JPEG not supported";
    jpeg_destroy_decompress(&cinfo);
    return false;
  }
  if (cinfo.data_precision != 8) {
    error = "only 8-bit JPEG supported";
    jpeg_destroy_decompress(&cinfo);
    return false;
  }
  cinfo.out_color_space = cinfo.jpeg_color_space == JCS_GRAYSCALE ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_start_decompress(&cinfo);
  h = static_cast<int>(cinfo.output_height);
  w = static_cast<int>(cinfo.output_width);
  comps = cinfo.output_components;
  buf.resize(static_cast<std::size_t>(h) * w * comps);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = buf.data() + static_cast<std::size_t>(cinfo.output_scanline) * w * comps;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return true;
}

Raster decode_jpeg(const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, FileCloser> file(std::fopen(path.c_str(), "rb"));
  if (!file) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> buf;
  int h = 0, w = 0, comps = 0;
  std::string error;
  if (!decode_jpeg_raw(file.get(), buf, h, w, comps, error)) {
    throw FormatError("cannot decode JPEG " + path.string() + ": " + error);
  }
  return from_interleaved(buf.data(), h, w, comps);
}

}  // namespace

Raster decode_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("no such file: " + path.string());
  switch (sniff(path)) {
    case FileKind::kPng:
      return decode_png(path);
    case FileKind::kJpeg:
      return decode_jpeg(path);
    case FileKind::kUnknown:
      break;
  }
  throw FormatError("not a PNG or JPEG file: " + path.string());
}

Image load_image(const std::filesystem::path& path, int side) {
  if (side < 1) throw ParameterError("side must be positive");
  Raster r = preprocess(decode_file(path), side);
  normalize_in_place(r);
  return Image(std::move(r));
}

void save_raster(const Raster& raster, const std::filesystem::path& path) {
  if (raster.channels() != 1 && raster.channels() != 3) {
    throw DimensionError("save expects 1 or 3 channels, got " + std::to_string(raster.channels()));
  }
  const int h = raster.height();
  const int w = raster.width();
  std::vector<unsigned char> buf(static_cast<std::size_t>(h) * w * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        double v = raster.at(raster.channels() == 3 ? c : 0, y, x);
        if (!std::isfinite(v)) v = 0.0;
        v = std::clamp(v, 0.0, 1.0);
        buf[(static_cast<std::size_t>(y) * w + x) * 3 + c] =
            static_cast<unsigned char>(std::lround(v * 255.0));
      }
    }
  }
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, buf.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError("cannot write " + path.string() + ": " + msg);
  }
}

void save_image(const Image& img, const std::filesystem::path& path) { save_raster(img.pixels, path); }

Mask make_fov_mask(int height, int width, double radius_fraction) {
  if (height < 2 || width < 2) throw DimensionError("fov mask needs side >= 2");
  if (!(radius_fraction > 0.0 && radius_fraction <= 1.0)) {
    throw ParameterError("radius_fraction must be in (0, 1]");
  }
  Mask m(height, width);
  const double cy = (height - 1) / 2.0;
  const double cx = (width - 1) / 2.0;
  const double r = radius_fraction * std::min(height, width) / 2.0;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double dy = y - cy;
      const double dx = x - cx;
      m.at(y, x) = (dy * dy + dx * dx <= r * r) ? 1 : 0;
    }
  }
  return m;
}

Mask make_fov_mask(int side, double radius_fraction) { return make_fov_mask(side, side, radius_fraction); }

Raster center_crop_square(const Raster& src) {
  const int s = std::min(src.height(), src.width());
  if (s == src.height() && s == src.width()) return src;
  const int y0 = (src.height() - s) / 2;
  const int x0 = (src.width() - s) / 2;
  Raster out(src.channels(), s, s);
  for (int c = 0; c < src.channels(); ++c)
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) out.at(c, y, x) = src.at(c, y + y0, x + x0);
  return out;
}

Raster resize_bilinear(const Raster& src, int height, int width) {
  if (height < 1 || width < 1) throw DimensionError("resize target must be positive");
  if (src.height() < 1 || src.width() < 1) throw DimensionError("cannot resize empty raster");
  if (height == src.height() && width == src.width()) return src;

  struct Tap {
    int i0, i1;
    double w1;
  };
  auto taps = [](int out, int in) {
    std::vector<Tap> t(out);
    const double scale = static_cast<double>(in) / out;
    for (int i = 0; i < out; ++i) {
      double pos = (i + 0.5) * scale - 0.5;
      pos = std::clamp(pos, 0.0, static_cast<double>(in - 1));
      const int i0 = static_cast<int>(std::floor(pos));
      const int i1 = std::min(i0 + 1, in - 1);
      t[i] = {i0, i1, pos - i0};
    }
    return t;
  };
  const auto ty = taps(height, src.height());
  const auto tx = taps(width, src.width());

  Raster out(src.channels(), height, width);
  for (int c = 0; c < src.channels(); ++c) {
    for (int y = 0; y < height; ++y) {
      const Tap& a = ty[y];
      for (int x = 0; x < width; ++x) {
        const Tap& b = tx[x];
        const double top = src.at(c, a.i0, b.i0) * (1 - b.w1) + src.at(c, a.i0, b.i1) * b.w1;
        const double bot = src.at(c, a.i1, b.i0) * (1 - b.w1) + src.at(c, a.i1, b.i1) * b.w1;
        out.at(c, y, x) = top * (1 - a.w1) + bot * a.w1;
      }
    }
  }
  return out;
}

Raster preprocess(const Raster& src, int side) { return resize_bilinear(center_crop_square(src), side, side); }

void normalize_in_place(Raster& r) {
  for (double& v : r.values()) v = std::isfinite(v) ? std::clamp(v, 0.0, 1.0) : 0.0;
}

}  // namespace pcenet::image_io
