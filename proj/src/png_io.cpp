#include "aoi/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <vector>

namespace aoi {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void fail(const std::string& what, const std::string& path) {
  throw std::runtime_error(what + ": " + path);
}

void write_png_impl(const std::string& path, int width, int height, int color_type,
                    const std::uint8_t* data, size_t stride) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) fail("write_png: cannot open", path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    fail("write_png: libpng init failed", path);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail("write_png: encode error", path);
  }
  png_init_io(png, fp.get());
  png_set_compression_level(png, 6);
  png_set_IHDR(png, info, width, height, 8, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) rows[y] = const_cast<png_bytep>(data + y * stride);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_png(const ColorImage& img, const std::string& path) {
  write_png_impl(path, img.width, img.height, PNG_COLOR_TYPE_RGB, img.data.data(),
                 static_cast<size_t>(img.width) * 3);
}

void write_png(const GrayImage& img, const std::string& path) {
  write_png_impl(path, img.width, img.height, PNG_COLOR_TYPE_GRAY, img.data.data(),
                 static_cast<size_t>(img.width));
}

namespace {

// Reads any 8/16-bit PNG and normalizes to 8-bit RGB rows.
std::vector<std::uint8_t> read_png_rgb(const std::string& path, int& width, int& height) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) fail("read_png: cannot open", path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail("read_png: libpng init failed", path);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail("read_png: decode error", path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  png_set_strip_16(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);

  width = static_cast<int>(png_get_image_width(png, info));
  height = static_cast<int>(png_get_image_height(png, info));
  std::vector<std::uint8_t> out(static_cast<size_t>(width) * height * 3);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) rows[y] = out.data() + static_cast<size_t>(y) * width * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

}  // namespace

ColorImage read_png_color(const std::string& path) {
  ColorImage img;
  img.data = read_png_rgb(path, img.width, img.height);
  return img;
}

GrayImage read_png_gray(const std::string& path) {
  int w = 0, h = 0;
  const auto rgb = read_png_rgb(path, w, h);
  GrayImage g(w, h);
  for (size_t i = 0, p = 0; i < g.data.size(); ++i, p += 3) {
    const double luma = 0.299 * rgb[p] + 0.587 * rgb[p + 1] + 0.114 * rgb[p + 2];
    g.data[i] = static_cast<std::uint8_t>(luma + 0.5);
  }
  return g;
}

}  // namespace aoi
