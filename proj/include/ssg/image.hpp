#pragma once

#include <png.h>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "ssg/random.hpp"

namespace ssg {

// 8-bit RGB raster, origin top-left.
struct Image {
  int width = 0;
  int height = 0;
  static constexpr int channels = 3;
  std::vector<uint8_t> data;  // row-major, RGB interleaved

  Image() = default;
  Image(int w, int h) : width(w), height(h), data(static_cast<size_t>(w) * h * channels, 0) {
    if (w <= 0 || h <= 0) throw std::invalid_argument("Image: non-positive size");
  }

  uint8_t* pixel(int x, int y) {
    return data.data() + (static_cast<size_t>(y) * width + x) * channels;
  }
  const uint8_t* pixel(int x, int y) const {
    return data.data() + (static_cast<size_t>(y) * width + x) * channels;
  }
  bool empty() const { return data.empty(); }
  bool operator==(const Image& o) const {
    return width == o.width && height == o.height && data == o.data;
  }
};

// Content fingerprint used by the synthetic embedding backend and the
// precomputed-embedding store.
inline uint64_t image_content_hash(const Image& img) {
  uint64_t h = fnv1a64("image:");
  const int dims[2] = {img.width, img.height};
  h = fnv1a64(dims, sizeof(dims), h);
  return fnv1a64(img.data.data(), img.data.size(), h);
}

// Deterministic procedural frame for desk-scale runs without real assets.
inline Image synthetic_image(const std::string& key, int width = 32, int height = 32) {
  Image img(width, height);
  Rng rng(fnv1a64("frame:" + key));
  for (auto& b : img.data) b = static_cast<uint8_t>(rng.bounded(256));
  return img;
}

namespace detail {

inline void png_error_fn(png_structp png, png_const_charp msg) {
  throw std::runtime_error(std::string("png: ") + msg);
}
inline void png_warn_fn(png_structp, png_const_charp) {}

}  // namespace detail

inline Image read_png(const std::string& path) {
  std::unique_ptr<std::FILE, int (*)(std::FILE*)> fp(std::fopen(path.c_str(), "rb"),
                                                     &std::fclose);
  if (!fp) throw std::runtime_error("cannot open image: " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                           detail::png_error_fn, detail::png_warn_fn);
  if (!png) throw std::runtime_error("png: allocation failure");
  png_infop info = png_create_info_struct(png);
  try {
    png_init_io(png, fp.get());
    png_read_info(png, info);
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);
    Image img(static_cast<int>(png_get_image_width(png, info)),
              static_cast<int>(png_get_image_height(png, info)));
    if (png_get_rowbytes(png, info) != static_cast<size_t>(img.width) * 3)
      throw std::runtime_error("png: unsupported layout in " + path);
    std::vector<png_bytep> rows(img.height);
    for (int y = 0; y < img.height; ++y) rows[y] = img.pixel(0, y);
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
}

inline void write_png(const std::string& path, const Image& img) {
  if (img.empty()) throw std::invalid_argument("write_png: empty image");
  std::unique_ptr<std::FILE, int (*)(std::FILE*)> fp(std::fopen(path.c_str(), "wb"),
                                                     &std::fclose);
  if (!fp) throw std::runtime_error("cannot write image: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            detail::png_error_fn, detail::png_warn_fn);
  if (!png) throw std::runtime_error("png: allocation failure");
  png_infop info = png_create_info_struct(png);
  try {
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(img.height);
    for (int y = 0; y < img.height; ++y)
      rows[y] = const_cast<png_bytep>(img.pixel(0, y));
    png_write_image(png, rows.data());
    png_write_end(png, info);
    png_destroy_write_struct(&png, &info);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
}

inline Image read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open image: " + path);
  std::string magic;
  int w, h, maxval;
  in >> magic >> w >> h >> maxval;
  if (magic != "P6" || maxval != 255 || w <= 0 || h <= 0)
    throw std::runtime_error("ppm: expected binary P6 maxval 255 in " + path);
  in.get();  // single whitespace after header
  Image img(w, h);
  in.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
  if (!in) throw std::runtime_error("ppm: truncated data in " + path);
  return img;
}

inline void write_ppm(const std::string& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write image: " + path);
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size()));
}

inline bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

inline Image read_image(const std::string& path) {
  if (ends_with(path, ".ppm")) return read_ppm(path);
  return read_png(path);
}

inline void write_image(const std::string& path, const Image& img) {
  if (ends_with(path, ".ppm"))
    write_ppm(path, img);
  else
    write_png(path, img);
}

}  // namespace ssg
