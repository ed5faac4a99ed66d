#pragma once

#include <png.h>

#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tabuq/errors.hpp"

namespace tabuq {

/// 8-bit single-channel raster, row-major. 0 is black, 255 is white.
class GrayImage {
 public:
  GrayImage() = default;
  GrayImage(int width, int height, std::uint8_t fill = 255)
      : width_(width), height_(height) {
    if (width < 0 || height < 0) throw InvalidArgument("image dimensions must be nonnegative");
    pixels_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
  }
  GrayImage(int width, int height, std::vector<std::uint8_t> pixels)
      : width_(width), height_(height), pixels_(std::move(pixels)) {
    if (width < 0 || height < 0 ||
        pixels_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
      throw InvalidArgument("pixel count does not match image dimensions");
    }
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool empty() const noexcept { return pixels_.empty(); }

  std::uint8_t at(int x, int y) const { return pixels_[index(x, y)]; }
  std::uint8_t& at(int x, int y) { return pixels_[index(x, y)]; }

  std::span<const std::uint8_t> pixels() const noexcept { return pixels_; }
  std::span<std::uint8_t> pixels() noexcept { return pixels_; }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;

 private:
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

/// Binary raster with the same layout as GrayImage.
class BitMask {
 public:
  BitMask() = default;
  BitMask(int width, int height)
      : width_(width),
        height_(height),
        bits_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), 0) {}

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }

  bool test(int x, int y) const { return bits_[index(x, y)] != 0; }
  void set(int x, int y, bool v = true) { bits_[index(x, y)] = v ? 1 : 0; }

  std::size_t count() const noexcept {
    std::size_t n = 0;
    for (auto b : bits_) n += b;
    return n;
  }

  /// Number of set pixels that are also set in `other`.
  std::size_t overlap(const BitMask& other) const {
    if (other.width_ != width_ || other.height_ != height_) {
      throw InvalidArgument("mask dimensions differ");
    }
    std::size_t n = 0;
    for (std::size_t i = 0; i < bits_.size(); ++i) n += bits_[i] & other.bits_[i];
    return n;
  }

  std::span<const std::uint8_t> bits() const noexcept { return bits_; }

  friend bool operator==(const BitMask&, const BitMask&) = default;

 private:
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline void png_error_handler(png_structp, png_const_charp msg) { throw IoError(msg); }
inline void png_warning_handler(png_structp, png_const_charp) {}

// Writes a grayscale PNG of the given bit depth (1 or 8). `rows` holds one
// unpacked byte per pixel; for depth 1 values must be 0 or 1.
inline void write_png_rows(const std::filesystem::path& path, int width, int height, int depth,
                           std::span<const std::uint8_t> data) {
  FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw IoError("cannot open for writing: " + path.string());
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_handler, png_warning_handler);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_write_struct(p, i); }
  } guard{&png, &info};
  if (!info) throw IoError("png_create_info_struct failed");

  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), depth,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (depth < 8) png_set_packing(png);
  for (int y = 0; y < height; ++y) {
    auto row = const_cast<png_bytep>(data.data() + static_cast<std::size_t>(y) * width);
    png_write_row(png, row);
  }
  png_write_end(png, nullptr);
}

// Reads any grayscale-compatible PNG, expanding to one byte per pixel with
// the full 0..255 range (a 1-bit image yields 0/255).
inline GrayImage read_png_gray(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw IoError("cannot open for reading: " + path.string());
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_handler, png_warning_handler);
  if (!png) throw IoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_read_struct(p, i, nullptr); }
  } guard{&png, &info};
  if (!info) throw IoError("png_create_info_struct failed");

  png_init_io(png, fp.get());
  png_read_info(png, info);
  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color != PNG_COLOR_TYPE_GRAY) {
    throw IoError("expected single-channel grayscale PNG: " + path.string());
  }
  if (depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (depth == 16) png_set_strip_16(png);
  png_read_update_info(png, info);

  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(width) * height);
  for (int y = 0; y < height; ++y) {
    png_read_row(png, pixels.data() + static_cast<std::size_t>(y) * width, nullptr);
  }
  png_read_end(png, nullptr);
  return GrayImage(width, height, std::move(pixels));
}

}  // namespace detail

inline void write_png(const GrayImage& img, const std::filesystem::path& path) {
  detail::write_png_rows(path, img.width(), img.height(), 8, img.pixels());
}

inline GrayImage read_png(const std::filesystem::path& path) { return detail::read_png_gray(path); }

/// Masks are stored as 1-bit PNGs (set pixels white).
inline void write_mask_png(const BitMask& mask, const std::filesystem::path& path) {
  detail::write_png_rows(path, mask.width(), mask.height(), 1, mask.bits());
}

inline BitMask read_mask_png(const std::filesystem::path& path) {
  const GrayImage g = detail::read_png_gray(path);
  BitMask m(g.width(), g.height());
  for (int y = 0; y < g.height(); ++y)
    for (int x = 0; x < g.width(); ++x) m.set(x, y, g.at(x, y) >= 128);
  return m;
}

}  // namespace tabuq
