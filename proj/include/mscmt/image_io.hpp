#pragma once

#include <png.h>

#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "mscmt/errors.hpp"
#include "mscmt/image.hpp"

namespace mscmt {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline bool has_suffix(const std::string& s, const std::string& suf) {
  return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

// Decodes any PNG to one 8-bit gray byte per pixel (RGB collapses via the
// libpng luminosity transform, palette expands, 16-bit strips, alpha drops).
inline void read_png_gray8(const std::string& path, int& height, int& width,
                           std::vector<uint8_t>& bytes) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw DataError("cannot open " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw DataError("libpng init failed for " + path);
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw DataError("libpng init failed for " + path);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("corrupt PNG: " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  png_byte color = png_get_color_type(png, info);
  png_byte depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (depth == 16) png_set_strip_16(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA ||
      color == PNG_COLOR_TYPE_PALETTE)
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  png_read_update_info(png, info);

  height = static_cast<int>(png_get_image_height(png, info));
  width = static_cast<int>(png_get_image_width(png, info));
  if (png_get_channels(png, info) != 1 || png_get_bit_depth(png, info) != 8) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("unsupported PNG pixel format: " + path);
  }

  bytes.assign(static_cast<size_t>(height) * width, 0);
  std::vector<png_bytep> rows(height);
  for (int r = 0; r < height; ++r) rows[r] = bytes.data() + static_cast<size_t>(r) * width;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
}

inline void write_png_gray8(const std::string& path, int height, int width,
                            const std::vector<uint8_t>& bytes) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw DataError("cannot write " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw DataError("libpng init failed for " + path);
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw DataError("libpng init failed for " + path);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("PNG write failed: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(height);
  for (int r = 0; r < height; ++r)
    rows[r] = const_cast<png_bytep>(bytes.data() + static_cast<size_t>(r) * width);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline void read_pgm_gray8(const std::string& path, int& height, int& width,
                           std::vector<uint8_t>& bytes) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw DataError("cannot open " + path);
  auto next_token = [&]() -> std::string {
    std::string tok;
    int c;
    while ((c = std::fgetc(fp.get())) != EOF) {
      if (c == '#') {
        while ((c = std::fgetc(fp.get())) != EOF && c != '\n') {
        }
        continue;
      }
      if (std::isspace(c)) {
        if (!tok.empty()) return tok;
        continue;
      }
      tok.push_back(static_cast<char>(c));
    }
    return tok;
  };
  if (next_token() != "P5") throw DataError("not a P5 PGM: " + path);
  try {
    width = std::stoi(next_token());
    height = std::stoi(next_token());
    if (std::stoi(next_token()) != 255) throw DataError("PGM maxval must be 255: " + path);
  } catch (const std::invalid_argument&) {
    throw DataError("malformed PGM header: " + path);
  }
  if (height <= 0 || width <= 0) throw DataError("bad PGM extents: " + path);
  bytes.assign(static_cast<size_t>(height) * width, 0);
  if (std::fread(bytes.data(), 1, bytes.size(), fp.get()) != bytes.size())
    throw DataError("truncated PGM: " + path);
}

inline void write_pgm_gray8(const std::string& path, int height, int width,
                            const std::vector<uint8_t>& bytes) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw DataError("cannot write " + path);
  std::string header = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  if (std::fwrite(header.data(), 1, header.size(), fp.get()) != header.size() ||
      std::fwrite(bytes.data(), 1, bytes.size(), fp.get()) != bytes.size())
    throw DataError("PGM write failed: " + path);
}

inline void read_gray8(const std::string& path, int& h, int& w, std::vector<uint8_t>& bytes) {
  if (has_suffix(path, ".pgm") || has_suffix(path, ".PGM"))
    read_pgm_gray8(path, h, w, bytes);
  else
    read_png_gray8(path, h, w, bytes);
}

inline void write_gray8(const std::string& path, int h, int w, const std::vector<uint8_t>& bytes) {
  if (has_suffix(path, ".pgm") || has_suffix(path, ".PGM"))
    write_pgm_gray8(path, h, w, bytes);
  else
    write_png_gray8(path, h, w, bytes);
}

}  // namespace detail

// Intensities map linearly 0..255 <-> [0,1].
inline Image read_image(const std::string& path) {
  int h, w;
  std::vector<uint8_t> bytes;
  detail::read_gray8(path, h, w, bytes);
  Image img(h, w);
  for (size_t i = 0; i < bytes.size(); ++i) img.pixels[i] = bytes[i] / 255.0f;
  return img;
}

inline void write_image(const std::string& path, const Image& img) {
  std::vector<uint8_t> bytes(img.size());
  for (size_t i = 0; i < bytes.size(); ++i) {
    float v = std::min(1.0f, std::max(0.0f, img.pixels[i]));
    bytes[i] = static_cast<uint8_t>(std::lround(v * 255.0f));
  }
  detail::write_gray8(path, img.height, img.width, bytes);
}

// Mask files are strictly two-level: 0 and 255.
inline Mask read_mask(const std::string& path) {
  int h, w;
  std::vector<uint8_t> bytes;
  detail::read_gray8(path, h, w, bytes);
  Mask m(h, w);
  for (size_t i = 0; i < bytes.size(); ++i) {
    if (bytes[i] != 0 && bytes[i] != 255)
      throw DataError("mask " + path + " holds intermediate value " +
                      std::to_string(bytes[i]) + "; expected only 0 and 255");
    m.bits[i] = bytes[i] ? 1 : 0;
  }
  return m;
}

inline void write_mask(const std::string& path, const Mask& m) {
  std::vector<uint8_t> bytes(m.size());
  for (size_t i = 0; i < bytes.size(); ++i) bytes[i] = m.bits[i] ? 255 : 0;
  detail::write_gray8(path, m.height, m.width, bytes);
}

}  // namespace mscmt
