// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace oocd {

// 8-bit RGB raster, row-major, 3 bytes per pixel.
struct Image {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(std::uint32_t w, std::uint32_t h)
      : width(w), height(h), pixels(std::size_t{w} * h * 3, 0) {}

  bool empty() const noexcept { return width == 0 || height == 0; }
  std::uint8_t* at(std::uint32_t x, std::uint32_t y) {
    return pixels.data() + (std::size_t{y} * width + x) * 3;
  }
  const std::uint8_t* at(std::uint32_t x, std::uint32_t y) const {
    return pixels.data() + (std::size_t{y} * width + x) * 3;
  }

  bool operator==(const Image&) const = default;
};

// Decodes a PNG file into RGB (alpha dropped, gray expanded). Throws
// IoError when the file is missing or not a decodable PNG.
Image read_png(const std::filesystem::path& path);

// Lossless write; the parent directory must exist.
void write_png(const Image& image, const std::filesystem::path& path);

// Nearest-neighbour resampling in integer arithmetic only, so the result is
// identical on every platform.
Image resize_nearest(const Image& image, std::uint32_t width,
                     std::uint32_t height);

// FNV-1a over (width, height, pixel bytes), as 16 lowercase hex digits.
// Identifies image content independently of the file encoding.
std::string pixel_hash(const Image& image);

}  // namespace oocd
