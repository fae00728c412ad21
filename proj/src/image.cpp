// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "oocd/image.hpp"

#include <png.h>

#include <cstring>

#include "oocd/error.hpp"
#include "oocd/hash.hpp"

namespace oocd {

Image read_png(const std::filesystem::path& path) {
  png_image info;
  std::memset(&info, 0, sizeof(info));
  info.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&info, path.c_str())) {
    std::string why = info.message;
    png_image_free(&info);
    throw IoError("cannot decode image '" + path.string() + "': " + why);
  }
  info.format = PNG_FORMAT_RGB;
  Image out(info.width, info.height);
  if (!png_image_finish_read(&info, nullptr, out.pixels.data(), 0, nullptr)) {
    std::string why = info.message;
    png_image_free(&info);
    throw IoError("cannot decode image '" + path.string() + "': " + why);
  }
  return out;
}

void write_png(const Image& image, const std::filesystem::path& path) {
  if (image.empty()) throw IoError("refusing to write empty image " + path.string());
  png_image info;
  std::memset(&info, 0, sizeof(info));
  info.version = PNG_IMAGE_VERSION;
  info.width = image.width;
  info.height = image.height;
  info.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&info, path.c_str(), 0, image.pixels.data(), 0,
                               nullptr)) {
    std::string why = info.message;
    png_image_free(&info);
    throw IoError("cannot write image '" + path.string() + "': " + why);
  }
}

Image resize_nearest(const Image& image, std::uint32_t width,
                     std::uint32_t height) {
  if (image.width == width && image.height == height) return image;
  Image out(width, height);
  for (std::uint32_t y = 0; y < height; ++y) {
    const auto sy = static_cast<std::uint32_t>(
        (std::uint64_t{y} * image.height) / height);
    for (std::uint32_t x = 0; x < width; ++x) {
      const auto sx = static_cast<std::uint32_t>(
          (std::uint64_t{x} * image.width) / width);
      std::memcpy(out.at(x, y), image.at(sx, sy), 3);
    }
  }
  return out;
}

std::string pixel_hash(const Image& image) {
  Fnv1a h;
  h.update_u64(image.width).update_u64(image.height).update(image.pixels);
  return h.hex();
}

}  // namespace oocd
