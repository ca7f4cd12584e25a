#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "maq2l/tensor.hpp"

namespace maq2l {

// 8-bit interleaved raster, 1 (gray) or 3 (RGB) channels.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(std::size_t w, std::size_t h, std::size_t c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c), pixels(w * h * c, fill) {}

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c = 0) { return pixels[(y * width + x) * channels + c]; }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c = 0) const {
    return pixels[(y * width + x) * channels + c];
  }
  Image to_rgb() const;
  bool operator==(const Image&) const = default;
};

Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& image);
std::vector<std::uint8_t> encode_png(const Image& image);

// Half-pixel-centred bilinear resampling of one h×w plane.
std::vector<double> resize_bilinear(std::span<const double> plane, std::size_t h, std::size_t w, std::size_t out_h,
                                    std::size_t out_w);

// Resizes to size×size and maps [0, 255] to [-1, 1]. Gray input is replicated
// to `channels` planes.
Tensor image_to_tensor(const Image& image, std::size_t size, std::size_t channels = 3);

}  // namespace maq2l
