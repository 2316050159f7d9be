// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "msgen/tensor.hpp"

namespace msgen {

/// 8-bit interleaved image; channels is 1 (PGM) or 3 (PPM).
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 3;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(std::size_t w, std::size_t h, std::size_t c);

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) { return pixels[(y * width + x) * channels + c]; }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const { return pixels[(y * width + x) * channels + c]; }
  friend bool operator==(const Image&, const Image&) = default;
};

/// Reads binary P5/P6 with maxval 255.
Image read_pnm(const std::filesystem::path& path);
/// Writes P6 for 3 channels, P5 for 1.
void write_pnm(const std::filesystem::path& path, const Image& image);

/// [H*W, C] tensor with v / 127.5 - 1.
Tensor image_to_tensor(const Image& image);
/// Inverse map with clamping to [-1, 1] and rounding to the nearest level.
Image tensor_to_image(const Tensor& t, std::size_t side);

}  // namespace msgen
