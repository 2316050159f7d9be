// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "msgen/image.hpp"

namespace msgen {

inline constexpr std::size_t kShapeClasses = 8;     // 4 shapes x 2 colors
inline constexpr std::size_t kShapeImageSide = 32;
inline constexpr const char* kLabelsFile = "labels.txt";

struct LabeledImage {
  std::string filename;
  int label = 0;
  Image image;
};

/// Filled shape (square, disc, triangle, cross) in red or blue on a dark
/// noisy background. Class = shape * 2 + color.
Image render_shape(int label, std::uint64_t seed, std::size_t side = kShapeImageSide);

/// In-memory dataset: image i has class i % 8 and seed derive_seed(seed, i).
std::vector<LabeledImage> make_shape_dataset(std::size_t count, std::uint64_t seed);

/// Writes the images and a labels index ("filename class" per line).
void write_dataset(const std::filesystem::path& dir, const std::vector<LabeledImage>& items);

/// Reads the labels index and every listed image.
std::vector<LabeledImage> load_dataset(const std::filesystem::path& dir);

}  // namespace msgen
