// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#include "msgen/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "msgen/errors.hpp"
#include "msgen/rng.hpp"

namespace msgen {
namespace {

bool inside(int shape, double dx, double dy, double r) {
  switch (shape) {
    case 0:
      return std::abs(dx) <= r && std::abs(dy) <= r;
    case 1:
      return dx * dx + dy * dy <= r * r;
    case 2:  // upward triangle
      return dy <= r && dy >= -r && std::abs(dx) <= (dy + r) * 0.5;
    default: {
      const double arm = r * 0.35;
      return (std::abs(dx) <= arm && std::abs(dy) <= r) || (std::abs(dy) <= arm && std::abs(dx) <= r);
    }
  }
}

}  // namespace

Image render_shape(int label, std::uint64_t seed, std::size_t side) {
  if (label < 0 || label >= static_cast<int>(kShapeClasses)) {
    throw ConfigError("shape class must be in [0, 8), got " + std::to_string(label));
  }
  Rng rng(seed);
  const int shape = label / 2;
  const bool red = label % 2 == 0;
  const double s = static_cast<double>(side);
  const double r = s * (0.22 + 0.1 * rng.uniform());
  const double cx = s * 0.5 + (rng.uniform() - 0.5) * s * 0.25;
  const double cy = s * 0.5 + (rng.uniform() - 0.5) * s * 0.25;
  const double shade = 170.0 + 70.0 * rng.uniform();
  Image img(side, side, 3);
  for (std::size_t y = 0; y < side; ++y) {
    for (std::size_t x = 0; x < side; ++x) {
      const double dx = static_cast<double>(x) + 0.5 - cx;
      const double dy = static_cast<double>(y) + 0.5 - cy;
      double rgb[3];
      if (inside(shape, dx, dy, r)) {
        rgb[0] = red ? shade : 30.0;
        rgb[1] = 40.0;
        rgb[2] = red ? 30.0 : shade;
      } else {
        rgb[0] = rgb[1] = rgb[2] = 40.0;
      }
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = rgb[c] + 6.0 * rng.normal();
        img.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return img;
}

std::vector<LabeledImage> make_shape_dataset(std::size_t count, std::uint64_t seed) {
  std::vector<LabeledImage> items;
  items.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const int label = static_cast<int>(i % kShapeClasses);
    char name[32];
    std::snprintf(name, sizeof name, "img_%05zu.ppm", i);
    items.push_back({name, label, render_shape(label, derive_seed(seed, i))});
  }
  return items;
}

void write_dataset(const std::filesystem::path& dir, const std::vector<LabeledImage>& items) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create dataset directory " + dir.string() + ": " + ec.message());
  std::ofstream index(dir / kLabelsFile, std::ios::binary);
  if (!index) throw IoError("cannot write " + (dir / kLabelsFile).string());
  for (const auto& item : items) {
    write_pnm(dir / item.filename, item.image);
    index << item.filename << ' ' << item.label << '\n';
  }
  if (!index) throw IoError("failed writing " + (dir / kLabelsFile).string());
}

std::vector<LabeledImage> load_dataset(const std::filesystem::path& dir) {
  const auto index_path = dir / kLabelsFile;
  std::ifstream index(index_path);
  if (!index) {
    throw IoError("dataset index " + index_path.string() + " not found; create one with `msgen dataset --out " +
                  dir.string() + "`");
  }
  std::vector<LabeledImage> items;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(index, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    LabeledImage item;
    if (!(ls >> item.filename >> item.label)) {
      throw IoError(index_path.string() + ":" + std::to_string(line_no) + ": expected `filename class`");
    }
    item.image = read_pnm(dir / item.filename);
    items.push_back(std::move(item));
  }
  return items;
}

}  // namespace msgen
