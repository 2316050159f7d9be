// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#include "msgen/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>

#include "msgen/errors.hpp"

namespace msgen {

Image::Image(std::size_t w, std::size_t h, std::size_t c) : width(w), height(h), channels(c), pixels(w * h * c, 0) {
  if (c != 1 && c != 3) throw ShapeError("image channels must be 1 or 3, got " + std::to_string(c));
}

namespace {

std::size_t read_header_int(std::istream& in, const std::filesystem::path& path) {
  char ch = 0;
  while (in.get(ch)) {
    if (ch == '#') {
      std::string skip;
      std::getline(in, skip);
    } else if (!std::isspace(static_cast<unsigned char>(ch))) {
      break;
    }
  }
  std::string digits;
  while (in && std::isdigit(static_cast<unsigned char>(ch))) {
    digits.push_back(ch);
    if (!in.get(ch)) break;
  }
  if (digits.empty()) throw IoError("malformed PNM header in " + path.string());
  return std::stoul(digits);
}

}  // namespace

Image read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path.string());
  char magic[2] = {};
  in.read(magic, 2);
  if (magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6')) {
    throw IoError("unsupported image format in " + path.string() + " (expected binary P5 or P6)");
  }
  const std::size_t channels = magic[1] == '6' ? 3 : 1;
  const std::size_t w = read_header_int(in, path);
  const std::size_t h = read_header_int(in, path);
  const std::size_t maxval = read_header_int(in, path);  // consumes the single whitespace byte
  if (maxval != 255) throw IoError("only 8-bit images are supported: " + path.string());
  Image img(w, h, channels);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) throw IoError("truncated image " + path.string());
  return img;
}

void write_pnm(const std::filesystem::path& path, const Image& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image " + path.string());
  out << (image.channels == 3 ? "P6" : "P5") << '\n' << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw IoError("failed writing image " + path.string());
}

Tensor image_to_tensor(const Image& image) {
  Tensor t = Tensor::matrix(image.width * image.height, image.channels);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) t[i] = static_cast<double>(image.pixels[i]) / 127.5 - 1.0;
  return t;
}

Image tensor_to_image(const Tensor& t, std::size_t side) {
  if (t.rows() != side * side) {
    throw ShapeError("tensor_to_image: " + to_string(t.shape()) + " is not a " + std::to_string(side) + "x" +
                     std::to_string(side) + " image");
  }
  Image img(side, side, t.cols());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double v = std::clamp(t[i], -1.0, 1.0);
    img.pixels[i] = static_cast<std::uint8_t>(std::lround((v + 1.0) * 127.5));
  }
  return img;
}

}  // namespace msgen
