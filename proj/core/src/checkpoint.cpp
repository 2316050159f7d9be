// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#include "msgen/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

#include "msgen/errors.hpp"

namespace msgen {
namespace {

static_assert(sizeof(double) == 8);

template <class T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <class T>
T get_le(std::span<const std::uint8_t> bytes, std::size_t at) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(bytes[at + i]) << (8 * i);
  return v;
}

constexpr std::size_t kPrefix = sizeof(kCheckpointMagic) + 4 + 8;

// Removes the lock file when the write finishes or fails.
class LockFile {
 public:
  explicit LockFile(std::filesystem::path path) : path_(std::move(path)) {
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f)
      throw IoError("cannot lock " + path_.string() +
                    ": another process is writing this checkpoint (remove the lock file if it is stale)");
    std::fclose(f);
  }
  ~LockFile() {
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }
  LockFile(const LockFile&) = delete;
  LockFile& operator=(const LockFile&) = delete;

 private:
  std::filesystem::path path_;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json dir = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    const std::uint64_t length = t.size() * sizeof(double);
    dir.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}, {"length", length}});
    offset += length;
  }
  const nlohmann::json header = {{"kind", ckpt.kind},     {"step", ckpt.step},     {"rng", ckpt.rng_state},
                                 {"config", ckpt.config}, {"meta", ckpt.meta},     {"tensors", dir},
                                 {"payload_bytes", offset}};
  const std::string text = header.dump();

  std::vector<std::uint8_t> out;
  out.reserve(kPrefix + text.size() + offset);
  out.insert(out.end(), std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& [name, t] : ckpt.tensors)
    for (double v : t.values()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kPrefix || std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0)
    throw IoError("not a checkpoint file (bad magic)");
  const auto version = get_le<std::uint32_t>(bytes, sizeof(kCheckpointMagic));
  if (version != kCheckpointVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                  std::to_string(kCheckpointVersion) + ")");
  const auto header_len = get_le<std::uint64_t>(bytes, sizeof(kCheckpointMagic) + 4);
  if (header_len > bytes.size() - kPrefix) throw IoError("truncated checkpoint header");

  Checkpoint ckpt;
  try {
    const auto header = nlohmann::json::parse(bytes.begin() + kPrefix, bytes.begin() + kPrefix + header_len);
    ckpt.kind = header.at("kind").get<std::string>();
    ckpt.step = header.at("step").get<std::uint64_t>();
    ckpt.rng_state = header.at("rng").get<std::string>();
    ckpt.config = header.at("config").get<std::map<std::string, std::string>>();
    ckpt.meta = header.at("meta").get<std::map<std::string, std::string>>();
    const auto payload_bytes = header.at("payload_bytes").get<std::uint64_t>();
    const std::size_t base = kPrefix + header_len;
    if (bytes.size() - base != payload_bytes) throw IoError("checkpoint payload size does not match its header");
    for (const auto& entry : header.at("tensors")) {
      const auto name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<Shape>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const auto length = entry.at("length").get<std::uint64_t>();
      if (length != element_count(shape) * sizeof(double) || offset > payload_bytes ||
          length > payload_bytes - offset)
        throw IoError("checkpoint tensor '" + name + "' has an inconsistent directory entry");
      std::vector<double> values(element_count(shape));
      for (std::size_t i = 0; i < values.size(); ++i)
        values[i] = std::bit_cast<double>(get_le<std::uint64_t>(bytes, base + offset + 8 * i));
      if (!ckpt.tensors.emplace(name, Tensor(shape, std::move(values))).second)
        throw IoError("checkpoint tensor '" + name + "' appears twice");
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed checkpoint header: ") + e.what());
  }
  return ckpt;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  LockFile lock(path.string() + ".lock");
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("checkpoint not found: " + path.string());
  try {
    return decode_checkpoint(read_file_bytes(path));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace msgen
