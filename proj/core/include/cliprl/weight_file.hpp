#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace cliprl {

struct NamedArray {
  std::string name;
  std::vector<int> shape;
  std::vector<float> data;

  std::size_t element_count() const;
};

// Weight container layout (all integers little-endian):
//
//   bytes 0..7    magic "CLRLWTS1"
//   bytes 8..15   u64 header length H
//   next H bytes  UTF-8 JSON header:
//                 {"format": "cliprl-weights", "version": 1,
//                  "arrays": [{"name", "dtype": "float32", "shape": [...],
//                              "offset", "nbytes"}, ...]}
//                 offset is relative to the first byte after the header.
//   remainder     raw float32 data
void write_weight_file(const std::filesystem::path& path, std::span<const NamedArray> arrays);
std::vector<NamedArray> read_weight_file(const std::filesystem::path& path);

// FNV-1a 64 over raw bytes.
std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t hash = 0xcbf29ce484222325ull);

}  // namespace cliprl
