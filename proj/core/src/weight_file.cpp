#include "cliprl/weight_file.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>

#include "cliprl/errors.hpp"
#include "json.hpp"

static_assert(std::endian::native == std::endian::little, "weight files assume a little-endian host");

namespace cliprl {
namespace {
constexpr char kMagic[8] = {'C', 'L', 'R', 'L', 'W', 'T', 'S', '1'};
constexpr int kVersion = 1;
}  // namespace

std::size_t NamedArray::element_count() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, int d) { return a * static_cast<std::size_t>(d); });
}

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t hash) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    hash ^= p[i];
    hash *= 0x100000001b3ull;
  }
  return hash;
}

void write_weight_file(const std::filesystem::path& path, std::span<const NamedArray> arrays) {
  nlohmann::json header;
  header["format"] = "cliprl-weights";
  header["version"] = kVersion;
  header["arrays"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& a : arrays) {
    if (a.element_count() != a.data.size()) {
      throw ArgumentError("write_weight_file: array " + a.name + " has inconsistent shape");
    }
    const std::uint64_t nbytes = a.data.size() * sizeof(float);
    header["arrays"].push_back(
        {{"name", a.name}, {"dtype", "float32"}, {"shape", a.shape}, {"offset", offset}, {"nbytes", nbytes}});
    offset += nbytes;
  }
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write weight file " + path.string());
  const std::uint64_t len = text.size();
  out.write(kMagic, 8);
  out.write(reinterpret_cast<const char*>(&len), 8);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& a : arrays)
    out.write(reinterpret_cast<const char*>(a.data.data()),
              static_cast<std::streamsize>(a.data.size() * sizeof(float)));
  if (!out) throw IoError("write failed for weight file " + path.string());
}

std::vector<NamedArray> read_weight_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open weight file " + path.string());
  char magic[8] = {};
  std::uint64_t len = 0;
  in.read(magic, 8);
  in.read(reinterpret_cast<char*>(&len), 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) {
    throw IntegrityError("weight file " + path.string() + ": bad magic bytes");
  }
  if (len > (1ull << 30)) throw IntegrityError("weight file " + path.string() + ": header too large");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw IntegrityError("weight file " + path.string() + ": truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError("weight file " + path.string() + ": malformed header: " + e.what());
  }
  if (header.value("version", 0) != kVersion) {
    throw IncompatibleVersionError("weight file " + path.string() + ": unsupported version");
  }
  std::vector<char> payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<NamedArray> arrays;
  try {
    for (const auto& entry : header.at("arrays")) {
      NamedArray a;
      a.name = entry.at("name").get<std::string>();
      a.shape = entry.at("shape").get<std::vector<int>>();
      if (entry.value("dtype", std::string("float32")) != "float32") {
        throw IntegrityError("weight file " + path.string() + ": array " + a.name + " is not float32");
      }
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const auto nbytes = a.element_count() * sizeof(float);
      if (offset + nbytes > payload.size()) {
        throw IntegrityError("weight file " + path.string() + ": array " + a.name + " out of bounds");
      }
      a.data.resize(a.element_count());
      std::memcpy(a.data.data(), payload.data() + offset, nbytes);
      arrays.push_back(std::move(a));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError("weight file " + path.string() + ": malformed header: " + e.what());
  }
  return arrays;
}

}  // namespace cliprl
