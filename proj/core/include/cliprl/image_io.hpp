#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cliprl/tensor.hpp"

namespace cliprl {

// Masks are stored as 8-bit single-channel PNG with pixel value = class id.
void save_mask(const Mask& mask, const std::filesystem::path& path);
Mask load_mask(const std::filesystem::path& path);

// Images are stored as 8-bit RGB PNG.
void save_image(const Image& image, const std::filesystem::path& path);

// Loads any PNG (grey, RGB, palette, alpha are converted to RGB). When a target size
// is given the image is bilinearly resized to it.
Image load_image(const std::filesystem::path& path, std::optional<int> target_height = std::nullopt,
                 std::optional<int> target_width = std::nullopt);

Image resize_image(const Image& image, int height, int width);

struct ManifestEntry {
  std::filesystem::path image_path;
  std::filesystem::path mask_path;
  std::string id;
};

// One "image<TAB>mask<TAB>id" line per entry, UTF-8. Paths are written relative
// to the manifest's directory when possible.
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);

// Relative paths are resolved against the manifest's directory.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

}  // namespace cliprl
