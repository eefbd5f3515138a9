#include "cliprl/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "cliprl/errors.hpp"
#include "cliprl/nn/layers.hpp"

namespace cliprl {
namespace {

namespace fs = std::filesystem;

// Owns a png_image and releases libpng state on every exit path.
class PngImage {
 public:
  PngImage() {
    std::memset(&img_, 0, sizeof(img_));
    img_.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&img_); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;
  png_image* get() { return &img_; }
  png_image* operator->() { return &img_; }

 private:
  png_image img_;
};

std::string png_message(png_image* img) { return img->message[0] ? img->message : "unknown error"; }

void write_png(const fs::path& path, int height, int width, png_uint_32 format,
               const std::vector<png_byte>& pixels) {
  if (path.has_parent_path() && !fs::exists(path.parent_path())) {
    throw IoError("cannot write " + path.string() + ": directory does not exist");
  }
  PngImage img;
  img->width = static_cast<png_uint_32>(width);
  img->height = static_cast<png_uint_32>(height);
  img->format = format;
  if (!png_image_write_to_file(img.get(), path.c_str(), 0, pixels.data(), 0, nullptr)) {
    throw IoError("cannot write " + path.string() + ": " + png_message(img.get()));
  }
}

bool has_png_signature(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  png_byte sig[8] = {};
  in.read(reinterpret_cast<char*>(sig), 8);
  return in.gcount() == 8 && png_sig_cmp(sig, 0, 8) == 0;
}

}  // namespace

void save_mask(const Mask& mask, const fs::path& path) {
  std::vector<png_byte> pixels(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const ClassId c = mask.labels[i];
    if (c < 0 || c > 255) {
      throw FormatError("save_mask " + path.string() + ": class id " + std::to_string(c) +
                        " does not fit in 8 bits");
    }
    pixels[i] = static_cast<png_byte>(c);
  }
  write_png(path, mask.height, mask.width, PNG_FORMAT_GRAY, pixels);
}

Mask load_mask(const fs::path& path) {
  if (!has_png_signature(path)) throw IoError("load_mask " + path.string() + ": not a PNG file");
  PngImage img;
  if (!png_image_begin_read_from_file(img.get(), path.c_str())) {
    throw IoError("load_mask " + path.string() + ": " + png_message(img.get()));
  }
  if ((img->format & PNG_FORMAT_FLAG_COLOR) || (img->format & PNG_FORMAT_FLAG_LINEAR)) {
    throw IoError("load_mask " + path.string() + ": expected an 8-bit single-channel raster");
  }
  img->format = PNG_FORMAT_GRAY;
  std::vector<png_byte> pixels(PNG_IMAGE_SIZE(*img.get()));
  if (!png_image_finish_read(img.get(), nullptr, pixels.data(), 0, nullptr)) {
    throw IoError("load_mask " + path.string() + ": " + png_message(img.get()));
  }
  Mask mask(static_cast<int>(img->height), static_cast<int>(img->width));
  for (std::size_t i = 0; i < mask.size(); ++i) mask.labels[i] = pixels[i];
  return mask;
}

void save_image(const Image& image, const fs::path& path) {
  std::vector<png_byte> pixels(image.rgb.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const float v = std::clamp(image.rgb[i], 0.0f, 1.0f);
    pixels[i] = static_cast<png_byte>(std::lround(v * 255.0f));
  }
  write_png(path, image.height, image.width, PNG_FORMAT_RGB, pixels);
}

Image load_image(const fs::path& path, std::optional<int> target_height,
                 std::optional<int> target_width) {
  if (!has_png_signature(path)) {
    throw IoError("load_image " + path.string() + ": unsupported format (expected PNG)");
  }
  PngImage img;
  if (!png_image_begin_read_from_file(img.get(), path.c_str())) {
    throw IoError("load_image " + path.string() + ": " + png_message(img.get()));
  }
  img->format = PNG_FORMAT_RGB;
  std::vector<png_byte> pixels(PNG_IMAGE_SIZE(*img.get()));
  png_color black{0, 0, 0};
  if (!png_image_finish_read(img.get(), &black, pixels.data(), 0, nullptr)) {
    throw IoError("load_image " + path.string() + ": " + png_message(img.get()));
  }
  Image out(static_cast<int>(img->height), static_cast<int>(img->width));
  for (std::size_t i = 0; i < pixels.size(); ++i) out.rgb[i] = pixels[i] / 255.0f;
  const int h = target_height.value_or(out.height);
  const int w = target_width.value_or(out.width);
  return resize_image(out, h, w);
}

Image resize_image(const Image& image, int height, int width) {
  if (image.height == height && image.width == width) return image;
  if (height <= 0 || width <= 0) throw ArgumentError("resize_image: non-positive target size");
  const Tensor<float> resized = nn::resize_bilinear(image_to_tensor<float>(image), height, width);
  Image out(height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = resized(c, y, x);
  return out;
}

void write_manifest(const fs::path& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest " + path.string());
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  auto rel = [&](const fs::path& p) {
    std::error_code ec;
    const auto r = fs::relative(p, base, ec);
    return (ec || r.empty()) ? p.generic_string() : r.generic_string();
  };
  for (const auto& e : entries) out << rel(e.image_path) << '\t' << rel(e.mask_path) << '\t' << e.id << '\n';
  if (!out) throw IoError("write failed for manifest " + path.string());
}

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest " + path.string());
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  std::vector<ManifestEntry> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) {
      throw IoError("manifest " + path.string() + ":" + std::to_string(line_no) +
                    ": expected image<TAB>mask<TAB>id");
    }
    ManifestEntry e;
    e.image_path = line.substr(0, t1);
    e.mask_path = line.substr(t1 + 1, t2 - t1 - 1);
    e.id = line.substr(t2 + 1);
    if (e.image_path.is_relative()) e.image_path = base / e.image_path;
    if (e.mask_path.is_relative()) e.mask_path = base / e.mask_path;
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace cliprl
