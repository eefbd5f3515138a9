#include <bit>
#include <cstring>
#include <fstream>

#include "cliprl/errors.hpp"
#include "cliprl/trainer.hpp"

static_assert(std::endian::native == std::endian::little, "checkpoints assume a little-endian host");

namespace cliprl {
namespace {

constexpr char kMagic[8] = {'C', 'L', 'R', 'L', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  template <typename V>
  void put(const V& v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(V));
  }
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const char*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  void str(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  const std::vector<char>& buffer() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  Reader(const std::vector<char>& buf, std::size_t end, std::string path) : buf_(buf), end_(end), path_(std::move(path)) {}

  template <typename V>
  V get() {
    V v;
    need(sizeof(V));
    std::memcpy(&v, buf_.data() + pos_, sizeof(V));
    pos_ += sizeof(V);
    return v;
  }
  void bytes(void* out, std::size_t n) {
    need(n);
    std::memcpy(out, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::string str() {
    const auto n = get<std::uint32_t>();
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  std::size_t position() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > end_) throw IntegrityError("checkpoint " + path_ + ": truncated payload");
  }
  const std::vector<char>& buf_;
  std::size_t end_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const CheckpointBundle& bundle, const std::filesystem::path& path) {
  Writer w;
  w.bytes(kMagic, 8);
  w.put(kCheckpointVersion);
  w.put(bundle.config_fingerprint);
  w.put(static_cast<std::int32_t>(bundle.epoch));
  w.put(bundle.best_val_miou);
  w.put(bundle.baseline.value);
  w.put(bundle.baseline.momentum);
  w.put(static_cast<std::uint8_t>(bundle.baseline.initialized ? 1 : 0));
  w.str(bundle.config_text);
  w.put(static_cast<std::uint32_t>(bundle.weights.size()));
  for (const auto& a : bundle.weights) {
    if (a.element_count() != a.data.size()) throw ArgumentError("checkpoint array " + a.name + " has inconsistent shape");
    w.str(a.name);
    w.put(static_cast<std::uint32_t>(a.shape.size()));
    for (int d : a.shape) w.put(static_cast<std::int32_t>(d));
    w.bytes(a.data.data(), a.data.size() * sizeof(float));
  }
  const std::uint64_t checksum = fnv1a64(w.buffer().data(), w.buffer().size());

  // Temp file + rename: a failed write leaves the previous checkpoint intact.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
    out.write(reinterpret_cast<const char*>(&checksum), sizeof(checksum));
    out.flush();
    if (!out) {
      out.close();
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw IoError("write failed for checkpoint " + path.string() + " (disk full?)");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot replace checkpoint " + path.string() + ": " + ec.message());
}

CheckpointBundle load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string p = path.string();
  if (buf.size() < 8 + sizeof(std::uint32_t) + sizeof(std::uint64_t) ||
      std::memcmp(buf.data(), kMagic, 8) != 0) {
    throw IntegrityError("checkpoint " + p + ": bad magic bytes");
  }
  std::uint32_t version = 0;
  std::memcpy(&version, buf.data() + 8, sizeof(version));
  if (version != kCheckpointVersion) {
    throw IncompatibleVersionError("checkpoint " + p + ": format version " + std::to_string(version) +
                                   " (this build reads version " + std::to_string(kCheckpointVersion) + ")");
  }
  const std::size_t body = buf.size() - sizeof(std::uint64_t);
  std::uint64_t stored = 0;
  std::memcpy(&stored, buf.data() + body, sizeof(stored));
  if (fnv1a64(buf.data(), body) != stored) throw IntegrityError("checkpoint " + p + ": checksum mismatch");

  Reader r(buf, body, p);
  char magic[8];
  r.bytes(magic, 8);
  (void)r.get<std::uint32_t>();
  CheckpointBundle b;
  b.config_fingerprint = r.get<std::uint64_t>();
  b.epoch = r.get<std::int32_t>();
  b.best_val_miou = r.get<double>();
  b.baseline.value = r.get<double>();
  b.baseline.momentum = r.get<double>();
  b.baseline.initialized = r.get<std::uint8_t>() != 0;
  b.config_text = r.str();
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray a;
    a.name = r.str();
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw IntegrityError("checkpoint " + p + ": implausible rank for " + a.name);
    for (std::uint32_t d = 0; d < rank; ++d) a.shape.push_back(r.get<std::int32_t>());
    a.data.resize(a.element_count());
    r.bytes(a.data.data(), a.data.size() * sizeof(float));
    b.weights.push_back(std::move(a));
  }
  if (r.position() != body) throw IntegrityError("checkpoint " + p + ": trailing bytes");
  return b;
}

bool CheckpointKeeper::offer(double val_miou, const std::function<CheckpointBundle()>& make_bundle) {
  if (best_ && !(val_miou > best_->best_val_miou)) return false;
  CheckpointBundle bundle = make_bundle();
  bundle.best_val_miou = val_miou;
  if (path_) save_checkpoint(bundle, *path_);
  best_ = std::move(bundle);
  return true;
}

}  // namespace cliprl
