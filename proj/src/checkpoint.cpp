#include "wsc/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "wsc/errors.hpp"

namespace wsc::checkpoint {

namespace {

constexpr char kMagic[4] = {'W', 'S', 'C', 'K'};
constexpr uint16_t kVersion = 1;

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary), path_(path) {
    if (!out_) throw FormatError(path + ": cannot open for writing");
  }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), n); }
  void u8(uint8_t v) { bytes(&v, 1); }
  void u16(uint16_t v) {
    uint8_t b[2] = {uint8_t(v & 0xff), uint8_t(v >> 8)};
    bytes(b, 2);
  }
  void u32(uint32_t v) {
    uint8_t b[4];
    for (int i = 0; i < 4; ++i) b[i] = uint8_t(v >> (8 * i));
    bytes(b, 4);
  }
  void u64(uint64_t v) {
    uint8_t b[8];
    for (int i = 0; i < 8; ++i) b[i] = uint8_t(v >> (8 * i));
    bytes(b, 8);
  }
  void f64(double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }
  void check() {
    if (!out_) throw FormatError(path_ + ": write failed");
  }

 private:
  std::ofstream out_;
  std::string path_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw FormatError(path + ": cannot open file");
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw FormatError(path_ + ": truncated at byte " + std::to_string(offset_ + in_.gcount()));
    offset_ += n;
  }
  uint8_t u8() {
    uint8_t v;
    bytes(&v, 1);
    return v;
  }
  uint16_t u16() {
    uint8_t b[2];
    bytes(b, 2);
    return uint16_t(b[0]) | (uint16_t(b[1]) << 8);
  }
  uint32_t u32() {
    uint8_t b[4];
    bytes(b, 4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(b[i]) << (8 * i);
    return v;
  }
  uint64_t u64() {
    uint8_t b[8];
    bytes(b, 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(b[i]) << (8 * i);
    return v;
  }
  double f64() {
    uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::size_t offset() const { return offset_; }
  const std::string& path() const { return path_; }

 private:
  std::ifstream in_;
  std::string path_;
  std::size_t offset_ = 0;
};

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const std::size_t n = ckpt.theta.flat.size();
  for (const auto* extra : {&ckpt.theta_bar, &ckpt.m, &ckpt.v})
    if (extra->has_value() && (*extra)->size() != n)
      throw ShapeError("save_checkpoint: auxiliary array length does not match theta");

  Writer w(path);
  w.bytes(kMagic, 4);
  w.u16(kVersion);
  uint8_t flags = 0;
  if (ckpt.theta_bar) flags |= 1;
  if (ckpt.m) flags |= 2;
  if (ckpt.v) flags |= 4;
  w.u8(flags);
  w.u32(static_cast<uint32_t>(ckpt.theta.segments.size()));
  for (const nn::Segment& seg : ckpt.theta.segments) {
    w.u32(static_cast<uint32_t>(seg.name.size()));
    w.bytes(seg.name.data(), seg.name.size());
    w.u32(static_cast<uint32_t>(seg.shape.size()));
    for (std::size_t d : seg.shape) w.u64(d);
  }
  for (double v : ckpt.theta.flat) w.f64(v);
  for (const auto* extra : {&ckpt.theta_bar, &ckpt.m, &ckpt.v})
    if (extra->has_value())
      for (double v : **extra) w.f64(v);
  w.check();
}

Checkpoint load_checkpoint(const std::string& path) {
  Reader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError(path + ": bad magic at byte 0 (expected 'WSCK')");
  const uint16_t version = r.u16();
  if (version != kVersion)
    throw FormatError(path + ": unsupported version " + std::to_string(version) + " at byte 4");
  const uint8_t flags = r.u8();

  Checkpoint ckpt;
  const uint32_t n_segments = r.u32();
  std::size_t total = 0;
  for (uint32_t s = 0; s < n_segments; ++s) {
    nn::Segment seg;
    const uint32_t name_len = r.u32();
    seg.name.resize(name_len);
    r.bytes(seg.name.data(), name_len);
    const uint32_t rank = r.u32();
    seg.shape.resize(rank);
    for (uint32_t d = 0; d < rank; ++d) seg.shape[d] = static_cast<std::size_t>(r.u64());
    seg.offset = total;
    total += seg.size();
    ckpt.theta.segments.push_back(std::move(seg));
  }
  ckpt.theta.flat.resize(total);
  for (double& v : ckpt.theta.flat) v = r.f64();
  for (auto* extra : {&ckpt.theta_bar, &ckpt.m, &ckpt.v}) {
    const uint8_t bit = extra == &ckpt.theta_bar ? 1 : (extra == &ckpt.m ? 2 : 4);
    if (flags & bit) {
      extra->emplace(total);
      for (double& v : **extra) v = r.f64();
    }
  }
  return ckpt;
}

}  // namespace wsc::checkpoint
