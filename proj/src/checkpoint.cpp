#include "san/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <vector>

namespace san {

namespace {

constexpr char kMagic[8] = {'S', 'A', 'N', 'C', 'K', 'P', 'T', '1'};
constexpr u32 kVersion = 1;

void put_u32(std::vector<unsigned char>& buf, u32 v) {
  buf.push_back(static_cast<unsigned char>(v & 0xFF));
  buf.push_back(static_cast<unsigned char>((v >> 8) & 0xFF));
  buf.push_back(static_cast<unsigned char>((v >> 16) & 0xFF));
  buf.push_back(static_cast<unsigned char>((v >> 24) & 0xFF));
}

void put_f32(std::vector<unsigned char>& buf, float f) {
  u32 bits;
  std::memcpy(&bits, &f, 4);
  put_u32(buf, bits);
}

struct Reader {
  const unsigned char* p;
  size_t left;
  const std::string& path;

  void take(void* dst, size_t n) {
    if (left < n) fail(ErrorKind::kFormat, path + ": truncated checkpoint");
    std::memcpy(dst, p, n);
    p += n;
    left -= n;
  }
  u32 u32le() {
    unsigned char b[4];
    take(b, 4);
    return static_cast<u32>(b[0]) | (static_cast<u32>(b[1]) << 8) |
           (static_cast<u32>(b[2]) << 16) | (static_cast<u32>(b[3]) << 24);
  }
  float f32le() {
    u32 bits = u32le();
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
  }
};

}  // namespace

u32 crc32(const void* data, size_t len, u32 seed) {
  static const auto table = [] {
    std::array<u32, 256> t{};
    for (u32 i = 0; i < 256; ++i) {
      u32 c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  u32 crc = seed ^ 0xFFFFFFFFu;
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) crc = table[(crc ^ p[i]) & 0xFF] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

void save_checkpoint(Network& net, const std::string& path) {
  std::vector<unsigned char> buf;
  buf.insert(buf.end(), kMagic, kMagic + 8);
  put_u32(buf, kVersion);
  put_u32(buf, static_cast<u32>(net.size()));
  for (const ParamRef<float>& t : net.state()) {
    put_u32(buf, static_cast<u32>(t.dims.size()));
    for (i64 d : t.dims) put_u32(buf, static_cast<u32>(d));
    for (i64 i = 0; i < t.size; ++i) put_f32(buf, t.data[i]);
  }
  put_u32(buf, crc32(buf.data(), buf.size()));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) fail(ErrorKind::kIo, "write failed for " + path);
}

void load_checkpoint(const std::string& path, Network& prototype) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (buf.size() < 8 + 4 + 4 + 4) fail(ErrorKind::kFormat, path + ": truncated checkpoint");

  u32 stored_crc = static_cast<u32>(buf[buf.size() - 4]) |
                   (static_cast<u32>(buf[buf.size() - 3]) << 8) |
                   (static_cast<u32>(buf[buf.size() - 2]) << 16) |
                   (static_cast<u32>(buf[buf.size() - 1]) << 24);
  if (crc32(buf.data(), buf.size() - 4) != stored_crc)
    fail(ErrorKind::kFormat, path + ": checksum mismatch");

  Reader r{buf.data(), buf.size() - 4, path};
  char magic[8];
  r.take(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) fail(ErrorKind::kFormat, path + ": bad magic");
  u32 version = r.u32le();
  if (version != kVersion)
    fail(ErrorKind::kFormat, path + ": unsupported version " + std::to_string(version));
  u32 layer_count = r.u32le();
  if (layer_count != static_cast<u32>(prototype.size()))
    fail(ErrorKind::kShape, path + ": layer count " + std::to_string(layer_count) +
                                " != prototype " + std::to_string(prototype.size()));
  for (const ParamRef<float>& t : prototype.state()) {
    u32 rank = r.u32le();
    if (rank != t.dims.size())
      fail(ErrorKind::kShape, path + ": rank mismatch for " + t.name);
    for (size_t d = 0; d < t.dims.size(); ++d) {
      u32 dim = r.u32le();
      if (static_cast<i64>(dim) != t.dims[d])
        fail(ErrorKind::kShape, path + ": dim mismatch for " + t.name);
    }
    for (i64 i = 0; i < t.size; ++i) t.data[i] = r.f32le();
  }
  if (r.left != 0) fail(ErrorKind::kFormat, path + ": trailing bytes");
}

}  // namespace san
