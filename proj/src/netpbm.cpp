#include "san/netpbm.hpp"

#include <cmath>
#include <fstream>

namespace san {

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in, const std::string& path) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  if (tok.empty()) fail(ErrorKind::kFormat, path + ": unexpected end of header");
  return tok;
}

struct PnmHeader {
  i64 width, height;
};

PnmHeader read_header(std::istream& in, const std::string& path, const char* magic) {
  if (next_token(in, path) != magic)
    fail(ErrorKind::kFormat, path + ": expected " + magic + " magic");
  i64 w, h, maxval;
  try {
    w = std::stoll(next_token(in, path));
    h = std::stoll(next_token(in, path));
    maxval = std::stoll(next_token(in, path));
  } catch (const std::exception&) {
    fail(ErrorKind::kFormat, path + ": malformed header field");
  }
  if (w <= 0 || h <= 0) fail(ErrorKind::kFormat, path + ": non-positive dimensions");
  if (maxval != 255) fail(ErrorKind::kFormat, path + ": maxval must be 255");
  // The single whitespace byte after maxval was already consumed by the
  // tokenizer; payload starts here.
  return {w, h};
}

std::vector<std::uint8_t> read_payload(std::istream& in, const std::string& path, i64 count) {
  std::vector<std::uint8_t> bytes(static_cast<size_t>(count));
  in.read(reinterpret_cast<char*>(bytes.data()), count);
  if (in.gcount() != count) fail(ErrorKind::kFormat, path + ": truncated pixel payload");
  return bytes;
}

std::uint8_t quantize(float v) {
  float x = std::round(v * 255.0f);
  if (x < 0.0f) x = 0.0f;
  if (x > 255.0f) x = 255.0f;
  return static_cast<std::uint8_t>(x);
}

}  // namespace

Tensor read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path);
  PnmHeader hd = read_header(in, path, "P6");
  auto bytes = read_payload(in, path, hd.width * hd.height * 3);
  Tensor img(1, 3, hd.height, hd.width);
  for (i64 y = 0; y < hd.height; ++y)
    for (i64 x = 0; x < hd.width; ++x)
      for (i64 c = 0; c < 3; ++c)
        img(0, c, y, x) =
            static_cast<float>(bytes[static_cast<size_t>((y * hd.width + x) * 3 + c)]) / 255.0f;
  return img;
}

Tensor read_pgm(const std::string& path) {
  RawGray raw = read_pgm_raw(path);
  Tensor map(1, 1, raw.height, raw.width);
  for (i64 i = 0; i < raw.height * raw.width; ++i)
    map.at(i) = static_cast<float>(raw.pixels[static_cast<size_t>(i)]) / 255.0f;
  return map;
}

RawGray read_pgm_raw(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path);
  PnmHeader hd = read_header(in, path, "P5");
  RawGray raw;
  raw.width = hd.width;
  raw.height = hd.height;
  raw.pixels = read_payload(in, path, hd.width * hd.height);
  return raw;
}

void write_ppm(const Tensor& image, const std::string& path) {
  if (image.n() != 1 || image.c() != 3)
    fail(ErrorKind::kShape, "write_ppm: expected (1,3,h,w), got " + image.shape().str());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot open " + path + " for writing");
  out << "P6\n" << image.w() << " " << image.h() << "\n255\n";
  std::vector<std::uint8_t> bytes(static_cast<size_t>(image.h() * image.w() * 3));
  for (i64 y = 0; y < image.h(); ++y)
    for (i64 x = 0; x < image.w(); ++x)
      for (i64 c = 0; c < 3; ++c)
        bytes[static_cast<size_t>((y * image.w() + x) * 3 + c)] = quantize(image(0, c, y, x));
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::kIo, "write failed for " + path);
}

void write_pgm(const Tensor& map, const std::string& path) {
  if (map.n() != 1 || map.c() != 1)
    fail(ErrorKind::kShape, "write_pgm: expected (1,1,h,w), got " + map.shape().str());
  RawGray raw;
  raw.width = map.w();
  raw.height = map.h();
  raw.pixels.resize(static_cast<size_t>(map.numel()));
  for (i64 i = 0; i < map.numel(); ++i) raw.pixels[static_cast<size_t>(i)] = quantize(map.at(i));
  write_pgm_raw(raw, path);
}

void write_pgm_raw(const RawGray& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot open " + path + " for writing");
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) fail(ErrorKind::kIo, "write failed for " + path);
}

}  // namespace san
