#ifndef SAN_NETPBM_HPP
#define SAN_NETPBM_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "san/tensor.hpp"

namespace san {

// Binary NetPBM (P6 color / P5 gray), maxval 255, `#` header comments.
// Values are scaled to [0,1] on read; write quantizes with round(v * 255).

Tensor read_ppm(const std::string& path);  // (1, 3, h, w)
Tensor read_pgm(const std::string& path);  // (1, 1, h, w)

void write_ppm(const Tensor& image, const std::string& path);
void write_pgm(const Tensor& map, const std::string& path);

// Raw byte access for class-index masks, where pixel values are labels,
// not intensities.
struct RawGray {
  i64 width = 0, height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

RawGray read_pgm_raw(const std::string& path);
void write_pgm_raw(const RawGray& img, const std::string& path);

}  // namespace san

#endif  // SAN_NETPBM_HPP
