#ifndef SAN_SLIC_HPP
#define SAN_SLIC_HPP

#include <vector>

#include "san/tensor.hpp"

namespace san {

// CIELAB conversion (sRGB linearization, D65 white point), 64-bit so the
// segment statistics are reproducible exactly.
struct Lab {
  double l = 0.0, a = 0.0, b = 0.0;
};
Lab srgb_to_lab(double r, double g, double b);

struct SuperpixelMap {
  i64 height = 0, width = 0;
  std::vector<int> labels;  // row-major, dense 0..num_segments-1
  struct Segment {
    Lab color;        // mean CIELAB
    double cx = 0.0;  // centroid, pixel units
    double cy = 0.0;
    i64 count = 0;
  };
  std::vector<Segment> segments;

  int label_at(i64 y, i64 x) const { return labels[static_cast<size_t>(y * width + x)]; }
  int num_segments() const { return static_cast<int>(segments.size()); }
};

// Standard SLIC: grid seeds perturbed to the lowest-gradient 3x3 neighbor,
// local k-means in (l,a,b,x,y) with D = sqrt(d_lab^2 + (m/S)^2 d_xy^2),
// S = sqrt(N/k), 2S x 2S search windows, then connectivity enforcement that
// absorbs orphan components into the largest adjacent segment.
SuperpixelMap slic(const Tensor& image, int k, double compactness, int iters);

}  // namespace san

#endif  // SAN_SLIC_HPP
