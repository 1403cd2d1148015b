#ifndef SAN_POSTPROC_HPP
#define SAN_POSTPROC_HPP

#include "san/slic.hpp"
#include "san/tensor.hpp"

namespace san {

struct PostprocParams {
  double weak_fraction = 0.2;  // t1
  int slic_k = 128;
  double slic_compactness = 10.0;
  int slic_iters = 10;
  double refine_weight = 0.5;  // lambda

  void validate() const;
};

// Zeroes values below fraction * max(map); an all-zero map stays all-zero.
Tensor threshold_weak(const Tensor& map, double fraction);

// Every pixel replaced by the mean map value of its segment.
Tensor smooth_by_superpixels(const Tensor& map, const SuperpixelMap& sp);

// Segment-level contrast refinement: contrast(i) =
// sum_j (n_j/N) |lab_i - lab_j| exp(-|pos_i - pos_j|^2 / (2 sigma^2)) with
// sigma = 0.25 * image diagonal, min-max normalized; the refined value is
// (1-lambda) * v + lambda * v * contrast.
Tensor lowlevel_refine(const SuperpixelMap& sp, const Tensor& smoothed, double lambda);

// (v - min) / (max - min); a constant map goes to all zeros.
Tensor normalize_map(const Tensor& map);

// threshold_weak -> slic -> smooth -> refine -> normalize -> threshold_weak.
Tensor postprocess_pipeline(const Tensor& image, const Tensor& raw_map,
                            const PostprocParams& params);

}  // namespace san

#endif  // SAN_POSTPROC_HPP
