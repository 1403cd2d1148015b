#include "san/postproc.hpp"

#include <algorithm>
#include <cmath>

namespace san {

void PostprocParams::validate() const {
  if (weak_fraction < 0.0 || weak_fraction >= 1.0)
    fail(ErrorKind::kArgument, "postproc: weak_fraction must be in [0,1)");
  if (slic_k < 2) fail(ErrorKind::kArgument, "postproc: slic_k must be >= 2");
  if (slic_iters < 1) fail(ErrorKind::kArgument, "postproc: slic_iters must be >= 1");
  if (refine_weight < 0.0 || refine_weight > 1.0)
    fail(ErrorKind::kArgument, "postproc: refine_weight must be in [0,1]");
  if (slic_compactness <= 0.0)
    fail(ErrorKind::kArgument, "postproc: slic_compactness must be positive");
}

namespace {

void require_map(const Tensor& map, const char* where) {
  if (map.n() != 1 || map.c() != 1)
    fail(ErrorKind::kShape, std::string(where) + ": expected a (1,1,h,w) map");
}

void require_same_plane(const Tensor& map, const SuperpixelMap& sp, const char* where) {
  if (map.h() != sp.height || map.w() != sp.width)
    fail(ErrorKind::kShape, std::string(where) + ": map size differs from superpixel map");
}

}  // namespace

Tensor threshold_weak(const Tensor& map, double fraction) {
  require_map(map, "threshold_weak");
  if (fraction < 0.0 || fraction >= 1.0)
    fail(ErrorKind::kArgument, "threshold_weak: fraction must be in [0,1)");
  float cut = static_cast<float>(fraction) * max_value(map);
  Tensor out(map.shape());
  for (i64 i = 0; i < map.numel(); ++i) out.at(i) = map.at(i) < cut ? 0.0f : map.at(i);
  return out;
}

Tensor smooth_by_superpixels(const Tensor& map, const SuperpixelMap& sp) {
  require_map(map, "smooth_by_superpixels");
  require_same_plane(map, sp, "smooth_by_superpixels");
  std::vector<double> acc(sp.segments.size(), 0.0);
  for (i64 i = 0; i < map.numel(); ++i) acc[static_cast<size_t>(sp.labels[static_cast<size_t>(i)])] += map.at(i);
  std::vector<float> mean(sp.segments.size());
  for (size_t s = 0; s < sp.segments.size(); ++s)
    mean[s] = static_cast<float>(acc[s] / static_cast<double>(sp.segments[s].count));
  Tensor out(map.shape());
  for (i64 i = 0; i < map.numel(); ++i)
    out.at(i) = mean[static_cast<size_t>(sp.labels[static_cast<size_t>(i)])];
  return out;
}

Tensor lowlevel_refine(const SuperpixelMap& sp, const Tensor& smoothed, double lambda) {
  require_map(smoothed, "lowlevel_refine");
  require_same_plane(smoothed, sp, "lowlevel_refine");
  if (lambda < 0.0 || lambda > 1.0)
    fail(ErrorKind::kArgument, "lowlevel_refine: lambda must be in [0,1]");
  const size_t ns = sp.segments.size();
  const double total = static_cast<double>(sp.height * sp.width);
  const double diag = std::sqrt(static_cast<double>(sp.height * sp.height + sp.width * sp.width));
  const double sigma = 0.25 * diag;
  const double inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);

  std::vector<double> contrast(ns, 0.0);
  for (size_t i = 0; i < ns; ++i) {
    const auto& si = sp.segments[i];
    double acc = 0.0;
    for (size_t j = 0; j < ns; ++j) {
      if (j == i) continue;
      const auto& sj = sp.segments[j];
      double dl = si.color.l - sj.color.l;
      double da = si.color.a - sj.color.a;
      double db = si.color.b - sj.color.b;
      double dxy = (si.cx - sj.cx) * (si.cx - sj.cx) + (si.cy - sj.cy) * (si.cy - sj.cy);
      acc += (static_cast<double>(sj.count) / total) * std::sqrt(dl * dl + da * da + db * db) *
             std::exp(-dxy * inv_two_sigma2);
    }
    contrast[i] = acc;
  }
  double lo = *std::min_element(contrast.begin(), contrast.end());
  double hi = *std::max_element(contrast.begin(), contrast.end());
  if (hi > lo) {
    for (double& c : contrast) c = (c - lo) / (hi - lo);
  } else {
    std::fill(contrast.begin(), contrast.end(), 0.0);
  }

  Tensor out(smoothed.shape());
  for (i64 i = 0; i < smoothed.numel(); ++i) {
    double v = smoothed.at(i);
    double c = contrast[static_cast<size_t>(sp.labels[static_cast<size_t>(i)])];
    out.at(i) = static_cast<float>((1.0 - lambda) * v + lambda * v * c);
  }
  return out;
}

Tensor normalize_map(const Tensor& map) {
  require_map(map, "normalize_map");
  float lo = min_value(map), hi = max_value(map);
  Tensor out(map.shape());
  if (hi > lo)
    for (i64 i = 0; i < map.numel(); ++i) out.at(i) = (map.at(i) - lo) / (hi - lo);
  return out;  // constant maps go to zero
}

Tensor postprocess_pipeline(const Tensor& image, const Tensor& raw_map,
                            const PostprocParams& params) {
  params.validate();
  require_map(raw_map, "postprocess_pipeline");
  if (image.h() != raw_map.h() || image.w() != raw_map.w())
    fail(ErrorKind::kShape, "postprocess_pipeline: image and map sizes differ");
  Tensor m = threshold_weak(raw_map, params.weak_fraction);
  SuperpixelMap sp = slic(image, params.slic_k, params.slic_compactness, params.slic_iters);
  m = smooth_by_superpixels(m, sp);
  m = lowlevel_refine(sp, m, params.refine_weight);
  m = normalize_map(m);
  return threshold_weak(m, params.weak_fraction);
}

}  // namespace san
