#include "san/eval.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "san/training.hpp"

namespace san {

float binarize_threshold(const Tensor& map, BinarizeMethod method, float fixed_t) {
  if (method == BinarizeMethod::kFixed) {
    if (fixed_t < 0.0f || fixed_t > 1.0f)
      fail(ErrorKind::kArgument, "binarize: fixed threshold outside [0,1]");
    return fixed_t;
  }
  double mean = 0.0;
  for (i64 i = 0; i < map.numel(); ++i) mean += map.at(i);
  mean /= static_cast<double>(map.numel());
  return std::min(1.0f, static_cast<float>(2.0 * mean));
}

Tensor binarize(const Tensor& map, BinarizeMethod method, float fixed_t) {
  if (map.c() != 1) fail(ErrorKind::kShape, "binarize: expected a single-channel map");
  float t = binarize_threshold(map, method, fixed_t);
  Tensor out(map.shape());
  for (i64 i = 0; i < map.numel(); ++i) out.at(i) = map.at(i) >= t ? 1.0f : 0.0f;
  return out;
}

std::pair<double, double> precision_recall(const Tensor& pred, const Tensor& gt) {
  require_same_shape(pred, gt, "precision_recall");
  i64 tp = 0, fp = 0, fn = 0, gt_pos = 0;
  for (i64 i = 0; i < pred.numel(); ++i) {
    bool p = pred.at(i) != 0.0f;
    bool g = gt.at(i) != 0.0f;
    gt_pos += g;
    if (p && g) ++tp;
    else if (p && !g) ++fp;
    else if (!p && g) ++fn;
  }
  if (gt_pos == 0) fail(ErrorKind::kArgument, "precision_recall: empty ground truth");
  double precision = (tp + fp) == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return {precision, recall};
}

double f_beta(double p, double r, double beta) {
  if (p < 0.0 || p > 1.0 || r < 0.0 || r > 1.0)
    fail(ErrorKind::kArgument, "f_beta: precision/recall outside [0,1]");
  double b2 = beta * beta;
  double denom = b2 * p + r;
  return denom == 0.0 ? 0.0 : (1.0 + b2) * p * r / denom;
}

PerImageScore score_map(const Tensor& map, const Tensor& gt, double beta,
                        BinarizeMethod method, float fixed_t) {
  PerImageScore s;
  s.threshold = binarize_threshold(map, method, fixed_t);
  Tensor pred = binarize(map, method, fixed_t);
  auto [p, r] = precision_recall(pred, gt);
  s.precision = p;
  s.recall = r;
  s.f_beta = f_beta(p, r, beta);
  return s;
}

EvalReport evaluate_dataset(Network& g, const std::vector<SaliencySample>& samples,
                            bool use_postproc, double beta, const PostprocParams& params,
                            BinarizeMethod method, float fixed_t) {
  if (samples.empty()) fail(ErrorKind::kArgument, "evaluate_dataset: no samples");
  if (use_postproc) params.validate();
  EvalReport report;
  report.beta = beta;
  report.postproc = use_postproc;
  report.binarize_method = method == BinarizeMethod::kAdaptive ? "adaptive" : "fixed";
  report.per_image.resize(samples.size());

  const i64 chunk = 8;
  for (size_t base = 0; base < samples.size(); base += chunk) {
    size_t count = std::min<size_t>(chunk, samples.size() - base);
    const Tensor& first = samples[base].image;
    Tensor images(static_cast<i64>(count), 3, first.h(), first.w());
    for (size_t i = 0; i < count; ++i) {
      const Tensor& img = samples[base + i].image;
      if (img.h() != first.h() || img.w() != first.w())
        fail(ErrorKind::kShape, "evaluate_dataset: mixed image sizes");
      std::copy(img.data(), img.data() + img.numel(),
                images.data() + static_cast<i64>(i) * img.numel());
    }
    Tensor maps = average_channels(g.forward(images, Mode::kEval));
#pragma omp parallel for schedule(dynamic)
    for (i64 i = 0; i < static_cast<i64>(count); ++i) {
      const SaliencySample& s = samples[base + static_cast<size_t>(i)];
      Tensor map(1, 1, maps.h(), maps.w());
      std::copy(maps.data() + i * map.numel(), maps.data() + (i + 1) * map.numel(), map.data());
      if (use_postproc) map = postprocess_pipeline(s.image, map, params);
      PerImageScore score = score_map(map, s.mask, beta, method, fixed_t);
      score.id = s.id;
      report.per_image[base + static_cast<size_t>(i)] = score;
    }
  }

  std::sort(report.per_image.begin(), report.per_image.end(),
            [](const PerImageScore& a, const PerImageScore& b) { return a.id < b.id; });
  double acc = 0.0;
  for (const auto& s : report.per_image) acc += s.f_beta;
  report.mean_f_beta = acc / static_cast<double>(report.per_image.size());
  return report;
}

void EvalReport::write_csv(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot open " + path + " for writing");
  out << "id,precision,recall,f_beta\n";
  out.precision(9);
  for (const auto& s : per_image)
    out << s.id << "," << s.precision << "," << s.recall << "," << s.f_beta << "\n";
  if (!out) fail(ErrorKind::kIo, "write failed for " + path);
}

void EvalReport::write_json(const std::string& path) const {
  nlohmann::json j;
  j["mean_f_beta"] = mean_f_beta;
  j["beta"] = beta;
  j["binarize"] = binarize_method;
  j["postproc"] = postproc;
  j["aggregation"] = "per_image_mean";
  j["num_images"] = per_image.size();
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot open " + path + " for writing");
  out << j.dump(2) << "\n";
  if (!out) fail(ErrorKind::kIo, "write failed for " + path);
}

}  // namespace san
