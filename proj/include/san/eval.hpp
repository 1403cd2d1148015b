#ifndef SAN_EVAL_HPP
#define SAN_EVAL_HPP

#include <string>
#include <utility>
#include <vector>

#include "san/dataset.hpp"
#include "san/network.hpp"
#include "san/postproc.hpp"

namespace san {

enum class BinarizeMethod { kAdaptive, kFixed };

// Adaptive threshold is min(1, 2 * mean(map)); a pixel is positive when
// its value >= threshold.
Tensor binarize(const Tensor& map, BinarizeMethod method, float fixed_t = 0.5f);
float binarize_threshold(const Tensor& map, BinarizeMethod method, float fixed_t = 0.5f);

// P = TP/(TP+FP) (0 when nothing predicted), R = TP/(TP+FN). The ground
// truth must contain at least one positive pixel.
std::pair<double, double> precision_recall(const Tensor& pred, const Tensor& gt);

// (1+beta^2) P R / (beta^2 P + R); 0 when the denominator is 0.
double f_beta(double p, double r, double beta = 0.3);

struct PerImageScore {
  std::string id;
  double precision = 0.0;
  double recall = 0.0;
  double f_beta = 0.0;
  double threshold = 0.0;
};

struct EvalReport {
  std::vector<PerImageScore> per_image;  // ordered by sample id
  double mean_f_beta = 0.0;
  double beta = 0.3;
  std::string binarize_method;
  bool postproc = false;

  void write_csv(const std::string& path) const;
  void write_json(const std::string& path) const;
};

// Scores one saliency map against a binary ground truth.
PerImageScore score_map(const Tensor& map, const Tensor& gt, double beta,
                        BinarizeMethod method, float fixed_t = 0.5f);

// Per sample: G forward -> channel average -> optional post-processing ->
// binarize -> P/R -> F-beta; the aggregate is the per-image mean.
EvalReport evaluate_dataset(Network& g, const std::vector<SaliencySample>& samples,
                            bool use_postproc, double beta, const PostprocParams& params,
                            BinarizeMethod method = BinarizeMethod::kAdaptive,
                            float fixed_t = 0.5f);

}  // namespace san

#endif  // SAN_EVAL_HPP
