#ifndef SAN_TRAINING_HPP
#define SAN_TRAINING_HPP

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "san/dataset.hpp"
#include "san/network.hpp"

namespace san {

// ---------------------------------------------------------------------------
// Ground-truth channel expansion and the inverse channel average
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> expand_ground_truth(const TensorT<T>& mask, i64 k) {
  if (k < 1) fail(ErrorKind::kArgument, "expand_ground_truth: k must be >= 1");
  if (mask.c() != 1) fail(ErrorKind::kShape, "expand_ground_truth: mask must have 1 channel");
  TensorT<T> out(mask.n(), k, mask.h(), mask.w());
  const i64 plane = mask.h() * mask.w();
  for (i64 n = 0; n < mask.n(); ++n)
    for (i64 c = 0; c < k; ++c)
      for (i64 i = 0; i < plane; ++i)
        out.at((n * k + c) * plane + i) = mask.at(n * plane + i);
  return out;
}

template <typename T>
TensorT<T> average_channels(const TensorT<T>& maps) {
  if (maps.c() < 1) fail(ErrorKind::kArgument, "average_channels: need at least one channel");
  TensorT<T> out(maps.n(), 1, maps.h(), maps.w());
  const i64 plane = maps.h() * maps.w();
  for (i64 n = 0; n < maps.n(); ++n)
    for (i64 i = 0; i < plane; ++i) {
      double acc = 0.0;
      for (i64 c = 0; c < maps.c(); ++c) acc += maps.at((n * maps.c() + c) * plane + i);
      out.at(n * plane + i) = static_cast<T>(acc / static_cast<double>(maps.c()));
    }
  return out;
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

enum class RunMode { kSan, kBaseline1, kBaseline2, kBaseline3 };
enum class ComparisonPhases { kBoth, kDOnly, kGOnly };

RunMode parse_run_mode(const std::string& s);
std::string run_mode_name(RunMode m);
ComparisonPhases parse_comparison_phases(const std::string& s);

struct TrainConfig {
  int iterations = 20;
  int d_epochs = 6;
  int g_epochs = 2;
  int batch = 16;
  float d_lr0 = 0.0006f;
  float g_lr0 = 0.0001f;
  float lr_decay = 0.98f;
  float alpha = 0.8f;
  int map_dims = 9;
  u64 seed = 1;
  RunMode mode = RunMode::kSan;
  ComparisonPhases comparison_phases = ComparisonPhases::kBoth;
  // Fresh synthetic maps per D mini-batch (default); the once-per-iteration
  // reading of the training procedure is available as a switch.
  bool regen_per_batch = true;
  int baseline1_epochs = 200;
  // Early exits; 0 disables. The F-beta target compares against the
  // per-iteration raw train-set snapshot, the loss target against the
  // baseline1 epoch loss.
  float stop_train_fbeta = 0.0f;
  float stop_baseline1_loss = 0.0f;

  void validate() const;
};

struct EpochRecord {
  int iteration = 0;
  std::string phase;  // "d", "g", "snapshot", "baseline1"
  int epoch = 0;      // global epoch index within the phase kind
  double loss = 0.0;
  double accuracy = 0.0;  // D accuracy, G fool-rate, or snapshot F-beta
  double lr = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> records;
  void write_csv(const std::string& path) const;
  void write_jsonl(const std::string& path) const;
};

struct StepInfo {
  std::string phase;  // "d" or "g"
  std::vector<int> labels;
};
using StepObserver = std::function<void(const StepInfo&)>;

struct TrainResult {
  Network g;
  Network d;  // empty for baseline1
  TrainLog log;
  double final_train_fbeta = 0.0;
  double final_baseline1_mse = 0.0;
  int iterations_run = 0;
};

// ---------------------------------------------------------------------------
// Steps (exposed so the labeling/freeze contracts can be tested directly)
// ---------------------------------------------------------------------------

// Synthetic maps for a batch of images. Probe mode mirrors the statistics
// the G sees while being trained without touching its running stats.
Tensor generate_saliency_batch(Network& g, const Tensor& images, Mode mode = Mode::kProbe);

struct DBatch {
  Tensor inputs;      // first half expanded ground truths, second half synthetic
  Tensor references;  // paired expanded ground truth for every row
  std::vector<int> labels;
};

// Pairwise-aligned D batch over `idx`: ground-truth rows carry the sample
// class, synthetic rows carry num_classes + 1.
DBatch make_d_batch(const std::vector<SaliencySample>& samples, const std::vector<i64>& idx,
                    const Tensor& synthetic, i64 map_dims, int num_classes,
                    bool collapse_classes);

struct DStepStats {
  double loss = 0.0;
  double accuracy = 0.0;
};
DStepStats train_d_step(Network& d, const DBatch& batch, float lr, bool use_references);

struct GStepStats {
  double loss = 0.0;
  double fool_rate = 0.0;  // fraction D assigns to the requested class
};
// Updates only G; D stays bitwise frozen. Labels may never name the
// synthetic class.
GStepStats train_g_step(Network& g, Network& d, const Tensor& images, const Tensor& references,
                        const std::vector<int>& labels, float lr, bool use_references);

// Mean elementwise squared error and its gradient; baseline1's objective.
std::pair<float, Tensor> mse_loss(const Tensor& pred, const Tensor& target);

// Mean raw-map F-beta over samples (adaptive binarization, no
// post-processing); the per-iteration snapshot metric.
double train_set_fbeta(Network& g, const std::vector<SaliencySample>& samples, i64 map_dims);

double train_set_mse(Network& g, const std::vector<SaliencySample>& samples, i64 map_dims);

// The full three-phase procedure (or the requested baseline). When out_dir
// is non-empty, per-iteration checkpoints and the CSV/JSONL log are written
// there.
TrainResult run_training(const TrainConfig& cfg, const Dataset& ds, const std::string& out_dir,
                         const StepObserver& observer = {});

}  // namespace san

#endif  // SAN_TRAINING_HPP
