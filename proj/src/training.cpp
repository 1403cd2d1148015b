#include "san/training.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "san/checkpoint.hpp"
#include "san/eval.hpp"

namespace fs = std::filesystem;

namespace san {

RunMode parse_run_mode(const std::string& s) {
  if (s == "san") return RunMode::kSan;
  if (s == "baseline1") return RunMode::kBaseline1;
  if (s == "baseline2") return RunMode::kBaseline2;
  if (s == "baseline3") return RunMode::kBaseline3;
  fail(ErrorKind::kArgument, "unknown mode '" + s + "' (san|baseline1|baseline2|baseline3)");
}

std::string run_mode_name(RunMode m) {
  switch (m) {
    case RunMode::kSan: return "san";
    case RunMode::kBaseline1: return "baseline1";
    case RunMode::kBaseline2: return "baseline2";
    case RunMode::kBaseline3: return "baseline3";
  }
  return "san";
}

ComparisonPhases parse_comparison_phases(const std::string& s) {
  if (s == "both") return ComparisonPhases::kBoth;
  if (s == "d_only") return ComparisonPhases::kDOnly;
  if (s == "g_only") return ComparisonPhases::kGOnly;
  fail(ErrorKind::kArgument, "unknown comparison_phases '" + s + "' (both|d_only|g_only)");
}

void TrainConfig::validate() const {
  if (iterations < 1) fail(ErrorKind::kArgument, "config: iterations must be >= 1");
  if (d_epochs < 1 || g_epochs < 1)
    fail(ErrorKind::kArgument, "config: epoch counts must be >= 1");
  if (batch < 2 || batch % 2 != 0)
    fail(ErrorKind::kArgument, "config: batch must be even and >= 2 (paired composition)");
  if (!(d_lr0 > 0.0f) || !(g_lr0 > 0.0f))
    fail(ErrorKind::kArgument, "config: learning rates must be positive");
  if (!(lr_decay > 0.0f) || lr_decay > 1.0f)
    fail(ErrorKind::kArgument, "config: lr_decay must be in (0,1]");
  if (alpha < 0.0f || alpha > 1.0f) fail(ErrorKind::kArgument, "config: alpha must be in [0,1]");
  if (map_dims < 1) fail(ErrorKind::kArgument, "config: map_dims must be >= 1");
  if (baseline1_epochs < 1) fail(ErrorKind::kArgument, "config: baseline1_epochs must be >= 1");
}

// ---------------------------------------------------------------------------
// Log emission
// ---------------------------------------------------------------------------

void TrainLog::write_csv(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot open " + path + " for writing");
  out << "iteration,phase,epoch,loss,accuracy,lr\n";
  out.precision(9);
  for (const auto& r : records)
    out << r.iteration << "," << r.phase << "," << r.epoch << "," << r.loss << ","
        << r.accuracy << "," << r.lr << "\n";
  if (!out) fail(ErrorKind::kIo, "write failed for " + path);
}

void TrainLog::write_jsonl(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot open " + path + " for writing");
  for (const auto& r : records) {
    nlohmann::json j;
    j["iteration"] = r.iteration;
    j["phase"] = r.phase;
    j["epoch"] = r.epoch;
    j["loss"] = r.loss;
    j["accuracy"] = r.accuracy;
    j["lr"] = r.lr;
    out << j.dump() << "\n";
  }
  if (!out) fail(ErrorKind::kIo, "write failed for " + path);
}

// ---------------------------------------------------------------------------
// Batch assembly and steps
// ---------------------------------------------------------------------------

namespace {

Tensor stack_images(const std::vector<SaliencySample>& samples, const std::vector<i64>& idx) {
  const Tensor& first = samples[static_cast<size_t>(idx[0])].image;
  Tensor out(static_cast<i64>(idx.size()), 3, first.h(), first.w());
  for (size_t i = 0; i < idx.size(); ++i) {
    const Tensor& img = samples[static_cast<size_t>(idx[i])].image;
    std::copy(img.data(), img.data() + img.numel(),
              out.data() + static_cast<i64>(i) * img.numel());
  }
  return out;
}

Tensor stack_expanded_masks(const std::vector<SaliencySample>& samples,
                            const std::vector<i64>& idx, i64 k) {
  const Tensor& first = samples[static_cast<size_t>(idx[0])].mask;
  Tensor out(static_cast<i64>(idx.size()), k, first.h(), first.w());
  const i64 plane = first.h() * first.w();
  for (size_t i = 0; i < idx.size(); ++i) {
    const Tensor& mask = samples[static_cast<size_t>(idx[i])].mask;
    for (i64 c = 0; c < k; ++c)
      std::copy(mask.data(), mask.data() + plane,
                out.data() + (static_cast<i64>(i) * k + c) * plane);
  }
  return out;
}

double batch_accuracy(const Tensor& logits, const std::vector<int>& labels) {
  i64 hits = 0;
  for (i64 n = 0; n < logits.n(); ++n) {
    i64 best = 0;
    for (i64 c = 1; c < logits.c(); ++c)
      if (logits(n, c, 0, 0) > logits(n, best, 0, 0)) best = c;
    if (best + 1 == labels[static_cast<size_t>(n)]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(logits.n());
}

}  // namespace

Tensor generate_saliency_batch(Network& g, const Tensor& images, Mode mode) {
  if (images.n() == 1 && mode != Mode::kEval) mode = Mode::kEval;  // batchnorm needs n >= 2
  return g.forward(images, mode);
}

DBatch make_d_batch(const std::vector<SaliencySample>& samples, const std::vector<i64>& idx,
                    const Tensor& synthetic, i64 map_dims, int num_classes,
                    bool collapse_classes) {
  const i64 half = static_cast<i64>(idx.size());
  if (synthetic.n() != half)
    fail(ErrorKind::kShape, "make_d_batch: synthetic batch does not pair with ground truths");
  Tensor gt = stack_expanded_masks(samples, idx, map_dims);
  DBatch b;
  b.inputs = Tensor(2 * half, map_dims, gt.h(), gt.w());
  b.references = Tensor(2 * half, map_dims, gt.h(), gt.w());
  const i64 sample_sz = map_dims * gt.h() * gt.w();
  for (i64 i = 0; i < half; ++i) {
    std::copy(gt.data() + i * sample_sz, gt.data() + (i + 1) * sample_sz,
              b.inputs.data() + i * sample_sz);
    std::copy(synthetic.data() + i * sample_sz, synthetic.data() + (i + 1) * sample_sz,
              b.inputs.data() + (half + i) * sample_sz);
    // Row i and row half+i both pair with ground truth i.
    std::copy(gt.data() + i * sample_sz, gt.data() + (i + 1) * sample_sz,
              b.references.data() + i * sample_sz);
    std::copy(gt.data() + i * sample_sz, gt.data() + (i + 1) * sample_sz,
              b.references.data() + (half + i) * sample_sz);
  }
  b.labels.resize(static_cast<size_t>(2 * half));
  for (i64 i = 0; i < half; ++i) {
    int cls = samples[static_cast<size_t>(idx[i])].label;
    b.labels[static_cast<size_t>(i)] = collapse_classes ? 1 : cls;
    b.labels[static_cast<size_t>(half + i)] = num_classes + 1;
  }
  return b;
}

DStepStats train_d_step(Network& d, const DBatch& batch, float lr, bool use_references) {
  if (use_references)
    d.forward_record(batch.references);
  else
    d.clear_references();
  Tensor logits = d.forward(batch.inputs, Mode::kTrain);
  auto [loss, grad] = softmax_cross_entropy(logits, batch.labels);
  DStepStats stats{static_cast<double>(loss), batch_accuracy(logits, batch.labels)};
  d.zero_grad();
  d.backward(grad, true);
  sgd_step(d, lr);
  return stats;
}

GStepStats train_g_step(Network& g, Network& d, const Tensor& images, const Tensor& references,
                        const std::vector<int>& labels, float lr, bool use_references) {
  auto* fc = dynamic_cast<FullyConnectedLayer<float>*>(d.layers().back().get());
  if (fc != nullptr) {
    int synthetic_class = static_cast<int>(fc->out_features());
    for (int lab : labels)
      if (lab >= synthetic_class)
        fail(ErrorKind::kArgument,
             "train_g_step: label " + std::to_string(lab) +
                 " is the synthetic class; G updates use real classes only");
  }
  if (use_references)
    d.forward_record(references);
  else
    d.clear_references();
  Tensor synthetic = g.forward(images, Mode::kTrain);
  Tensor logits = d.forward(synthetic, Mode::kProbe);
  auto [loss, grad] = softmax_cross_entropy(logits, labels);
  GStepStats stats{static_cast<double>(loss), batch_accuracy(logits, labels)};
  Tensor grad_maps = d.backward(grad, /*param_grads=*/false);
  g.zero_grad();
  g.backward(grad_maps, true);
  sgd_step(g, lr);
  return stats;
}

std::pair<float, Tensor> mse_loss(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "mse_loss");
  const double inv = 1.0 / static_cast<double>(pred.numel());
  Tensor grad(pred.shape());
  double loss = 0.0;
  for (i64 i = 0; i < pred.numel(); ++i) {
    double d = static_cast<double>(pred.at(i)) - static_cast<double>(target.at(i));
    loss += d * d;
    grad.at(i) = static_cast<float>(2.0 * d * inv);
  }
  return {static_cast<float>(loss * inv), grad};
}

// ---------------------------------------------------------------------------
// Whole-set metrics (raw maps, eval mode, chunked to bound memory)
// ---------------------------------------------------------------------------

namespace {

template <typename Fn>
void for_each_map(Network& g, const std::vector<SaliencySample>& samples, i64 map_dims, Fn fn) {
  const i64 chunk = 8;
  std::vector<i64> idx(samples.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (size_t base = 0; base < samples.size(); base += chunk) {
    std::vector<i64> part(idx.begin() + static_cast<i64>(base),
                          idx.begin() + static_cast<i64>(std::min(samples.size(),
                                                                  base + chunk)));
    Tensor images = stack_images(samples, part);
    Tensor maps = average_channels(g.forward(images, Mode::kEval));
    const i64 plane = maps.h() * maps.w();
    for (size_t i = 0; i < part.size(); ++i) {
      Tensor map(1, 1, maps.h(), maps.w());
      std::copy(maps.data() + static_cast<i64>(i) * plane,
                maps.data() + static_cast<i64>(i + 1) * plane, map.data());
      fn(samples[static_cast<size_t>(part[i])], map);
    }
  }
  (void)map_dims;
}

}  // namespace

double train_set_fbeta(Network& g, const std::vector<SaliencySample>& samples, i64 map_dims) {
  double acc = 0.0;
  for_each_map(g, samples, map_dims, [&](const SaliencySample& s, const Tensor& map) {
    PerImageScore score = score_map(map, s.mask, 0.3, BinarizeMethod::kAdaptive);
    acc += score.f_beta;
  });
  return acc / static_cast<double>(samples.size());
}

double train_set_mse(Network& g, const std::vector<SaliencySample>& samples, i64 map_dims) {
  double acc = 0.0;
  for_each_map(g, samples, map_dims, [&](const SaliencySample& s, const Tensor& map) {
    double e = 0.0;
    for (i64 i = 0; i < map.numel(); ++i) {
      double d = static_cast<double>(map.at(i)) - static_cast<double>(s.mask.at(i));
      e += d * d;
    }
    acc += e / static_cast<double>(map.numel());
  });
  return acc / static_cast<double>(samples.size());
}

// ---------------------------------------------------------------------------
// run_training
// ---------------------------------------------------------------------------

namespace {

std::vector<std::vector<i64>> epoch_chunks(std::vector<i64>& order, Prng& shuffle_rng,
                                           i64 chunk_size) {
  shuffle_rng.shuffle(order);
  std::vector<std::vector<i64>> chunks;
  for (size_t base = 0; base < order.size(); base += static_cast<size_t>(chunk_size)) {
    size_t end = std::min(order.size(), base + static_cast<size_t>(chunk_size));
    if (end - base < 2) break;  // batchnorm wants at least two rows
    chunks.emplace_back(order.begin() + static_cast<i64>(base),
                        order.begin() + static_cast<i64>(end));
  }
  return chunks;
}

void save_iter_checkpoints(const std::string& out_dir, int iter, Network& g, Network* d) {
  if (out_dir.empty()) return;
  char name[64];
  std::snprintf(name, sizeof name, "g_iter%03d.ckpt", iter);
  save_checkpoint(g, (fs::path(out_dir) / name).string());
  if (d != nullptr) {
    std::snprintf(name, sizeof name, "d_iter%03d.ckpt", iter);
    save_checkpoint(*d, (fs::path(out_dir) / name).string());
  }
}

}  // namespace

TrainResult run_training(const TrainConfig& cfg, const Dataset& ds, const std::string& out_dir,
                         const StepObserver& observer) {
  cfg.validate();
  if (ds.samples.empty()) fail(ErrorKind::kArgument, "run_training: empty dataset");
  const int num_classes = ds.meta.num_classes;
  for (const auto& s : ds.samples) s.validate(num_classes);
  const i64 img_h = ds.samples[0].image.h(), img_w = ds.samples[0].image.w();
  for (const auto& s : ds.samples)
    if (s.image.h() != img_h || s.image.w() != img_w)
      fail(ErrorKind::kShape, "run_training: mixed image sizes in dataset");

  if (!out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) fail(ErrorKind::kIo, "cannot create output directory " + out_dir);
  }

  Prng master(cfg.seed);
  Prng g_init(master.derive(1));
  Prng d_init(master.derive(2));
  Prng shuffle_rng(master.derive(3));

  TrainResult result;
  GNetworkOptions g_opt;
  g_opt.map_dims = cfg.map_dims;
  result.g = build_g_network<float>(g_opt, g_init);

  TrainLog& log = result.log;

  // --------------------------- baseline1 ---------------------------
  if (cfg.mode == RunMode::kBaseline1) {
    std::vector<i64> order(ds.samples.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < cfg.baseline1_epochs; ++epoch) {
      float lr = cfg.g_lr0 * std::pow(cfg.lr_decay, static_cast<float>(epoch));
      double epoch_loss = 0.0;
      i64 rows = 0;
      for (const auto& chunk : epoch_chunks(order, shuffle_rng, cfg.batch)) {
        Tensor images = stack_images(ds.samples, chunk);
        Tensor targets = stack_expanded_masks(ds.samples, chunk, cfg.map_dims);
        Tensor maps = result.g.forward(images, Mode::kTrain);
        auto [loss, grad] = mse_loss(maps, targets);
        result.g.zero_grad();
        result.g.backward(grad, true);
        sgd_step(result.g, lr);
        epoch_loss += static_cast<double>(loss) * static_cast<double>(chunk.size());
        rows += static_cast<i64>(chunk.size());
      }
      epoch_loss /= static_cast<double>(rows);
      log.records.push_back({1, "baseline1", epoch, epoch_loss, 0.0, lr});
      if (cfg.stop_baseline1_loss > 0.0f && epoch_loss < cfg.stop_baseline1_loss) break;
    }
    result.final_baseline1_mse = train_set_mse(result.g, ds.samples, cfg.map_dims);
    result.final_train_fbeta = train_set_fbeta(result.g, ds.samples, cfg.map_dims);
    result.iterations_run = 1;
    save_iter_checkpoints(out_dir, 1, result.g, nullptr);
    if (!out_dir.empty()) {
      save_checkpoint(result.g, (fs::path(out_dir) / "g_final.ckpt").string());
      log.write_csv((fs::path(out_dir) / "trainlog.csv").string());
      log.write_jsonl((fs::path(out_dir) / "trainlog.jsonl").string());
    }
    return result;
  }

  // --------------------------- adversarial modes ---------------------------
  const bool collapse = cfg.mode == RunMode::kBaseline2;
  const int effective_classes = collapse ? 1 : num_classes;
  DNetworkOptions d_opt;
  d_opt.input_channels = cfg.map_dims;
  d_opt.num_classes = effective_classes + 1;
  d_opt.input_size = img_h;
  d_opt.alpha = cfg.alpha;
  if (cfg.mode == RunMode::kBaseline3) d_opt.comparison_positions.clear();
  if (img_h != img_w) fail(ErrorKind::kShape, "run_training: images must be square");
  result.d = build_d_network<float>(d_opt, d_init);

  const bool has_comparisons = !result.d.comparison_layers().empty();
  const bool refs_in_d = has_comparisons && cfg.comparison_phases != ComparisonPhases::kGOnly;
  const bool refs_in_g = has_comparisons && cfg.comparison_phases != ComparisonPhases::kDOnly;

  std::vector<i64> order(ds.samples.size());
  std::iota(order.begin(), order.end(), 0);
  const i64 half = cfg.batch / 2;

  // Synthetic-map cache for the once-per-iteration regeneration mode.
  std::vector<Tensor> synth_cache;
  auto regenerate_all = [&]() {
    synth_cache.assign(ds.samples.size(), Tensor());
    std::vector<i64> idx(ds.samples.size());
    std::iota(idx.begin(), idx.end(), 0);
    const i64 plane = cfg.map_dims * img_h * img_w;
    for (size_t base = 0; base < idx.size(); base += 8) {
      std::vector<i64> part(idx.begin() + static_cast<i64>(base),
                            idx.begin() + static_cast<i64>(std::min(idx.size(), base + 8)));
      Tensor maps = generate_saliency_batch(result.g, stack_images(ds.samples, part));
      for (size_t i = 0; i < part.size(); ++i) {
        Tensor one(1, cfg.map_dims, img_h, img_w);
        std::copy(maps.data() + static_cast<i64>(i) * plane,
                  maps.data() + static_cast<i64>(i + 1) * plane, one.data());
        synth_cache[static_cast<size_t>(part[i])] = std::move(one);
      }
    }
  };

  int d_epoch_idx = 0, g_epoch_idx = 0;
  for (int iter = 1; iter <= cfg.iterations; ++iter) {
    if (!cfg.regen_per_batch) regenerate_all();  // training step 1

    for (int e = 0; e < cfg.d_epochs; ++e) {  // training step 2
      float lr = cfg.d_lr0 * std::pow(cfg.lr_decay, static_cast<float>(d_epoch_idx));
      double loss = 0.0, acc = 0.0;
      i64 rows = 0;
      for (const auto& chunk : epoch_chunks(order, shuffle_rng, half)) {
        Tensor synthetic;
        if (cfg.regen_per_batch) {
          synthetic = generate_saliency_batch(result.g, stack_images(ds.samples, chunk));
        } else {
          synthetic = Tensor(static_cast<i64>(chunk.size()), cfg.map_dims, img_h, img_w);
          const i64 plane = cfg.map_dims * img_h * img_w;
          for (size_t i = 0; i < chunk.size(); ++i)
            std::copy(synth_cache[static_cast<size_t>(chunk[i])].data(),
                      synth_cache[static_cast<size_t>(chunk[i])].data() + plane,
                      synthetic.data() + static_cast<i64>(i) * plane);
        }
        DBatch batch =
            make_d_batch(ds.samples, chunk, synthetic, cfg.map_dims, effective_classes, collapse);
        DStepStats stats = train_d_step(result.d, batch, lr, refs_in_d);
        if (observer) observer({"d", batch.labels});
        loss += stats.loss * static_cast<double>(batch.labels.size());
        acc += stats.accuracy * static_cast<double>(batch.labels.size());
        rows += static_cast<i64>(batch.labels.size());
      }
      log.records.push_back(
          {iter, "d", d_epoch_idx, loss / static_cast<double>(rows),
           acc / static_cast<double>(rows), lr});
      ++d_epoch_idx;
    }

    for (int e = 0; e < cfg.g_epochs; ++e) {  // training step 3
      float lr = cfg.g_lr0 * std::pow(cfg.lr_decay, static_cast<float>(g_epoch_idx));
      double loss = 0.0, fool = 0.0;
      i64 rows = 0;
      for (const auto& chunk : epoch_chunks(order, shuffle_rng, cfg.batch)) {
        Tensor images = stack_images(ds.samples, chunk);
        Tensor refs = stack_expanded_masks(ds.samples, chunk, cfg.map_dims);
        std::vector<int> labels(chunk.size());
        for (size_t i = 0; i < chunk.size(); ++i)
          labels[i] = collapse ? 1 : ds.samples[static_cast<size_t>(chunk[i])].label;
        GStepStats stats = train_g_step(result.g, result.d, images, refs, labels, lr, refs_in_g);
        if (observer) observer({"g", labels});
        loss += stats.loss * static_cast<double>(labels.size());
        fool += stats.fool_rate * static_cast<double>(labels.size());
        rows += static_cast<i64>(labels.size());
      }
      log.records.push_back(
          {iter, "g", g_epoch_idx, loss / static_cast<double>(rows),
           fool / static_cast<double>(rows), lr});
      ++g_epoch_idx;
    }

    double fbeta = train_set_fbeta(result.g, ds.samples, cfg.map_dims);
    log.records.push_back({iter, "snapshot", iter, 0.0, fbeta, 0.0});
    result.final_train_fbeta = fbeta;
    result.iterations_run = iter;
    save_iter_checkpoints(out_dir, iter, result.g, &result.d);
    if (cfg.stop_train_fbeta > 0.0f && fbeta >= static_cast<double>(cfg.stop_train_fbeta)) break;
  }

  if (!out_dir.empty()) {
    save_checkpoint(result.g, (fs::path(out_dir) / "g_final.ckpt").string());
    save_checkpoint(result.d, (fs::path(out_dir) / "d_final.ckpt").string());
    log.write_csv((fs::path(out_dir) / "trainlog.csv").string());
    log.write_jsonl((fs::path(out_dir) / "trainlog.jsonl").string());
  }
  return result;
}

}  // namespace san
