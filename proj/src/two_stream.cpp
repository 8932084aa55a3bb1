#include "mcar/two_stream.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "mcar/metrics.hpp"

namespace mcar {

namespace {

constexpr double kProbEps = 1e-7;

std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2));
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdull;
  x ^= x >> 33;
  return x;
}

}  // namespace

LossMode loss_mode_from_string(const std::string& s) {
  if (s == "pair") return LossMode::Pair;
  if (s == "single") return LossMode::Single;
  throw std::invalid_argument("unknown loss mode: " + s);
}

std::string to_string(LossMode m) { return m == LossMode::Pair ? "pair" : "single"; }

std::vector<int> default_lr_drops(int epochs) {
  const int first = std::max(1, epochs / 2);
  const int second = std::max(first + 1, (5 * epochs + 3) / 6);
  return {first, second};
}

double bce_loss(const std::vector<float>& pred, const LabelVector& target) {
  if (pred.size() != target.size()) {
    throw std::invalid_argument("bce_loss: prediction and target lengths differ");
  }
  double loss = 0.0;
  for (std::size_t c = 0; c < pred.size(); ++c) {
    const double p = std::clamp(static_cast<double>(pred[c]), kProbEps, 1.0 - kProbEps);
    loss -= target[c] ? std::log(p) : std::log(1.0 - p);
  }
  return loss;
}

std::vector<float> aggregate_local(const std::vector<std::vector<float>>& region_scores,
                                   int num_classes) {
  std::vector<float> out(static_cast<std::size_t>(num_classes), 0.0f);
  for (const auto& s : region_scores) {
    if (s.size() != out.size()) {
      throw std::invalid_argument("aggregate_local: inconsistent score vector length");
    }
    for (std::size_t c = 0; c < s.size(); ++c) out[c] = std::max(out[c], s[c]);
  }
  return out;
}

namespace {

/// One complete two-stream pass with optional backward traces.
struct Pass {
  ForwardTrace global;
  std::vector<Region> regions;
  std::vector<ForwardTrace> locals;
  StreamOutputs out;
};

Tensor region_input(const Tensor& image, const Region& r, int input_size) {
  Tensor patch = crop(image, r.y_lo, r.y_hi, r.x_lo, r.x_hi);
  return bilinear_resize(patch, input_size, input_size);
}

void run_local_streams(const Tensor& image, const ModelParams& params, Pass& pass,
                       bool with_traces) {
  const int input_size = params.config.input_size;
  pass.out.region_scores.clear();
  pass.locals.clear();
  for (const Region& r : pass.regions) {
    const Tensor local_in = region_input(image, r, input_size);
    if (with_traces) {
      ForwardTrace trace;
      ClassifyResult cr = forward_and_classify(local_in, params, trace);
      pass.out.region_scores.push_back(std::move(cr.scores));
      pass.locals.push_back(std::move(trace));
    } else {
      const Tensor a = backbone_forward(local_in, params);
      pass.out.region_scores.push_back(classify(a, params).scores);
    }
  }
}

void finish_outputs(Pass& pass, int num_classes) {
  pass.out.y_l = aggregate_local(pass.out.region_scores, num_classes);
  pass.out.y_fused.resize(pass.out.y_g.size());
  for (std::size_t c = 0; c < pass.out.y_g.size(); ++c) {
    pass.out.y_fused[c] = std::max(pass.out.y_g[c], pass.out.y_l[c]);
  }
}

Pass run_pass(const Tensor& image, const ModelParams& params, const McarConfig& cfg, Rng& rng,
              bool with_traces) {
  Pass pass;
  ClassifyResult global = forward_and_classify(image, params, pass.global);
  pass.out.y_g = global.scores;
  pass.regions = localize(image.dim(0), image.dim(1), pass.global.activation, params,
                          global.scores, cfg, rng);
  run_local_streams(image, params, pass, with_traces);
  finish_outputs(pass, params.num_classes());
  return pass;
}

Pass run_pass_with_regions(const Tensor& image, const ModelParams& params,
                           const std::vector<Region>& regions, bool with_traces) {
  Pass pass;
  ClassifyResult global = forward_and_classify(image, params, pass.global);
  pass.out.y_g = global.scores;
  pass.regions = regions;
  run_local_streams(image, params, pass, with_traces);
  finish_outputs(pass, params.num_classes());
  return pass;
}

/// Per-class index of the region attaining the local max (first wins).
std::vector<int> winning_regions(const Pass& pass, int num_classes) {
  std::vector<int> winner(static_cast<std::size_t>(num_classes), -1);
  for (int c = 0; c < num_classes; ++c) {
    float best = -1.0f;
    for (std::size_t k = 0; k < pass.out.region_scores.size(); ++k) {
      if (pass.out.region_scores[k][c] > best) {
        best = pass.out.region_scores[k][c];
        winner[c] = static_cast<int>(k);
      }
    }
  }
  return winner;
}

LossBreakdown pass_loss(const Pass& pass, const LabelVector& target, LossMode mode,
                        float w_global, float w_local) {
  LossBreakdown lb;
  if (mode == LossMode::Single) {
    lb.total = bce_loss(pass.out.y_fused, target);
    lb.global_part = lb.total;
    return lb;
  }
  lb.global_part = bce_loss(pass.out.y_g, target);
  lb.local_part = pass.regions.empty() ? 0.0 : bce_loss(pass.out.y_l, target);
  lb.total = w_global * lb.global_part + w_local * lb.local_part;
  return lb;
}

/// Accumulates d(loss)/d(params) for one pass. Sigmoid+BCE gives
/// d(loss)/d(logit) = score - label on whichever stream carries the term.
void pass_gradients(const Pass& pass, const LabelVector& target, const ModelParams& params,
                    LossMode mode, float w_global, float w_local, GradientSet& grads) {
  const int num_classes = params.num_classes();
  std::vector<float> d_global(static_cast<std::size_t>(num_classes), 0.0f);
  std::vector<std::vector<float>> d_local(
      pass.locals.size(), std::vector<float>(static_cast<std::size_t>(num_classes), 0.0f));
  const std::vector<int> winner = winning_regions(pass, num_classes);

  for (int c = 0; c < num_classes; ++c) {
    const float y = target[c] ? 1.0f : 0.0f;
    if (mode == LossMode::Pair) {
      d_global[c] += w_global * (pass.out.y_g[c] - y);
      if (!pass.regions.empty()) d_local[winner[c]][c] += w_local * (pass.out.y_l[c] - y);
    } else {
      // Ties route to the global stream.
      const float g = pass.out.y_fused[c] - y;
      if (pass.regions.empty() || pass.out.y_g[c] >= pass.out.y_l[c]) {
        d_global[c] += g;
      } else {
        d_local[winner[c]][c] += g;
      }
    }
  }

  backward(params, pass.global, d_global, grads);
  for (std::size_t k = 0; k < pass.locals.size(); ++k) {
    const bool used = std::any_of(d_local[k].begin(), d_local[k].end(),
                                  [](float v) { return v != 0.0f; });
    if (used) backward(params, pass.locals[k], d_local[k], grads);
  }
}

}  // namespace

TwoStreamResult forward_two_stream(const Tensor& image, const ModelParams& params,
                                   const McarConfig& cfg, Rng& rng) {
  Pass pass = run_pass(image, params, cfg, rng, false);
  return {std::move(pass.out), std::move(pass.regions)};
}

StreamOutputs forward_with_regions(const Tensor& image, const ModelParams& params,
                                   const std::vector<Region>& regions) {
  return run_pass_with_regions(image, params, regions, false).out;
}

double total_loss(const StreamOutputs& outputs, const LabelVector& target, LossMode mode,
                  float w_global, float w_local) {
  if (mode == LossMode::Single) return bce_loss(outputs.y_fused, target);
  const double lg = bce_loss(outputs.y_g, target);
  const double ll = outputs.region_scores.empty() ? 0.0 : bce_loss(outputs.y_l, target);
  return w_global * lg + w_local * ll;
}

double loss_with_frozen_regions(const Tensor& image, const LabelVector& target,
                                const ModelParams& params, const std::vector<Region>& regions,
                                LossMode mode, float w_global, float w_local) {
  Pass pass = run_pass_with_regions(image, params, regions, false);
  return pass_loss(pass, target, mode, w_global, w_local).total;
}

LossBreakdown loss_and_gradients(const Tensor& image, const LabelVector& target,
                                 const ModelParams& params, const std::vector<Region>& regions,
                                 LossMode mode, float w_global, float w_local,
                                 GradientSet& grads) {
  Pass pass = run_pass_with_regions(image, params, regions, true);
  pass_gradients(pass, target, params, mode, w_global, w_local, grads);
  return pass_loss(pass, target, mode, w_global, w_local);
}

std::string history_line(const EpochStats& s) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d %.6g %.6f %.6f %.6f %.3f", s.epoch,
                static_cast<double>(s.lr), s.loss_global, s.loss_local, s.val_map,
                s.wall_seconds);
  return buf;
}

TrainResult train(const Dataset& train_split, const Dataset& val_split, const TrainConfig& cfg) {
  if (train_split.samples.empty()) throw std::invalid_argument("train: empty training set");
  if (cfg.epochs < 1 || cfg.batch_size < 1) {
    throw std::invalid_argument("train: epochs and batch_size must be >= 1");
  }
  const int num_classes = train_split.num_classes();
  if (num_classes < 1) throw std::invalid_argument("train: dataset declares no classes");
  auto check_labels = [&](const Dataset& d, const char* which) {
    for (const auto& s : d.samples) {
      if (static_cast<int>(s.labels.size()) != num_classes) {
        std::ostringstream os;
        os << which << " sample has " << s.labels.size() << " labels, expected " << num_classes;
        throw std::invalid_argument(os.str());
      }
    }
  };
  check_labels(train_split, "train");
  check_labels(val_split, "val");

  Rng rng(cfg.seed);
  TrainResult result;
  result.params = init_params(cfg.backbone, num_classes, cfg.pooling, rng);
  GradientSet grads = GradientSet::zeros_like(result.params);
  GradientSet velocity = GradientSet::zeros_like(result.params);

  const std::vector<int> drops =
      cfg.lr_drop_epochs.empty() ? default_lr_drops(cfg.epochs) : cfg.lr_drop_epochs;

  const std::size_t n = train_split.samples.size();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    float lr = cfg.lr;
    for (int d : drops)
      if (epoch >= d) lr *= 0.1f;

    rng.shuffle(order);
    double sum_g = 0.0, sum_l = 0.0;
    const SgdConfig sgd{lr, cfg.momentum, cfg.weight_decay};

    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      grads.zero();
      for (std::size_t i = start; i < end; ++i) {
        const Sample& sample = train_split.samples[order[i]];
        Tensor image = sample.image;
        if (cfg.augment_hflip && rng.coin()) image = hflip(image);
        Pass pass = run_pass(image, result.params, cfg.mcar, rng, true);
        pass_gradients(pass, sample.labels, result.params, cfg.loss_mode, cfg.w_global,
                       cfg.w_local, grads);
        const LossBreakdown lb =
            pass_loss(pass, sample.labels, cfg.loss_mode, cfg.w_global, cfg.w_local);
        sum_g += lb.global_part;
        sum_l += lb.local_part;
      }
      grads.scale(1.0f / static_cast<float>(end - start));
      sgd_step(result.params, grads, sgd, velocity);
    }

    const double loss_g = sum_g / static_cast<double>(n);
    const double loss_l = sum_l / static_cast<double>(n);
    if (!std::isfinite(loss_g) || !std::isfinite(loss_l)) {
      std::ostringstream os;
      os << "training diverged: non-finite loss at epoch " << epoch << " (global " << loss_g
         << ", local " << loss_l << ")";
      throw std::runtime_error(os.str());
    }

    double val_map = 0.0;
    if (!val_split.samples.empty()) {
      const auto scores = collect_scores(val_split.samples, result.params, cfg.mcar,
                                         mix64(cfg.seed, static_cast<std::uint64_t>(epoch)));
      val_map = mean_average_precision(scores, val_split.samples).map;
    }

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back({epoch, lr, loss_g, loss_l, val_map, wall});
  }
  return result;
}

TwoStreamResult predict(const Tensor& image, const ModelParams& params, const McarConfig& cfg,
                        Rng& rng) {
  return forward_two_stream(image, params, cfg, rng);
}

namespace {

int eval_threads() {
  const char* env = std::getenv("MCAR_THREADS");
  if (!env) return 1;
  const int v = std::atoi(env);
  return std::clamp(v, 1, 64);
}

}  // namespace

std::vector<std::vector<float>> collect_scores(const std::vector<Sample>& samples,
                                               const ModelParams& params, const McarConfig& cfg,
                                               std::uint64_t seed) {
  std::vector<std::vector<float>> scores(samples.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      Rng rng(mix64(seed, i));
      scores[i] = forward_two_stream(samples[i].image, params, cfg, rng).outputs.y_fused;
    }
  };
  const int threads = std::min<std::size_t>(eval_threads(), samples.size());
  if (threads <= 1) {
    work(0, samples.size());
    return scores;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (samples.size() + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const std::size_t begin = t * chunk;
    const std::size_t end = std::min(samples.size(), begin + chunk);
    if (begin < end) pool.emplace_back(work, begin, end);
  }
  for (auto& th : pool) th.join();
  return scores;
}

StageTiming benchmark_stages(const std::vector<Sample>& samples, const ModelParams& params,
                             McarConfig cfg, int top_n, int repeat) {
  using clock = std::chrono::steady_clock;
  cfg.top_n = top_n;
  StageTiming t;
  t.top_n = top_n;
  if (samples.empty() || repeat < 1) return t;

  double global_s = 0.0, gtol_s = 0.0, local_s = 0.0, total_s = 0.0;
  const int input_size = params.config.input_size;
  for (int r = 0; r < repeat; ++r) {
    for (std::size_t i = 0; i < samples.size(); ++i) {
      Rng rng(mix64(0xbe9c5ull, i));
      const Tensor& image = samples[i].image;
      const auto start = clock::now();

      ForwardTrace trace;
      ClassifyResult global = forward_and_classify(image, params, trace);
      const auto t1 = clock::now();

      const auto regions = localize(image.dim(0), image.dim(1), trace.activation, params,
                                    global.scores, cfg, rng);
      std::vector<Tensor> local_inputs;
      local_inputs.reserve(regions.size());
      for (const Region& reg : regions) {
        local_inputs.push_back(
            bilinear_resize(crop(image, reg.y_lo, reg.y_hi, reg.x_lo, reg.x_hi),
                            input_size, input_size));
      }
      const auto t2 = clock::now();

      std::vector<std::vector<float>> region_scores;
      region_scores.reserve(local_inputs.size());
      for (const Tensor& in : local_inputs) {
        region_scores.push_back(classify(backbone_forward(in, params), params).scores);
      }
      auto y_l = aggregate_local(region_scores, params.num_classes());
      for (std::size_t c = 0; c < y_l.size(); ++c) y_l[c] = std::max(y_l[c], global.scores[c]);
      const auto t3 = clock::now();

      global_s += std::chrono::duration<double>(t1 - start).count();
      gtol_s += std::chrono::duration<double>(t2 - t1).count();
      local_s += std::chrono::duration<double>(t3 - t2).count();
      total_s += std::chrono::duration<double>(t3 - start).count();
    }
  }
  const double denom = static_cast<double>(samples.size()) * repeat;
  t.global_ms = global_s / denom * 1e3;
  t.gtol_ms = gtol_s / denom * 1e3;
  t.local_ms = local_s / denom * 1e3;
  t.total_ms = total_s / denom * 1e3;
  return t;
}

}  // namespace mcar
