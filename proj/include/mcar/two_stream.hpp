#pragma once

#include <cstdint>
#include <vector>

#include "mcar/backbone.hpp"
#include "mcar/dataset.hpp"
#include "mcar/region.hpp"

namespace mcar {

/// Scores produced by one two-stream pass: y_l is the category-wise max
/// over region scores, y_fused the category-wise max of y_g and y_l.
struct StreamOutputs {
  std::vector<float> y_g;
  std::vector<std::vector<float>> region_scores;
  std::vector<float> y_l;
  std::vector<float> y_fused;
};

enum class LossMode { Pair, Single };

LossMode loss_mode_from_string(const std::string& s);
std::string to_string(LossMode m);

struct TrainConfig {
  int epochs = 10;
  int batch_size = 8;
  float lr = 0.05f;
  float momentum = 0.9f;
  float weight_decay = 1e-4f;
  /// Epochs (1-based) after which lr is divided by 10; empty selects the
  /// default pattern at 1/2 and 5/6 of the schedule.
  std::vector<int> lr_drop_epochs;
  LossMode loss_mode = LossMode::Pair;
  float w_global = 1.0f;
  float w_local = 1.0f;
  McarConfig mcar;
  PoolingStrategy pooling{PoolKind::GWP, 0.5f};
  BackboneConfig backbone;
  std::uint64_t seed = 1;
  bool augment_hflip = true;
};

std::vector<int> default_lr_drops(int epochs);

/// Binary cross entropy summed over classes, probabilities clamped to
/// [1e-7, 1-1e-7] before the logs. Computed in double.
double bce_loss(const std::vector<float>& pred, const LabelVector& target);

/// Category-wise max over region score vectors; empty input gives zeros.
std::vector<float> aggregate_local(const std::vector<std::vector<float>>& region_scores,
                                   int num_classes);

struct TwoStreamResult {
  StreamOutputs outputs;
  std::vector<Region> regions;
};

/// Global pass, region localization (detached), one local pass per region
/// through the same parameters, aggregation, and fusion.
TwoStreamResult forward_two_stream(const Tensor& image, const ModelParams& params,
                                   const McarConfig& cfg, Rng& rng);

/// Same pipeline with a caller-supplied region list (no localization);
/// used to evaluate the loss at fixed regions.
StreamOutputs forward_with_regions(const Tensor& image, const ModelParams& params,
                                   const std::vector<Region>& regions);

/// Pair: w_g*bce(y_g) + w_l*bce(y_l) (local part absent without regions);
/// Single: bce(y_fused).
double total_loss(const StreamOutputs& outputs, const LabelVector& target, LossMode mode,
                  float w_global = 1.0f, float w_local = 1.0f);

struct LossBreakdown {
  double total = 0.0;
  double global_part = 0.0;
  double local_part = 0.0;
};

/// Loss at frozen regions (finite-difference oracle entry point).
double loss_with_frozen_regions(const Tensor& image, const LabelVector& target,
                                const ModelParams& params, const std::vector<Region>& regions,
                                LossMode mode, float w_global = 1.0f, float w_local = 1.0f);

/// Loss plus analytic parameter gradients at frozen regions, accumulated
/// into `grads`. Region boxes are constants: gradients flow through the
/// global head and the local passes only.
LossBreakdown loss_and_gradients(const Tensor& image, const LabelVector& target,
                                 const ModelParams& params, const std::vector<Region>& regions,
                                 LossMode mode, float w_global, float w_local,
                                 GradientSet& grads);

struct EpochStats {
  int epoch = 0;
  float lr = 0.0f;
  double loss_global = 0.0;
  double loss_local = 0.0;
  double val_map = 0.0;
  double wall_seconds = 0.0;
};

/// epoch lr loss_global loss_local val_map wall_seconds
std::string history_line(const EpochStats& s);

struct TrainResult {
  ModelParams params;
  std::vector<EpochStats> history;
};

/// Joint SGD training of both streams on `train`, reporting validation mAP
/// per epoch. Deterministic for a fixed config.
TrainResult train(const Dataset& train_split, const Dataset& val_split, const TrainConfig& cfg);

/// Inference on one image; RandomN selection draws from `rng`.
TwoStreamResult predict(const Tensor& image, const ModelParams& params, const McarConfig& cfg,
                        Rng& rng);

/// Fused score vectors for a whole split. Honors MCAR_THREADS (default 1);
/// per-image RNG streams keep RandomN selection deterministic regardless of
/// thread count.
std::vector<std::vector<float>> collect_scores(const std::vector<Sample>& samples,
                                               const ModelParams& params, const McarConfig& cfg,
                                               std::uint64_t seed);

struct StageTiming {
  int top_n = 0;
  double global_ms = 0.0;
  double gtol_ms = 0.0;
  double local_ms = 0.0;
  double total_ms = 0.0;
};

/// Mean per-image wall time of the global pass, region generation, and the
/// local passes over `samples`, repeated `repeat` times.
StageTiming benchmark_stages(const std::vector<Sample>& samples, const ModelParams& params,
                             McarConfig cfg, int top_n, int repeat);

}  // namespace mcar
