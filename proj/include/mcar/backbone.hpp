#pragma once

#include <string>
#include <vector>

#include "mcar/rng.hpp"
#include "mcar/tensor.hpp"

namespace mcar {

/// Backbone layout: per block, 3x3 conv (pad 1, stride 1) -> ReLU ->
/// 2x2 max-pool stride 2. input_size must be divisible by 2^blocks and the
/// final feature map must be at least 4x4.
struct BackboneConfig {
  int input_size = 64;
  std::vector<int> block_channels = {12, 24};

  int num_blocks() const { return static_cast<int>(block_channels.size()); }
  int feature_size() const { return input_size >> num_blocks(); }
  int feature_channels() const { return block_channels.back(); }
  void validate() const;
};

struct ConvLayer {
  Tensor kernel;            // [c_out, c_in, 3, 3]
  std::vector<float> bias;  // [c_out]
};

/// All trainable state. The global and local streams operate on one shared
/// instance; the classifier (W, b) doubles as the 1x1 projection that
/// produces class attention maps.
struct ModelParams {
  BackboneConfig config;
  std::vector<ConvLayer> conv;
  Tensor classifier_w;            // [d', C]
  std::vector<float> classifier_b;  // [C]
  PoolingStrategy pooling;

  int num_classes() const { return static_cast<int>(classifier_b.size()); }
};

ModelParams init_params(const BackboneConfig& config, int num_classes,
                        PoolingStrategy pooling, Rng& rng);

/// Gradients (or SGD velocity), shape-congruent with ModelParams.
struct GradientSet {
  std::vector<ConvLayer> conv;
  Tensor classifier_w;
  std::vector<float> classifier_b;

  static GradientSet zeros_like(const ModelParams& params);
  void zero();
  void scale(float s);
};

/// Cached intermediates of one stream pass, consumed by backward().
struct ForwardTrace {
  std::vector<Tensor> conv_in;    // input to each conv
  std::vector<Tensor> conv_pre;   // conv output before ReLU
  std::vector<Tensor> relu_out;   // after ReLU, input to pooling
  std::vector<std::vector<int>> pool_src;
  Tensor activation;              // final A [h',w',d']
  std::vector<float> pooled;      // f
  std::vector<int> gmp_argmax;    // per-channel argmax used by GMP/GWP
  std::vector<float> logits;
  std::vector<float> scores;

  bool has_classify() const { return !logits.empty(); }
};

/// A = F(I; theta). Image must be [input_size, input_size, 3].
Tensor backbone_forward(const Tensor& image, const ModelParams& params,
                        ForwardTrace* trace = nullptr);

struct ClassifyResult {
  std::vector<float> logits;
  std::vector<float> scores;
};

/// f = pool(A); x = W^T f + b; scores = sigmoid(x).
ClassifyResult classify(const Tensor& activation, const ModelParams& params,
                        ForwardTrace* trace = nullptr);

/// One full stream pass (forward + classify) caching everything for backward.
ClassifyResult forward_and_classify(const Tensor& image, const ModelParams& params,
                                    ForwardTrace& trace);

/// Reverse-mode gradients of a scalar loss given d(loss)/d(logits),
/// accumulated into `grads`. The trace must come from forward_and_classify
/// with the same params.
void backward(const ModelParams& params, const ForwardTrace& trace,
              const std::vector<float>& dlogits, GradientSet& grads);

struct SgdConfig {
  float lr = 0.1f;
  float momentum = 0.9f;
  float weight_decay = 1e-4f;
};

/// v <- momentum*v + grad + weight_decay*param; param <- param - lr*v
void sgd_step(ModelParams& params, const GradientSet& grads, const SgdConfig& cfg,
              GradientSet& velocity);

void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

/// Human-readable "name shape" listing, used for mismatch diagnostics.
std::vector<std::string> manifest_lines(const ModelParams& params);

}  // namespace mcar
