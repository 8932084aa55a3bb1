#include "mcar/backbone.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace mcar {

void BackboneConfig::validate() const {
  if (block_channels.empty()) throw std::invalid_argument("backbone needs at least one block");
  if (input_size % (1 << num_blocks()) != 0) {
    std::ostringstream os;
    os << "input_size " << input_size << " not divisible by 2^" << num_blocks();
    throw std::invalid_argument(os.str());
  }
  if (feature_size() < 4) {
    std::ostringstream os;
    os << "final feature map " << feature_size() << "x" << feature_size()
       << " is too small (need >= 4)";
    throw std::invalid_argument(os.str());
  }
  for (int c : block_channels)
    if (c < 1) throw std::invalid_argument("block channel counts must be >= 1");
}

ModelParams init_params(const BackboneConfig& config, int num_classes,
                        PoolingStrategy pooling, Rng& rng) {
  config.validate();
  if (num_classes < 1) throw std::invalid_argument("num_classes must be >= 1");

  ModelParams p;
  p.config = config;
  p.pooling = pooling;
  int c_in = 3;
  for (int c_out : config.block_channels) {
    ConvLayer layer;
    layer.kernel = Tensor({c_out, c_in, 3, 3});
    const float stddev = std::sqrt(2.0f / static_cast<float>(c_in * 9));
    for (auto& v : layer.kernel.flat()) v = static_cast<float>(rng.normal()) * stddev;
    layer.bias.assign(static_cast<std::size_t>(c_out), 0.0f);
    p.conv.push_back(std::move(layer));
    c_in = c_out;
  }
  const int d = config.feature_channels();
  p.classifier_w = Tensor({d, num_classes});
  const float w_std = std::sqrt(1.0f / static_cast<float>(d));
  for (auto& v : p.classifier_w.flat()) v = static_cast<float>(rng.normal()) * w_std;
  p.classifier_b.assign(static_cast<std::size_t>(num_classes), 0.0f);
  return p;
}

GradientSet GradientSet::zeros_like(const ModelParams& params) {
  GradientSet g;
  for (const auto& layer : params.conv) {
    ConvLayer gl;
    gl.kernel = Tensor(layer.kernel.shape());
    gl.bias.assign(layer.bias.size(), 0.0f);
    g.conv.push_back(std::move(gl));
  }
  g.classifier_w = Tensor(params.classifier_w.shape());
  g.classifier_b.assign(params.classifier_b.size(), 0.0f);
  return g;
}

void GradientSet::zero() {
  for (auto& layer : conv) {
    std::fill(layer.kernel.flat().begin(), layer.kernel.flat().end(), 0.0f);
    std::fill(layer.bias.begin(), layer.bias.end(), 0.0f);
  }
  std::fill(classifier_w.flat().begin(), classifier_w.flat().end(), 0.0f);
  std::fill(classifier_b.begin(), classifier_b.end(), 0.0f);
}

void GradientSet::scale(float s) {
  for (auto& layer : conv) {
    for (auto& v : layer.kernel.flat()) v *= s;
    for (auto& v : layer.bias) v *= s;
  }
  for (auto& v : classifier_w.flat()) v *= s;
  for (auto& v : classifier_b) v *= s;
}

Tensor backbone_forward(const Tensor& image, const ModelParams& params, ForwardTrace* trace) {
  if (image.rank() != 3 || image.dim(2) != 3) {
    throw std::invalid_argument("backbone_forward expects an [h,w,3] image, got " +
                                image.shape_str());
  }
  if (image.dim(0) != params.config.input_size || image.dim(1) != params.config.input_size) {
    std::ostringstream os;
    os << "image size " << image.shape_str() << " does not match configured input size "
       << params.config.input_size;
    throw std::invalid_argument(os.str());
  }

  Tensor x = image;
  for (std::size_t b = 0; b < params.conv.size(); ++b) {
    if (trace) trace->conv_in.push_back(x);
    Tensor pre = conv2d(x, params.conv[b].kernel, params.conv[b].bias, 1, 1);
    Tensor post = relu(pre);
    std::vector<int> src;
    Tensor pooled = maxpool2x2(post, trace ? &src : nullptr);
    if (trace) {
      trace->conv_pre.push_back(std::move(pre));
      trace->relu_out.push_back(std::move(post));
      trace->pool_src.push_back(std::move(src));
    }
    x = std::move(pooled);
  }
  if (trace) trace->activation = x;
  return x;
}

ClassifyResult classify(const Tensor& activation, const ModelParams& params,
                        ForwardTrace* trace) {
  const int d = params.config.feature_channels();
  if (activation.rank() != 3 || activation.dim(2) != d) {
    std::ostringstream os;
    os << "activation " << activation.shape_str() << " does not match classifier input ("
       << d << " channels)";
    throw std::invalid_argument(os.str());
  }
  const int num_classes = params.num_classes();

  std::vector<int> argmax;
  std::vector<float> f = spatial_pool(activation, params.pooling, &argmax);

  ClassifyResult r;
  r.logits.assign(static_cast<std::size_t>(num_classes), 0.0f);
  for (int c = 0; c < num_classes; ++c) {
    float acc = params.classifier_b[c];
    for (int k = 0; k < d; ++k) acc += params.classifier_w.at(k, c) * f[k];
    r.logits[c] = acc;
  }
  r.scores.resize(r.logits.size());
  for (std::size_t i = 0; i < r.logits.size(); ++i) r.scores[i] = sigmoid(r.logits[i]);

  if (trace) {
    trace->pooled = std::move(f);
    trace->gmp_argmax = std::move(argmax);
    trace->logits = r.logits;
    trace->scores = r.scores;
  }
  return r;
}

ClassifyResult forward_and_classify(const Tensor& image, const ModelParams& params,
                                    ForwardTrace& trace) {
  trace = ForwardTrace{};
  backbone_forward(image, params, &trace);
  return classify(trace.activation, params, &trace);
}

namespace {

/// Gradients of a zero-padded convolution. g_out is d(loss)/d(output);
/// dkernel/dbias are accumulated, dinput (optional) is overwritten.
void conv2d_backward(const Tensor& input, const Tensor& kernel, const Tensor& g_out,
                     int stride, int padding, Tensor& dkernel, std::vector<float>& dbias,
                     Tensor* dinput) {
  const int h = input.dim(0), w = input.dim(1), c_in = input.dim(2);
  const int c_out = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  const int ph = h + 2 * padding, pw = w + 2 * padding;
  const int h_out = g_out.dim(0), w_out = g_out.dim(1);

  Tensor padded({ph, pw, c_in}, 0.0f);
  for (int y = 0; y < h; ++y) {
    const float* src = input.data() + static_cast<std::size_t>(y) * w * c_in;
    float* dst = padded.data() + (static_cast<std::size_t>(y + padding) * pw + padding) * c_in;
    std::copy(src, src + static_cast<std::size_t>(w) * c_in, dst);
  }

  // Kernel gradient, accumulated in the repacked [kh][kw][c_in][c_out] order.
  std::vector<float> dkr(static_cast<std::size_t>(kh) * kw * c_in * c_out, 0.0f);
  std::vector<double> dbias_acc(static_cast<std::size_t>(c_out), 0.0);
  for (int oy = 0; oy < h_out; ++oy) {
    for (int ox = 0; ox < w_out; ++ox) {
      const float* g = g_out.data() + (static_cast<std::size_t>(oy) * w_out + ox) * c_out;
      for (int co = 0; co < c_out; ++co) dbias_acc[co] += g[co];
      for (int ky = 0; ky < kh; ++ky) {
        const float* in_row =
            padded.data() + (static_cast<std::size_t>(oy * stride + ky) * pw + ox * stride) * c_in;
        float* dk_row = dkr.data() + static_cast<std::size_t>(ky) * kw * c_in * c_out;
        for (int kx = 0; kx < kw; ++kx) {
          for (int ci = 0; ci < c_in; ++ci) {
            const float v = in_row[kx * c_in + ci];
            float* dkp = dk_row + (static_cast<std::size_t>(kx) * c_in + ci) * c_out;
            for (int co = 0; co < c_out; ++co) dkp[co] += v * g[co];
          }
        }
      }
    }
  }
  for (int co = 0; co < c_out; ++co) {
    dbias[co] += static_cast<float>(dbias_acc[co]);
    for (int ci = 0; ci < c_in; ++ci)
      for (int ky = 0; ky < kh; ++ky)
        for (int kx = 0; kx < kw; ++kx)
          dkernel.at4(co, ci, ky, kx) +=
              dkr[((static_cast<std::size_t>(ky) * kw + kx) * c_in + ci) * c_out + co];
  }

  if (!dinput) return;
  // Repack kernel for contiguous dot products over c_out.
  std::vector<float> kr(static_cast<std::size_t>(kh) * kw * c_in * c_out);
  for (int co = 0; co < c_out; ++co)
    for (int ci = 0; ci < c_in; ++ci)
      for (int ky = 0; ky < kh; ++ky)
        for (int kx = 0; kx < kw; ++kx)
          kr[((static_cast<std::size_t>(ky) * kw + kx) * c_in + ci) * c_out + co] =
              kernel.at4(co, ci, ky, kx);

  Tensor dpad({ph, pw, c_in}, 0.0f);
  for (int oy = 0; oy < h_out; ++oy) {
    for (int ox = 0; ox < w_out; ++ox) {
      const float* g = g_out.data() + (static_cast<std::size_t>(oy) * w_out + ox) * c_out;
      for (int ky = 0; ky < kh; ++ky) {
        float* dp_row =
            dpad.data() + (static_cast<std::size_t>(oy * stride + ky) * pw + ox * stride) * c_in;
        const float* k_row = kr.data() + static_cast<std::size_t>(ky) * kw * c_in * c_out;
        for (int kx = 0; kx < kw; ++kx) {
          for (int ci = 0; ci < c_in; ++ci) {
            const float* kp = k_row + (static_cast<std::size_t>(kx) * c_in + ci) * c_out;
            float acc = 0.0f;
            for (int co = 0; co < c_out; ++co) acc += kp[co] * g[co];
            dp_row[kx * c_in + ci] += acc;
          }
        }
      }
    }
  }
  *dinput = Tensor({h, w, c_in});
  for (int y = 0; y < h; ++y) {
    const float* src = dpad.data() + (static_cast<std::size_t>(y + padding) * pw + padding) * c_in;
    std::copy(src, src + static_cast<std::size_t>(w) * c_in,
              dinput->data() + static_cast<std::size_t>(y) * w * c_in);
  }
}

}  // namespace

void backward(const ModelParams& params, const ForwardTrace& trace,
              const std::vector<float>& dlogits, GradientSet& grads) {
  const std::size_t blocks = params.conv.size();
  if (trace.conv_in.size() != blocks || trace.conv_pre.size() != blocks ||
      trace.pool_src.size() != blocks || !trace.has_classify() ||
      trace.pooled.size() != static_cast<std::size_t>(params.config.feature_channels())) {
    throw std::logic_error("backward: forward trace is missing or stale");
  }
  if (dlogits.size() != static_cast<std::size_t>(params.num_classes())) {
    throw std::invalid_argument("backward: dlogits length must equal the class count");
  }

  const int d = params.config.feature_channels();
  const int num_classes = params.num_classes();

  // Classifier head.
  std::vector<float> df(static_cast<std::size_t>(d), 0.0f);
  for (int k = 0; k < d; ++k) {
    float acc = 0.0f;
    for (int c = 0; c < num_classes; ++c) {
      grads.classifier_w.at(k, c) += trace.pooled[k] * dlogits[c];
      acc += params.classifier_w.at(k, c) * dlogits[c];
    }
    df[k] = acc;
  }
  for (int c = 0; c < num_classes; ++c) grads.classifier_b[c] += dlogits[c];

  // Through the global pooling into the activation map.
  const Tensor& a = trace.activation;
  const int plane = a.dim(0) * a.dim(1);
  Tensor da(a.shape(), 0.0f);
  float avg_w = 0.0f, max_w = 0.0f;
  switch (params.pooling.kind) {
    case PoolKind::GAP: avg_w = 1.0f; break;
    case PoolKind::GMP: max_w = 1.0f; break;
    case PoolKind::GWP:
      avg_w = params.pooling.lambda;
      max_w = 1.0f - params.pooling.lambda;
      break;
  }
  if (avg_w != 0.0f) {
    const float inv = avg_w / static_cast<float>(plane);
    for (int p = 0; p < plane; ++p)
      for (int ch = 0; ch < d; ++ch)
        da[static_cast<std::size_t>(p) * d + ch] += inv * df[ch];
  }
  if (max_w != 0.0f) {
    for (int ch = 0; ch < d; ++ch)
      da[static_cast<std::size_t>(trace.gmp_argmax[ch]) * d + ch] += max_w * df[ch];
  }

  // Blocks in reverse: maxpool -> ReLU -> conv.
  Tensor dout = std::move(da);
  for (int b = static_cast<int>(blocks) - 1; b >= 0; --b) {
    const Tensor& pre = trace.conv_pre[b];
    Tensor dpost(pre.shape(), 0.0f);
    const auto& src = trace.pool_src[b];
    for (std::size_t i = 0; i < src.size(); ++i) dpost[src[i]] += dout[i];
    for (std::size_t i = 0; i < dpost.size(); ++i)
      if (pre[i] <= 0.0f) dpost[i] = 0.0f;

    Tensor dinput;
    conv2d_backward(trace.conv_in[b], params.conv[b].kernel, dpost, 1, 1,
                    grads.conv[b].kernel, grads.conv[b].bias, b > 0 ? &dinput : nullptr);
    if (b > 0) dout = std::move(dinput);
  }
}

namespace {

void sgd_apply(float* param, const float* grad, float* vel, std::size_t n,
               const SgdConfig& cfg) {
  for (std::size_t i = 0; i < n; ++i) {
    vel[i] = cfg.momentum * vel[i] + grad[i] + cfg.weight_decay * param[i];
    param[i] -= cfg.lr * vel[i];
  }
}

}  // namespace

void sgd_step(ModelParams& params, const GradientSet& grads, const SgdConfig& cfg,
              GradientSet& velocity) {
  if (cfg.lr <= 0.0f) throw std::invalid_argument("sgd_step: lr must be > 0");
  for (std::size_t b = 0; b < params.conv.size(); ++b) {
    sgd_apply(params.conv[b].kernel.data(), grads.conv[b].kernel.data(),
              velocity.conv[b].kernel.data(), params.conv[b].kernel.size(), cfg);
    sgd_apply(params.conv[b].bias.data(), grads.conv[b].bias.data(),
              velocity.conv[b].bias.data(), params.conv[b].bias.size(), cfg);
  }
  sgd_apply(params.classifier_w.data(), grads.classifier_w.data(),
            velocity.classifier_w.data(), params.classifier_w.size(), cfg);
  sgd_apply(params.classifier_b.data(), grads.classifier_b.data(),
            velocity.classifier_b.data(), params.classifier_b.size(), cfg);
}

}  // namespace mcar
