#include "mcar/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace mcar {

namespace {

std::size_t checked_size(const std::vector<int>& shape) {
  if (shape.empty()) throw std::invalid_argument("tensor shape must be non-empty");
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 1) {
      std::ostringstream os;
      os << "tensor dimensions must be >= 1, got " << d;
      throw std::invalid_argument(os.str());
    }
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<int> shape, float fill)
    : shape_(std::move(shape)), data_(checked_size(shape_), fill) {}

Tensor::Tensor(std::vector<int> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (checked_size(shape_) != data_.size()) {
    std::ostringstream os;
    os << "tensor data length " << data_.size() << " does not match shape " << shape_str();
    throw std::invalid_argument(os.str());
  }
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
  os << "]";
  return os.str();
}

PoolKind pool_kind_from_string(const std::string& s) {
  if (s == "gap") return PoolKind::GAP;
  if (s == "gmp") return PoolKind::GMP;
  if (s == "gwp") return PoolKind::GWP;
  throw std::invalid_argument("unknown pooling strategy: " + s);
}

std::string to_string(PoolKind k) {
  switch (k) {
    case PoolKind::GAP: return "gap";
    case PoolKind::GMP: return "gmp";
    default: return "gwp";
  }
}

Tensor conv2d(const Tensor& input, const Tensor& kernel,
              const std::vector<float>& bias, int stride, int padding) {
  if (input.rank() != 3 || kernel.rank() != 4) {
    throw std::invalid_argument("conv2d expects input [h,w,c_in] and kernel [c_out,c_in,kh,kw], got " +
                                input.shape_str() + " and " + kernel.shape_str());
  }
  const int h = input.dim(0), w = input.dim(1), c_in = input.dim(2);
  const int c_out = kernel.dim(0), kc = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kc != c_in) {
    std::ostringstream os;
    os << "conv2d channel mismatch: input has " << c_in << " channels, kernel expects " << kc
       << " (input " << input.shape_str() << ", kernel " << kernel.shape_str() << ")";
    throw std::invalid_argument(os.str());
  }
  if (static_cast<int>(bias.size()) != c_out) {
    throw std::invalid_argument("conv2d bias length does not match kernel c_out");
  }
  if (stride < 1) throw std::invalid_argument("conv2d stride must be >= 1");
  if (padding < 0) throw std::invalid_argument("conv2d padding must be >= 0");
  if (kh > h + 2 * padding || kw > w + 2 * padding) {
    throw std::invalid_argument("conv2d kernel larger than padded input");
  }

  const int ph = h + 2 * padding, pw = w + 2 * padding;
  const int h_out = (ph - kh) / stride + 1;
  const int w_out = (pw - kw) / stride + 1;

  // Zero-padded copy keeps the accumulation loops branch-free.
  Tensor padded({ph, pw, c_in}, 0.0f);
  for (int y = 0; y < h; ++y) {
    const float* src = input.data() + static_cast<std::size_t>(y) * w * c_in;
    float* dst = padded.data() +
                 (static_cast<std::size_t>(y + padding) * pw + padding) * c_in;
    std::copy(src, src + static_cast<std::size_t>(w) * c_in, dst);
  }

  // Repack kernel to [kh][kw][c_in][c_out] so the inner loop runs over the
  // contiguous c_out axis.
  std::vector<float> kr(static_cast<std::size_t>(kh) * kw * c_in * c_out);
  for (int co = 0; co < c_out; ++co)
    for (int ci = 0; ci < c_in; ++ci)
      for (int ky = 0; ky < kh; ++ky)
        for (int kx = 0; kx < kw; ++kx)
          kr[((static_cast<std::size_t>(ky) * kw + kx) * c_in + ci) * c_out + co] =
              kernel.at4(co, ci, ky, kx);

  Tensor out({h_out, w_out, c_out});
  std::vector<float> acc(static_cast<std::size_t>(c_out));
  for (int oy = 0; oy < h_out; ++oy) {
    for (int ox = 0; ox < w_out; ++ox) {
      for (int co = 0; co < c_out; ++co) acc[co] = bias[co];
      for (int ky = 0; ky < kh; ++ky) {
        const float* in_row =
            padded.data() + (static_cast<std::size_t>(oy * stride + ky) * pw + ox * stride) * c_in;
        const float* k_row = kr.data() + static_cast<std::size_t>(ky) * kw * c_in * c_out;
        for (int kx = 0; kx < kw; ++kx) {
          for (int ci = 0; ci < c_in; ++ci) {
            const float v = in_row[kx * c_in + ci];
            const float* kp = k_row + (static_cast<std::size_t>(kx) * c_in + ci) * c_out;
            for (int co = 0; co < c_out; ++co) acc[co] += v * kp[co];
          }
        }
      }
      float* op = out.data() + (static_cast<std::size_t>(oy) * w_out + ox) * c_out;
      std::copy(acc.begin(), acc.end(), op);
    }
  }
  return out;
}

Tensor bilinear_resize(const Tensor& input, int out_h, int out_w) {
  if (input.rank() != 2 && input.rank() != 3) {
    throw std::invalid_argument("bilinear_resize expects [h,w] or [h,w,c], got " + input.shape_str());
  }
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("bilinear_resize output size must be >= 1");
  const int h = input.dim(0), w = input.dim(1);
  const int c = input.rank() == 3 ? input.dim(2) : 1;
  if (out_h == h && out_w == w) return input;

  std::vector<int> out_shape = input.rank() == 3 ? std::vector<int>{out_h, out_w, c}
                                                 : std::vector<int>{out_h, out_w};
  Tensor out(std::move(out_shape));
  const float sy = static_cast<float>(h) / static_cast<float>(out_h);
  const float sx = static_cast<float>(w) / static_cast<float>(out_w);
  const float* in = input.data();
  float* op = out.data();

  for (int y = 0; y < out_h; ++y) {
    float fy = (static_cast<float>(y) + 0.5f) * sy - 0.5f;
    fy = std::clamp(fy, 0.0f, static_cast<float>(h - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, h - 1);
    const float ty = fy - static_cast<float>(y0);
    for (int x = 0; x < out_w; ++x) {
      float fx = (static_cast<float>(x) + 0.5f) * sx - 0.5f;
      fx = std::clamp(fx, 0.0f, static_cast<float>(w - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, w - 1);
      const float tx = fx - static_cast<float>(x0);
      const float* p00 = in + (static_cast<std::size_t>(y0) * w + x0) * c;
      const float* p01 = in + (static_cast<std::size_t>(y0) * w + x1) * c;
      const float* p10 = in + (static_cast<std::size_t>(y1) * w + x0) * c;
      const float* p11 = in + (static_cast<std::size_t>(y1) * w + x1) * c;
      for (int ch = 0; ch < c; ++ch) {
        const float top = p00[ch] + (p01[ch] - p00[ch]) * tx;
        const float bot = p10[ch] + (p11[ch] - p10[ch]) * tx;
        *op++ = top + (bot - top) * ty;
      }
    }
  }
  return out;
}

float sigmoid(float x) { return 1.0f / (1.0f + std::exp(-x)); }

Tensor sigmoid(const Tensor& input) {
  Tensor out = input;
  for (auto& v : out.flat()) v = sigmoid(v);
  return out;
}

std::vector<float> spatial_pool(const Tensor& activation, PoolingStrategy strategy,
                                std::vector<int>* gmp_argmax) {
  if (activation.rank() != 3) {
    throw std::invalid_argument("spatial_pool expects [h',w',d'], got " + activation.shape_str());
  }
  const int h = activation.dim(0), w = activation.dim(1), d = activation.dim(2);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const float* in = activation.data();

  std::vector<double> sum(static_cast<std::size_t>(d), 0.0);
  std::vector<float> mx(static_cast<std::size_t>(d), -std::numeric_limits<float>::infinity());
  std::vector<int> arg(static_cast<std::size_t>(d), 0);
  for (std::size_t p = 0; p < plane; ++p) {
    const float* px = in + p * d;
    for (int ch = 0; ch < d; ++ch) {
      sum[ch] += px[ch];
      if (px[ch] > mx[ch]) {
        mx[ch] = px[ch];
        arg[ch] = static_cast<int>(p);
      }
    }
  }
  if (gmp_argmax) *gmp_argmax = arg;

  std::vector<float> out(static_cast<std::size_t>(d));
  const float inv = 1.0f / static_cast<float>(plane);
  switch (strategy.kind) {
    case PoolKind::GAP:
      for (int ch = 0; ch < d; ++ch) out[ch] = static_cast<float>(sum[ch]) * inv;
      break;
    case PoolKind::GMP:
      for (int ch = 0; ch < d; ++ch) out[ch] = mx[ch];
      break;
    case PoolKind::GWP: {
      const float lam = strategy.lambda;
      // Endpoints collapse to the pure strategies bitwise.
      if (lam == 1.0f) {
        for (int ch = 0; ch < d; ++ch) out[ch] = static_cast<float>(sum[ch]) * inv;
      } else if (lam == 0.0f) {
        for (int ch = 0; ch < d; ++ch) out[ch] = mx[ch];
      } else {
        for (int ch = 0; ch < d; ++ch)
          out[ch] = lam * (static_cast<float>(sum[ch]) * inv) + (1.0f - lam) * mx[ch];
      }
      break;
    }
  }
  return out;
}

Tensor relu(const Tensor& input) {
  Tensor out = input;
  for (auto& v : out.flat()) v = v > 0.0f ? v : 0.0f;
  return out;
}

Tensor maxpool2x2(const Tensor& input, std::vector<int>* src) {
  if (input.rank() != 3) throw std::invalid_argument("maxpool2x2 expects [h,w,c]");
  const int h = input.dim(0), w = input.dim(1), c = input.dim(2);
  if (h % 2 != 0 || w % 2 != 0) throw std::invalid_argument("maxpool2x2 needs even h and w");
  const int oh = h / 2, ow = w / 2;
  Tensor out({oh, ow, c});
  if (src) src->assign(out.size(), 0);
  const float* in = input.data();
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      for (int ch = 0; ch < c; ++ch) {
        float best = -std::numeric_limits<float>::infinity();
        int best_idx = 0;
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const int iy = oy * 2 + dy, ix = ox * 2 + dx;
            const std::size_t idx = (static_cast<std::size_t>(iy) * w + ix) * c + ch;
            if (in[idx] > best) {
              best = in[idx];
              best_idx = static_cast<int>(idx);
            }
          }
        }
        const std::size_t oidx = (static_cast<std::size_t>(oy) * ow + ox) * c + ch;
        out[oidx] = best;
        if (src) (*src)[oidx] = best_idx;
      }
    }
  }
  return out;
}

Tensor crop(const Tensor& image, int y_lo, int y_hi, int x_lo, int x_hi) {
  if (image.rank() != 3) throw std::invalid_argument("crop expects [h,w,c]");
  const int h = image.dim(0), w = image.dim(1), c = image.dim(2);
  if (y_lo < 0 || x_lo < 0 || y_hi >= h || x_hi >= w || y_lo > y_hi || x_lo > x_hi) {
    throw std::invalid_argument("crop bounds out of range");
  }
  const int ch = y_hi - y_lo + 1, cw = x_hi - x_lo + 1;
  Tensor out({ch, cw, c});
  for (int y = 0; y < ch; ++y) {
    const float* src = image.data() + (static_cast<std::size_t>(y + y_lo) * w + x_lo) * c;
    std::copy(src, src + static_cast<std::size_t>(cw) * c,
              out.data() + static_cast<std::size_t>(y) * cw * c);
  }
  return out;
}

Tensor hflip(const Tensor& image) {
  if (image.rank() != 3) throw std::invalid_argument("hflip expects [h,w,c]");
  const int h = image.dim(0), w = image.dim(1), c = image.dim(2);
  Tensor out({h, w, c});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) out.at(y, x, ch) = image.at(y, w - 1 - x, ch);
  return out;
}

}  // namespace mcar
