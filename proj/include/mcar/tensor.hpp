#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace mcar {

/// Dense row-major float32 tensor. Shapes follow [h,w] / [h,w,c] /
/// [out_c,in_c,kh,kw] conventions depending on the operation.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, float fill = 0.0f);
  Tensor(std::vector<int> shape, std::vector<float> data);

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::size_t size() const { return data_.size(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::vector<float>& flat() { return data_; }
  const std::vector<float>& flat() const { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  // [h,w]
  float& at(int y, int x) { return data_[static_cast<std::size_t>(y) * shape_[1] + x]; }
  float at(int y, int x) const { return data_[static_cast<std::size_t>(y) * shape_[1] + x]; }
  // [h,w,c]
  float& at(int y, int x, int c) {
    return data_[(static_cast<std::size_t>(y) * shape_[1] + x) * shape_[2] + c];
  }
  float at(int y, int x, int c) const {
    return data_[(static_cast<std::size_t>(y) * shape_[1] + x) * shape_[2] + c];
  }
  // [a,b,c,d]
  float& at4(int a, int b, int c, int d) {
    return data_[((static_cast<std::size_t>(a) * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
  }
  float at4(int a, int b, int c, int d) const {
    return data_[((static_cast<std::size_t>(a) * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  std::string shape_str() const;

 private:
  std::vector<int> shape_;
  std::vector<float> data_;
};

enum class PoolKind { GAP, GMP, GWP };

/// Global pooling choice; lambda weights GAP against GMP and is only
/// meaningful for GWP: f = lambda*f_avg + (1-lambda)*f_max.
struct PoolingStrategy {
  PoolKind kind = PoolKind::GAP;
  float lambda = 0.5f;
};

PoolKind pool_kind_from_string(const std::string& s);
std::string to_string(PoolKind k);

/// Zero-padded 2D convolution. input [h,w,c_in], kernel [c_out,c_in,kh,kw],
/// bias length c_out. Output [h_out,w_out,c_out] with
/// h_out = (h + 2*padding - kh)/stride + 1.
Tensor conv2d(const Tensor& input, const Tensor& kernel,
              const std::vector<float>& bias, int stride, int padding);

/// Bilinear resize with half-pixel centers and border clamping; exact
/// pass-through when the size is unchanged. Works on [h,w] and [h,w,c].
Tensor bilinear_resize(const Tensor& input, int out_h, int out_w);

/// Elementwise logistic 1/(1+exp(-x)).
Tensor sigmoid(const Tensor& input);
float sigmoid(float x);

/// Pool a [h',w',d'] activation map to a d'-vector. When gmp_argmax is
/// given it receives the flat spatial index of the per-channel maximum
/// (first occurrence in row-major order).
std::vector<float> spatial_pool(const Tensor& activation, PoolingStrategy strategy,
                                std::vector<int>* gmp_argmax = nullptr);

Tensor relu(const Tensor& input);

/// 2x2 max pooling with stride 2; h and w must be even. `src` receives the
/// flat index into the input of each pooled maximum (first occurrence wins).
Tensor maxpool2x2(const Tensor& input, std::vector<int>* src = nullptr);

/// Inclusive-bound crop of a [h,w,c] tensor.
Tensor crop(const Tensor& image, int y_lo, int y_hi, int x_lo, int x_hi);

Tensor hflip(const Tensor& image);

}  // namespace mcar
