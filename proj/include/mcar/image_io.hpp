#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcar/region.hpp"
#include "mcar/tensor.hpp"

namespace mcar {

struct PpmError : std::runtime_error {
  enum class Kind { Open, Header, Truncated };
  PpmError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
  Kind kind;
};

/// Binary PPM (P6, maxval 255). Values quantize as round(v*255) on write
/// and come back as byte/255, so a quantized tensor round-trips exactly.
/// Reads throw PpmError with the failure kind.
void write_ppm(const std::string& path, const Tensor& image);
Tensor read_ppm(const std::string& path);

/// Quantize to the 8-bit grid in place (k/255 values).
void quantize_8bit(Tensor& image);

using Rgb = std::array<float, 3>;

/// Fixed per-class overlay palette.
Rgb overlay_color(int class_id);

/// Draw a 1-px box outline (inclusive bounds) on an [h,w,3] image.
void draw_box(Tensor& image, int x_lo, int y_lo, int x_hi, int y_hi, const Rgb& color);

/// Region annotation for overlay output: box plus "name: g/f" label.
struct OverlayEntry {
  Region region;
  std::string label;
};

/// Vector overlay: one rect + caption per region on a canvas-sized viewBox.
std::string svg_overlay(int width, int height, const std::vector<OverlayEntry>& entries);

}  // namespace mcar
