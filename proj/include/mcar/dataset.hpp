#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mcar/tensor.hpp"

namespace mcar {

/// Binary indicator per class.
using LabelVector = std::vector<std::uint8_t>;

/// Generator-known ground truth, consumed only by localization tests and
/// never by training.
struct GtBox {
  int class_id = 0;
  int x_lo = 0, y_lo = 0, x_hi = 0, y_hi = 0;
};

struct Sample {
  Tensor image;  // [h,w,3], values in [0,1]
  LabelVector labels;
  std::vector<GtBox> gt_boxes;
};

struct Dataset {
  int canvas = 0;
  std::vector<std::string> class_names;
  std::vector<Sample> samples;

  int num_classes() const { return static_cast<int>(class_names.size()); }
};

}  // namespace mcar
