#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mcar/backbone.hpp"
#include "mcar/rng.hpp"
#include "mcar/tensor.hpp"

namespace mcar {

/// Per-class attention maps at feature resolution, produced by applying the
/// shared 1x1 classifier to the backbone activation map.
struct ClassAttentionStack {
  Tensor maps;   // [h',w',C]
  int source_h = 0;  // input-image size the maps get upsampled to
  int source_w = 0;
};

/// Per-axis maxima of an attention map.
struct Marginal {
  enum class Axis { X, Y };
  std::vector<float> values;
  Axis axis = Axis::X;
};

/// Class-tagged box in input-pixel coordinates, bounds inclusive.
struct Region {
  int class_id = 0;
  int x_lo = 0, x_hi = 0;
  int y_lo = 0, y_hi = 0;
  float global_score = 0.0f;

  int width() const { return x_hi - x_lo + 1; }
  int height() const { return y_hi - y_lo + 1; }
};

enum class SelectionMode { TopN, BottomN, RandomN };

SelectionMode selection_from_string(const std::string& s);
std::string to_string(SelectionMode m);

struct McarConfig {
  int top_n = 4;
  float tau = 0.5f;
  SelectionMode selection = SelectionMode::TopN;
  int min_region_px = 8;
};

/// min_region_px of 8 at a 64-px input, scaled proportionally.
int default_min_region_px(int input_size);

/// F[i,j,c] = sum_k W[k,c]*A[i,j,k] + b[c] (the shared classifier applied
/// per spatial location).
ClassAttentionStack class_attention_maps(const Tensor& activation, const ModelParams& params);

/// Class indices to localize. TopN: N largest scores in descending order;
/// BottomN: N smallest, ascending; RandomN: uniform without replacement.
/// Score ties break toward the lower class index; N is clamped to C.
std::vector<int> select_maps(const std::vector<float>& global_scores, const McarConfig& cfg,
                             Rng& rng);

/// Sigmoid at feature resolution, then bilinear upsampling to the source
/// size, in that order. Returns a [h,w] map.
Tensor normalize_and_upsample(const ClassAttentionStack& stack, int class_id);

/// px[x] = max_y map[y,x]; py[y] = max_x map[y,x].
std::pair<Marginal, Marginal> marginals(const Tensor& map);

/// (v-min)/(max-min); a constant marginal maps to all ones.
Marginal minmax_normalize(const Marginal& m);

/// Maximal runs of {i : p[i] >= tau}; with several runs the one containing
/// the global maximum wins, among several maximum runs the widest, among
/// equally wide ones the leftmost. Bounds are inclusive.
std::pair<int, int> solve_interval(const Marginal& p, float tau);

/// Full generation -> selection -> localization chain: one region per
/// selected class, in selection order, each expanded symmetrically to
/// min_region_px and clamped to the image.
std::vector<Region> localize(int image_h, int image_w, const Tensor& activation,
                             const ModelParams& params, const std::vector<float>& global_scores,
                             const McarConfig& cfg, Rng& rng);

/// One line per region: class_id x_lo y_lo x_hi y_hi global_score.
std::string region_record(const Region& r);

}  // namespace mcar
