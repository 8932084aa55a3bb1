#include "mcar/region.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace mcar {

SelectionMode selection_from_string(const std::string& s) {
  if (s == "top") return SelectionMode::TopN;
  if (s == "bottom") return SelectionMode::BottomN;
  if (s == "random") return SelectionMode::RandomN;
  throw std::invalid_argument("unknown selection mode: " + s);
}

std::string to_string(SelectionMode m) {
  switch (m) {
    case SelectionMode::TopN: return "top";
    case SelectionMode::BottomN: return "bottom";
    default: return "random";
  }
}

int default_min_region_px(int input_size) {
  return std::max(1, (input_size * 8 + 32) / 64);
}

ClassAttentionStack class_attention_maps(const Tensor& activation, const ModelParams& params) {
  const int d = params.classifier_w.dim(0);
  if (activation.rank() != 3 || activation.dim(2) != d) {
    throw std::invalid_argument("class_attention_maps: activation " + activation.shape_str() +
                                " does not match classifier with " + std::to_string(d) +
                                " input channels");
  }
  const int h = activation.dim(0), w = activation.dim(1);
  const int num_classes = params.num_classes();

  ClassAttentionStack stack;
  stack.maps = Tensor({h, w, num_classes});
  stack.source_h = params.config.input_size;
  stack.source_w = params.config.input_size;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < num_classes; ++c) {
        float acc = params.classifier_b[c];
        for (int k = 0; k < d; ++k) acc += params.classifier_w.at(k, c) * activation.at(y, x, k);
        stack.maps.at(y, x, c) = acc;
      }
    }
  }
  return stack;
}

std::vector<int> select_maps(const std::vector<float>& global_scores, const McarConfig& cfg,
                             Rng& rng) {
  const int c = static_cast<int>(global_scores.size());
  const int n = std::min(cfg.top_n, c);
  if (n <= 0) return {};

  if (cfg.selection == SelectionMode::RandomN) return rng.sample_without_replacement(c, n);

  std::vector<int> idx(static_cast<std::size_t>(c));
  std::iota(idx.begin(), idx.end(), 0);
  if (cfg.selection == SelectionMode::TopN) {
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
      return global_scores[a] > global_scores[b];
    });
  } else {
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
      return global_scores[a] < global_scores[b];
    });
  }
  idx.resize(static_cast<std::size_t>(n));
  return idx;
}

Tensor normalize_and_upsample(const ClassAttentionStack& stack, int class_id) {
  const int num_classes = stack.maps.dim(2);
  if (class_id < 0 || class_id >= num_classes) {
    throw std::invalid_argument("normalize_and_upsample: class_id out of range");
  }
  const int h = stack.maps.dim(0), w = stack.maps.dim(1);
  Tensor plane({h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) plane.at(y, x) = sigmoid(stack.maps.at(y, x, class_id));
  return bilinear_resize(plane, stack.source_h, stack.source_w);
}

std::pair<Marginal, Marginal> marginals(const Tensor& map) {
  if (map.rank() != 2) throw std::invalid_argument("marginals expects a [h,w] map");
  const int h = map.dim(0), w = map.dim(1);
  Marginal px, py;
  px.axis = Marginal::Axis::X;
  py.axis = Marginal::Axis::Y;
  px.values.assign(static_cast<std::size_t>(w), -std::numeric_limits<float>::infinity());
  py.values.assign(static_cast<std::size_t>(h), -std::numeric_limits<float>::infinity());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float v = map.at(y, x);
      if (v > px.values[x]) px.values[x] = v;
      if (v > py.values[y]) py.values[y] = v;
    }
  }
  return {px, py};
}

Marginal minmax_normalize(const Marginal& m) {
  Marginal out = m;
  const auto [mn_it, mx_it] = std::minmax_element(m.values.begin(), m.values.end());
  const float mn = *mn_it, mx = *mx_it;
  if (mx == mn) {
    std::fill(out.values.begin(), out.values.end(), 1.0f);
    return out;
  }
  const float range = mx - mn;
  for (auto& v : out.values) v = (v - mn) / range;
  return out;
}

std::pair<int, int> solve_interval(const Marginal& p, float tau) {
  const auto& v = p.values;
  if (v.empty()) throw std::invalid_argument("solve_interval: empty marginal");
  const int n = static_cast<int>(v.size());

  struct Run {
    int lo, hi;
  };
  std::vector<Run> runs;
  for (int i = 0; i < n; ++i) {
    if (v[i] >= tau) {
      if (!runs.empty() && runs.back().hi == i - 1) {
        runs.back().hi = i;
      } else {
        runs.push_back({i, i});
      }
    }
  }
  const float mx = *std::max_element(v.begin(), v.end());
  if (runs.empty()) {
    // Unreachable for normalized marginals (max = 1 >= tau); degrade to the
    // argmax point rather than failing.
    const int arg = static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
    return {arg, arg};
  }
  if (runs.size() == 1) return {runs[0].lo, runs[0].hi};

  const Run* best = nullptr;
  for (const auto& r : runs) {
    bool holds_max = false;
    for (int i = r.lo; i <= r.hi && !holds_max; ++i) holds_max = v[i] == mx;
    if (!holds_max) continue;
    if (!best || (r.hi - r.lo) > (best->hi - best->lo)) best = &r;  // widest; leftmost on ties
  }
  return {best->lo, best->hi};
}

namespace {

/// Widen [lo,hi] to at least min_len, centered, clamped to [0,size-1].
std::pair<int, int> expand_interval(int lo, int hi, int min_len, int size) {
  min_len = std::min(min_len, size);
  int len = hi - lo + 1;
  if (len < min_len) {
    const int extra = min_len - len;
    lo -= extra / 2;
    hi += extra - extra / 2;
    if (lo < 0) {
      hi -= lo;
      lo = 0;
    }
    if (hi >= size) {
      lo -= hi - (size - 1);
      hi = size - 1;
    }
    lo = std::max(lo, 0);
  }
  return {lo, hi};
}

}  // namespace

std::vector<Region> localize(int image_h, int image_w, const Tensor& activation,
                             const ModelParams& params, const std::vector<float>& global_scores,
                             const McarConfig& cfg, Rng& rng) {
  if (static_cast<int>(global_scores.size()) != params.num_classes()) {
    throw std::invalid_argument("localize: score vector length does not match the class count");
  }
  const std::vector<int> selected = select_maps(global_scores, cfg, rng);
  if (selected.empty()) return {};

  ClassAttentionStack stack = class_attention_maps(activation, params);
  stack.source_h = image_h;
  stack.source_w = image_w;

  std::vector<Region> regions;
  regions.reserve(selected.size());
  for (int class_id : selected) {
    const Tensor map = normalize_and_upsample(stack, class_id);
    auto [px, py] = marginals(map);
    px = minmax_normalize(px);
    py = minmax_normalize(py);
    auto [x_lo, x_hi] = solve_interval(px, cfg.tau);
    auto [y_lo, y_hi] = solve_interval(py, cfg.tau);
    std::tie(x_lo, x_hi) = expand_interval(x_lo, x_hi, cfg.min_region_px, image_w);
    std::tie(y_lo, y_hi) = expand_interval(y_lo, y_hi, cfg.min_region_px, image_h);
    regions.push_back({class_id, x_lo, x_hi, y_lo, y_hi, global_scores[class_id]});
  }
  return regions;
}

std::string region_record(const Region& r) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%d %d %d %d %d %.6f", r.class_id, r.x_lo, r.y_lo, r.x_hi,
                r.y_hi, static_cast<double>(r.global_score));
  return buf;
}

}  // namespace mcar
