#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcar/dataset.hpp"
#include "mcar/rng.hpp"

namespace mcar {

enum class ShapeKind { Circle, Square, Triangle, Cross };

struct ClassDef {
  ShapeKind shape = ShapeKind::Circle;
  int color_id = 0;
  std::string name;
};

/// Multi-label shapes dataset: colored shapes at random positions and
/// scales, optional occlusion, mild pixel noise.
struct SynthSpec {
  int canvas = 64;
  std::vector<ClassDef> classes;
  int objects_min = 1;
  int objects_max = 4;
  int scale_min = 10;
  int scale_max = 26;
  bool occlusion = true;
  float noise_std = 0.02f;
  int train_count = 2000;
  int val_count = 500;
  std::uint64_t seed = 1;

  void validate() const;
};

struct DatasetError : std::runtime_error {
  enum class Kind { BadSpec, MissingFile, MalformedHeader, TruncatedData, LabelMismatch };
  DatasetError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
  Kind kind;
};

/// shape x color grid, up to 16 classes (4 shapes, 4 colors).
std::vector<ClassDef> default_classes(int count);

/// One rendered image with its labels and ground-truth boxes; all pixel
/// values already on the 8-bit grid.
Sample render_sample(const SynthSpec& spec, Rng& rng);

/// Writes <out_dir>/train and <out_dir>/val, each a self-contained dataset
/// directory (meta, images/NNNNNN.ppm, labels.tsv, boxes.tsv). Byte-identical
/// for identical specs.
void generate_dataset(const SynthSpec& spec, const std::string& out_dir);

/// Loads one split directory (the layout generate_dataset writes).
Dataset load_dataset(const std::string& dir);

}  // namespace mcar
