#include "mcar/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "mcar/image_io.hpp"

namespace fs = std::filesystem;

namespace mcar {

namespace {

constexpr int kMaxClasses = 16;
constexpr int kSplitRetries = 16;

const char* kShapeNames[] = {"circle", "square", "triangle", "cross"};
const char* kColorNames[] = {"red", "green", "blue", "yellow"};
const float kPalette[][3] = {
    {0.85f, 0.12f, 0.12f},
    {0.12f, 0.75f, 0.15f},
    {0.15f, 0.30f, 0.90f},
    {0.90f, 0.85f, 0.12f},
};

std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2));
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdull;
  x ^= x >> 33;
  return x;
}

/// Coverage of one sub-sample point (u,v in [0,1] across the object box).
bool inside_shape(ShapeKind shape, float u, float v) {
  switch (shape) {
    case ShapeKind::Circle: {
      const float du = u - 0.5f, dv = v - 0.5f;
      return du * du + dv * dv <= 0.25f;
    }
    case ShapeKind::Square:
      return true;  // the full box
    case ShapeKind::Triangle:
      return v >= 2.0f * std::abs(u - 0.5f);
    case ShapeKind::Cross:
      return std::abs(u - 0.5f) <= 1.0f / 6.0f || std::abs(v - 0.5f) <= 1.0f / 6.0f;
  }
  return false;
}

void draw_object(Tensor& image, ShapeKind shape, const float* color, int x0, int y0, int s) {
  // 2x2 supersampling for softened edges at small scales.
  static const float offsets[2] = {0.25f, 0.75f};
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      int hits = 0;
      for (float oy : offsets)
        for (float ox : offsets)
          if (inside_shape(shape, (static_cast<float>(x) + ox) / s,
                           (static_cast<float>(y) + oy) / s))
            ++hits;
      if (hits == 0) continue;
      const float alpha = static_cast<float>(hits) / 4.0f;
      for (int c = 0; c < 3; ++c) {
        float& px = image.at(y0 + y, x0 + x, c);
        px += alpha * (color[c] - px);
      }
    }
  }
}

bool boxes_overlap(const GtBox& a, const GtBox& b) {
  return a.x_lo <= b.x_hi && b.x_lo <= a.x_hi && a.y_lo <= b.y_hi && b.y_lo <= a.y_hi;
}

std::string image_id(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06d", index);
  return buf;
}

void write_split(const SynthSpec& spec, const fs::path& dir, int split_id, int count) {
  std::vector<Sample> samples(static_cast<std::size_t>(count));
  const int num_classes = static_cast<int>(spec.classes.size());

  for (int attempt = 0; attempt < kSplitRetries; ++attempt) {
    for (int i = 0; i < count; ++i) {
      Rng rng(mix64(mix64(spec.seed, static_cast<std::uint64_t>(split_id)),
                    mix64(static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(attempt))));
      samples[i] = render_sample(spec, rng);
    }
    // Every class must show up in at least 1% of the split.
    std::vector<int> prevalence(num_classes, 0);
    for (const auto& s : samples)
      for (int c = 0; c < num_classes; ++c) prevalence[c] += s.labels[c];
    const int need = std::max(1, count / 100);
    const bool ok = std::all_of(prevalence.begin(), prevalence.end(),
                                [&](int p) { return p >= need; });
    if (ok) break;
    if (attempt == kSplitRetries - 1) {
      throw DatasetError(DatasetError::Kind::BadSpec,
                         "could not reach 1% prevalence for every class; spec too constrained");
    }
  }

  fs::create_directories(dir / "images");
  std::ofstream meta(dir / "meta");
  meta << "mcar-dataset 1\n";
  meta << "canvas " << spec.canvas << "\n";
  meta << "classes " << num_classes << "\n";
  for (int c = 0; c < num_classes; ++c) meta << "class " << c << " " << spec.classes[c].name << "\n";

  std::ofstream labels(dir / "labels.tsv");
  std::ofstream boxes(dir / "boxes.tsv");
  for (int i = 0; i < count; ++i) {
    const std::string id = image_id(i);
    write_ppm((dir / "images" / (id + ".ppm")).string(), samples[i].image);
    labels << id << "\t";
    bool first = true;
    for (int c = 0; c < num_classes; ++c) {
      if (samples[i].labels[c]) {
        labels << (first ? "" : " ") << c;
        first = false;
      }
    }
    labels << "\n";
    for (const auto& b : samples[i].gt_boxes) {
      boxes << id << "\t" << b.class_id << " " << b.x_lo << " " << b.y_lo << " " << b.x_hi << " "
            << b.y_hi << "\n";
    }
  }
}

}  // namespace

void SynthSpec::validate() const {
  if (canvas < 8) throw DatasetError(DatasetError::Kind::BadSpec, "canvas must be >= 8");
  if (classes.empty() || static_cast<int>(classes.size()) > kMaxClasses) {
    throw DatasetError(DatasetError::Kind::BadSpec, "class count must be in [1,16]");
  }
  if (objects_min < 1 || objects_min > objects_max) {
    throw DatasetError(DatasetError::Kind::BadSpec, "need 1 <= objects_min <= objects_max");
  }
  if (scale_min < 4 || scale_min > scale_max) {
    throw DatasetError(DatasetError::Kind::BadSpec, "need 4 <= scale_min <= scale_max");
  }
  if (scale_max > canvas) {
    std::ostringstream os;
    os << "object scale " << scale_max << " exceeds canvas " << canvas;
    throw DatasetError(DatasetError::Kind::BadSpec, os.str());
  }
  if (noise_std < 0.0f) throw DatasetError(DatasetError::Kind::BadSpec, "noise_std must be >= 0");
  if (train_count < 1 || val_count < 0) {
    throw DatasetError(DatasetError::Kind::BadSpec, "need train_count >= 1 and val_count >= 0");
  }
}

std::vector<ClassDef> default_classes(int count) {
  if (count < 1 || count > kMaxClasses) {
    throw DatasetError(DatasetError::Kind::BadSpec, "class count must be in [1,16]");
  }
  std::vector<ClassDef> classes;
  for (int i = 0; i < count; ++i) {
    ClassDef def;
    def.shape = static_cast<ShapeKind>(i % 4);
    def.color_id = i / 4;
    def.name = std::string(kShapeNames[i % 4]) + "-" + kColorNames[i / 4];
    classes.push_back(std::move(def));
  }
  return classes;
}

Sample render_sample(const SynthSpec& spec, Rng& rng) {
  const int num_classes = static_cast<int>(spec.classes.size());
  Sample sample;
  sample.labels.assign(static_cast<std::size_t>(num_classes), 0);

  const float bg = rng.uniform(0.05f, 0.30f);
  sample.image = Tensor({spec.canvas, spec.canvas, 3}, bg);

  const int k = static_cast<int>(rng.uniform_int(spec.objects_min, spec.objects_max));
  for (int j = 0; j < k; ++j) {
    const int class_id = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(num_classes)));
    const int s = static_cast<int>(rng.uniform_int(spec.scale_min, spec.scale_max));
    GtBox box;
    box.class_id = class_id;
    for (int attempt = 0; attempt < 100; ++attempt) {
      box.x_lo = static_cast<int>(rng.uniform_int(0, spec.canvas - s));
      box.y_lo = static_cast<int>(rng.uniform_int(0, spec.canvas - s));
      box.x_hi = box.x_lo + s - 1;
      box.y_hi = box.y_lo + s - 1;
      if (spec.occlusion) break;
      const bool clear = std::none_of(sample.gt_boxes.begin(), sample.gt_boxes.end(),
                                      [&](const GtBox& b) { return boxes_overlap(box, b); });
      if (clear) break;
    }
    const ClassDef& def = spec.classes[class_id];
    draw_object(sample.image, def.shape, kPalette[def.color_id], box.x_lo, box.y_lo, s);
    sample.labels[class_id] = 1;
    sample.gt_boxes.push_back(box);
  }

  if (spec.noise_std > 0.0f) {
    for (auto& v : sample.image.flat()) {
      v += static_cast<float>(rng.normal()) * spec.noise_std;
      v = std::clamp(v, 0.0f, 1.0f);
    }
  }
  quantize_8bit(sample.image);
  return sample;
}

void generate_dataset(const SynthSpec& spec, const std::string& out_dir) {
  spec.validate();
  const fs::path root(out_dir);
  write_split(spec, root / "train", 0, spec.train_count);
  if (spec.val_count > 0) write_split(spec, root / "val", 1, spec.val_count);
}

Dataset load_dataset(const std::string& dir) {
  const fs::path root(dir);
  std::ifstream meta(root / "meta");
  if (!meta) {
    throw DatasetError(DatasetError::Kind::MissingFile, "missing meta file in " + dir);
  }

  Dataset ds;
  std::string line;
  int declared_classes = -1;
  if (!std::getline(meta, line) || line != "mcar-dataset 1") {
    throw DatasetError(DatasetError::Kind::MalformedHeader,
                       "meta version line missing or unsupported in " + dir);
  }
  while (std::getline(meta, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "canvas") {
      ls >> ds.canvas;
    } else if (key == "classes") {
      ls >> declared_classes;
    } else if (key == "class") {
      int id;
      std::string name;
      ls >> id >> name;
      if (id != static_cast<int>(ds.class_names.size())) {
        throw DatasetError(DatasetError::Kind::MalformedHeader,
                           "class ids out of order in meta");
      }
      ds.class_names.push_back(name);
    } else {
      throw DatasetError(DatasetError::Kind::MalformedHeader, "unknown meta line: " + line);
    }
    if (!ls && !ls.eof()) {
      throw DatasetError(DatasetError::Kind::MalformedHeader, "malformed meta line: " + line);
    }
  }
  if (ds.canvas < 1 || declared_classes < 1 ||
      declared_classes != static_cast<int>(ds.class_names.size())) {
    throw DatasetError(DatasetError::Kind::MalformedHeader,
                       "meta canvas/class declarations inconsistent in " + dir);
  }

  std::ifstream labels(root / "labels.tsv");
  if (!labels) {
    throw DatasetError(DatasetError::Kind::MissingFile, "missing labels.tsv in " + dir);
  }

  std::size_t image_files = 0;
  if (fs::is_directory(root / "images")) {
    for (const auto& e : fs::directory_iterator(root / "images")) {
      if (e.path().extension() == ".ppm") ++image_files;
    }
  }

  std::vector<std::pair<std::string, LabelVector>> rows;
  while (std::getline(labels, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    const std::string id = line.substr(0, tab);
    LabelVector lv(static_cast<std::size_t>(declared_classes), 0);
    if (tab != std::string::npos) {
      std::istringstream ls(line.substr(tab + 1));
      int c;
      while (ls >> c) {
        if (c < 0 || c >= declared_classes) {
          std::ostringstream os;
          os << "label class id " << c << " out of range [0," << declared_classes << ") for image "
             << id;
          throw DatasetError(DatasetError::Kind::LabelMismatch, os.str());
        }
        lv[c] = 1;
      }
    }
    rows.emplace_back(id, std::move(lv));
  }
  if (rows.size() != image_files) {
    std::ostringstream os;
    os << "label/image count mismatch in " << dir << ": " << rows.size() << " label rows, "
       << image_files << " images";
    throw DatasetError(DatasetError::Kind::LabelMismatch, os.str());
  }

  // Ground-truth boxes ride along when present (test oracles only).
  std::unordered_map<std::string, std::vector<GtBox>> box_rows;
  std::ifstream boxes(root / "boxes.tsv");
  if (boxes) {
    while (std::getline(boxes, line)) {
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos) {
        throw DatasetError(DatasetError::Kind::MalformedHeader, "malformed boxes.tsv line: " + line);
      }
      GtBox b;
      std::istringstream ls(line.substr(tab + 1));
      if (!(ls >> b.class_id >> b.x_lo >> b.y_lo >> b.x_hi >> b.y_hi)) {
        throw DatasetError(DatasetError::Kind::MalformedHeader, "malformed boxes.tsv line: " + line);
      }
      box_rows[line.substr(0, tab)].push_back(b);
    }
  }

  for (const auto& [id, lv] : rows) {
    Sample s;
    const fs::path img_path = root / "images" / (id + ".ppm");
    try {
      s.image = read_ppm(img_path.string());
    } catch (const PpmError& e) {
      const auto kind = e.kind == PpmError::Kind::Truncated ? DatasetError::Kind::TruncatedData
                        : e.kind == PpmError::Kind::Open    ? DatasetError::Kind::MissingFile
                                                            : DatasetError::Kind::MalformedHeader;
      throw DatasetError(kind, e.what());
    }
    if (s.image.dim(0) != ds.canvas || s.image.dim(1) != ds.canvas) {
      throw DatasetError(DatasetError::Kind::MalformedHeader,
                         "image " + id + " does not match the declared canvas size");
    }
    s.labels = lv;
    if (auto it = box_rows.find(id); it != box_rows.end()) s.gt_boxes = it->second;
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace mcar
