#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "mcar/backbone.hpp"

namespace mcar {

namespace {

constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(std::istream& in, const char* what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw std::runtime_error(std::string("checkpoint truncated while reading ") + what);
  }
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void append_f32_le(std::string& out, float f) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  put_u32(out, bits);
}

float read_f32_le(const unsigned char* p) {
  const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) |
                             (static_cast<std::uint32_t>(p[1]) << 8) |
                             (static_cast<std::uint32_t>(p[2]) << 16) |
                             (static_cast<std::uint32_t>(p[3]) << 24);
  return std::bit_cast<float>(bits);
}

std::string shape_csv(const std::vector<int>& shape) {
  std::ostringstream os;
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  return os.str();
}

std::vector<int> parse_shape_csv(const std::string& s) {
  std::vector<int> shape;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) shape.push_back(std::stoi(tok));
  return shape;
}

struct NamedTensor {
  std::string name;
  const std::vector<float>* data;
  std::vector<int> shape;
};

std::vector<NamedTensor> tensor_table(const ModelParams& params) {
  std::vector<NamedTensor> t;
  for (std::size_t b = 0; b < params.conv.size(); ++b) {
    t.push_back({"conv" + std::to_string(b) + ".kernel", &params.conv[b].kernel.flat(),
                 params.conv[b].kernel.shape()});
    t.push_back({"conv" + std::to_string(b) + ".bias", &params.conv[b].bias,
                 {static_cast<int>(params.conv[b].bias.size())}});
  }
  t.push_back({"classifier.w", &params.classifier_w.flat(), params.classifier_w.shape()});
  t.push_back({"classifier.b", &params.classifier_b,
               {static_cast<int>(params.classifier_b.size())}});
  return t;
}

}  // namespace

std::vector<std::string> manifest_lines(const ModelParams& params) {
  std::vector<std::string> lines;
  for (const auto& t : tensor_table(params)) lines.push_back(t.name + " " + shape_csv(t.shape));
  return lines;
}

void save_checkpoint(const ModelParams& params, const std::string& path) {
  std::ostringstream header;
  header << "input_size " << params.config.input_size << "\n";
  header << "blocks " << shape_csv(params.config.block_channels) << "\n";
  char lam[32];
  std::snprintf(lam, sizeof lam, "%.9g", static_cast<double>(params.pooling.lambda));
  header << "pooling " << to_string(params.pooling.kind) << " " << lam << "\n";

  std::size_t offset = 0;
  for (const auto& t : tensor_table(params)) {
    header << "tensor " << t.name << " " << shape_csv(t.shape) << " " << offset << "\n";
    offset += t.data->size() * 4;
  }
  const std::string header_str = header.str();

  std::string out;
  out.reserve(12 + header_str.size() + offset);
  out += "MCAR";
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(header_str.size()));
  out += header_str;
  for (const auto& t : tensor_table(params))
    for (float v : *t.data) append_f32_le(out, v);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("failed writing checkpoint: " + path);
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);

  char magic[4];
  if (!f.read(magic, 4) || std::string(magic, 4) != "MCAR") {
    throw std::runtime_error("not an MCAR checkpoint (bad magic): " + path);
  }
  const std::uint32_t version = get_u32(f, "version");
  if (version != kVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t header_len = get_u32(f, "header length");
  std::string header(header_len, '\0');
  if (!f.read(header.data(), header_len)) {
    throw std::runtime_error("checkpoint truncated in header: " + path);
  }

  BackboneConfig config;
  config.block_channels.clear();
  PoolingStrategy pooling;
  struct Entry {
    std::string name;
    std::vector<int> shape;
    std::size_t offset;
  };
  std::vector<Entry> entries;

  std::istringstream hs(header);
  std::string line;
  while (std::getline(hs, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "input_size") {
      ls >> config.input_size;
    } else if (key == "blocks") {
      std::string csv;
      ls >> csv;
      config.block_channels = parse_shape_csv(csv);
    } else if (key == "pooling") {
      std::string kind;
      double lam = 0.5;
      ls >> kind >> lam;
      pooling.kind = pool_kind_from_string(kind);
      pooling.lambda = static_cast<float>(lam);
    } else if (key == "tensor") {
      Entry e;
      std::string csv;
      ls >> e.name >> csv >> e.offset;
      e.shape = parse_shape_csv(csv);
      entries.push_back(std::move(e));
    } else {
      throw std::runtime_error("malformed checkpoint manifest line: " + line);
    }
    if (!ls && !ls.eof()) throw std::runtime_error("malformed checkpoint manifest line: " + line);
  }
  if (config.block_channels.empty() || entries.empty()) {
    throw std::runtime_error("checkpoint manifest incomplete: " + path);
  }

  std::string blob((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());

  auto read_tensor = [&](const Entry& e) {
    std::size_t n = 1;
    for (int d : e.shape) n *= static_cast<std::size_t>(d);
    if (e.offset + n * 4 > blob.size()) {
      throw std::runtime_error("checkpoint blob truncated for tensor " + e.name);
    }
    std::vector<float> data(n);
    for (std::size_t i = 0; i < n; ++i) data[i] = read_f32_le(bytes + e.offset + i * 4);
    return data;
  };

  ModelParams p;
  p.config = config;
  p.pooling = pooling;
  p.conv.resize(config.block_channels.size());
  bool have_w = false, have_b = false;
  std::vector<bool> have_conv(p.conv.size() * 2, false);
  for (const auto& e : entries) {
    if (e.name == "classifier.w") {
      if (e.shape.size() != 2) throw std::runtime_error("classifier.w must be rank-2");
      p.classifier_w = Tensor(e.shape, read_tensor(e));
      have_w = true;
    } else if (e.name == "classifier.b") {
      p.classifier_b = read_tensor(e);
      have_b = true;
    } else if (e.name.rfind("conv", 0) == 0) {
      const auto dot = e.name.find('.');
      if (dot == std::string::npos) throw std::runtime_error("bad tensor name " + e.name);
      const std::size_t idx = std::stoul(e.name.substr(4, dot - 4));
      if (idx >= p.conv.size()) throw std::runtime_error("conv index out of range in " + e.name);
      if (e.name.substr(dot + 1) == "kernel") {
        if (e.shape.size() != 4) throw std::runtime_error("conv kernel must be rank-4");
        p.conv[idx].kernel = Tensor(e.shape, read_tensor(e));
        have_conv[idx * 2] = true;
      } else if (e.name.substr(dot + 1) == "bias") {
        p.conv[idx].bias = read_tensor(e);
        have_conv[idx * 2 + 1] = true;
      } else {
        throw std::runtime_error("unknown tensor name " + e.name);
      }
    } else {
      throw std::runtime_error("unknown tensor name " + e.name);
    }
  }
  if (!have_w || !have_b) throw std::runtime_error("checkpoint missing classifier tensors");
  for (std::size_t i = 0; i < have_conv.size(); ++i)
    if (!have_conv[i]) throw std::runtime_error("checkpoint missing conv tensors");

  // Cross-check the manifest against the declared architecture.
  int c_in = 3;
  for (std::size_t b = 0; b < p.conv.size(); ++b) {
    const auto& k = p.conv[b].kernel.shape();
    if (k[0] != config.block_channels[b] || k[1] != c_in || k[2] != 3 || k[3] != 3) {
      throw std::runtime_error("checkpoint conv" + std::to_string(b) +
                               " kernel shape inconsistent with blocks header");
    }
    c_in = k[0];
  }
  if (p.classifier_w.dim(0) != config.feature_channels() ||
      p.classifier_w.dim(1) != static_cast<int>(p.classifier_b.size())) {
    throw std::runtime_error("checkpoint classifier shapes inconsistent");
  }
  return p;
}

}  // namespace mcar
