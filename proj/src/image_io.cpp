#include "mcar/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mcar {

namespace {

unsigned char quantize(float v) {
  const float scaled = std::clamp(v, 0.0f, 1.0f) * 255.0f;
  return static_cast<unsigned char>(std::lround(scaled));
}

}  // namespace

void quantize_8bit(Tensor& image) {
  for (auto& v : image.flat()) v = static_cast<float>(quantize(v)) / 255.0f;
}

void write_ppm(const std::string& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(2) != 3) {
    throw std::invalid_argument("write_ppm expects an [h,w,3] tensor");
  }
  const int h = image.dim(0), w = image.dim(1);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << "P6\n" << w << " " << h << "\n255\n";
  std::string bytes;
  bytes.reserve(static_cast<std::size_t>(h) * w * 3);
  for (std::size_t i = 0; i < image.size(); ++i) {
    bytes.push_back(static_cast<char>(quantize(image[i])));
  }
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("failed writing " + path);
}

Tensor read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw PpmError(PpmError::Kind::Open, "cannot open image: " + path);

  std::string magic;
  f >> magic;
  if (magic != "P6") {
    throw PpmError(PpmError::Kind::Header, "not a binary PPM (magic '" + magic + "'): " + path);
  }

  auto next_token = [&]() -> long {
    // Skips whitespace and '#' comments, per the PPM grammar.
    while (f) {
      int ch = f.peek();
      if (ch == '#') {
        std::string line;
        std::getline(f, line);
      } else if (std::isspace(ch)) {
        f.get();
      } else {
        break;
      }
    }
    long value = -1;
    f >> value;
    return value;
  };

  const long w = next_token();
  const long h = next_token();
  const long maxval = next_token();
  if (!f || w < 1 || h < 1) {
    throw PpmError(PpmError::Kind::Header, "malformed PPM header: " + path);
  }
  if (maxval != 255) {
    throw PpmError(PpmError::Kind::Header, "unsupported PPM maxval (need 255): " + path);
  }
  f.get();  // single whitespace after maxval

  const std::size_t n = static_cast<std::size_t>(w) * h * 3;
  std::string bytes(n, '\0');
  f.read(bytes.data(), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(f.gcount()) != n) {
    throw PpmError(PpmError::Kind::Truncated, "truncated PPM pixel data: " + path);
  }

  Tensor image({static_cast<int>(h), static_cast<int>(w), 3});
  for (std::size_t i = 0; i < n; ++i) {
    image[i] = static_cast<float>(static_cast<unsigned char>(bytes[i])) / 255.0f;
  }
  return image;
}

Rgb overlay_color(int class_id) {
  static const Rgb palette[] = {
      {1.0f, 0.2f, 0.2f}, {0.2f, 1.0f, 0.2f}, {0.3f, 0.4f, 1.0f}, {1.0f, 0.9f, 0.1f},
      {1.0f, 0.3f, 1.0f}, {0.2f, 0.9f, 0.9f}, {1.0f, 0.6f, 0.1f}, {0.7f, 0.3f, 1.0f},
      {0.8f, 0.8f, 0.8f}, {0.5f, 0.9f, 0.4f}, {0.9f, 0.5f, 0.5f}, {0.4f, 0.6f, 0.8f},
      {0.9f, 0.8f, 0.5f}, {0.6f, 0.9f, 0.9f}, {0.9f, 0.4f, 0.7f}, {0.6f, 0.6f, 0.3f},
  };
  return palette[class_id & 15];
}

void draw_box(Tensor& image, int x_lo, int y_lo, int x_hi, int y_hi, const Rgb& color) {
  const int h = image.dim(0), w = image.dim(1);
  x_lo = std::clamp(x_lo, 0, w - 1);
  x_hi = std::clamp(x_hi, 0, w - 1);
  y_lo = std::clamp(y_lo, 0, h - 1);
  y_hi = std::clamp(y_hi, 0, h - 1);
  auto paint = [&](int y, int x) {
    for (int c = 0; c < 3; ++c) image.at(y, x, c) = color[c];
  };
  for (int x = x_lo; x <= x_hi; ++x) {
    paint(y_lo, x);
    paint(y_hi, x);
  }
  for (int y = y_lo; y <= y_hi; ++y) {
    paint(y, x_lo);
    paint(y, x_hi);
  }
}

std::string svg_overlay(int width, int height, const std::vector<OverlayEntry>& entries) {
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << width << " " << height
     << "\" width=\"" << width * 8 << "\" height=\"" << height * 8 << "\">\n";
  os << "  <rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height
     << "\" fill=\"#202020\"/>\n";
  for (const auto& e : entries) {
    const Rgb c = overlay_color(e.region.class_id);
    char color[16];
    std::snprintf(color, sizeof color, "#%02x%02x%02x", static_cast<int>(c[0] * 255),
                  static_cast<int>(c[1] * 255), static_cast<int>(c[2] * 255));
    os << "  <rect x=\"" << e.region.x_lo << "\" y=\"" << e.region.y_lo << "\" width=\""
       << e.region.width() << "\" height=\"" << e.region.height() << "\" fill=\"none\" stroke=\""
       << color << "\" stroke-width=\"0.6\"/>\n";
    os << "  <text x=\"" << e.region.x_lo << "\" y=\""
       << std::max(2, e.region.y_lo - 1) << "\" font-size=\"3\" fill=\"" << color << "\">"
       << e.label << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace mcar
