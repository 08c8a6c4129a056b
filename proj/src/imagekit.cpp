#include "imagekit.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <string>

#include "error.hpp"

namespace ocutrack::imagekit {

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(data.begin(), data.end(), std::uint8_t{1}));
}

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      char c = static_cast<char>(bytes_[pos_]);
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        return;
      }
    }
  }

  long read_uint(const char* field) {
    skip_space_and_comments();
    long value = 0;
    std::size_t start = pos_;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 1'000'000'000L) throw Error(ErrorCode::MalformedHeader, std::string(field) + " too large");
      ++pos_;
    }
    if (pos_ == start) throw Error(ErrorCode::MalformedHeader, std::string("missing ") + field);
    return value;
  }

  std::size_t pos() const { return pos_; }
  void advance(std::size_t n) { pos_ += n; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

GrayImage load_pgm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5')
    throw Error(ErrorCode::MalformedHeader, "expected P5 magic");
  HeaderReader reader(bytes);
  reader.advance(2);
  const long w = reader.read_uint("width");
  const long h = reader.read_uint("height");
  const long maxval = reader.read_uint("maxval");
  if (w < 1 || h < 1) throw Error(ErrorCode::MalformedHeader, "zero dimension");
  if (maxval < 1 || maxval > 65535) throw Error(ErrorCode::MalformedHeader, "maxval out of range");
  // exactly one whitespace byte separates the header from the raster
  if (reader.pos() >= bytes.size() || !std::isspace(bytes[reader.pos()]))
    throw Error(ErrorCode::MalformedHeader, "missing raster separator");
  reader.advance(1);

  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  const std::size_t bpp = maxval < 256 ? 1 : 2;
  if (bytes.size() - reader.pos() < n * bpp)
    throw Error(ErrorCode::TruncatedData, "raster holds fewer pixels than the header promises");

  GrayImage img(static_cast<int>(w), static_cast<int>(h));
  const std::uint8_t* p = bytes.data() + reader.pos();
  const float scale = 1.0f / static_cast<float>(maxval);
  for (std::size_t i = 0; i < n; ++i) {
    unsigned v = bpp == 1 ? p[i] : (static_cast<unsigned>(p[2 * i]) << 8) | p[2 * i + 1];
    img.data[i] = std::min(1.0f, static_cast<float>(v) * scale);
  }
  return img;
}

std::vector<std::uint8_t> save_pgm(const GrayImage& img) {
  const std::string header =
      "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(header.size() + img.data.size());
  for (float v : img.data) {
    float c = std::clamp(v, 0.0f, 1.0f);
    out.push_back(static_cast<std::uint8_t>(std::lround(c * 255.0f)));
  }
  return out;
}

GrayImage load_pgm_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return load_pgm(bytes);
}

void save_pgm_file(const GrayImage& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  auto bytes = save_pgm(img);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path);
}

GrayImage mask_to_image(const BinaryMask& mask) {
  GrayImage img(mask.width, mask.height);
  for (std::size_t i = 0; i < mask.data.size(); ++i) img.data[i] = mask.data[i] ? 1.0f : 0.0f;
  return img;
}

BinaryMask image_to_mask(const GrayImage& img) {
  BinaryMask mask(img.width, img.height);
  for (std::size_t i = 0; i < img.data.size(); ++i) mask.data[i] = img.data[i] > 0.0f ? 1 : 0;
  return mask;
}

BinaryMask threshold(const GrayImage& img, float t) {
  BinaryMask mask(img.width, img.height);
  for (std::size_t i = 0; i < img.data.size(); ++i) mask.data[i] = img.data[i] >= t ? 1 : 0;
  return mask;
}

GradientField sobel(const GrayImage& img) {
  if (img.width < 3 || img.height < 3) throw Error(ErrorCode::ImageTooSmall, "sobel needs at least 3x3");
  const int w = img.width, h = img.height;
  auto px = [&](int x, int y) {
    x = std::clamp(x, 0, w - 1);
    y = std::clamp(y, 0, h - 1);
    return img.at(x, y);
  };
  GradientField g;
  g.width = w;
  g.height = h;
  const std::size_t n = img.data.size();
  g.gx.resize(n);
  g.gy.resize(n);
  g.magnitude.resize(n);
  g.direction.resize(n);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float gx = (px(x + 1, y - 1) + 2.0f * px(x + 1, y) + px(x + 1, y + 1)) -
                       (px(x - 1, y - 1) + 2.0f * px(x - 1, y) + px(x - 1, y + 1));
      const float gy = (px(x - 1, y + 1) + 2.0f * px(x, y + 1) + px(x + 1, y + 1)) -
                       (px(x - 1, y - 1) + 2.0f * px(x, y - 1) + px(x + 1, y - 1));
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      g.gx[i] = gx;
      g.gy[i] = gy;
      g.magnitude[i] = std::sqrt(gx * gx + gy * gy);
      g.direction[i] = g.magnitude[i] == 0.0f ? 0.0f : std::atan2(gy, gx);
    }
  }
  return g;
}

std::vector<int> label_image(const BinaryMask& mask, int* n_labels) {
  const int w = mask.width, h = mask.height;
  std::vector<int> labels(mask.data.size(), 0);
  std::vector<int> stack;
  int next = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (!mask.data[i] || labels[i]) continue;
      labels[i] = ++next;
      stack.push_back(static_cast<int>(i));
      while (!stack.empty()) {
        const int cur = stack.back();
        stack.pop_back();
        const int cx = cur % w, cy = cur / w;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = cx + dx, ny = cy + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            const std::size_t j = static_cast<std::size_t>(ny) * w + nx;
            if (mask.data[j] && !labels[j]) {
              labels[j] = next;
              stack.push_back(static_cast<int>(j));
            }
          }
        }
      }
    }
  }
  if (n_labels) *n_labels = next;
  return labels;
}

std::vector<Region> connected_components(const BinaryMask& mask, const GrayImage* intensity) {
  if (intensity && !intensity->same_size(mask.width, mask.height))
    throw Error(ErrorCode::DimensionMismatch, "intensity image and mask differ in size");
  int n = 0;
  const auto labels = label_image(mask, &n);

  struct Acc {
    long area = 0;
    double sx = 0, sy = 0, si = 0;
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  };
  std::vector<Acc> acc(static_cast<std::size_t>(n));
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      const int l = labels[static_cast<std::size_t>(y) * mask.width + x];
      if (!l) continue;
      Acc& a = acc[static_cast<std::size_t>(l - 1)];
      if (a.area == 0) {
        a.x0 = a.x1 = x;
        a.y0 = a.y1 = y;
      }
      ++a.area;
      a.sx += x;
      a.sy += y;
      if (intensity) a.si += intensity->at(x, y);
      a.x0 = std::min(a.x0, x);
      a.x1 = std::max(a.x1, x);
      a.y0 = std::min(a.y0, y);
      a.y1 = std::max(a.y1, y);
    }
  }

  std::vector<Region> regions;
  regions.reserve(acc.size());
  for (int l = 1; l <= n; ++l) {
    const Acc& a = acc[static_cast<std::size_t>(l - 1)];
    Region r;
    r.label = l;
    r.area = static_cast<int>(a.area);
    r.centroid = {a.sx / a.area, a.sy / a.area};
    r.x0 = a.x0;
    r.y0 = a.y0;
    r.x1 = a.x1;
    r.y1 = a.y1;
    if (intensity) r.mean_intensity = a.si / a.area;
    regions.push_back(r);
  }
  std::stable_sort(regions.begin(), regions.end(),
                   [](const Region& a, const Region& b) { return a.area > b.area; });
  return regions;
}

}  // namespace ocutrack::imagekit
