#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ocutrack::imagekit {

// Row-major intensities in [0,1].
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  GrayImage() = default;
  GrayImage(int w, int h, float fill = 0.0f)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  float& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  bool same_size(int w, int h) const { return width == w && height == h; }
  bool operator==(const GrayImage&) const = default;
};

// Row-major labels, one byte per pixel (0 or 1).
struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  BinaryMask() = default;
  BinaryMask(int w, int h, bool fill = false)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill ? 1 : 0) {}

  bool at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v) { data[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
  std::size_t count() const;
  bool operator==(const BinaryMask&) const = default;
};

struct GradientField {
  int width = 0;
  int height = 0;
  std::vector<float> gx;
  std::vector<float> gy;
  std::vector<float> magnitude;
  std::vector<float> direction;  // atan2(gy, gx), 0 where magnitude is 0
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

struct Region {
  int label = 0;
  int area = 0;
  Point2 centroid;
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // inclusive bounding box
  std::optional<double> mean_intensity;
};

GrayImage load_pgm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> save_pgm(const GrayImage& img);

GrayImage load_pgm_file(const std::string& path);
void save_pgm_file(const GrayImage& img, const std::string& path);

// Masks are stored as 0/255 PGMs; any nonzero value reads back as true.
GrayImage mask_to_image(const BinaryMask& mask);
BinaryMask image_to_mask(const GrayImage& img);

BinaryMask threshold(const GrayImage& img, float t);

GradientField sobel(const GrayImage& img);

// 8-connected labeling. Regions come back sorted by area (largest first, ties
// by label), labels numbered in raster order of first pixel.
std::vector<Region> connected_components(const BinaryMask& mask,
                                         const GrayImage* intensity = nullptr);

// Per-pixel label image matching the regions returned by connected_components.
std::vector<int> label_image(const BinaryMask& mask, int* n_labels = nullptr);

}  // namespace ocutrack::imagekit
