#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "imagekit.hpp"

namespace ocutrack::featext {

using imagekit::Point2;

struct EllipseParams {
  Point2 center;
  double a = 0.0;      // semi-major, px
  double b = 0.0;      // semi-minor, px
  double angle = 0.0;  // +x axis to major axis, [0, pi)
};

enum class Source { Network, Classical };

struct FrameFeatures {
  std::optional<EllipseParams> pupil;
  std::optional<Point2> cr;
  double pupil_confidence = 0.0;
  double cr_confidence = 0.0;
  Source source = Source::Network;
};

struct PupilEstimate {
  EllipseParams ellipse;
  double confidence = 0.0;
};

// Ellipse of the largest 8-connected component from its second moments.
std::optional<PupilEstimate> extract_pupil(const imagekit::BinaryMask& mask);

// Moments ellipse of an arbitrary pixel set (treated as unit squares).
EllipseParams moments_ellipse(std::span<const std::pair<int, int>> pixels);

struct AreaRange {
  int min = 2;
  int max = 200;
};

struct CrEstimate {
  Point2 center;
  double confidence = 0.0;
  imagekit::Region region;
};

std::optional<CrEstimate> extract_cr(const imagekit::BinaryMask& mask, const imagekit::GrayImage& image,
                                     AreaRange area_range = {});

// Direct least-squares conic fit constrained to ellipses, on centered and
// scaled points. Throws DegenerateInput for collinear or non-elliptic data.
EllipseParams fit_ellipse_points(std::span<const Point2> points);

// Extracts both features from the pair of segmentation masks.
FrameFeatures extract_features(const imagekit::BinaryMask& pupil_mask, const imagekit::BinaryMask& cr_mask,
                               const imagekit::GrayImage& image, AreaRange cr_area_range = {});

double normalize_angle_pi(double angle);

}  // namespace ocutrack::featext
