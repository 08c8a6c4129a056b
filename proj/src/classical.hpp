#pragma once

#include <vector>

#include "featext.hpp"
#include "imagekit.hpp"

namespace ocutrack::classical {

using imagekit::Point2;

struct StarburstConfig {
  int n_rays = 36;
  double max_radius = 20.0;
  double gradient_threshold = 0.5;  // fraction of each ray's peak derivative
  int max_iterations = 5;
  double convergence_eps = 0.5;
};

void validate(const StarburstConfig& cfg);

enum class Polarity { Dark, Bright };

// Gradient-voting symmetry transform; returns the strongest vote location.
Point2 radial_symmetry_center(const imagekit::GrayImage& img, const std::vector<int>& radii, Polarity polarity);

struct StarburstResult {
  featext::EllipseParams ellipse;
  std::vector<Point2> edge_points;
  int iterations = 0;
  bool converged = false;
};

StarburstResult starburst_pupil(const imagekit::GrayImage& img, Point2 seed, const StarburstConfig& cfg = {});

struct ClassicalConfig {
  float cr_threshold = 0.9f;
  featext::AreaRange cr_area_range{};
  int cr_inpaint_margin = 1;
  std::vector<int> radii{4, 6, 8, 10};
  StarburstConfig starburst{};
};

// Fills the masked pixels (grown by margin) from the outside in, each with the
// median of its already-known 5x5 neighbours.
imagekit::GrayImage inpaint_region(const imagekit::GrayImage& img, const imagekit::BinaryMask& region, int margin);

featext::FrameFeatures classical_pipeline(const imagekit::GrayImage& img, const ClassicalConfig& cfg = {});

}  // namespace ocutrack::classical
