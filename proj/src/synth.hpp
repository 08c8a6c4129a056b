#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "featext.hpp"
#include "gaze.hpp"
#include "imagekit.hpp"

namespace ocutrack::synth {

using imagekit::Point2;

struct SceneParams {
  int image_height = 132;
  int image_width = 132;
  gaze::EyeModel3D eye;
  double camera_angle = 0.0;  // rad
  double pixel_scale = 24.0;  // px/mm
  double pupil_radius = 6.0;  // apparent semi-major axis, px
  double iris_radius = 17.0;
  double cr_radius = 3.0;
  double background_level = 0.5;
  double iris_level = 0.35;
  double pupil_level = 0.06;
  double cr_level = 0.97;
  int n_hairs = 5;
  double hair_brightness = 0.7;
  double noise_sigma = 0.01;
  double illum_gradient = 0.0003;  // intensity per px
  // Pupil and CR must stay at least this far (px) from every image edge.
  int feature_margin = 0;
  std::uint64_t rng_seed = 0;
};

void validate(const SceneParams& p);

struct Truth {
  Point2 pupil_center;
  featext::EllipseParams pupil_ellipse;
  Point2 cr_center;
  double gaze_h = 0.0;  // rad, relative to the world forward axis
  double gaze_v = 0.0;
  double camera_angle = 0.0;
  double k_px = 0.0;
};

struct SynthSample {
  imagekit::GrayImage image;
  imagekit::BinaryMask pupil_mask;
  imagekit::BinaryMask cr_mask;
  Truth truth;
};

SynthSample render_eye(const SceneParams& params);

// Calibration under which gaze_angle returns the truth gaze for this camera.
gaze::CalibrationModel exact_calibration(double camera_angle, double k_px);

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct SceneDistribution {
  int image_height = 132;
  int image_width = 132;
  int feature_margin = 44;  // keeps features inside the default network output window
  Range gaze_h{-0.5235987755982988, 0.5235987755982988};
  Range gaze_v{-0.5235987755982988, 0.5235987755982988};
  Range camera_angle{0.0, 0.0};
  Range corneal_x_mm{-0.1, 0.1};
  Range corneal_y_mm{-0.1, 0.1};
  Range pixel_scale{24.0, 24.0};
  Range pupil_radius{5.0, 7.0};
  Range iris_radius{14.0, 20.0};
  Range cr_radius{2.0, 4.0};
  Range background_level{0.45, 0.55};
  Range iris_level{0.30, 0.40};
  Range pupil_level{0.03, 0.10};
  Range cr_level{0.95, 1.0};
  Range n_hairs{3, 8};  // integer, inclusive
  Range hair_brightness{0.6, 0.85};
  Range noise_sigma{0.005, 0.03};
  Range illum_gradient{0.0, 0.0005};
};

void validate(const SceneDistribution& d);

// Scene parameters of sample `index`, attempt `attempt` (0-based).
SceneParams draw_params(const SceneDistribution& d, std::uint64_t master_seed, std::size_t index, int attempt);

// Samples whose features leave the frame are redrawn up to 10 times.
std::vector<SynthSample> make_dataset(std::size_t n, const SceneDistribution& d, std::uint64_t master_seed);

// One eye under fixed scene parameters sweeping gaze_h linearly from `from` to
// `to` (rad) at gaze_v = 0; per-frame noise and hairs differ.
std::vector<SynthSample> make_gaze_ramp(std::size_t n, double from, double to, const SceneDistribution& d,
                                        std::uint64_t master_seed);

std::uint64_t splitmix64(std::uint64_t x);

std::string distribution_to_json(const SceneDistribution& d);
SceneDistribution distribution_from_json(const std::string& text);

std::string truth_to_json(const Truth& t);
Truth truth_from_json(const std::string& text);

// Directory layout: NNNN_img.pgm, NNNN_pupil.pgm, NNNN_cr.pgm, NNNN_truth.json
// per sample plus manifest.json. Returns the manifest path.
std::string save_dataset(const std::vector<SynthSample>& samples, const SceneDistribution& d,
                         std::uint64_t master_seed, const std::string& dir);

struct LoadedDataset {
  std::vector<SynthSample> samples;
  SceneDistribution distribution;
  std::uint64_t master_seed = 0;
};

LoadedDataset load_dataset(const std::string& dir);

std::string sample_stem(std::size_t index);

}  // namespace ocutrack::synth
