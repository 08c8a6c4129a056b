#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "imagekit.hpp"

namespace ocutrack::gaze {

using imagekit::Point2;

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;
};

// World frame: +x right, +y up, +z toward the camera at swing angle 0.
// Gaze uses Fick angles: horizontal rotation first, then vertical.
struct EyeModel3D {
  Vec3 corneal_center;         // mm
  double corneal_radius = 1.5;  // mm
  double rp = 1.0;             // mm, corneal curvature center to pupil plane
  double gaze_h = 0.0;         // rad
  double gaze_v = 0.0;         // rad
};

Vec3 gaze_direction(double gaze_h, double gaze_v);

struct Projection {
  Point2 pupil;
  Point2 cr;
};

// Orthographic camera rotated by camera_angle about the vertical axis through
// the origin. Image y grows downward; principal_point is where the camera axis
// lands in pixel coordinates.
Projection project_eye(const EyeModel3D& eye, double camera_angle, double pixel_scale,
                       Point2 principal_point = {});

struct CalibrationModel {
  double k_px = 0.0;
  double theta0_h = 0.0;  // reference-axis direction in the camera frame
  double theta0_v = 0.0;
  double fit_residual_px = 0.0;
  int n_measurements = 0;
};

struct SwingMeasurement {
  double camera_angle = 0.0;  // rad
  double dx = 0.0;            // pupil minus CR, px
  double dy = 0.0;
};

CalibrationModel calibrate(std::span<const SwingMeasurement> measurements);

struct GazeAngles {
  double theta_h = 0.0;
  double theta_v = 0.0;
  bool clamped = false;
};

// Gaze relative to the calibration reference axis.
GazeAngles gaze_angle(const CalibrationModel& calib, Point2 pupil, Point2 cr);

std::string calibration_to_json(const CalibrationModel& calib);
CalibrationModel calibration_from_json(const std::string& text);

}  // namespace ocutrack::gaze
