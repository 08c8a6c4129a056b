#include "gaze.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

#include "error.hpp"

namespace ocutrack::gaze {

Vec3 gaze_direction(double gaze_h, double gaze_v) {
  return Vec3{std::cos(gaze_v) * std::sin(gaze_h), std::sin(gaze_v), std::cos(gaze_v) * std::cos(gaze_h)};
}

Projection project_eye(const EyeModel3D& eye, double camera_angle, double pixel_scale, Point2 principal_point) {
  const Vec3 right{std::cos(camera_angle), 0.0, -std::sin(camera_angle)};
  auto to_pixels = [&](const Vec3& p) {
    const double u = p.x * right.x + p.y * right.y + p.z * right.z;
    const double v = p.y;
    return Point2{principal_point.x + pixel_scale * u, principal_point.y - pixel_scale * v};
  };
  const Vec3 g = gaze_direction(eye.gaze_h, eye.gaze_v);
  const Vec3& c = eye.corneal_center;
  const Vec3 pupil{c.x + eye.rp * g.x, c.y + eye.rp * g.y, c.z + eye.rp * g.z};
  return Projection{to_pixels(pupil), to_pixels(c)};
}

CalibrationModel calibrate(std::span<const SwingMeasurement> m) {
  std::set<double> distinct;
  for (const auto& s : m) distinct.insert(s.camera_angle);
  if (distinct.size() < 2) throw Error(ErrorCode::InsufficientData, "calibration needs at least two distinct swing angles");

  // dx_i = u cos(phi_i) - v sin(phi_i); 2x2 normal equations
  double scc = 0, sss = 0, scs = 0, bc = 0, bs = 0, dy_sum = 0;
  for (const auto& s : m) {
    const double c = std::cos(s.camera_angle), sn = -std::sin(s.camera_angle);
    scc += c * c;
    sss += sn * sn;
    scs += c * sn;
    bc += c * s.dx;
    bs += sn * s.dx;
    dy_sum += s.dy;
  }
  const double det = scc * sss - scs * scs;
  if (std::abs(det) < 1e-12 * std::max(1.0, scc * sss))
    throw Error(ErrorCode::DegenerateGeometry, "swing angles do not determine the horizontal fit");
  const double u = (bc * sss - bs * scs) / det;
  const double v = (scc * bs - scs * bc) / det;
  const double dy_mean = dy_sum / static_cast<double>(m.size());

  const double horizontal = std::hypot(u, v);  // k cos(theta0_v)
  const double k = std::hypot(horizontal, dy_mean);
  double scatter = 0.0;
  for (const auto& s : m) scatter += std::abs(s.dx) + std::abs(s.dy);
  if (!(k > 1e-9 * std::max(1.0, scatter / static_cast<double>(m.size()))) || horizontal < 1e-12)
    throw Error(ErrorCode::DegenerateGeometry, "fitted rotation radius is zero");

  CalibrationModel calib;
  calib.k_px = k;
  calib.theta0_h = std::atan2(u, v);
  calib.theta0_v = std::atan2(-dy_mean, horizontal) + 0.0;  // no negative zero
  calib.n_measurements = static_cast<int>(m.size());
  double ss = 0.0;
  for (const auto& s : m) {
    const double rx = s.dx - (u * std::cos(s.camera_angle) - v * std::sin(s.camera_angle));
    const double ry = s.dy - dy_mean;
    ss += rx * rx + ry * ry;
  }
  calib.fit_residual_px = std::sqrt(ss / static_cast<double>(m.size()));
  return calib;
}

GazeAngles gaze_angle(const CalibrationModel& calib, Point2 pupil, Point2 cr) {
  GazeAngles out;
  if (!(calib.k_px > 0.0)) throw Error(ErrorCode::InvalidArgument, "calibration radius must be positive");
  auto clamped_asin = [&](double s) {
    if (s > 1.0 || s < -1.0) {
      out.clamped = true;
      s = std::clamp(s, -1.0, 1.0);
    }
    return std::asin(s);
  };
  const double dx = pupil.x - cr.x;
  const double dy = pupil.y - cr.y;
  const double vertical = -clamped_asin(dy / calib.k_px);
  const double horizontal_radius = calib.k_px * std::cos(vertical);
  const double horizontal = horizontal_radius > 0.0 ? clamped_asin(dx / horizontal_radius) : 0.0;
  out.theta_h = horizontal - calib.theta0_h;
  out.theta_v = vertical - calib.theta0_v;
  return out;
}

std::string calibration_to_json(const CalibrationModel& c) {
  nlohmann::json j{{"k_px", c.k_px},
                   {"theta0_h_rad", c.theta0_h},
                   {"theta0_v_rad", c.theta0_v},
                   {"fit_residual_px", c.fit_residual_px},
                   {"n_measurements", c.n_measurements}};
  return j.dump(2) + "\n";
}

CalibrationModel calibration_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    CalibrationModel c;
    c.k_px = j.at("k_px").get<double>();
    c.theta0_h = j.at("theta0_h_rad").get<double>();
    c.theta0_v = j.at("theta0_v_rad").get<double>();
    c.fit_residual_px = j.value("fit_residual_px", 0.0);
    c.n_measurements = j.value("n_measurements", 0);
    if (!(c.k_px > 0.0)) throw Error(ErrorCode::InvalidArgument, "calibration k_px must be positive");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("calibration file: ") + e.what());
  }
}

}  // namespace ocutrack::gaze
