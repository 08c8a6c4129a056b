#include <doctest.h>

#include <cmath>
#include <json.hpp>
#include <random>

#include "error.hpp"
#include "gaze.hpp"
#include "support/oracles.hpp"

using namespace ocutrack;
using namespace ocutrack::gaze;
using oracle::kPi;

namespace {

constexpr double kDeg = kPi / 180.0;

// Pupil-minus-CR offset for Fick gaze (h, v) seen by a camera swung by phi:
// the gaze vector rotated into camera coordinates, orthographically projected.
Point2 offset_oracle(double k, double h, double v, double phi) {
  return {k * std::cos(v) * std::sin(h - phi), -k * std::sin(v)};
}

std::vector<SwingMeasurement> swing(double k, double h, double v, const std::vector<double>& phis) {
  std::vector<SwingMeasurement> m;
  for (double phi : phis) {
    const Point2 d = offset_oracle(k, h, v, phi);
    m.push_back({phi, d.x, d.y});
  }
  return m;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("project_eye examples") {
  EyeModel3D eye;
  eye.corneal_center = {0.3, -0.2, 0.1};
  const Projection a = project_eye(eye, 0.0, 100.0);
  CHECK(a.pupil.x == doctest::Approx(a.cr.x));
  CHECK(a.pupil.y == doctest::Approx(a.cr.y));

  eye.corneal_center = {};
  eye.rp = 1.0;
  eye.gaze_h = 30 * kDeg;
  const Projection b = project_eye(eye, 0.0, 100.0);
  CHECK(b.pupil.x - b.cr.x == doctest::Approx(50.0));
  CHECK(b.pupil.y - b.cr.y == doctest::Approx(0.0));
}

TEST_CASE("project_eye sweep matches the offset formula") {
  EyeModel3D eye;
  eye.rp = 1.3;
  eye.corneal_center = {0.2, 0.1, -0.4};
  const double scale = 57.0;
  for (double phi : {-0.3, 0.0, 0.25}) {
    for (int i = -30; i <= 30; ++i) {
      eye.gaze_h = i * kDeg;
      eye.gaze_v = 0.0;
      const Projection p = project_eye(eye, phi, scale);
      REQUIRE((p.pupil.x - p.cr.x) / (scale * eye.rp) == doctest::Approx(std::sin(eye.gaze_h - phi)).epsilon(1e-9));
      REQUIRE(std::abs(p.pupil.y - p.cr.y) < 1e-9);
    }
  }
  // with vertical gaze as well
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> g(-30 * kDeg, 30 * kDeg);
  for (int i = 0; i < 100; ++i) {
    eye.gaze_h = g(rng);
    eye.gaze_v = g(rng);
    const double phi = g(rng);
    const Projection p = project_eye(eye, phi, scale, {64, 64});
    const Point2 want = offset_oracle(scale * eye.rp, eye.gaze_h, eye.gaze_v, phi);
    REQUIRE(p.pupil.x - p.cr.x == doctest::Approx(want.x).epsilon(1e-9));
    REQUIRE(p.pupil.y - p.cr.y == doctest::Approx(want.y).epsilon(1e-9));
  }
}

TEST_CASE("calibrate recovers exact swing parameters") {
  const auto m = swing(120.0, 5 * kDeg, 0.0, {-20 * kDeg, 0.0, 20 * kDeg});
  const CalibrationModel c = calibrate(m);
  CHECK(std::abs(c.k_px - 120.0) <= 1e-6);
  CHECK(std::abs(c.theta0_h - 5 * kDeg) <= 1e-8);
  CHECK(std::abs(c.theta0_v) <= 1e-12);
  CHECK(c.fit_residual_px < 1e-9);
  CHECK(c.n_measurements == 3);
}

TEST_CASE("calibrate is exact for any two or more distinct angles") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> k(10, 300), h(-40 * kDeg, 40 * kDeg), v(-20 * kDeg, 20 * kDeg),
      phi(-60 * kDeg, 60 * kDeg);
  std::uniform_int_distribution<int> n(2, 12);
  for (int trial = 0; trial < 200; ++trial) {
    const double kk = k(rng), hh = h(rng), vv = v(rng);
    std::vector<double> phis;
    const int count = n(rng);
    while (static_cast<int>(phis.size()) < count) {
      const double p = phi(rng);
      phis.push_back(p);
    }
    if (std::abs(phis[0] - phis[1]) < 5 * kDeg) phis[1] = phis[0] + 10 * kDeg;
    const CalibrationModel c = calibrate(swing(kk, hh, vv, phis));
    REQUIRE(c.k_px == doctest::Approx(kk).epsilon(1e-9));
    REQUIRE(std::abs(c.theta0_h - hh) < 1e-9);
    REQUIRE(std::abs(c.theta0_v - vv) < 1e-9);
  }
}

TEST_CASE("calibrate error cases") {
  CHECK(code_of([] { calibrate(swing(100, 0, 0, {0.0, 0.0})); }) == ErrorCode::InsufficientData);
  CHECK(code_of([] { calibrate(swing(100, 0, 0, {0.1})); }) == ErrorCode::InsufficientData);
  std::vector<SwingMeasurement> zero{{-0.2, 0, 0}, {0.0, 0, 0}, {0.2, 0, 0}};
  CHECK(code_of([&] { calibrate(zero); }) == ErrorCode::DegenerateGeometry);
}

TEST_CASE("noisy nine-angle swing") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> noise(0.0, 0.5);
  std::vector<double> phis;
  for (int i = -4; i <= 4; ++i) phis.push_back(i * 10 * kDeg);
  double worst_k = 0, worst_h = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto m = swing(120.0, 5 * kDeg, 0.0, phis);
    for (auto& s : m) {
      s.dx += noise(rng);
      s.dy += noise(rng);
    }
    const CalibrationModel c = calibrate(m);
    worst_k = std::max(worst_k, std::abs(c.k_px / 120.0 - 1.0));
    worst_h = std::max(worst_h, std::abs(c.theta0_h - 5 * kDeg));
    REQUIRE(c.fit_residual_px > 0.0);
  }
  INFO("worst k error " << worst_k << ", worst theta0_h error (deg) " << worst_h / kDeg);
  CHECK(worst_k <= 0.02);
  CHECK(worst_h <= 0.5 * kDeg);
}

TEST_CASE("gaze_angle examples") {
  CalibrationModel c;
  c.k_px = 80.0;
  const GazeAngles z = gaze_angle(c, {10, 10}, {10, 10});
  CHECK(z.theta_h == 0.0);
  CHECK(z.theta_v == 0.0);
  CHECK_FALSE(z.clamped);
  const GazeAngles h = gaze_angle(c, {50, 0}, {10, 0});
  CHECK(h.theta_h == doctest::Approx(30 * kDeg));
  CHECK(std::abs(h.theta_v) < 1e-15);

  const GazeAngles over = gaze_angle(c, {200, 0}, {0, 0});
  CHECK(over.clamped);
  CHECK(over.theta_h == doctest::Approx(kPi / 2));

  c.k_px = 0.0;
  CHECK_THROWS_AS(gaze_angle(c, {0, 0}, {0, 0}), Error);
}

TEST_CASE("round trip through projection, swing calibration and inversion") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> g(-30 * kDeg, 30 * kDeg);
  EyeModel3D eye;
  eye.rp = 1.1;
  eye.corneal_center = {0.05, -0.02, 0.0};
  const double scale = 40.0;

  std::vector<SwingMeasurement> m;
  for (int i = -3; i <= 3; ++i) {
    const Projection p = project_eye(eye, i * 8 * kDeg, scale);
    m.push_back({i * 8 * kDeg, p.pupil.x - p.cr.x, p.pupil.y - p.cr.y});
  }
  const CalibrationModel c = calibrate(m);
  double ss = 0.0, worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    eye.gaze_h = g(rng);
    eye.gaze_v = g(rng);
    const Projection p = project_eye(eye, 0.0, scale, {66, 66});
    const GazeAngles a = gaze_angle(c, p.pupil, p.cr);
    const double e2 = std::pow(a.theta_h - eye.gaze_h, 2) + std::pow(a.theta_v - eye.gaze_v, 2);
    ss += e2;
    worst = std::max(worst, std::sqrt(e2));
    REQUIRE_FALSE(a.clamped);
  }
  CHECK(std::sqrt(ss / 200) <= 1 * kDeg);
  CHECK(worst <= 1e-6);
}

TEST_CASE("gaze_angle ignores common translation") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> pos(-50, 50), off(-500, 500);
  CalibrationModel c;
  c.k_px = 60.0;
  c.theta0_h = 0.1;
  c.theta0_v = -0.05;
  for (int i = 0; i < 100; ++i) {
    const Point2 p{pos(rng) * 0.5, pos(rng) * 0.5}, cr{pos(rng) * 0.2, pos(rng) * 0.2};
    const double tx = off(rng), ty = off(rng);
    const GazeAngles a = gaze_angle(c, p, cr);
    const GazeAngles b = gaze_angle(c, {p.x + tx, p.y + ty}, {cr.x + tx, cr.y + ty});
    REQUIRE(a.theta_h == doctest::Approx(b.theta_h).epsilon(1e-9));
    REQUIRE(a.theta_v == doctest::Approx(b.theta_v).epsilon(1e-9));
  }
}

TEST_CASE("theta_h increases strictly with dx") {
  CalibrationModel c;
  c.k_px = 50.0;
  double prev = -10.0;
  for (int i = -499; i <= 499; ++i) {
    const double th = gaze_angle(c, {i * 0.1, 0.0}, {0.0, 0.0}).theta_h;
    REQUIRE(th > prev);
    prev = th;
  }
}

TEST_CASE("calibration json") {
  CalibrationModel c;
  c.k_px = 24.5;
  c.theta0_h = 0.01;
  c.theta0_v = -0.02;
  c.fit_residual_px = 0.3;
  c.n_measurements = 9;
  const std::string text = calibration_to_json(c);
  const auto j = nlohmann::json::parse(text);
  for (const char* key : {"k_px", "theta0_h_rad", "theta0_v_rad", "fit_residual_px", "n_measurements"})
    CHECK(j.contains(key));
  const CalibrationModel back = calibration_from_json(text);
  CHECK(back.k_px == c.k_px);
  CHECK(back.theta0_h == c.theta0_h);
  CHECK(back.theta0_v == c.theta0_v);
  CHECK(back.n_measurements == 9);
  CHECK_THROWS_AS(calibration_from_json("{\"k_px\": -1, \"theta0_h_rad\": 0, \"theta0_v_rad\": 0}"), Error);
  CHECK_THROWS_AS(calibration_from_json("not json"), Error);
}
