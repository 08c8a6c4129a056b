#include "synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include <json.hpp>

#include "error.hpp"

namespace ocutrack::synth {

using imagekit::BinaryMask;
using imagekit::GrayImage;
using nlohmann::json;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

namespace {

constexpr int kSuper = 8;  // supersamples per axis for coverage

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * unit(rng); }

bool in_unit_range(double v) { return v >= 0.0 && v <= 1.0; }

struct Box {
  int x0, y0, x1, y1;
};

Box clip_box(double cx, double cy, double ex, double ey, int w, int h) {
  return {std::max(0, static_cast<int>(std::floor(cx - ex)) - 1), std::max(0, static_cast<int>(std::floor(cy - ey)) - 1),
          std::min(w - 1, static_cast<int>(std::ceil(cx + ex)) + 1), std::min(h - 1, static_cast<int>(std::ceil(cy + ey)) + 1)};
}

// Fraction of each pixel's area (pixel (x, y) spans [x-0.5, x+0.5]) inside the shape.
template <typename Inside>
std::vector<float> coverage(int w, int h, Box box, Inside inside) {
  std::vector<float> cov(static_cast<std::size_t>(w) * h, 0.0f);
  for (int y = box.y0; y <= box.y1; ++y)
    for (int x = box.x0; x <= box.x1; ++x) {
      int hits = 0;
      for (int j = 0; j < kSuper; ++j) {
        const double sy = y - 0.5 + (j + 0.5) / kSuper;
        for (int i = 0; i < kSuper; ++i) {
          const double sx = x - 0.5 + (i + 0.5) / kSuper;
          if (inside(sx, sy)) ++hits;
        }
      }
      cov[static_cast<std::size_t>(y) * w + x] = static_cast<float>(hits) / (kSuper * kSuper);
    }
  return cov;
}

std::pair<double, double> ellipse_half_extents(const featext::EllipseParams& e) {
  const double c = std::cos(e.angle), s = std::sin(e.angle);
  return {std::sqrt(e.a * e.a * c * c + e.b * e.b * s * s), std::sqrt(e.a * e.a * s * s + e.b * e.b * c * c)};
}

std::vector<float> ellipse_coverage(int w, int h, const featext::EllipseParams& e) {
  const auto [ex, ey] = ellipse_half_extents(e);
  const double c = std::cos(e.angle), s = std::sin(e.angle);
  return coverage(w, h, clip_box(e.center.x, e.center.y, ex, ey, w, h), [&](double x, double y) {
    const double dx = x - e.center.x, dy = y - e.center.y;
    const double u = (c * dx + s * dy) / e.a, v = (-s * dx + c * dy) / e.b;
    return u * u + v * v <= 1.0;
  });
}

void composite(std::vector<float>& img, const std::vector<float>& cov, double level) {
  for (std::size_t i = 0; i < img.size(); ++i)
    if (cov[i] > 0.0f) img[i] = static_cast<float>(img[i] * (1.0 - cov[i]) + level * cov[i]);
}

double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double vx = bx - ax, vy = by - ay;
  const double len2 = vx * vx + vy * vy;
  const double t = len2 > 0 ? std::clamp(((px - ax) * vx + (py - ay) * vy) / len2, 0.0, 1.0) : 0.0;
  return std::hypot(px - (ax + t * vx), py - (ay + t * vy));
}

void check_range(const Range& r, const char* name, double lo = -1e300, double hi = 1e300) {
  if (!(r.lo <= r.hi) || r.lo < lo || r.hi > hi)
    throw Error(ErrorCode::InvalidArgument, std::string("invalid range for ") + name);
}

}  // namespace

void validate(const SceneParams& p) {
  if (p.image_width < 8 || p.image_height < 8) throw Error(ErrorCode::InvalidArgument, "scene image must be at least 8x8");
  if (!(p.pixel_scale > 0) || !(p.eye.rp > 0)) throw Error(ErrorCode::InvalidArgument, "pixel_scale and rp must be positive");
  if (!(p.pupil_radius > 0) || !(p.iris_radius > 0) || !(p.cr_radius > 0))
    throw Error(ErrorCode::InvalidArgument, "scene radii must be positive");
  if (!in_unit_range(p.background_level) || !in_unit_range(p.iris_level) || !in_unit_range(p.pupil_level) ||
      !in_unit_range(p.cr_level) || !in_unit_range(p.hair_brightness))
    throw Error(ErrorCode::InvalidArgument, "scene levels must lie in [0, 1]");
  if (!(p.pupil_level < p.iris_level && p.iris_level < p.cr_level))
    throw Error(ErrorCode::InvalidArgument, "scene levels must satisfy pupil < iris < cr");
  if (p.n_hairs < 0 || !(p.noise_sigma >= 0) || !(p.illum_gradient >= 0) || p.feature_margin < 0)
    throw Error(ErrorCode::InvalidArgument, "negative scene nuisance parameter");
}

gaze::CalibrationModel exact_calibration(double camera_angle, double k_px) {
  gaze::CalibrationModel c;
  c.k_px = k_px;
  c.theta0_h = -camera_angle;
  c.theta0_v = 0.0;
  return c;
}

SynthSample render_eye(const SceneParams& p) {
  validate(p);
  const int w = p.image_width, h = p.image_height;
  const Point2 principal{(w - 1) / 2.0, (h - 1) / 2.0};
  const auto proj = gaze::project_eye(p.eye, p.camera_angle, p.pixel_scale, principal);

  // foreshortening: minor axis along the projected gaze, scaled by cos(eccentricity)
  const gaze::Vec3 g = gaze::gaze_direction(p.eye.gaze_h, p.eye.gaze_v);
  const double cos_ecc = std::clamp(g.x * std::sin(p.camera_angle) + g.z * std::cos(p.camera_angle), 0.0, 1.0);
  const double gdx = proj.pupil.x - proj.cr.x, gdy = proj.pupil.y - proj.cr.y;
  const double minor_dir = std::hypot(gdx, gdy) > 1e-9 ? std::atan2(gdy, gdx) : 0.0;

  featext::EllipseParams pupil;
  pupil.center = proj.pupil;
  pupil.a = p.pupil_radius;
  pupil.b = p.pupil_radius * cos_ecc;
  pupil.angle = cos_ecc < 1.0 ? featext::normalize_angle_pi(minor_dir + std::numbers::pi / 2) : 0.0;
  if (!(pupil.b > 0.25)) throw Error(ErrorCode::FeatureOutOfFrame, "pupil is seen edge-on");

  const auto [ex, ey] = ellipse_half_extents(pupil);
  const double m = p.feature_margin;
  auto fits = [&](double cx, double cy, double hx, double hy) {
    return cx - hx >= m && cy - hy >= m && cx + hx <= w - 1 - m && cy + hy <= h - 1 - m;
  };
  if (!fits(pupil.center.x, pupil.center.y, ex, ey) || !fits(proj.cr.x, proj.cr.y, p.cr_radius, p.cr_radius))
    throw Error(ErrorCode::FeatureOutOfFrame, "pupil or corneal reflection leaves the frame");

  featext::EllipseParams iris = pupil;
  iris.a = p.iris_radius;
  iris.b = p.iris_radius * cos_ecc;

  std::vector<float> v(static_cast<std::size_t>(w) * h, static_cast<float>(p.background_level));
  composite(v, ellipse_coverage(w, h, iris), p.iris_level);
  const auto pupil_cov = ellipse_coverage(w, h, pupil);
  composite(v, pupil_cov, p.pupil_level);
  const Point2 cr = proj.cr;
  const double rr = p.cr_radius * p.cr_radius;
  const auto cr_cov = coverage(w, h, clip_box(cr.x, cr.y, p.cr_radius, p.cr_radius, w, h), [&](double x, double y) {
    return (x - cr.x) * (x - cr.x) + (y - cr.y) * (y - cr.y) <= rr;
  });
  composite(v, cr_cov, p.cr_level);

  std::mt19937_64 rng(p.rng_seed);
  const double illum_dir = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  for (int i = 0; i < p.n_hairs; ++i) {
    // redraw segments that come near the glint; give up on this hair after 20 tries
    for (int attempt = 0; attempt < 20; ++attempt) {
      const double cx = uniform(rng, 0.0, w - 1), cy = uniform(rng, 0.0, h - 1);
      const double ang = uniform(rng, 0.0, std::numbers::pi);
      const double len = uniform(rng, 10.0, 40.0);
      const double width = uniform(rng, 1.0, 2.0);
      const double ax = cx - 0.5 * len * std::cos(ang), ay = cy - 0.5 * len * std::sin(ang);
      const double bx = cx + 0.5 * len * std::cos(ang), by = cy + 0.5 * len * std::sin(ang);
      if (segment_distance(cr.x, cr.y, ax, ay, bx, by) < 2.0 * p.cr_radius + width) continue;
      const double half = 0.5 * width;
      const Box box{std::max(0, static_cast<int>(std::floor(std::min(ax, bx) - half)) - 1),
                    std::max(0, static_cast<int>(std::floor(std::min(ay, by) - half)) - 1),
                    std::min(w - 1, static_cast<int>(std::ceil(std::max(ax, bx) + half)) + 1),
                    std::min(h - 1, static_cast<int>(std::ceil(std::max(ay, by) + half)) + 1)};
      composite(v, coverage(w, h, box, [&](double x, double y) { return segment_distance(x, y, ax, ay, bx, by) <= half; }),
                p.hair_brightness);
      break;
    }
  }

  const double gx = p.illum_gradient * std::cos(illum_dir), gy = p.illum_gradient * std::sin(illum_dir);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      v[static_cast<std::size_t>(y) * w + x] += static_cast<float>(gx * (x - principal.x) + gy * (y - principal.y));
  if (p.noise_sigma > 0) {
    std::normal_distribution<double> noise(0.0, p.noise_sigma);
    for (auto& px : v) px = static_cast<float>(px + noise(rng));
  }
  for (auto& px : v) px = std::clamp(px, 0.0f, 1.0f);

  SynthSample s;
  s.image = GrayImage(w, h);
  s.image.data = std::move(v);
  s.pupil_mask = BinaryMask(w, h);
  s.cr_mask = BinaryMask(w, h);
  for (std::size_t i = 0; i < pupil_cov.size(); ++i) {
    s.pupil_mask.data[i] = pupil_cov[i] >= 0.5f ? 1 : 0;
    s.cr_mask.data[i] = cr_cov[i] >= 0.5f ? 1 : 0;
  }
  s.truth.pupil_center = pupil.center;
  s.truth.pupil_ellipse = pupil;
  s.truth.cr_center = cr;
  s.truth.gaze_h = p.eye.gaze_h;
  s.truth.gaze_v = p.eye.gaze_v;
  s.truth.camera_angle = p.camera_angle;
  s.truth.k_px = p.pixel_scale * p.eye.rp;
  return s;
}

void validate(const SceneDistribution& d) {
  if (d.image_width < 8 || d.image_height < 8) throw Error(ErrorCode::InvalidArgument, "scene image must be at least 8x8");
  if (d.feature_margin < 0) throw Error(ErrorCode::InvalidArgument, "feature_margin must be non-negative");
  const double half_pi = std::numbers::pi / 2;
  check_range(d.gaze_h, "gaze_h", -half_pi, half_pi);
  check_range(d.gaze_v, "gaze_v", -half_pi, half_pi);
  check_range(d.camera_angle, "camera_angle", -half_pi, half_pi);
  check_range(d.corneal_x_mm, "corneal_x_mm");
  check_range(d.corneal_y_mm, "corneal_y_mm");
  check_range(d.pixel_scale, "pixel_scale", 1e-9);
  check_range(d.pupil_radius, "pupil_radius", 1e-9);
  check_range(d.iris_radius, "iris_radius", 1e-9);
  check_range(d.cr_radius, "cr_radius", 1e-9);
  check_range(d.background_level, "background_level", 0, 1);
  check_range(d.iris_level, "iris_level", 0, 1);
  check_range(d.pupil_level, "pupil_level", 0, 1);
  check_range(d.cr_level, "cr_level", 0, 1);
  check_range(d.n_hairs, "n_hairs", 0, 1000);
  check_range(d.hair_brightness, "hair_brightness", 0, 1);
  check_range(d.noise_sigma, "noise_sigma", 0);
  check_range(d.illum_gradient, "illum_gradient", 0);
  if (!(d.pupil_level.hi < d.iris_level.lo && d.iris_level.hi < d.cr_level.lo))
    throw Error(ErrorCode::InvalidArgument, "level ranges must keep pupil < iris < cr");
}

SceneParams draw_params(const SceneDistribution& d, std::uint64_t master_seed, std::size_t index, int attempt) {
  const std::uint64_t counter = static_cast<std::uint64_t>(index) * 16 + static_cast<std::uint64_t>(attempt);
  std::mt19937_64 rng(splitmix64(master_seed ^ splitmix64(counter)));
  auto draw = [&](const Range& r) { return uniform(rng, r.lo, r.hi); };

  SceneParams p;
  p.image_height = d.image_height;
  p.image_width = d.image_width;
  p.feature_margin = d.feature_margin;
  p.eye.gaze_h = draw(d.gaze_h);
  p.eye.gaze_v = draw(d.gaze_v);
  p.camera_angle = draw(d.camera_angle);
  p.eye.corneal_center = {draw(d.corneal_x_mm), draw(d.corneal_y_mm), 0.0};
  p.pixel_scale = draw(d.pixel_scale);
  p.pupil_radius = draw(d.pupil_radius);
  p.iris_radius = draw(d.iris_radius);
  p.cr_radius = draw(d.cr_radius);
  p.background_level = draw(d.background_level);
  p.iris_level = draw(d.iris_level);
  p.pupil_level = draw(d.pupil_level);
  p.cr_level = draw(d.cr_level);
  const auto hairs_lo = static_cast<long long>(std::ceil(d.n_hairs.lo));
  const auto hairs_hi = static_cast<long long>(std::floor(d.n_hairs.hi));
  p.n_hairs = static_cast<int>(hairs_lo + static_cast<long long>(unit(rng) * static_cast<double>(hairs_hi - hairs_lo + 1)));
  p.n_hairs = std::min(p.n_hairs, static_cast<int>(hairs_hi));
  p.hair_brightness = draw(d.hair_brightness);
  p.noise_sigma = draw(d.noise_sigma);
  p.illum_gradient = draw(d.illum_gradient);
  p.rng_seed = rng();
  return p;
}

std::vector<SynthSample> make_dataset(std::size_t n, const SceneDistribution& d, std::uint64_t master_seed) {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "dataset needs at least one sample");
  validate(d);
  std::vector<SynthSample> out;
  out.reserve(n);
  constexpr int kMaxResamples = 10;
  for (std::size_t i = 0; i < n; ++i) {
    for (int attempt = 0;; ++attempt) {
      try {
        out.push_back(render_eye(draw_params(d, master_seed, i, attempt)));
        break;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::FeatureOutOfFrame || attempt >= kMaxResamples) throw;
      }
    }
  }
  return out;
}

std::vector<SynthSample> make_gaze_ramp(std::size_t n, double from, double to, const SceneDistribution& d,
                                        std::uint64_t master_seed) {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "ramp needs at least one frame");
  validate(d);
  const SceneParams base = draw_params(d, master_seed, 0, 0);
  std::vector<SynthSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    SceneParams p = base;
    const double t = n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0;
    p.eye.gaze_h = from + (to - from) * t;
    p.eye.gaze_v = 0.0;
    p.rng_seed = splitmix64(base.rng_seed + i);
    out.push_back(render_eye(p));
  }
  return out;
}

namespace {

json range_json(const Range& r) { return json::array({r.lo, r.hi}); }

Range range_from(const json& j) {
  if (!j.is_array() || j.size() != 2) throw Error(ErrorCode::InvalidArgument, "range must be a [lo, hi] pair");
  return {j[0].get<double>(), j[1].get<double>()};
}

#define OCUTRACK_RANGE_FIELDS(X)                                                                              \
  X(gaze_h) X(gaze_v) X(camera_angle) X(corneal_x_mm) X(corneal_y_mm) X(pixel_scale) X(pupil_radius)         \
  X(iris_radius) X(cr_radius) X(background_level) X(iris_level) X(pupil_level) X(cr_level) X(n_hairs)         \
  X(hair_brightness) X(noise_sigma) X(illum_gradient)

json distribution_json(const SceneDistribution& d) {
  json j;
  j["image_height"] = d.image_height;
  j["image_width"] = d.image_width;
  j["feature_margin"] = d.feature_margin;
#define X(name) j[#name] = range_json(d.name);
  OCUTRACK_RANGE_FIELDS(X)
#undef X
  return j;
}

SceneDistribution distribution_from(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "distribution must be a JSON object");
  SceneDistribution d;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    if (key == "image_height") d.image_height = it->get<int>();
    else if (key == "image_width") d.image_width = it->get<int>();
    else if (key == "feature_margin") d.feature_margin = it->get<int>();
#define X(name) else if (key == #name) d.name = range_from(*it);
    OCUTRACK_RANGE_FIELDS(X)
#undef X
    else throw Error(ErrorCode::InvalidArgument, "unknown distribution key: " + key);
  }
  validate(d);
  return d;
}

#undef OCUTRACK_RANGE_FIELDS

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot open for writing: " + path);
  f << text;
  if (!f) throw Error(ErrorCode::Io, "write failed: " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot open for reading: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

std::string distribution_to_json(const SceneDistribution& d) { return distribution_json(d).dump(2) + "\n"; }

SceneDistribution distribution_from_json(const std::string& text) {
  try {
    return distribution_from(json::parse(text));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("distribution: ") + e.what());
  }
}

std::string truth_to_json(const Truth& t) {
  json j{{"pupil_center", {t.pupil_center.x, t.pupil_center.y}},
         {"pupil_ellipse", {{"a", t.pupil_ellipse.a}, {"b", t.pupil_ellipse.b}, {"angle", t.pupil_ellipse.angle}}},
         {"cr_center", {t.cr_center.x, t.cr_center.y}},
         {"gaze_h_rad", t.gaze_h},
         {"gaze_v_rad", t.gaze_v},
         {"camera_angle_rad", t.camera_angle},
         {"k_px", t.k_px}};
  return j.dump(2) + "\n";
}

Truth truth_from_json(const std::string& text) {
  try {
    const auto j = json::parse(text);
    Truth t;
    t.pupil_center = {j.at("pupil_center").at(0).get<double>(), j.at("pupil_center").at(1).get<double>()};
    t.pupil_ellipse.center = t.pupil_center;
    t.pupil_ellipse.a = j.at("pupil_ellipse").at("a").get<double>();
    t.pupil_ellipse.b = j.at("pupil_ellipse").at("b").get<double>();
    t.pupil_ellipse.angle = j.at("pupil_ellipse").at("angle").get<double>();
    t.cr_center = {j.at("cr_center").at(0).get<double>(), j.at("cr_center").at(1).get<double>()};
    t.gaze_h = j.at("gaze_h_rad").get<double>();
    t.gaze_v = j.at("gaze_v_rad").get<double>();
    t.camera_angle = j.at("camera_angle_rad").get<double>();
    t.k_px = j.at("k_px").get<double>();
    return t;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedHeader, std::string("truth file: ") + e.what());
  }
}

std::string sample_stem(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04zu", index);
  return buf;
}

std::string save_dataset(const std::vector<SynthSample>& samples, const SceneDistribution& d,
                         std::uint64_t master_seed, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error(ErrorCode::Io, "cannot create dataset directory: " + dir);
  const fs::path root(dir);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::string stem = sample_stem(i);
    imagekit::save_pgm_file(samples[i].image, (root / (stem + "_img.pgm")).string());
    imagekit::save_pgm_file(imagekit::mask_to_image(samples[i].pupil_mask), (root / (stem + "_pupil.pgm")).string());
    imagekit::save_pgm_file(imagekit::mask_to_image(samples[i].cr_mask), (root / (stem + "_cr.pgm")).string());
    write_text((root / (stem + "_truth.json")).string(), truth_to_json(samples[i].truth));
  }
  json manifest{{"count", samples.size()}, {"master_seed", master_seed}, {"distribution", distribution_json(d)}};
  const std::string path = (root / "manifest.json").string();
  write_text(path, manifest.dump(2) + "\n");
  return path;
}

LoadedDataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  LoadedDataset ds;
  std::size_t count = 0;
  try {
    const auto manifest = json::parse(read_text((root / "manifest.json").string()));
    count = manifest.at("count").get<std::size_t>();
    ds.master_seed = manifest.at("master_seed").get<std::uint64_t>();
    ds.distribution = distribution_from(manifest.at("distribution"));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedHeader, std::string("dataset manifest: ") + e.what());
  }
  ds.samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::string stem = sample_stem(i);
    SynthSample s;
    s.image = imagekit::load_pgm_file((root / (stem + "_img.pgm")).string());
    s.pupil_mask = imagekit::image_to_mask(imagekit::load_pgm_file((root / (stem + "_pupil.pgm")).string()));
    s.cr_mask = imagekit::image_to_mask(imagekit::load_pgm_file((root / (stem + "_cr.pgm")).string()));
    s.truth = truth_from_json(read_text((root / (stem + "_truth.json")).string()));
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace ocutrack::synth
