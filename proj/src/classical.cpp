#include "classical.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "error.hpp"

namespace ocutrack::classical {

using imagekit::BinaryMask;
using imagekit::GradientField;
using imagekit::GrayImage;

void validate(const StarburstConfig& cfg) {
  if (cfg.n_rays < 8) throw Error(ErrorCode::InvalidArgument, "starburst needs at least 8 rays");
  if (cfg.max_iterations < 1) throw Error(ErrorCode::InvalidArgument, "starburst max_iterations must be >= 1");
  if (!(cfg.max_radius > 1.0)) throw Error(ErrorCode::InvalidArgument, "starburst max_radius must exceed 1 px");
  if (!(cfg.gradient_threshold > 0.0 && cfg.gradient_threshold <= 1.0))
    throw Error(ErrorCode::InvalidArgument, "starburst gradient_threshold must be in (0, 1]");
  if (!(cfg.convergence_eps > 0.0)) throw Error(ErrorCode::InvalidArgument, "starburst convergence_eps must be positive");
}

namespace {

// Separable box filter with zero padding; width is forced odd so the
// response stays centered.
std::vector<double> box_filter(const std::vector<double>& in, int w, int h, int width) {
  const int half = std::max(width, 1) / 2;
  std::vector<double> tmp(in.size(), 0.0), out(in.size(), 0.0);
  for (int y = 0; y < h; ++y) {
    const double* row = &in[static_cast<std::size_t>(y) * w];
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int dx = -half; dx <= half; ++dx) {
        const int xx = x + dx;
        if (xx >= 0 && xx < w) s += row[xx];
      }
      tmp[static_cast<std::size_t>(y) * w + x] = s;
    }
  }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int dy = -half; dy <= half; ++dy) {
        const int yy = y + dy;
        if (yy >= 0 && yy < h) s += tmp[static_cast<std::size_t>(yy) * w + x];
      }
      out[static_cast<std::size_t>(y) * w + x] = s;
    }
  return out;
}

// Bilinear sample of a per-pixel field; caller keeps (x, y) inside [0, w-1] x [0, h-1].
float bilinear(const std::vector<float>& f, int w, int h, double x, double y) {
  const int x0 = std::clamp(static_cast<int>(std::floor(x)), 0, w - 1);
  const int y0 = std::clamp(static_cast<int>(std::floor(y)), 0, h - 1);
  const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const double fx = x - x0, fy = y - y0;
  auto v = [&](int xx, int yy) { return static_cast<double>(f[static_cast<std::size_t>(yy) * w + xx]); };
  const double top = v(x0, y0) * (1 - fx) + v(x1, y0) * fx;
  const double bot = v(x0, y1) * (1 - fx) + v(x1, y1) * fx;
  return static_cast<float>(top * (1 - fy) + bot * fy);
}

constexpr double kRayStep = 0.25;
constexpr double kMinRayDerivative = 1e-4;

// Returns the dark-to-light edge distance along one ray, or a negative value.
double ray_edge(const GradientField& g, Point2 c, double dx, double dy, const StarburstConfig& cfg) {
  const int w = g.width, h = g.height;
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(cfg.max_radius / kRayStep) + 1);
  for (double t = kRayStep; t <= cfg.max_radius; t += kRayStep) {
    const double x = c.x + t * dx, y = c.y + t * dy;
    if (x < 0 || y < 0 || x > w - 1 || y > h - 1) break;
    d.push_back(bilinear(g.gx, w, h, x, y) * dx + bilinear(g.gy, w, h, x, y) * dy);
  }
  if (d.size() < 3) return -1.0;
  const double peak = *std::max_element(d.begin(), d.end());
  if (!(peak > kMinRayDerivative)) return -1.0;
  const double thr = cfg.gradient_threshold * peak;
  std::size_t i = 0;
  while (i < d.size() && d[i] < thr) ++i;
  if (i == d.size()) return -1.0;
  while (i + 1 < d.size() && d[i + 1] >= d[i]) ++i;
  double t = kRayStep * static_cast<double>(i + 1);
  if (i > 0 && i + 1 < d.size()) {
    const double ym = d[i - 1], y0 = d[i], yp = d[i + 1];
    const double den = ym - 2.0 * y0 + yp;
    if (den < 0.0) t += kRayStep * std::clamp(0.5 * (ym - yp) / den, -0.5, 0.5);
  }
  return t;
}

// Normalized ellipse radius of p: 1 on the boundary.
double ellipse_rho(const featext::EllipseParams& e, Point2 p) {
  const double c = std::cos(e.angle), s = std::sin(e.angle);
  const double x = p.x - e.center.x, y = p.y - e.center.y;
  const double u = (c * x + s * y) / e.a, v = (-s * x + c * y) / e.b;
  return std::hypot(u, v);
}

// Fit, then refit once without points far from the first ellipse.
featext::EllipseParams robust_fit(std::vector<Point2>& pts) {
  auto e = featext::fit_ellipse_points(pts);
  std::vector<double> dev(pts.size());
  const double scale = std::sqrt(e.a * e.b);
  for (std::size_t i = 0; i < pts.size(); ++i) dev[i] = std::abs(ellipse_rho(e, pts[i]) - 1.0) * scale;
  std::vector<double> sorted = dev;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2), sorted.end());
  const double cut = std::max(1.5, 3.0 * sorted[sorted.size() / 2]);
  std::vector<Point2> kept;
  for (std::size_t i = 0; i < pts.size(); ++i)
    if (dev[i] <= cut) kept.push_back(pts[i]);
  if (kept.size() == pts.size() || kept.size() < 5) return e;
  pts = std::move(kept);
  return featext::fit_ellipse_points(pts);
}

}  // namespace

Point2 radial_symmetry_center(const GrayImage& img, const std::vector<int>& radii, Polarity polarity) {
  if (radii.empty()) throw Error(ErrorCode::InvalidArgument, "radial symmetry needs at least one radius");
  const int rmax = *std::max_element(radii.begin(), radii.end());
  if (*std::min_element(radii.begin(), radii.end()) < 1)
    throw Error(ErrorCode::InvalidArgument, "radial symmetry radii must be positive");
  if (img.width <= 2 * rmax || img.height <= 2 * rmax)
    throw Error(ErrorCode::ImageTooSmall, "image must exceed twice the largest radius");

  const GradientField g = imagekit::sobel(img);
  const int w = g.width, h = g.height;
  std::vector<float> mags = g.magnitude;
  const std::size_t k = mags.size() * 9 / 10;
  std::nth_element(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(k), mags.end());
  const float cutoff = mags[k];

  std::vector<std::size_t> voters;
  for (std::size_t i = 0; i < g.magnitude.size(); ++i)
    if (g.magnitude[i] > cutoff && g.magnitude[i] > 0.0f) voters.push_back(i);
  if (voters.empty()) throw Error(ErrorCode::NoCenter, "no gradient above the voting threshold");

  const double sign = polarity == Polarity::Dark ? -1.0 : 1.0;
  std::vector<double> total(static_cast<std::size_t>(w) * h, 0.0);
  for (int r : radii) {
    std::vector<double> votes(total.size(), 0.0);
    for (std::size_t i : voters) {
      const int x = static_cast<int>(i % static_cast<std::size_t>(w));
      const int y = static_cast<int>(i / static_cast<std::size_t>(w));
      const double m = g.magnitude[i];
      const int vx = x + static_cast<int>(std::lround(sign * r * g.gx[i] / m));
      const int vy = y + static_cast<int>(std::lround(sign * r * g.gy[i] / m));
      if (vx < 0 || vy < 0 || vx >= w || vy >= h) continue;
      votes[static_cast<std::size_t>(vy) * w + vx] += m;
    }
    const auto smooth = box_filter(votes, w, h, (r / 2) | 1);
    for (std::size_t i = 0; i < total.size(); ++i) total[i] += smooth[i];
  }

  const auto best = static_cast<std::size_t>(std::max_element(total.begin(), total.end()) - total.begin());
  if (!(total[best] > 0.0)) throw Error(ErrorCode::NoCenter, "no votes landed inside the image");
  const int bx = static_cast<int>(best % static_cast<std::size_t>(w));
  const int by = static_cast<int>(best / static_cast<std::size_t>(w));
  // subpixel: vote-weighted centroid of the 3x3 neighbourhood
  double sx = 0, sy = 0, sw = 0;
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) {
      const int x = bx + dx, y = by + dy;
      if (x < 0 || y < 0 || x >= w || y >= h) continue;
      const double v = total[static_cast<std::size_t>(y) * w + x];
      sx += v * x;
      sy += v * y;
      sw += v;
    }
  return {sx / sw, sy / sw};
}

StarburstResult starburst_pupil(const GrayImage& img, Point2 seed, const StarburstConfig& cfg) {
  validate(cfg);
  if (!(seed.x >= 0 && seed.y >= 0 && seed.x <= img.width - 1 && seed.y <= img.height - 1))
    throw Error(ErrorCode::InvalidArgument, "starburst seed lies outside the image");
  const GradientField g = imagekit::sobel(img);

  StarburstResult res;
  Point2 center = seed;
  for (int it = 1; it <= cfg.max_iterations; ++it) {
    std::vector<Point2> pts;
    for (int i = 0; i < cfg.n_rays; ++i) {
      const double th = 2.0 * std::numbers::pi * i / cfg.n_rays;
      const double dx = std::cos(th), dy = std::sin(th);
      const double t = ray_edge(g, center, dx, dy, cfg);
      if (t > 0) pts.push_back({center.x + t * dx, center.y + t * dy});
    }
    if (pts.size() < 5) throw Error(ErrorCode::TooFewEdges, "starburst found fewer than 5 edge points");
    res.ellipse = robust_fit(pts);
    res.edge_points = std::move(pts);
    res.iterations = it;
    const double moved = std::hypot(res.ellipse.center.x - center.x, res.ellipse.center.y - center.y);
    center = res.ellipse.center;
    if (moved < cfg.convergence_eps) {
      res.converged = true;
      break;
    }
    if (!(center.x >= 0 && center.y >= 0 && center.x <= img.width - 1 && center.y <= img.height - 1)) break;
  }
  return res;
}

GrayImage inpaint_region(const GrayImage& img, const BinaryMask& region, int margin) {
  if (!img.same_size(region.width, region.height))
    throw Error(ErrorCode::DimensionMismatch, "in-paint mask and image differ in size");
  if (margin < 0) throw Error(ErrorCode::InvalidArgument, "in-paint margin must be non-negative");
  const int w = img.width, h = img.height;
  // grow the region by `margin` (Chebyshev)
  std::vector<std::uint8_t> unknown(region.data.size(), 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!region.at(x, y)) continue;
      for (int dy = -margin; dy <= margin; ++dy)
        for (int dx = -margin; dx <= margin; ++dx) {
          const int xx = x + dx, yy = y + dy;
          if (xx >= 0 && yy >= 0 && xx < w && yy < h) unknown[static_cast<std::size_t>(yy) * w + xx] = 1;
        }
    }

  // peel inward: each pass fills the unknown pixels that touch known ones with
  // the median of their known 5x5 neighbours
  GrayImage out = img;
  std::vector<float> window;
  for (;;) {
    std::vector<std::pair<std::size_t, float>> fills;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (!unknown[static_cast<std::size_t>(y) * w + x]) continue;
        window.clear();
        for (int dy = -2; dy <= 2; ++dy)
          for (int dx = -2; dx <= 2; ++dx) {
            const int xx = x + dx, yy = y + dy;
            if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
            const std::size_t j = static_cast<std::size_t>(yy) * w + xx;
            if (!unknown[j]) window.push_back(out.data[j]);
          }
        if (window.empty()) continue;
        std::nth_element(window.begin(), window.begin() + static_cast<std::ptrdiff_t>(window.size() / 2), window.end());
        fills.emplace_back(static_cast<std::size_t>(y) * w + x, window[window.size() / 2]);
      }
    if (fills.empty()) break;
    for (auto [i, v] : fills) {
      out.data[i] = v;
      unknown[i] = 0;
    }
  }
  return out;
}

featext::FrameFeatures classical_pipeline(const GrayImage& img, const ClassicalConfig& cfg) {
  featext::FrameFeatures f;
  f.source = featext::Source::Classical;
  if (img.width < 3 || img.height < 3) return f;

  GrayImage work = img;
  const BinaryMask bright = imagekit::threshold(img, cfg.cr_threshold);
  if (auto cr = featext::extract_cr(bright, img, cfg.cr_area_range)) {
    f.cr = cr->center;
    f.cr_confidence = cr->confidence;
    const auto labels = imagekit::label_image(bright);
    BinaryMask blob(img.width, img.height);
    for (std::size_t i = 0; i < labels.size(); ++i) blob.data[i] = labels[i] == cr->region.label ? 1 : 0;
    work = inpaint_region(img, blob, cfg.cr_inpaint_margin);
  }

  try {
    const Point2 rough = radial_symmetry_center(work, cfg.radii, Polarity::Dark);
    const auto sb = starburst_pupil(work, rough, cfg.starburst);
    const auto& e = sb.ellipse;
    const bool inside = e.center.x >= 0 && e.center.y >= 0 && e.center.x <= img.width - 1 &&
                        e.center.y <= img.height - 1;
    if (inside && std::isfinite(e.a) && e.a <= 2.0 * cfg.starburst.max_radius) {
      f.pupil = e;
      f.pupil_confidence =
          std::clamp(static_cast<double>(sb.edge_points.size()) / cfg.starburst.n_rays, 0.0, 1.0);
    }
  } catch (const Error&) {
    // no usable pupil in this frame
  }
  return f;
}

}  // namespace ocutrack::classical
