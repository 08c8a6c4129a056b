#include "featext.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "error.hpp"

namespace ocutrack::featext {

double normalize_angle_pi(double angle) {
  double a = std::fmod(angle, std::numbers::pi);
  if (a < 0) a += std::numbers::pi;
  if (a >= std::numbers::pi) a -= std::numbers::pi;
  return a;
}

namespace {

// Ellipse from a symmetric 2x2 covariance; a = 2 sqrt(lambda_max).
EllipseParams ellipse_from_covariance(Point2 center, double sxx, double sxy, double syy) {
  const double tr = sxx + syy;
  const double diff = sxx - syy;
  const double disc = std::sqrt(diff * diff / 4.0 + sxy * sxy);
  const double l1 = tr / 2.0 + disc;
  const double l2 = std::max(tr / 2.0 - disc, 0.0);
  EllipseParams e;
  e.center = center;
  e.a = 2.0 * std::sqrt(l1);
  e.b = 2.0 * std::sqrt(l2);
  e.angle = disc == 0.0 ? 0.0 : normalize_angle_pi(0.5 * std::atan2(2.0 * sxy, diff));
  return e;
}

}  // namespace

EllipseParams moments_ellipse(std::span<const std::pair<int, int>> pixels) {
  const double n = static_cast<double>(pixels.size());
  double mx = 0, my = 0;
  for (auto [x, y] : pixels) {
    mx += x;
    my += y;
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (auto [x, y] : pixels) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
    syy += (y - my) * (y - my);
  }
  // each pixel is a unit square: its own variance 1/12 adds to the center scatter
  constexpr double kPixelVariance = 1.0 / 12.0;
  return ellipse_from_covariance({mx, my}, sxx / n + kPixelVariance, sxy / n, syy / n + kPixelVariance);
}

std::optional<PupilEstimate> extract_pupil(const imagekit::BinaryMask& mask) {
  const std::size_t total = mask.count();
  if (total == 0) return std::nullopt;
  int n_labels = 0;
  const auto labels = imagekit::label_image(mask, &n_labels);
  std::vector<int> area(static_cast<std::size_t>(n_labels) + 1, 0);
  for (int l : labels) ++area[static_cast<std::size_t>(l)];
  area[0] = 0;
  // largest component, lowest label on ties (matches connected_components order)
  const int best = static_cast<int>(std::max_element(area.begin() + 1, area.end()) - area.begin());

  std::vector<std::pair<int, int>> pixels;
  pixels.reserve(static_cast<std::size_t>(area[best]));
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (labels[static_cast<std::size_t>(y) * mask.width + x] == best) pixels.emplace_back(x, y);

  PupilEstimate est;
  est.ellipse = moments_ellipse(pixels);
  const double comp = static_cast<double>(pixels.size());
  const double fill = std::clamp(comp / (std::numbers::pi * est.ellipse.a * est.ellipse.b), 0.0, 1.0);
  est.confidence = comp / static_cast<double>(total) * fill;
  return est;
}

std::optional<CrEstimate> extract_cr(const imagekit::BinaryMask& mask, const imagekit::GrayImage& image,
                                     AreaRange range) {
  if (!image.same_size(mask.width, mask.height))
    throw Error(ErrorCode::DimensionMismatch, "CR mask and image differ in size");
  const auto regions = imagekit::connected_components(mask, &image);
  const imagekit::Region* best = nullptr;
  const imagekit::Region* second = nullptr;
  for (const auto& r : regions) {
    if (r.area < range.min || r.area > range.max) continue;
    if (!best || *r.mean_intensity > *best->mean_intensity) {
      second = best;
      best = &r;
    } else if (!second || *r.mean_intensity > *second->mean_intensity) {
      second = &r;
    }
  }
  if (!best) return std::nullopt;
  CrEstimate est;
  est.center = best->centroid;
  est.region = *best;
  const double top = *best->mean_intensity;
  const double margin = second && top > 0.0 ? 1.0 - *second->mean_intensity / top : 1.0;
  est.confidence = std::clamp(top * margin, 0.0, 1.0);
  return est;
}

EllipseParams fit_ellipse_points(std::span<const Point2> points) {
  if (points.size() < 5) throw Error(ErrorCode::DegenerateInput, "ellipse fit needs at least 5 points");
  const Eigen::Index n = static_cast<Eigen::Index>(points.size());

  double mx = 0, my = 0;
  for (const auto& p : points) {
    mx += p.x;
    my += p.y;
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double spread = 0;
  for (const auto& p : points) spread += (p.x - mx) * (p.x - mx) + (p.y - my) * (p.y - my);
  spread = std::sqrt(spread / (2.0 * static_cast<double>(n)));
  if (!(spread > 0)) throw Error(ErrorCode::DegenerateInput, "all points coincide");

  Eigen::MatrixXd quad(n, 3), lin(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = (points[static_cast<std::size_t>(i)].x - mx) / spread;
    const double y = (points[static_cast<std::size_t>(i)].y - my) / spread;
    quad.row(i) << x * x, x * y, y * y;
    lin.row(i) << x, y, 1.0;
  }
  const Eigen::Matrix3d s1 = quad.transpose() * quad;
  const Eigen::Matrix3d s2 = quad.transpose() * lin;
  const Eigen::Matrix3d s3 = lin.transpose() * lin;

  // collinear points make the linear scatter singular
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(s3);
  const auto sv = svd.singularValues();
  if (sv(2) < 1e-10 * sv(0)) throw Error(ErrorCode::DegenerateInput, "points are collinear");

  const Eigen::Matrix3d t = -s3.inverse() * s2.transpose();
  Eigen::Matrix3d m = s1 + s2 * t;
  // premultiply by inverse of the 4AC - B^2 constraint matrix
  Eigen::Matrix3d reduced;
  reduced.row(0) = m.row(2) / 2.0;
  reduced.row(1) = -m.row(1);
  reduced.row(2) = m.row(0) / 2.0;

  Eigen::EigenSolver<Eigen::Matrix3d> es(reduced);
  const Eigen::Matrix3cd vecs = es.eigenvectors();
  int pick = -1;
  double best_cond = 0.0;
  for (int i = 0; i < 3; ++i) {
    const Eigen::Vector3d v = vecs.col(i).real();
    const double cond = 4.0 * v(0) * v(2) - v(1) * v(1);
    if (cond > best_cond) {
      best_cond = cond;
      pick = i;
    }
  }
  if (pick < 0) throw Error(ErrorCode::DegenerateInput, "fit does not yield an ellipse");
  const Eigen::Vector3d a1 = vecs.col(pick).real();
  const Eigen::Vector3d a2 = t * a1;

  // orient the conic so its quadratic part is positive definite
  const double orient = a1(0) + a1(2) > 0 ? 1.0 : -1.0;
  const double A = orient * a1(0), B = orient * a1(1), C = orient * a1(2);
  const double D = orient * a2(0), E = orient * a2(1), F = orient * a2(2);
  const double den = B * B - 4.0 * A * C;
  if (!(den < 0)) throw Error(ErrorCode::DegenerateInput, "fit does not yield an ellipse");
  const double x0 = (2.0 * C * D - B * E) / den;
  const double y0 = (2.0 * A * E - B * D) / den;
  const double f0 = A * x0 * x0 + B * x0 * y0 + C * y0 * y0 + D * x0 + E * y0 + F;

  Eigen::Matrix2d q;
  q << A, B / 2.0, B / 2.0, C;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> qs(q);
  const double mu_small = qs.eigenvalues()(0), mu_large = qs.eigenvalues()(1);
  if (!(mu_small > 0) || !(f0 < 0)) throw Error(ErrorCode::DegenerateInput, "fit yields an imaginary ellipse");
  // the major axis lies along the eigenvector of the smaller eigenvalue
  const Eigen::Vector2d major_dir = qs.eigenvectors().col(0);

  EllipseParams e;
  e.center = {mx + spread * x0, my + spread * y0};
  e.a = spread * std::sqrt(-f0 / mu_small);
  e.b = spread * std::sqrt(-f0 / mu_large);
  e.angle = normalize_angle_pi(std::atan2(major_dir(1), major_dir(0)));
  if (std::abs(e.a - e.b) < 1e-9 * e.a) e.angle = 0.0;
  return e;
}

FrameFeatures extract_features(const imagekit::BinaryMask& pupil_mask, const imagekit::BinaryMask& cr_mask,
                               const imagekit::GrayImage& image, AreaRange cr_area_range) {
  FrameFeatures f;
  f.source = Source::Network;
  if (auto p = extract_pupil(pupil_mask)) {
    f.pupil = p->ellipse;
    f.pupil_confidence = p->confidence;
  }
  if (auto c = extract_cr(cr_mask, image, cr_area_range)) {
    f.cr = c->center;
    f.cr_confidence = c->confidence;
  }
  return f;
}

}  // namespace ocutrack::featext
