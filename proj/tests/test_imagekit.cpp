#include <doctest.h>

#include <cmath>
#include <random>
#include <string>

#include "error.hpp"
#include "imagekit.hpp"
#include "support/oracles.hpp"

using namespace ocutrack;
using namespace ocutrack::imagekit;

namespace {

std::vector<std::uint8_t> pgm_bytes(const std::string& header, std::vector<std::uint8_t> raster) {
  std::vector<std::uint8_t> b(header.begin(), header.end());
  b.insert(b.end(), raster.begin(), raster.end());
  return b;
}

GrayImage random_image(int w, int h, std::mt19937_64& rng) {
  GrayImage img(w, h);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (auto& v : img.data) v = u(rng);
  return img;
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

TEST_CASE("load_pgm scales bytes to [0,1]") {
  const GrayImage a = load_pgm(pgm_bytes("P5 2 1 255\n", {0, 255}));
  CHECK(a.width == 2);
  CHECK(a.height == 1);
  CHECK(a.data[0] == 0.0f);
  CHECK(a.data[1] == 1.0f);

  const GrayImage b = load_pgm(pgm_bytes("P5 1 1 255\n", {128}));
  CHECK(b.data[0] == doctest::Approx(128.0 / 255.0).epsilon(1e-7));
}

TEST_CASE("load_pgm accepts comments and rejects malformed input") {
  const GrayImage c = load_pgm(pgm_bytes("P5\n# comment\n1 1\n255\n", {255}));
  CHECK(c.data[0] == 1.0f);
  CHECK(code_of([] { load_pgm(pgm_bytes("P2 1 1 255\n", {0})); }) == ErrorCode::MalformedHeader);
  CHECK(code_of([] { load_pgm(pgm_bytes("P5 2 2 255\n", {1, 2, 3})); }) == ErrorCode::TruncatedData);
  CHECK(code_of([] { load_pgm(pgm_bytes("P5 0 1 255\n", {})); }) == ErrorCode::MalformedHeader);
}

TEST_CASE("save_pgm endpoints") {
  CHECK(save_pgm(GrayImage(1, 1, 1.0f)).back() == 255);
  CHECK(save_pgm(GrayImage(1, 1, 0.0f)).back() == 0);
}

TEST_CASE("pgm byte round trip over random rasters") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> dim(1, 17), byte(0, 255);
  for (int trial = 0; trial < 50; ++trial) {
    const int w = dim(rng), h = dim(rng);
    std::vector<std::uint8_t> raster(static_cast<std::size_t>(w) * h);
    for (auto& v : raster) v = static_cast<std::uint8_t>(byte(rng));
    const auto bytes = pgm_bytes("P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n", raster);
    REQUIRE(save_pgm(load_pgm(bytes)) == bytes);
  }
}

TEST_CASE("pgm float round trip is within half a quantization step") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const GrayImage img = random_image(9 + trial, 5 + trial, rng);
    const GrayImage back = load_pgm(save_pgm(img));
    REQUIRE(back.same_size(img.width, img.height));
    double worst = 0.0;
    for (std::size_t i = 0; i < img.data.size(); ++i) worst = std::max(worst, double(std::abs(img.data[i] - back.data[i])));
    CHECK(worst <= 1.0 / 510.0 + 1e-7);
    // quantized images are a fixed point
    CHECK(load_pgm(save_pgm(back)) == back);
  }
}

TEST_CASE("pgm file io") {
  oracle::TempDir dir("imagekit");
  std::mt19937_64 rng(3);
  const GrayImage img = load_pgm(save_pgm(random_image(7, 4, rng)));
  save_pgm_file(img, dir.str("a.pgm"));
  CHECK(load_pgm_file(dir.str("a.pgm")) == img);
  CHECK(code_of([&] { load_pgm_file(dir.str("missing.pgm")); }) == ErrorCode::Io);
  CHECK(code_of([&] { save_pgm_file(img, dir.str("no/such/dir/a.pgm")); }) == ErrorCode::Io);
}

TEST_CASE("threshold") {
  CHECK(threshold(GrayImage(4, 3, 0.0f), 0.5f).count() == 0);
  std::mt19937_64 rng(5);
  const GrayImage img = random_image(13, 11, rng);
  CHECK(threshold(img, 0.0f).count() == img.data.size());

  for (float t : {0.1f, 0.37f, 0.5f, 0.93f}) {
    const BinaryMask m = threshold(img, t);
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) REQUIRE(m.at(x, y) == (img.at(x, y) >= t));
  }
}

TEST_CASE("threshold is monotone in t") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (int trial = 0; trial < 30; ++trial) {
    const GrayImage img = random_image(10, 10, rng);
    float t1 = u(rng), t2 = u(rng);
    if (t1 > t2) std::swap(t1, t2);
    const BinaryMask lo = threshold(img, t1), hi = threshold(img, t2);
    for (std::size_t i = 0; i < lo.data.size(); ++i) REQUIRE((!hi.data[i] || lo.data[i]));
  }
}

TEST_CASE("sobel on a constant image") {
  const GradientField g = sobel(GrayImage(6, 5, 0.42f));
  for (std::size_t i = 0; i < g.magnitude.size(); ++i) {
    CHECK(g.magnitude[i] == 0.0f);
    CHECK(g.direction[i] == 0.0f);
  }
}

TEST_CASE("sobel on a vertical step") {
  GrayImage img(8, 6, 0.0f);
  for (int y = 0; y < 6; ++y)
    for (int x = 4; x < 8; ++x) img.at(x, y) = 1.0f;
  const GradientField g = sobel(img);
  for (int y = 1; y < 5; ++y) {
    for (int x : {3, 4}) {
      const std::size_t i = static_cast<std::size_t>(y) * 8 + x;
      CHECK(std::abs(g.gx[i]) == doctest::Approx(4.0));
      CHECK(g.gy[i] == 0.0f);
    }
    CHECK(g.magnitude[static_cast<std::size_t>(y) * 8 + 1] == 0.0f);
  }
  // replicate padding: no response on the frame border away from the step
  CHECK(g.magnitude[0] == 0.0f);
}

TEST_CASE("sobel on a diagonal ramp points along the diagonal") {
  GrayImage img(10, 10);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x) img.at(x, y) = static_cast<float>(x + y) / 18.0f;
  const GradientField g = sobel(img);
  for (int y = 1; y < 9; ++y)
    for (int x = 1; x < 9; ++x) CHECK(g.direction[y * 10 + x] == doctest::Approx(oracle::kPi / 4).epsilon(1e-6));
}

TEST_CASE("sobel magnitude is invariant under intensity inversion") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const GrayImage img = random_image(12, 9, rng);
    GrayImage inv = img;
    for (auto& v : inv.data) v = 1.0f - v;
    const GradientField a = sobel(img), b = sobel(inv);
    for (std::size_t i = 0; i < a.magnitude.size(); ++i)
      REQUIRE(a.magnitude[i] == doctest::Approx(b.magnitude[i]).epsilon(1e-5));
  }
}

TEST_CASE("sobel rejects images smaller than the kernel") {
  CHECK(code_of([] { sobel(GrayImage(2, 5)); }) == ErrorCode::ImageTooSmall);
}

TEST_CASE("connected components basic cases") {
  CHECK(connected_components(BinaryMask(5, 5)).empty());

  BinaryMask m(8, 8);
  m.set(0, 0, true);
  m.set(5, 5, true);
  m.set(5, 6, true);
  const auto r = connected_components(m);
  REQUIRE(r.size() == 2);
  CHECK(r[0].area == 2);
  CHECK(r[1].area == 1);
  CHECK(r[0].centroid.x == doctest::Approx(5.0));
  CHECK(r[0].centroid.y == doctest::Approx(5.5));
  CHECK(r[1].centroid.x == doctest::Approx(0.0));
  CHECK(r[1].centroid.y == doctest::Approx(0.0));

  BinaryMask d(3, 3);
  d.set(0, 0, true);
  d.set(1, 1, true);
  CHECK(connected_components(d).size() == 1);
}

TEST_CASE("connected components mean intensity and size check") {
  BinaryMask m(4, 4);
  m.set(1, 1, true);
  m.set(2, 1, true);
  GrayImage img(4, 4, 0.0f);
  img.at(1, 1) = 0.2f;
  img.at(2, 1) = 0.6f;
  const auto r = connected_components(m, &img);
  REQUIRE(r.size() == 1);
  REQUIRE(r[0].mean_intensity.has_value());
  CHECK(*r[0].mean_intensity == doctest::Approx(0.4));
  CHECK(code_of([&] {
          GrayImage small(3, 3);
          connected_components(m, &small);
        }) == ErrorCode::DimensionMismatch);
}

// Flood fill oracle: regions partition the true pixels, areas and bboxes agree.
TEST_CASE("connected components partition random masks") {
  std::mt19937_64 rng(21);
  std::bernoulli_distribution on(0.35);
  for (int trial = 0; trial < 40; ++trial) {
    const int w = 5 + trial % 13, h = 4 + trial % 7;
    BinaryMask m(w, h);
    for (auto& v : m.data) v = on(rng) ? 1 : 0;

    std::vector<int> ref(m.data.size(), 0);
    std::vector<int> ref_area;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!m.at(x, y) || ref[y * w + x]) continue;
        const int id = static_cast<int>(ref_area.size()) + 1;
        ref_area.push_back(0);
        std::vector<std::pair<int, int>> stack{{x, y}};
        ref[y * w + x] = id;
        while (!stack.empty()) {
          auto [cx, cy] = stack.back();
          stack.pop_back();
          ++ref_area.back();
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              const int nx = cx + dx, ny = cy + dy;
              if (nx < 0 || ny < 0 || nx >= w || ny >= h || !m.at(nx, ny) || ref[ny * w + nx]) continue;
              ref[ny * w + nx] = id;
              stack.push_back({nx, ny});
            }
        }
      }
    }

    const auto regions = connected_components(m);
    REQUIRE(regions.size() == ref_area.size());
    std::size_t total = 0;
    for (std::size_t i = 0; i < regions.size(); ++i) {
      total += static_cast<std::size_t>(regions[i].area);
      if (i > 0) REQUIRE(regions[i - 1].area >= regions[i].area);
      const auto& r = regions[i];
      REQUIRE(r.centroid.x >= r.x0);
      REQUIRE(r.centroid.x <= r.x1);
      REQUIRE(r.centroid.y >= r.y0);
      REQUIRE(r.centroid.y <= r.y1);
    }
    REQUIRE(total == m.count());

    int n_labels = 0;
    const auto labels = label_image(m, &n_labels);
    REQUIRE(n_labels == static_cast<int>(regions.size()));
    for (std::size_t i = 0; i < labels.size(); ++i) {
      REQUIRE((labels[i] > 0) == (m.data[i] != 0));
      // same partition as the flood fill: equal labels iff equal reference ids
      for (std::size_t j = i + 1; j < labels.size() && j < i + 3; ++j)
        if (labels[i] && labels[j]) REQUIRE((labels[i] == labels[j]) == (ref[i] == ref[j]));
    }
    for (const auto& r : regions) {
      int count = 0;
      for (int v : labels) count += (v == r.label);
      REQUIRE(count == r.area);
    }
  }
}

TEST_CASE("mask image conversion") {
  BinaryMask m(3, 2);
  m.set(2, 1, true);
  const GrayImage img = mask_to_image(m);
  CHECK(img.at(2, 1) == 1.0f);
  CHECK(img.at(0, 0) == 0.0f);
  CHECK(image_to_mask(load_pgm(save_pgm(img))) == m);
}
