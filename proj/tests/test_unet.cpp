#include <doctest.h>

#include <cmath>
#include <cstring>
#include <json.hpp>
#include <random>

#include "error.hpp"
#include "support/oracles.hpp"
#include "support/reference_nn.hpp"
#include "synth.hpp"
#include "unet.hpp"

using namespace ocutrack;
using namespace ocutrack::unet;

namespace {

// Shape recursion written out independently: each down level s -> (s-4)/2 with
// s-4 even, bottleneck s-4, each up level 2s-4. Returns -1 when infeasible.
int recursion(int depth, int s) {
  for (int l = 0; l < depth; ++l) {
    s -= 4;
    if (s < 2 || s % 2) return -1;
    s /= 2;
  }
  s -= 4;
  if (s < 1) return -1;
  for (int l = 0; l < depth; ++l) {
    s = 2 * s - 4;
    if (s < 1) return -1;
  }
  return s;
}

UNetConfig make_config(int depth, int base, int h, int w) {
  UNetConfig c;
  c.depth = depth;
  c.base_channels = base;
  c.input_height = h;
  c.input_width = w;
  return c;
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

imagekit::GrayImage noise_image(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  imagekit::GrayImage img(w, h);
  for (auto& v : img.data) v = u(rng);
  return img;
}

std::uint32_t u32_le(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}

}  // namespace

TEST_CASE("output_shape examples") {
  CHECK(output_shape(make_config(1, 2, 36, 36)) == Size2{20, 20});
  CHECK(output_shape(make_config(4, 2, 572, 572)) == Size2{388, 388});
  CHECK(code_of([] { output_shape(make_config(1, 2, 35, 35)); }) == ErrorCode::InfeasibleInput);
  CHECK(output_shape(default_config()) == Size2{44, 44});
  CHECK(output_shape(make_config(2, 2, 44, 60)) == Size2{recursion(2, 44), recursion(2, 60)});
}

TEST_CASE("output_shape agrees with the recursion for every small size") {
  for (int depth = 1; depth <= 4; ++depth) {
    for (int s = 1; s <= 200; ++s) {
      const int want = recursion(depth, s);
      if (want < 0) {
        REQUIRE(code_of([&] { output_shape(make_config(depth, 1, s, s)); }) == ErrorCode::InfeasibleInput);
      } else {
        REQUIRE(output_extent(depth, s) == want);
      }
    }
  }
}

TEST_CASE("build is deterministic in the seed") {
  const UNetConfig c = make_config(2, 4, 44, 44);
  const UNetModel a = build(c, 7), b = build(c, 7), d = build(c, 8);
  bool differs = false;
  for (const auto& name : a.params.names()) {
    CHECK(a.params.get(name).value == b.params.get(name).value);
    differs |= !(a.params.get(name).value == d.params.get(name).value);
  }
  CHECK(differs);
  CHECK(code_of([] { build(make_config(1, 2, 35, 35), 1); }) == ErrorCode::InfeasibleInput);
}

TEST_CASE("depth 2, base 8 parameter manifest") {
  const std::vector<std::pair<std::string, std::vector<int>>> want = {
      {"down0.conv1.w", {8, 1, 3, 3}},       {"down0.conv1.b", {8}},
      {"down0.conv2.w", {8, 8, 3, 3}},       {"down0.conv2.b", {8}},
      {"down1.conv1.w", {16, 8, 3, 3}},      {"down1.conv1.b", {16}},
      {"down1.conv2.w", {16, 16, 3, 3}},     {"down1.conv2.b", {16}},
      {"bottleneck.conv1.w", {32, 16, 3, 3}}, {"bottleneck.conv1.b", {32}},
      {"bottleneck.conv2.w", {32, 32, 3, 3}}, {"bottleneck.conv2.b", {32}},
      {"up1.upconv.w", {16, 32, 2, 2}},      {"up1.upconv.b", {16}},
      {"up1.conv1.w", {16, 32, 3, 3}},       {"up1.conv1.b", {16}},
      {"up1.conv2.w", {16, 16, 3, 3}},       {"up1.conv2.b", {16}},
      {"up0.upconv.w", {8, 16, 2, 2}},       {"up0.upconv.b", {8}},
      {"up0.conv1.w", {8, 16, 3, 3}},        {"up0.conv1.b", {8}},
      {"up0.conv2.w", {8, 8, 3, 3}},         {"up0.conv2.b", {8}},
      {"head.w", {1, 8}},                    {"head.b", {1}},
  };
  const UNetConfig c = make_config(2, 8, 44, 44);
  CHECK(parameter_manifest(c) == want);
  const UNetModel m = build(c, 1);
  REQUIRE(m.params.names().size() == want.size());
  for (std::size_t i = 0; i < want.size(); ++i) {
    CHECK(m.params.names()[i] == want[i].first);
    CHECK(m.params.get(want[i].first).value.shape() == want[i].second);
  }
}

TEST_CASE("He-normal initialisation") {
  const UNetModel m = build(default_config(), 3);
  for (const auto& name : m.params.names()) {
    const auto& v = m.params.get(name).value;
    if (v.rank() == 1) {
      for (float x : v.values()) REQUIRE(x == 0.0f);
      continue;
    }
    if (v.size() < 500) continue;
    std::size_t fan_in = 1;
    for (std::size_t i = 1; i < v.rank(); ++i) fan_in *= v.dim(i);
    double s2 = 0.0, mean = 0.0;
    for (float x : v.values()) mean += x;
    mean /= v.size();
    for (float x : v.values()) s2 += (x - mean) * (x - mean);
    const double sd = std::sqrt(s2 / v.size());
    INFO(name);
    CHECK(sd == doctest::Approx(std::sqrt(2.0 / fan_in)).epsilon(0.1));
    CHECK(std::abs(mean) < 4.0 * std::sqrt(2.0 / fan_in) / std::sqrt(double(v.size())));
  }
}

TEST_CASE("forward shape, offset and range") {
  const UNetModel m = build(make_config(1, 2, 36, 36), 5);
  const auto img = noise_image(36, 36, 1);
  const ProbabilityMap map = forward(m, img);
  CHECK(map.prob.shape() == std::vector<int>{1, 20, 20});
  CHECK(map.offset_y == 8);
  CHECK(map.offset_x == 8);
  for (float p : map.prob.values()) {
    REQUIRE(p > 0.0f);
    REQUIRE(p < 1.0f);
  }
  CHECK(forward(m, img).prob == map.prob);
  CHECK(code_of([&] { forward(m, noise_image(30, 36, 1)); }) == ErrorCode::SizeMismatch);
}

TEST_CASE("forward shape equals output_shape with a symmetric offset") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> size(18, 80), depth(1, 2);
  int tried = 0;
  while (tried < 12) {
    const UNetConfig c = make_config(depth(rng), 1, size(rng), size(rng));
    if (recursion(c.depth, c.input_height) < 0 || recursion(c.depth, c.input_width) < 0) continue;
    ++tried;
    const Size2 o = output_shape(c);
    const ProbabilityMap map = forward(build(c, 1), noise_image(c.input_width, c.input_height, tried));
    CHECK(map.prob.shape() == std::vector<int>{1, o.height, o.width});
    CHECK(2 * map.offset_y + o.height == c.input_height);
    CHECK(2 * map.offset_x + o.width == c.input_width);
  }
}

TEST_CASE("forward matches the double-precision reference network") {
  for (int depth = 1; depth <= 2; ++depth) {
    const UNetConfig c = make_config(depth, 3, depth == 1 ? 36 : 44, depth == 1 ? 36 : 44);
    const UNetModel m = build(c, 40 + depth);
    const auto img = noise_image(c.input_width, c.input_height, 9);
    const ProbabilityMap map = forward(m, img);
    const ref::DT z = ref::unet_logits(m, img);
    REQUIRE(z.v.size() == map.prob.size());
    for (std::size_t i = 0; i < z.v.size(); ++i)
      REQUIRE(map.prob[i] == doctest::Approx(1.0 / (1.0 + std::exp(-z.v[i]))).epsilon(1e-5));
  }
}

TEST_CASE("predict_mask thresholds inside the window only") {
  UNetModel m = build(make_config(1, 2, 36, 36), 5);
  const auto img = noise_image(36, 36, 2);
  m.params.get("head.b").value[0] = -100.0f;
  CHECK(predict_mask(m, img).count() == 0);

  const imagekit::BinaryMask all = predict_mask(m, img, 0.0f);
  CHECK(all.count() == 400);
  for (int y = 0; y < 36; ++y)
    for (int x = 0; x < 36; ++x) REQUIRE(all.at(x, y) == (x >= 8 && x < 28 && y >= 8 && y < 28));
}

TEST_CASE("weights round trip is bit exact and follows the documented layout") {
  UNetModel m = build(make_config(2, 3, 44, 44), 11);
  m.trained_epochs = 4;
  const auto bytes = save_weights(m);
  const UNetModel back = load_weights(bytes);
  CHECK(back.config == m.config);
  CHECK(back.trained_epochs == 4);
  CHECK(save_weights(back) == bytes);
  for (const auto& name : m.params.names()) {
    const auto& a = m.params.get(name).value.values();
    const auto& b = back.params.get(name).value.values();
    REQUIRE(std::memcmp(a.data(), b.data(), a.size() * 4) == 0);
  }

  // independent parse of the layout
  REQUIRE(std::memcmp(bytes.data(), "OCUW", 4) == 0);
  CHECK(u32_le(bytes.data() + 4) == 1);
  const std::uint32_t hl = u32_le(bytes.data() + 8);
  const auto header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + hl);
  CHECK(header.at("depth") == 2);
  CHECK(header.at("base_channels") == 3);
  const auto manifest = parameter_manifest(m.config);
  REQUIRE(header.at("manifest").size() == manifest.size());
  std::size_t off = 12 + hl;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    CHECK(header["manifest"][i]["name"] == manifest[i].first);
    for (float v : m.params.get(manifest[i].first).value.values()) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      REQUIRE(u32_le(bytes.data() + off) == bits);
      off += 4;
    }
  }
  CHECK(off == bytes.size());
}

TEST_CASE("weights loader rejects damaged files") {
  const auto bytes = save_weights(build(make_config(1, 2, 36, 36), 1));
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK(code_of([&] { load_weights(bad_magic); }) == ErrorCode::BadMagic);

  auto truncated = bytes;
  truncated.pop_back();
  CHECK(code_of([&] { load_weights(truncated); }) == ErrorCode::TruncatedPayload);

  auto version = bytes;
  version[4] = 2;
  CHECK(code_of([&] { load_weights(version); }) == ErrorCode::VersionUnsupported);

  // header claims a different base width than the manifest and payload
  const std::uint32_t hl = u32_le(bytes.data() + 8);
  std::string text(bytes.begin() + 12, bytes.begin() + 12 + hl);
  auto j = nlohmann::json::parse(text);
  j["base_channels"] = 3;
  const std::string edited = j.dump();
  std::vector<std::uint8_t> mismatch(bytes.begin(), bytes.begin() + 8);
  for (int i = 0; i < 4; ++i) mismatch.push_back(static_cast<std::uint8_t>(edited.size() >> (8 * i)));
  mismatch.insert(mismatch.end(), edited.begin(), edited.end());
  mismatch.insert(mismatch.end(), bytes.begin() + 12 + hl, bytes.end());
  CHECK(code_of([&] { load_weights(mismatch); }) == ErrorCode::ManifestMismatch);
}

TEST_CASE("weights file io") {
  oracle::TempDir dir("unet");
  const UNetModel m = build(make_config(1, 2, 36, 36), 2);
  save_weights_file(m, dir.str("m.ocuw"));
  CHECK(save_weights(load_weights_file(dir.str("m.ocuw"))) == save_weights(m));
  CHECK(code_of([&] { load_weights_file(dir.str("none.ocuw")); }) == ErrorCode::Io);
}

TEST_CASE("evaluate matches a pixel-count oracle") {
  const UNetConfig c = make_config(1, 2, 36, 36);
  const UNetModel m = build(c, 21);
  std::vector<imagekit::GrayImage> imgs;
  std::vector<imagekit::BinaryMask> masks;
  for (int i = 0; i < 3; ++i) {
    imgs.push_back(noise_image(36, 36, 100 + i));
    masks.push_back(oracle::filled_ellipse(36, 36, 17 + i, 18, 6, 4, 0.3 * i));
  }
  std::vector<Sample> samples;
  for (int i = 0; i < 3; ++i) samples.push_back({&imgs[i], &masks[i]});
  std::size_t agree = 0, inter = 0, uni = 0, total = 0;
  for (int i = 0; i < 3; ++i) {
    const auto pred = predict_mask(m, imgs[i], 0.5f);
    for (int y = 8; y < 28; ++y)
      for (int x = 8; x < 28; ++x) {
        const bool p = pred.at(x, y), t = masks[i].at(x, y);
        agree += p == t;
        inter += p && t;
        uni += p || t;
        ++total;
      }
  }
  const SegmentationScore s = evaluate(m, samples, 0.5f);
  CHECK(s.pixels == total);
  CHECK(s.pixel_accuracy == doctest::Approx(double(agree) / total));
  CHECK(s.iou == doctest::Approx(uni ? double(inter) / uni : 1.0));
}

TEST_CASE("holdout split") {
  TrainHyper h;
  h.holdout_fraction = 0.25;
  h.shuffle_seed = 9;
  const auto a = holdout_indices(40, h);
  CHECK(a.size() == 10);
  CHECK(holdout_indices(40, h) == a);
  CHECK(std::is_sorted(a.begin(), a.end()));
  h.shuffle_seed = 10;
  CHECK(holdout_indices(40, h) != a);
  h.holdout_fraction = 0.0;
  CHECK(holdout_indices(40, h).empty());
  h.holdout_fraction = 0.5;
  CHECK(holdout_indices(1, h).empty());  // a single sample always trains
}

TEST_CASE("training rejects empty and mismatched data") {
  UNetModel m = build(make_config(1, 2, 36, 36), 1);
  CHECK(code_of([&] { train(m, std::span<const Sample>{}, TrainHyper{}); }) == ErrorCode::EmptyDataset);
  const auto img = noise_image(30, 30, 1);
  const imagekit::BinaryMask mask(30, 30);
  const Sample s{&img, &mask};
  CHECK(code_of([&] { train(m, std::span<const Sample>(&s, 1), TrainHyper{}); }) == ErrorCode::SizeMismatch);
}

TEST_CASE("one image is memorised within 200 epochs") {
  synth::SceneParams p;
  p.rng_seed = 5;
  const synth::SynthSample s = synth::render_eye(p);
  const Sample sample{&s.image, &s.pupil_mask};
  UNetModel m = build(default_config(), 1);
  TrainHyper h;
  h.holdout_fraction = 0.0;
  h.epochs = 200;
  const TrainReport r = train(m, std::span<const Sample>(&sample, 1), h);
  REQUIRE(r.epochs.size() == 200);
  CHECK(r.train_count == 1);
  CHECK(r.holdout_count == 0);
  double best = 0.0;
  for (const auto& e : r.epochs) {
    best = std::max(best, e.pixel_accuracy);
    REQUIRE(e.pixel_accuracy >= 0.0);
    REQUIRE(e.pixel_accuracy <= 1.0);
    REQUIRE(e.iou >= 0.0);
    REQUIRE(e.iou <= 1.0);
  }
  CHECK(best >= 0.999);
  CHECK(r.epochs.back().mean_loss < r.epochs.front().mean_loss);
  CHECK(m.trained_epochs == 200);
}

TEST_CASE("training is deterministic and resumable") {
  const UNetConfig c = make_config(1, 4, 36, 36);
  std::vector<imagekit::GrayImage> imgs;
  std::vector<imagekit::BinaryMask> masks;
  for (int i = 0; i < 6; ++i) {
    imgs.push_back(noise_image(36, 36, 300 + i));
    masks.push_back(oracle::filled_ellipse(36, 36, 18, 18, 5 + i % 3, 4, 0.5));
  }
  std::vector<Sample> d1, d2;
  for (int i = 0; i < 4; ++i) d1.push_back({&imgs[i], &masks[i]});
  for (int i = 4; i < 6; ++i) d2.push_back({&imgs[i], &masks[i]});

  TrainHyper h;
  h.epochs = 3;
  h.holdout_fraction = 0.25;
  UNetModel a = build(c, 4), b = build(c, 4);
  const TrainReport ra = train(a, d1, h);
  const TrainReport rb = train(b, d1, h);
  CHECK(save_weights(a) == save_weights(b));
  for (std::size_t i = 0; i < ra.epochs.size(); ++i) CHECK(ra.epochs[i].mean_loss == rb.epochs[i].mean_loss);

  // incremental: continue on new data, epochs count on from the first run
  const TrainReport r2 = train(a, d2, h);
  REQUIRE(r2.epochs.size() == 3);
  CHECK(r2.epochs.front().epoch == 4);
  CHECK(a.trained_epochs == 6);
  const UNetModel fresh = build(c, 99);
  CHECK(a.params.names() == fresh.params.names());
  for (const auto& name : fresh.params.names())
    CHECK(a.params.get(name).value.shape() == fresh.params.get(name).value.shape());
  // and a resumed model survives persistence
  const UNetModel reloaded = load_weights(save_weights(a));
  CHECK(reloaded.trained_epochs == 6);
  CHECK(save_weights(reloaded) == save_weights(a));

  // explicit holdout set
  UNetModel e = build(c, 4);
  const TrainReport re = train(e, d1, d2, h);
  CHECK(re.train_count == 4);
  CHECK(re.holdout_count == 2);
  CHECK(re.epochs.back().pixel_accuracy == doctest::Approx(evaluate(e, d2).pixel_accuracy));
}

TEST_CASE("model config json round trip") {
  const UNetConfig c = make_config(3, 5, 132, 140);
  CHECK(config_from_json(config_to_json(c)) == c);
}
