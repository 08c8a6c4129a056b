#include "unet.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>

#include <json.hpp>

#include "error.hpp"

namespace ocutrack::unet {

using nn::Tensor;

UNetConfig default_config() { return UNetConfig{}; }

int output_extent(int depth, int s) {
  if (depth < 1) throw Error(ErrorCode::InfeasibleInput, "depth must be >= 1");
  const int input = s;
  auto fail = [&](const std::string& why) {
    throw Error(ErrorCode::InfeasibleInput, "input extent " + std::to_string(input) + ": " + why);
  };
  for (int l = 0; l < depth; ++l) {
    s -= 4;
    if (s <= 0) fail("non-positive size in contracting level " + std::to_string(l));
    if (s % 2) fail("odd size " + std::to_string(s) + " at pool " + std::to_string(l));
    s /= 2;
  }
  s -= 4;
  if (s <= 0) fail("non-positive bottleneck");
  for (int l = 0; l < depth; ++l) {
    s = 2 * s - 4;
    if (s <= 0) fail("non-positive size in expanding level");
  }
  return s;
}

Size2 output_shape(const UNetConfig& c) {
  if (c.base_channels < 1) throw Error(ErrorCode::InfeasibleInput, "base_channels must be >= 1");
  if (c.in_channels != 1 || c.out_channels != 1)
    throw Error(ErrorCode::InfeasibleInput, "only single-channel input and output are supported");
  return Size2{output_extent(c.depth, c.input_height), output_extent(c.depth, c.input_width)};
}

namespace {

int level_channels(const UNetConfig& c, int level) { return c.base_channels << level; }

std::string down_name(int l, const char* part) { return "down" + std::to_string(l) + "." + part; }
std::string up_name(int l, const char* part) { return "up" + std::to_string(l) + "." + part; }

}  // namespace

std::vector<std::pair<std::string, std::vector<int>>> parameter_manifest(const UNetConfig& c) {
  output_shape(c);
  std::vector<std::pair<std::string, std::vector<int>>> m;
  int in = c.in_channels;
  for (int l = 0; l < c.depth; ++l) {
    const int ch = level_channels(c, l);
    m.push_back({down_name(l, "conv1.w"), {ch, in, 3, 3}});
    m.push_back({down_name(l, "conv1.b"), {ch}});
    m.push_back({down_name(l, "conv2.w"), {ch, ch, 3, 3}});
    m.push_back({down_name(l, "conv2.b"), {ch}});
    in = ch;
  }
  const int bch = level_channels(c, c.depth);
  m.push_back({"bottleneck.conv1.w", {bch, in, 3, 3}});
  m.push_back({"bottleneck.conv1.b", {bch}});
  m.push_back({"bottleneck.conv2.w", {bch, bch, 3, 3}});
  m.push_back({"bottleneck.conv2.b", {bch}});
  in = bch;
  for (int l = c.depth - 1; l >= 0; --l) {
    const int ch = level_channels(c, l);
    m.push_back({up_name(l, "upconv.w"), {ch, in, 2, 2}});
    m.push_back({up_name(l, "upconv.b"), {ch}});
    m.push_back({up_name(l, "conv1.w"), {ch, 2 * ch, 3, 3}});
    m.push_back({up_name(l, "conv1.b"), {ch}});
    m.push_back({up_name(l, "conv2.w"), {ch, ch, 3, 3}});
    m.push_back({up_name(l, "conv2.b"), {ch}});
    in = ch;
  }
  m.push_back({"head.w", {c.out_channels, in}});
  m.push_back({"head.b", {c.out_channels}});
  return m;
}

UNetModel build(const UNetConfig& config, std::uint64_t seed) {
  UNetModel model;
  model.config = config;
  std::mt19937_64 rng(seed);
  for (auto& [name, shape] : parameter_manifest(config)) {
    nn::Param& p = model.params.add(name, shape);
    if (shape.size() == 1) continue;  // biases start at zero
    std::size_t fan_in = 1;
    for (std::size_t i = 1; i < shape.size(); ++i) fan_in *= static_cast<std::size_t>(shape[i]);
    std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
    for (auto& v : p.value.values()) v = dist(rng);
  }
  return model;
}

namespace {

struct ConvBlockCache {
  nn::Conv3x3Cache c1, c2;
  nn::ReluCache r1, r2;
};

struct PassCache {
  std::vector<ConvBlockCache> down;
  std::vector<nn::MaxPoolCache> pool;
  ConvBlockCache bottleneck;
  std::vector<nn::UpConvCache> upconv;  // indexed by level
  std::vector<nn::ConcatCache> concat;
  std::vector<ConvBlockCache> up;
  nn::Conv1x1Cache head;
};

Tensor conv_block(const nn::ParamSet& ps, const std::string& prefix, const Tensor& x, ConvBlockCache* cache) {
  const bool keep = cache != nullptr;
  Tensor h = nn::conv2d_valid(x, ps.get(prefix + "conv1.w").value, ps.get(prefix + "conv1.b").value,
                              keep ? &cache->c1 : nullptr);
  h = nn::relu(h, keep ? &cache->r1 : nullptr);
  h = nn::conv2d_valid(h, ps.get(prefix + "conv2.w").value, ps.get(prefix + "conv2.b").value,
                       keep ? &cache->c2 : nullptr);
  return nn::relu(h, keep ? &cache->r2 : nullptr);
}

void accumulate(nn::ParamSet& ps, const std::string& name, const Tensor& g) {
  Tensor& dst = ps.get(name).grad;
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

Tensor conv_block_backward(nn::ParamSet& ps, const std::string& prefix, const ConvBlockCache& cache,
                           const Tensor& grad) {
  Tensor g = nn::relu_backward(cache.r2, grad);
  nn::ConvGrads g2 = nn::conv2d_valid_backward(cache.c2, g);
  accumulate(ps, prefix + "conv2.w", g2.weights);
  accumulate(ps, prefix + "conv2.b", g2.bias);
  g = nn::relu_backward(cache.r1, g2.input);
  nn::ConvGrads g1 = nn::conv2d_valid_backward(cache.c1, g);
  accumulate(ps, prefix + "conv1.w", g1.weights);
  accumulate(ps, prefix + "conv1.b", g1.bias);
  return std::move(g1.input);
}

// Returns head logits (1 x Ho x Wo).
Tensor forward_logits(const UNetModel& model, const Tensor& input, PassCache* cache) {
  const UNetConfig& c = model.config;
  const nn::ParamSet& ps = model.params;
  const bool keep = cache != nullptr;
  if (keep) {
    cache->down.resize(c.depth);
    cache->pool.resize(c.depth);
    cache->upconv.resize(c.depth);
    cache->concat.resize(c.depth);
    cache->up.resize(c.depth);
  }
  std::vector<Tensor> skips;
  Tensor x = input;
  for (int l = 0; l < c.depth; ++l) {
    x = conv_block(ps, "down" + std::to_string(l) + ".", x, keep ? &cache->down[l] : nullptr);
    skips.push_back(x);
    x = nn::maxpool2(x, keep ? &cache->pool[l] : nullptr);
  }
  x = conv_block(ps, "bottleneck.", x, keep ? &cache->bottleneck : nullptr);
  for (int l = c.depth - 1; l >= 0; --l) {
    x = nn::upconv2(x, ps.get(up_name(l, "upconv.w")).value, ps.get(up_name(l, "upconv.b")).value,
                    keep ? &cache->upconv[l] : nullptr);
    x = nn::concat_crop(skips[l], x, keep ? &cache->concat[l] : nullptr);
    x = conv_block(ps, "up" + std::to_string(l) + ".", x, keep ? &cache->up[l] : nullptr);
  }
  return nn::conv1x1(x, ps.get("head.w").value, ps.get("head.b").value, keep ? &cache->head : nullptr);
}

void backward(UNetModel& model, const PassCache& cache, const Tensor& grad_logits) {
  const UNetConfig& c = model.config;
  nn::ParamSet& ps = model.params;
  nn::ConvGrads gh = nn::conv1x1_backward(cache.head, grad_logits);
  accumulate(ps, "head.w", gh.weights);
  accumulate(ps, "head.b", gh.bias);
  Tensor g = std::move(gh.input);
  std::vector<Tensor> skip_grads(c.depth);
  for (int l = 0; l < c.depth; ++l) {
    g = conv_block_backward(ps, "up" + std::to_string(l) + ".", cache.up[l], g);
    nn::ConcatGrads gc = nn::concat_crop_backward(cache.concat[l], g);
    skip_grads[l] = std::move(gc.skip);
    nn::ConvGrads gu = nn::upconv2_backward(cache.upconv[l], gc.up);
    accumulate(ps, up_name(l, "upconv.w"), gu.weights);
    accumulate(ps, up_name(l, "upconv.b"), gu.bias);
    g = std::move(gu.input);
  }
  g = conv_block_backward(ps, "bottleneck.", cache.bottleneck, g);
  for (int l = c.depth - 1; l >= 0; --l) {
    g = nn::maxpool2_backward(cache.pool[l], g);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += skip_grads[l][i];
    g = conv_block_backward(ps, "down" + std::to_string(l) + ".", cache.down[l], g);
  }
}

Tensor image_tensor(const UNetModel& model, const imagekit::GrayImage& image) {
  const UNetConfig& c = model.config;
  if (!image.same_size(c.input_width, c.input_height))
    throw Error(ErrorCode::SizeMismatch, "image is " + std::to_string(image.width) + "x" +
                                             std::to_string(image.height) + ", model expects " +
                                             std::to_string(c.input_width) + "x" + std::to_string(c.input_height));
  return Tensor({1, image.height, image.width}, image.data);
}

struct Window {
  int offset_y, offset_x, height, width;
};

Window output_window(const UNetConfig& c) {
  const Size2 out = output_shape(c);
  return Window{(c.input_height - out.height) / 2, (c.input_width - out.width) / 2, out.height, out.width};
}

Tensor cropped_target(const UNetConfig& c, const imagekit::BinaryMask& mask) {
  if (!(mask.width == c.input_width && mask.height == c.input_height))
    throw Error(ErrorCode::SizeMismatch, "mask does not match model input size");
  const Window w = output_window(c);
  Tensor t({1, w.height, w.width});
  for (int y = 0; y < w.height; ++y)
    for (int x = 0; x < w.width; ++x) t.at(0, y, x) = mask.at(x + w.offset_x, y + w.offset_y) ? 1.0f : 0.0f;
  return t;
}

struct Counts {
  std::size_t agree = 0, inter = 0, uni = 0, total = 0;
  void add(const Tensor& prob, const Tensor& target, float thr) {
    for (std::size_t i = 0; i < prob.size(); ++i) {
      const bool p = prob[i] >= thr;
      const bool t = target[i] > 0.5f;
      agree += p == t;
      inter += p && t;
      uni += p || t;
    }
    total += prob.size();
  }
  SegmentationScore score() const {
    SegmentationScore s;
    s.pixels = total;
    s.pixel_accuracy = total ? static_cast<double>(agree) / static_cast<double>(total) : 0.0;
    s.iou = uni ? static_cast<double>(inter) / static_cast<double>(uni) : 1.0;
    return s;
  }
};

}  // namespace

ProbabilityMap forward(const UNetModel& model, const imagekit::GrayImage& image) {
  const Tensor input = image_tensor(model, image);
  const Window w = output_window(model.config);
  ProbabilityMap map;
  map.prob = nn::sigmoid(forward_logits(model, input, nullptr));
  map.offset_y = w.offset_y;
  map.offset_x = w.offset_x;
  return map;
}

imagekit::BinaryMask predict_mask(const UNetModel& model, const imagekit::GrayImage& image, float prob_threshold) {
  const ProbabilityMap map = forward(model, image);
  imagekit::BinaryMask mask(image.width, image.height);
  const int h = map.prob.dim(1), w = map.prob.dim(2);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) mask.set(x + map.offset_x, y + map.offset_y, map.prob.at(0, y, x) >= prob_threshold);
  return mask;
}

double loss_and_gradient(UNetModel& model, const imagekit::GrayImage& image, const imagekit::BinaryMask& target) {
  const Tensor input = image_tensor(model, image);
  const Tensor t = cropped_target(model.config, target);
  PassCache cache;
  const Tensor logits = forward_logits(model, input, &cache);
  nn::LossResult loss = nn::bce_with_logits(logits, t);
  backward(model, cache, loss.grad);
  return loss.loss;
}

SegmentationScore evaluate(const UNetModel& model, std::span<const Sample> samples, float prob_threshold) {
  Counts counts;
  for (const Sample& s : samples) {
    const ProbabilityMap map = forward(model, *s.image);
    counts.add(map.prob, cropped_target(model.config, *s.mask), prob_threshold);
  }
  return counts.score();
}

namespace {

void shuffle_indices(std::vector<std::size_t>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(v[i - 1], v[pick(rng)]);
  }
}

struct Split {
  std::vector<std::size_t> train, holdout;
};

Split make_split(std::size_t n, const TrainHyper& hyper) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(hyper.shuffle_seed);
  shuffle_indices(order, rng);
  std::size_t n_hold = static_cast<std::size_t>(std::floor(std::clamp(hyper.holdout_fraction, 0.0, 1.0) * n));
  if (n_hold >= n) n_hold = n - 1;
  Split s;
  s.holdout.assign(order.end() - static_cast<std::ptrdiff_t>(n_hold), order.end());
  s.train.assign(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_hold));
  std::sort(s.holdout.begin(), s.holdout.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

}  // namespace

std::vector<std::size_t> holdout_indices(std::size_t n, const TrainHyper& hyper) {
  if (n == 0) return {};
  return make_split(n, hyper).holdout;
}

namespace {

TrainReport train_split(UNetModel& model, std::span<const Sample> dataset, const Split& split,
                        const TrainHyper& hyper, const EpochCallback& on_epoch) {
  if (split.train.empty()) throw Error(ErrorCode::EmptyDataset, "training needs at least one sample");
  if (!(hyper.lr > 0.0f) || hyper.momentum < 0.0f || hyper.momentum >= 1.0f || hyper.epochs < 0)
    throw Error(ErrorCode::InvalidArgument, "hyperparameters out of range");
  const UNetConfig& c = model.config;
  std::vector<Tensor> inputs, targets;
  inputs.reserve(dataset.size());
  targets.reserve(dataset.size());
  for (const Sample& s : dataset) {
    inputs.push_back(image_tensor(model, *s.image));
    targets.push_back(cropped_target(c, *s.mask));
  }
  const std::vector<std::size_t>& scored = split.holdout.empty() ? split.train : split.holdout;

  TrainReport report;
  report.train_count = split.train.size();
  report.holdout_count = split.holdout.size();
  model.params.zero_grads();
  for (int e = 0; e < hyper.epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    // visiting order is a pure function of (seed, global epoch number)
    std::seed_seq seq{static_cast<std::uint32_t>(hyper.shuffle_seed), static_cast<std::uint32_t>(hyper.shuffle_seed >> 32),
                      static_cast<std::uint32_t>(model.trained_epochs + 1)};
    std::mt19937_64 rng(seq);
    std::vector<std::size_t> order = split.train;
    shuffle_indices(order, rng);
    double loss_sum = 0.0;
    for (std::size_t idx : order) {
      PassCache cache;
      const Tensor logits = forward_logits(model, inputs[idx], &cache);
      nn::LossResult loss = nn::bce_with_logits(logits, targets[idx]);
      backward(model, cache, loss.grad);
      nn::sgd_step(model.params, hyper.lr, hyper.momentum);
      loss_sum += loss.loss;
    }
    Counts counts;
    for (std::size_t idx : scored) counts.add(nn::sigmoid(forward_logits(model, inputs[idx], nullptr)), targets[idx], 0.5f);
    const SegmentationScore score = counts.score();
    ++model.trained_epochs;
    EpochStats stats;
    stats.epoch = model.trained_epochs;
    stats.mean_loss = loss_sum / static_cast<double>(order.size());
    stats.pixel_accuracy = score.pixel_accuracy;
    stats.iou = score.iou;
    stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return report;
}

}  // namespace

TrainReport train(UNetModel& model, std::span<const Sample> dataset, const TrainHyper& hyper,
                  const EpochCallback& on_epoch) {
  if (dataset.empty()) throw Error(ErrorCode::EmptyDataset, "training needs at least one sample");
  return train_split(model, dataset, make_split(dataset.size(), hyper), hyper, on_epoch);
}

TrainReport train(UNetModel& model, std::span<const Sample> train_set, std::span<const Sample> holdout_set,
                  const TrainHyper& hyper, const EpochCallback& on_epoch) {
  if (train_set.empty()) throw Error(ErrorCode::EmptyDataset, "training needs at least one sample");
  std::vector<Sample> all(train_set.begin(), train_set.end());
  all.insert(all.end(), holdout_set.begin(), holdout_set.end());
  Split split;
  for (std::size_t i = 0; i < all.size(); ++i) (i < train_set.size() ? split.train : split.holdout).push_back(i);
  return train_split(model, all, split, hyper, on_epoch);
}

// ---- persistence ---------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'O', 'C', 'U', 'W'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

nlohmann::json config_json(const UNetConfig& c) {
  return nlohmann::json{{"depth", c.depth},
                        {"base_channels", c.base_channels},
                        {"in_channels", c.in_channels},
                        {"out_channels", c.out_channels},
                        {"input_size", {c.input_height, c.input_width}}};
}

UNetConfig parse_config(const nlohmann::json& j) {
  UNetConfig c;
  c.depth = j.at("depth").get<int>();
  c.base_channels = j.at("base_channels").get<int>();
  c.in_channels = j.at("in_channels").get<int>();
  c.out_channels = j.at("out_channels").get<int>();
  const auto& size = j.at("input_size");
  if (!size.is_array() || size.size() != 2) throw nlohmann::json::type_error::create(302, "input_size must be [H, W]", nullptr);
  c.input_height = size[0].get<int>();
  c.input_width = size[1].get<int>();
  return c;
}

}  // namespace

std::string config_to_json(const UNetConfig& config) { return config_json(config).dump(); }

UNetConfig config_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    for (auto it = j.begin(); it != j.end(); ++it) {
      static const char* known[] = {"depth", "base_channels", "in_channels", "out_channels", "input_size"};
      if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return it.key() == k; }) ==
          std::end(known))
        throw Error(ErrorCode::InvalidArgument, "unknown model config key '" + it.key() + "'");
    }
    UNetConfig c = default_config();
    if (j.contains("depth")) c.depth = j["depth"].get<int>();
    if (j.contains("base_channels")) c.base_channels = j["base_channels"].get<int>();
    if (j.contains("in_channels")) c.in_channels = j["in_channels"].get<int>();
    if (j.contains("out_channels")) c.out_channels = j["out_channels"].get<int>();
    if (j.contains("input_size")) {
      c.input_height = j["input_size"].at(0).get<int>();
      c.input_width = j["input_size"].at(1).get<int>();
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("model config: ") + e.what());
  }
}

std::vector<std::uint8_t> save_weights(const UNetModel& model) {
  static_assert(sizeof(float) == 4);
  nlohmann::json header = config_json(model.config);
  nlohmann::json manifest = nlohmann::json::array();
  for (const auto& name : model.params.names())
    manifest.push_back({{"name", name}, {"shape", model.params.get(name).value.shape()}});
  header["manifest"] = manifest;
  header["trained_epochs"] = model.trained_epochs;
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + 4 * model.params.scalar_count());
  for (const auto& name : model.params.names())
    for (float v : model.params.get(name).value.values()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

UNetModel load_weights(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw Error(ErrorCode::BadMagic, "not an OCUW weights file");
  if (bytes.size() < 12) throw Error(ErrorCode::TruncatedPayload, "header cut short");
  const std::uint32_t version = get_u32(bytes.data() + 4);
  if (version != kVersion) throw Error(ErrorCode::VersionUnsupported, "weights version " + std::to_string(version));
  const std::uint32_t header_len = get_u32(bytes.data() + 8);
  if (bytes.size() - 12 < header_len) throw Error(ErrorCode::TruncatedPayload, "header cut short");

  UNetModel model;
  std::vector<std::pair<std::string, std::vector<int>>> expected;
  try {
    const auto header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + header_len);
    model.config = parse_config(header);
    model.trained_epochs = header.value("trained_epochs", 0);
    expected = parameter_manifest(model.config);
    const auto& manifest = header.at("manifest");
    if (manifest.size() != expected.size()) throw Error(ErrorCode::ManifestMismatch, "parameter count differs from config");
    for (std::size_t i = 0; i < expected.size(); ++i) {
      if (manifest[i].at("name").get<std::string>() != expected[i].first ||
          manifest[i].at("shape").get<std::vector<int>>() != expected[i].second)
        throw Error(ErrorCode::ManifestMismatch, "parameter " + expected[i].first + " does not match config");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ManifestMismatch, std::string("unreadable header: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::InfeasibleInput) throw Error(ErrorCode::ManifestMismatch, e.what());
    throw;
  }

  std::size_t need = 0;
  for (const auto& [name, shape] : expected) need += nn::shape_volume(shape);
  const std::size_t payload = bytes.size() - 12 - header_len;
  if (payload < 4 * need) throw Error(ErrorCode::TruncatedPayload, "payload shorter than manifest");
  if (payload > 4 * need) throw Error(ErrorCode::ManifestMismatch, "trailing bytes after payload");

  const std::uint8_t* p = bytes.data() + 12 + header_len;
  for (const auto& [name, shape] : expected) {
    nn::Param& param = model.params.add(name, shape);
    for (auto& v : param.value.values()) {
      v = std::bit_cast<float>(get_u32(p));
      p += 4;
    }
  }
  return model;
}

void save_weights_file(const UNetModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  const auto bytes = save_weights(model);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path);
}

UNetModel load_weights_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return load_weights(bytes);
}

}  // namespace ocutrack::unet
