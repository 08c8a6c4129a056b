#include "nncore.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "error.hpp"

namespace ocutrack::nn {

std::size_t shape_volume(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int e : shape) n *= static_cast<std::size_t>(e);
  return n;
}

std::string shape_string(const std::vector<int>& shape) {
  std::ostringstream os;
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  return os.str();
}

Tensor::Tensor(std::vector<int> shape, float fill) : shape_(std::move(shape)) {
  if (shape_.empty() || shape_.size() > 4) throw Error(ErrorCode::ShapeMismatch, "tensor rank must be 1..4");
  for (int e : shape_)
    if (e < 1) throw Error(ErrorCode::ShapeMismatch, "tensor extents must be positive");
  data_.assign(shape_volume(shape_), fill);
}

Tensor::Tensor(std::vector<int> shape, std::vector<float> data) : Tensor(std::move(shape)) {
  if (data.size() != data_.size()) throw Error(ErrorCode::ShapeMismatch, "data length does not match shape");
  data_ = std::move(data);
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

Param& ParamSet::add(const std::string& name, std::vector<int> shape) {
  if (index_.count(name)) throw Error(ErrorCode::InvalidArgument, "duplicate parameter " + name);
  index_[name] = params_.size();
  order_.push_back(name);
  Tensor t(std::move(shape));
  params_.push_back(Param{t, t, t});
  return params_.back();
}

Param& ParamSet::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error(ErrorCode::InvalidArgument, "no parameter " + name);
  return params_[it->second];
}

const Param& ParamSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error(ErrorCode::InvalidArgument, "no parameter " + name);
  return params_[it->second];
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParamSet::zero_grads() {
  for (auto& p : params_) p.grad.fill(0.0f);
}

namespace {

void require_chw(const Tensor& t, const char* what) {
  if (t.rank() != 3) throw Error(ErrorCode::ShapeMismatch, std::string(what) + " must be C x H x W");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape())
    throw Error(ErrorCode::ShapeMismatch, std::string(what) + ": " + shape_string(a.shape()) + " vs " +
                                              shape_string(b.shape()));
}

// Fixed-order sum in double; the only reduction primitive used by backward passes.
double ordered_sum(const float* p, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += p[i];
  return s;
}

// Dot-product accumulator with a fixed lane layout: vectorizes without
// reassociation flags and sums in the same order on every run.
struct LaneSum {
  static constexpr int kLanes = 16;
  float lane[kLanes] = {};

  void dot(const float* a, const float* b, int n) {
    int i = 0;
    for (; i + kLanes <= n; i += kLanes)
      for (int j = 0; j < kLanes; ++j) lane[j] += a[i + j] * b[i + j];
    const int rem = n - i;
    for (int j = 0; j < rem; ++j) lane[j] += a[i + j] * b[i + j];
  }
  double total() const {
    double s = 0.0;
    for (float v : lane) s += v;
    return s;
  }
};

}  // namespace

// ---- 3x3 valid convolution ---------------------------------------------------

Tensor conv2d_valid(const Tensor& input, const Tensor& weights, const Tensor& bias, Conv3x3Cache* cache) {
  require_chw(input, "conv input");
  const int C = input.dim(0), H = input.dim(1), W = input.dim(2);
  if (weights.rank() != 4 || weights.dim(1) != C || weights.dim(2) != 3 || weights.dim(3) != 3)
    throw Error(ErrorCode::ShapeMismatch, "conv weights must be K x C x 3 x 3, got " + shape_string(weights.shape()));
  const int K = weights.dim(0);
  if (bias.size() != static_cast<std::size_t>(K)) throw Error(ErrorCode::ShapeMismatch, "conv bias length");
  if (H < 3 || W < 3) throw Error(ErrorCode::ShapeMismatch, "conv input smaller than kernel");
  const int Ho = H - 2, Wo = W - 2;

  Tensor out({K, Ho, Wo});
  const float* in = input.data();
  const float* wt = weights.data();
  for (int k = 0; k < K; ++k) {
    float* o = out.data() + static_cast<std::size_t>(k) * Ho * Wo;
    std::fill(o, o + static_cast<std::size_t>(Ho) * Wo, bias[k]);
    for (int c = 0; c < C; ++c) {
      const float* ic = in + static_cast<std::size_t>(c) * H * W;
      const float* w9 = wt + (static_cast<std::size_t>(k) * C + c) * 9;
      for (int y = 0; y < Ho; ++y) {
        float* orow = o + static_cast<std::size_t>(y) * Wo;
        for (int dy = 0; dy < 3; ++dy) {
          const float* irow = ic + static_cast<std::size_t>(y + dy) * W;
          const float w0 = w9[dy * 3], w1 = w9[dy * 3 + 1], w2 = w9[dy * 3 + 2];
          for (int x = 0; x < Wo; ++x) orow[x] += w0 * irow[x] + w1 * irow[x + 1] + w2 * irow[x + 2];
        }
      }
    }
  }
  if (cache) {
    cache->input = input;
    cache->weights = weights;
  }
  return out;
}

ConvGrads conv2d_valid_backward(const Conv3x3Cache& cache, const Tensor& grad_out) {
  const Tensor& input = cache.input;
  const Tensor& weights = cache.weights;
  const int C = input.dim(0), H = input.dim(1), W = input.dim(2);
  const int K = weights.dim(0), Ho = H - 2, Wo = W - 2;
  if (grad_out.shape() != std::vector<int>{K, Ho, Wo})
    throw Error(ErrorCode::ShapeMismatch, "conv grad_out shape " + shape_string(grad_out.shape()));

  ConvGrads g{Tensor(input.shape()), Tensor(weights.shape()), Tensor({K})};
  const float* in = input.data();
  const float* go = grad_out.data();
  const std::size_t plane_out = static_cast<std::size_t>(Ho) * Wo;
  const std::size_t plane_in = static_cast<std::size_t>(H) * W;

  for (int k = 0; k < K; ++k) {
    const float* gk = go + k * plane_out;
    g.bias[k] = static_cast<float>(ordered_sum(gk, plane_out));
    for (int c = 0; c < C; ++c) {
      const float* ic = in + c * plane_in;
      LaneSum taps[9];
      for (int y = 0; y < Ho; ++y) {
        const float* grow = gk + static_cast<std::size_t>(y) * Wo;
        for (int dy = 0; dy < 3; ++dy) {
          const float* irow = ic + static_cast<std::size_t>(y + dy) * W;
          for (int dx = 0; dx < 3; ++dx) taps[dy * 3 + dx].dot(grow, irow + dx, Wo);
        }
      }
      float* gw = g.weights.data() + (static_cast<std::size_t>(k) * C + c) * 9;
      for (int t = 0; t < 9; ++t) gw[t] = static_cast<float>(taps[t].total());
    }
  }

  // grad_input is the full correlation of grad_out with the flipped kernel,
  // gathered per input row so each output element is written once per tap row
  const float* wt = weights.data();
  for (int c = 0; c < C; ++c) {
    float* gi = g.input.data() + c * plane_in;
    for (int k = 0; k < K; ++k) {
      const float* gk = go + k * plane_out;
      const float* w9 = wt + (static_cast<std::size_t>(k) * C + c) * 9;
      for (int y = 0; y < H; ++y) {
        float* irow = gi + static_cast<std::size_t>(y) * W;
        for (int dy = 0; dy < 3; ++dy) {
          const int yo = y - dy;
          if (yo < 0 || yo >= Ho) continue;
          const float* grow = gk + static_cast<std::size_t>(yo) * Wo;
          const float w0 = w9[dy * 3], w1 = w9[dy * 3 + 1], w2 = w9[dy * 3 + 2];
          if (Wo < 3) {
            for (int x = 0; x < Wo; ++x) {
              irow[x] += w0 * grow[x];
              irow[x + 1] += w1 * grow[x];
              irow[x + 2] += w2 * grow[x];
            }
            continue;
          }
          irow[0] += w0 * grow[0];
          irow[1] += w0 * grow[1] + w1 * grow[0];
          for (int x = 2; x < Wo; ++x) irow[x] += w0 * grow[x] + w1 * grow[x - 1] + w2 * grow[x - 2];
          irow[Wo] += w1 * grow[Wo - 1] + w2 * grow[Wo - 2];
          irow[Wo + 1] += w2 * grow[Wo - 1];
        }
      }
    }
  }
  return g;
}

// ---- 1x1 convolution ---------------------------------------------------------

Tensor conv1x1(const Tensor& input, const Tensor& weights, const Tensor& bias, Conv1x1Cache* cache) {
  require_chw(input, "conv1x1 input");
  const int C = input.dim(0), H = input.dim(1), W = input.dim(2);
  if (weights.rank() != 2 || weights.dim(1) != C) throw Error(ErrorCode::ShapeMismatch, "conv1x1 weights must be K x C");
  const int K = weights.dim(0);
  if (bias.size() != static_cast<std::size_t>(K)) throw Error(ErrorCode::ShapeMismatch, "conv1x1 bias length");
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  Tensor out({K, H, W});
  for (int k = 0; k < K; ++k) {
    float* o = out.data() + k * plane;
    std::fill(o, o + plane, bias[k]);
    for (int c = 0; c < C; ++c) {
      const float w = weights[static_cast<std::size_t>(k) * C + c];
      const float* i = input.data() + c * plane;
      for (std::size_t p = 0; p < plane; ++p) o[p] += w * i[p];
    }
  }
  if (cache) {
    cache->input = input;
    cache->weights = weights;
  }
  return out;
}

ConvGrads conv1x1_backward(const Conv1x1Cache& cache, const Tensor& grad_out) {
  const Tensor& input = cache.input;
  const int C = input.dim(0), H = input.dim(1), W = input.dim(2);
  const int K = cache.weights.dim(0);
  if (grad_out.shape() != std::vector<int>{K, H, W}) throw Error(ErrorCode::ShapeMismatch, "conv1x1 grad_out shape");
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  ConvGrads g{Tensor(input.shape()), Tensor(cache.weights.shape()), Tensor({K})};
  std::vector<float> prod(plane);
  for (int k = 0; k < K; ++k) {
    const float* gk = grad_out.data() + k * plane;
    g.bias[k] = static_cast<float>(ordered_sum(gk, plane));
    for (int c = 0; c < C; ++c) {
      const float* i = input.data() + c * plane;
      for (std::size_t p = 0; p < plane; ++p) prod[p] = gk[p] * i[p];
      g.weights[static_cast<std::size_t>(k) * C + c] = static_cast<float>(ordered_sum(prod.data(), plane));
      const float w = cache.weights[static_cast<std::size_t>(k) * C + c];
      float* gi = g.input.data() + c * plane;
      for (std::size_t p = 0; p < plane; ++p) gi[p] += w * gk[p];
    }
  }
  return g;
}

// ---- activations -------------------------------------------------------------

Tensor relu(const Tensor& input, ReluCache* cache) {
  Tensor out = input;
  for (auto& v : out.values()) v = v > 0.0f ? v : 0.0f;
  if (cache) cache->input = input;
  return out;
}

Tensor relu_backward(const ReluCache& cache, const Tensor& grad_out) {
  require_same_shape(cache.input, grad_out, "relu backward");
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!(cache.input[i] > 0.0f)) g[i] = 0.0f;
  return g;
}

namespace {
float stable_sigmoid(float x) {
  if (x >= 0.0f) return 1.0f / (1.0f + std::exp(-x));
  const float e = std::exp(x);
  return e / (1.0f + e);
}
}  // namespace

Tensor sigmoid(const Tensor& input, SigmoidCache* cache) {
  Tensor out = input;
  for (auto& v : out.values()) v = stable_sigmoid(v);
  if (cache) cache->output = out;
  return out;
}

Tensor sigmoid_backward(const SigmoidCache& cache, const Tensor& grad_out) {
  require_same_shape(cache.output, grad_out, "sigmoid backward");
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const float s = cache.output[i];
    g[i] *= s * (1.0f - s);
  }
  return g;
}

// ---- 2x2 max pool --------------------------------------------------------------

Tensor maxpool2(const Tensor& input, MaxPoolCache* cache) {
  require_chw(input, "maxpool input");
  const int C = input.dim(0), H = input.dim(1), W = input.dim(2);
  if (H % 2 || W % 2) throw Error(ErrorCode::OddDimension, "maxpool needs even H and W, got " + shape_string(input.shape()));
  const int Ho = H / 2, Wo = W / 2;
  Tensor out({C, Ho, Wo});
  std::vector<std::uint32_t> arg(out.size());
  std::size_t o = 0;
  for (int c = 0; c < C; ++c) {
    for (int y = 0; y < Ho; ++y) {
      for (int x = 0; x < Wo; ++x, ++o) {
        // row-major window scan; strict '>' keeps the first maximum
        std::uint32_t best = static_cast<std::uint32_t>((static_cast<std::size_t>(c) * H + 2 * y) * W + 2 * x);
        float bv = input[best];
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const auto idx = static_cast<std::uint32_t>((static_cast<std::size_t>(c) * H + 2 * y + dy) * W + 2 * x + dx);
            if (input[idx] > bv) {
              bv = input[idx];
              best = idx;
            }
          }
        }
        out[o] = bv;
        arg[o] = best;
      }
    }
  }
  if (cache) {
    cache->input_shape = input.shape();
    cache->argmax = std::move(arg);
  }
  return out;
}

Tensor maxpool2_backward(const MaxPoolCache& cache, const Tensor& grad_out) {
  if (grad_out.size() != cache.argmax.size()) throw Error(ErrorCode::ShapeMismatch, "maxpool grad_out shape");
  Tensor g(cache.input_shape);
  for (std::size_t o = 0; o < grad_out.size(); ++o) g[cache.argmax[o]] += grad_out[o];
  return g;
}

// ---- 2x2 stride-2 transposed convolution ---------------------------------------------

Tensor upconv2(const Tensor& input, const Tensor& weights, const Tensor& bias, UpConvCache* cache) {
  require_chw(input, "upconv input");
  const int C = input.dim(0), H = input.dim(1), W = input.dim(2);
  if (weights.rank() != 4 || weights.dim(1) != C || weights.dim(2) != 2 || weights.dim(3) != 2)
    throw Error(ErrorCode::ShapeMismatch, "upconv weights must be K x C x 2 x 2, got " + shape_string(weights.shape()));
  const int K = weights.dim(0);
  if (bias.size() != static_cast<std::size_t>(K)) throw Error(ErrorCode::ShapeMismatch, "upconv bias length");
  const int H2 = 2 * H, W2 = 2 * W;
  Tensor out({K, H2, W2});
  const std::size_t plane_in = static_cast<std::size_t>(H) * W;
  for (int k = 0; k < K; ++k) {
    float* o = out.data() + static_cast<std::size_t>(k) * H2 * W2;
    std::fill(o, o + static_cast<std::size_t>(H2) * W2, bias[k]);
    for (int c = 0; c < C; ++c) {
      const float* ic = input.data() + c * plane_in;
      const float* w4 = weights.data() + (static_cast<std::size_t>(k) * C + c) * 4;
      for (int y = 0; y < H; ++y) {
        const float* irow = ic + static_cast<std::size_t>(y) * W;
        for (int dy = 0; dy < 2; ++dy) {
          float* orow = o + static_cast<std::size_t>(2 * y + dy) * W2;
          const float w0 = w4[dy * 2], w1 = w4[dy * 2 + 1];
          for (int x = 0; x < W; ++x) {
            orow[2 * x] += w0 * irow[x];
            orow[2 * x + 1] += w1 * irow[x];
          }
        }
      }
    }
  }
  if (cache) {
    cache->input = input;
    cache->weights = weights;
  }
  return out;
}

ConvGrads upconv2_backward(const UpConvCache& cache, const Tensor& grad_out) {
  const Tensor& input = cache.input;
  const Tensor& weights = cache.weights;
  const int C = input.dim(0), H = input.dim(1), W = input.dim(2);
  const int K = weights.dim(0), H2 = 2 * H, W2 = 2 * W;
  if (grad_out.shape() != std::vector<int>{K, H2, W2}) throw Error(ErrorCode::ShapeMismatch, "upconv grad_out shape");
  ConvGrads g{Tensor(input.shape()), Tensor(weights.shape()), Tensor({K})};
  const std::size_t plane_in = static_cast<std::size_t>(H) * W;
  const std::size_t plane_out = static_cast<std::size_t>(H2) * W2;
  std::vector<float> acc(4 * static_cast<std::size_t>(W));
  for (int k = 0; k < K; ++k) {
    const float* gk = grad_out.data() + k * plane_out;
    g.bias[k] = static_cast<float>(ordered_sum(gk, plane_out));
    for (int c = 0; c < C; ++c) {
      const float* ic = input.data() + c * plane_in;
      const float* w4 = weights.data() + (static_cast<std::size_t>(k) * C + c) * 4;
      float* gi = g.input.data() + c * plane_in;
      std::fill(acc.begin(), acc.end(), 0.0f);
      for (int y = 0; y < H; ++y) {
        const float* irow = ic + static_cast<std::size_t>(y) * W;
        float* girow = gi + static_cast<std::size_t>(y) * W;
        for (int dy = 0; dy < 2; ++dy) {
          const float* grow = gk + static_cast<std::size_t>(2 * y + dy) * W2;
          float* a0 = acc.data() + static_cast<std::size_t>(dy * 2) * W;
          float* a1 = a0 + W;
          const float w0 = w4[dy * 2], w1 = w4[dy * 2 + 1];
          for (int x = 0; x < W; ++x) {
            a0[x] += grow[2 * x] * irow[x];
            a1[x] += grow[2 * x + 1] * irow[x];
            girow[x] += w0 * grow[2 * x] + w1 * grow[2 * x + 1];
          }
        }
      }
      float* gw = g.weights.data() + (static_cast<std::size_t>(k) * C + c) * 4;
      for (int t = 0; t < 4; ++t) gw[t] = static_cast<float>(ordered_sum(acc.data() + static_cast<std::size_t>(t) * W, W));
    }
  }
  return g;
}

// ---- crop + concat skip connection ---------------------------------------------

Tensor concat_crop(const Tensor& skip, const Tensor& up, ConcatCache* cache) {
  require_chw(skip, "concat skip");
  require_chw(up, "concat up");
  const int C1 = skip.dim(0), Hs = skip.dim(1), Ws = skip.dim(2);
  const int C2 = up.dim(0), Hu = up.dim(1), Wu = up.dim(2);
  const int my = Hs - Hu, mx = Ws - Wu;
  if (my < 0 || mx < 0 || my % 2 || mx % 2)
    throw Error(ErrorCode::CropImpossible, "cannot center-crop " + shape_string(skip.shape()) + " to " +
                                               std::to_string(Hu) + "x" + std::to_string(Wu));
  const int oy = my / 2, ox = mx / 2;
  Tensor out({C1 + C2, Hu, Wu});
  const std::size_t plane = static_cast<std::size_t>(Hu) * Wu;
  for (int c = 0; c < C1; ++c)
    for (int y = 0; y < Hu; ++y) {
      const float* src = skip.data() + (static_cast<std::size_t>(c) * Hs + y + oy) * Ws + ox;
      std::copy(src, src + Wu, out.data() + c * plane + static_cast<std::size_t>(y) * Wu);
    }
  std::copy(up.data(), up.data() + up.size(), out.data() + C1 * plane);
  if (cache) *cache = ConcatCache{skip.shape(), C2, oy, ox};
  return out;
}

ConcatGrads concat_crop_backward(const ConcatCache& cache, const Tensor& grad_out) {
  const int C1 = cache.skip_shape[0], Hs = cache.skip_shape[1], Ws = cache.skip_shape[2];
  if (grad_out.rank() != 3 || grad_out.dim(0) != C1 + cache.up_channels)
    throw Error(ErrorCode::ShapeMismatch, "concat grad_out shape");
  const int Hu = grad_out.dim(1), Wu = grad_out.dim(2);
  const std::size_t plane = static_cast<std::size_t>(Hu) * Wu;
  ConcatGrads g{Tensor(cache.skip_shape), Tensor({cache.up_channels, Hu, Wu})};
  for (int c = 0; c < C1; ++c)
    for (int y = 0; y < Hu; ++y) {
      const float* src = grad_out.data() + c * plane + static_cast<std::size_t>(y) * Wu;
      std::copy(src, src + Wu, g.skip.data() + (static_cast<std::size_t>(c) * Hs + y + cache.offset_y) * Ws + cache.offset_x);
    }
  std::copy(grad_out.data() + C1 * plane, grad_out.data() + grad_out.size(), g.up.data());
  return g;
}

// ---- loss & optimizer ------------------------------------------------------------

LossResult bce_loss(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "bce_loss");
  LossResult r{0.0, Tensor(pred.shape())};
  const double n = static_cast<double>(pred.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = std::clamp(static_cast<double>(pred[i]), double{kProbClamp}, 1.0 - kProbClamp);
    const double t = target[i];
    sum += -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p));
    r.grad[i] = static_cast<float>((p - t) / (p * (1.0 - p)) / n);
  }
  r.loss = sum / n;
  return r;
}

LossResult bce_with_logits(const Tensor& logits, const Tensor& target) {
  require_same_shape(logits, target, "bce_with_logits");
  LossResult r{0.0, Tensor(logits.shape())};
  const double n = static_cast<double>(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = logits[i];
    const double t = target[i];
    // log(1 + e^z) - t z without overflow
    sum += std::max(z, 0.0) - t * z + std::log1p(std::exp(-std::abs(z)));
    const double p = 1.0 / (1.0 + std::exp(-z));
    r.grad[i] = static_cast<float>((p - t) / n);
  }
  r.loss = sum / n;
  return r;
}

void sgd_step(ParamSet& params, float lr, float momentum_coeff) {
  for (const auto& name : params.names()) {
    Param& p = params.get(name);
    float* v = p.value.data();
    float* g = p.grad.data();
    float* m = p.momentum.data();
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      m[i] = momentum_coeff * m[i] + g[i];
      v[i] -= lr * m[i];
      g[i] = 0.0f;
    }
  }
}

}  // namespace ocutrack::nn
