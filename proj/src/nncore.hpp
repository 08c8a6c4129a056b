#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace ocutrack::nn {

// Shaped float array, row-major. Feature maps are C x H x W.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, float fill = 0.0f);
  Tensor(std::vector<int> shape, std::vector<float> data);

  const std::vector<int>& shape() const { return shape_; }
  int dim(std::size_t i) const { return shape_.at(i); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::vector<float>& values() { return data_; }
  const std::vector<float>& values() const { return data_; }
  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  // C x H x W accessors
  float& at(int c, int y, int x) { return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x]; }
  float at(int c, int y, int x) const { return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x]; }

  void fill(float v);
  bool operator==(const Tensor&) const = default;

 private:
  std::vector<int> shape_;
  std::vector<float> data_;
};

std::size_t shape_volume(const std::vector<int>& shape);
std::string shape_string(const std::vector<int>& shape);

struct Param {
  Tensor value;
  Tensor grad;
  Tensor momentum;
};

// Named parameters in insertion order. Order is part of the weights file
// format, so it must be a pure function of the model configuration.
class ParamSet {
 public:
  Param& add(const std::string& name, std::vector<int> shape);
  Param& get(const std::string& name);
  const Param& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const std::vector<std::string>& names() const { return order_; }
  std::size_t size() const { return order_.size(); }
  std::size_t scalar_count() const;
  void zero_grads();

 private:
  std::vector<std::string> order_;
  std::vector<Param> params_;
  std::map<std::string, std::size_t> index_;
};

// ---- layers -----------------------------------------------------------------
// Each forward returns its output plus the cache its backward consumes.

struct Conv3x3Cache {
  Tensor input;
  Tensor weights;
};
struct ConvGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

Tensor conv2d_valid(const Tensor& input, const Tensor& weights, const Tensor& bias,
                    Conv3x3Cache* cache = nullptr);
ConvGrads conv2d_valid_backward(const Conv3x3Cache& cache, const Tensor& grad_out);

// Pointwise (1x1) convolution used for the segmentation head.
struct Conv1x1Cache {
  Tensor input;
  Tensor weights;
};
Tensor conv1x1(const Tensor& input, const Tensor& weights, const Tensor& bias,
               Conv1x1Cache* cache = nullptr);
ConvGrads conv1x1_backward(const Conv1x1Cache& cache, const Tensor& grad_out);

struct ReluCache {
  Tensor input;
};
Tensor relu(const Tensor& input, ReluCache* cache = nullptr);
Tensor relu_backward(const ReluCache& cache, const Tensor& grad_out);

struct SigmoidCache {
  Tensor output;
};
Tensor sigmoid(const Tensor& input, SigmoidCache* cache = nullptr);
Tensor sigmoid_backward(const SigmoidCache& cache, const Tensor& grad_out);

struct MaxPoolCache {
  std::vector<int> input_shape;
  std::vector<std::uint32_t> argmax;  // flat input index per output element
};
Tensor maxpool2(const Tensor& input, MaxPoolCache* cache = nullptr);
Tensor maxpool2_backward(const MaxPoolCache& cache, const Tensor& grad_out);

struct UpConvCache {
  Tensor input;
  Tensor weights;
};
Tensor upconv2(const Tensor& input, const Tensor& weights, const Tensor& bias,
               UpConvCache* cache = nullptr);
ConvGrads upconv2_backward(const UpConvCache& cache, const Tensor& grad_out);

struct ConcatCache {
  std::vector<int> skip_shape;
  int up_channels = 0;
  int offset_y = 0;
  int offset_x = 0;
};
Tensor concat_crop(const Tensor& skip, const Tensor& up, ConcatCache* cache = nullptr);
struct ConcatGrads {
  Tensor skip;
  Tensor up;
};
ConcatGrads concat_crop_backward(const ConcatCache& cache, const Tensor& grad_out);

struct LossResult {
  double loss = 0.0;
  Tensor grad;
};
inline constexpr float kProbClamp = 1e-7f;
LossResult bce_loss(const Tensor& pred, const Tensor& target);

// Same loss taken on pre-sigmoid logits. The gradient (p - t)/N w.r.t. the
// logits stays finite when the sigmoid saturates, so training uses this form.
LossResult bce_with_logits(const Tensor& logits, const Tensor& target);

// m <- mu*m + g; w <- w - lr*m; then g <- 0.
void sgd_step(ParamSet& params, float lr, float momentum_coeff);

}  // namespace ocutrack::nn
