#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "imagekit.hpp"
#include "nncore.hpp"

namespace ocutrack::unet {

struct UNetConfig {
  int depth = 3;
  int base_channels = 8;
  int in_channels = 1;
  int out_channels = 1;
  int input_height = 132;
  int input_width = 132;

  bool operator==(const UNetConfig&) const = default;
};

// Desk-scale default: depth 3, 8 base channels, 132x132 input -> 44x44 output.
UNetConfig default_config();

struct Size2 {
  int height = 0;
  int width = 0;
  bool operator==(const Size2&) const = default;
};

// Spatial size after the full valid-convolution U. Throws InfeasibleInput when
// any stage yields a non-positive size or an odd size entering a pool.
Size2 output_shape(const UNetConfig& config);
int output_extent(int depth, int input_extent);

// Parameter names and shapes in file order: encoder levels top-down, the
// bottleneck, decoder levels bottom-up, then the 1x1 head.
std::vector<std::pair<std::string, std::vector<int>>> parameter_manifest(const UNetConfig& config);

struct UNetModel {
  UNetConfig config;
  nn::ParamSet params;
  int trained_epochs = 0;
};

UNetModel build(const UNetConfig& config, std::uint64_t seed);

struct ProbabilityMap {
  nn::Tensor prob;  // 1 x Ho x Wo
  int offset_y = 0;
  int offset_x = 0;
};

ProbabilityMap forward(const UNetModel& model, const imagekit::GrayImage& image);

// Thresholded probability map pasted into a full-size mask; pixels outside the
// output window stay false.
imagekit::BinaryMask predict_mask(const UNetModel& model, const imagekit::GrayImage& image,
                                  float prob_threshold = 0.5f);

// Scalar BCE loss for one sample and its gradient accumulated into
// model.params grads. target is the full-size mask, center-cropped internally.
double loss_and_gradient(UNetModel& model, const imagekit::GrayImage& image, const imagekit::BinaryMask& target);

struct TrainHyper {
  float lr = 0.01f;
  float momentum = 0.9f;
  int epochs = 12;
  double holdout_fraction = 0.2;
  std::uint64_t shuffle_seed = 1;
};

struct EpochStats {
  int epoch = 0;  // counted across resumed runs
  double mean_loss = 0.0;
  double pixel_accuracy = 0.0;
  double iou = 0.0;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  std::size_t train_count = 0;
  std::size_t holdout_count = 0;
};

struct Sample {
  const imagekit::GrayImage* image;
  const imagekit::BinaryMask* mask;
};

using EpochCallback = std::function<void(const EpochStats&)>;

// Resuming from an already-trained model is the incremental-training path.
TrainReport train(UNetModel& model, std::span<const Sample> dataset, const TrainHyper& hyper,
                  const EpochCallback& on_epoch = {});

// Same, scoring each epoch on an explicit held-out set (holdout_fraction is
// ignored). An empty holdout_set scores the training set.
TrainReport train(UNetModel& model, std::span<const Sample> train_set, std::span<const Sample> holdout_set,
                  const TrainHyper& hyper, const EpochCallback& on_epoch = {});

struct SegmentationScore {
  double pixel_accuracy = 0.0;
  double iou = 0.0;
  std::size_t pixels = 0;
};

// Scores are taken over the output window only.
SegmentationScore evaluate(const UNetModel& model, std::span<const Sample> samples, float prob_threshold = 0.5f);

// Held-out indices for a dataset of n samples under the given hyperparameters.
std::vector<std::size_t> holdout_indices(std::size_t n, const TrainHyper& hyper);

std::vector<std::uint8_t> save_weights(const UNetModel& model);
UNetModel load_weights(std::span<const std::uint8_t> bytes);

void save_weights_file(const UNetModel& model, const std::string& path);
UNetModel load_weights_file(const std::string& path);

std::string config_to_json(const UNetConfig& config);
UNetConfig config_from_json(const std::string& text);

}  // namespace ocutrack::unet
