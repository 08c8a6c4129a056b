#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ocutrack/ocutrack.h"

namespace ocutrack::cli {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Paths {
  std::string models = "models";
  std::string dataset = "data";
  std::string frames = "frames";
  std::string outputs = "out";
};

struct UNetSection {
  oct_unet_config config{};
  oct_train_hyper hyper{};
};

struct SynthSection {
  std::size_t pupil_count = 245;
  std::size_t cr_count = 325;
  std::optional<std::string> distribution_json;  // serialized override, validated by the library
};

struct FeatextSection {
  float prob_threshold = 0.5f;
  int cr_area_min = 2;
  int cr_area_max = 200;
};

struct RunConfig {
  Paths paths;
  UNetSection unet;
  SynthSection synth;
  FeatextSection featext;
  oct_classical_config classical{};
  std::string calibration;  // empty: none
  double confidence_threshold = 0.05;
  double max_latency_ms = 250.0;
};

RunConfig default_config();

// Overlays a JSON document on the defaults. Unknown keys and out-of-range
// values raise ConfigError.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config_file(const std::string& path);

std::string config_to_json(const RunConfig& c);

oct_tracker_options tracker_options(const RunConfig& c);

}  // namespace ocutrack::cli
