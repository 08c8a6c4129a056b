#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>

#include "config.hpp"

namespace ocutrack::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitUsage = 2,
  kExitIo = 3,
  kExitInfeasible = 4,
  kExitCalibration = 5,
};

struct Globals {
  RunConfig config;
  std::uint64_t seed = 1;
  int workers = 1;
};

struct SynthArgs {
  std::string out_dir;  // empty: paths.dataset
  std::optional<std::size_t> pupil_count;
  std::optional<std::size_t> cr_count;
  std::size_t ramp = 0;  // > 0: write one gaze-ramp sequence instead of the training sets
  double ramp_from_deg = -25.0;
  double ramp_to_deg = 25.0;
};

struct TrainArgs {
  std::string target = "pupil";
  std::string dataset;          // empty: paths.dataset/<target>
  std::string holdout_dataset;  // separate held-out set; empty: split by holdout_fraction
  std::string resume;
  std::string out;  // empty: paths.models/<target>.ocuw
  std::optional<int> epochs;
  std::string report;
};

struct TrackArgs {
  std::string frames;  // empty: paths.frames
  std::string pupil_model;
  std::string cr_model;
  std::string calibration;  // empty: config calibration
  std::string out;          // empty: paths.outputs/trace.csv
  std::string overlay;
};

struct CalibrateArgs {
  std::string swing;
  std::string out;  // empty: paths.outputs/calibration.json
};

struct EvalArgs {
  std::string dataset;
  std::string model;
  std::string target = "pupil";
  bool baseline = false;
  std::string split = "all";  // all | holdout
  std::string report;
};

int cmd_synth(const Globals& g, const SynthArgs& a, std::ostream& out, std::ostream& err);
int cmd_train(const Globals& g, const TrainArgs& a, std::ostream& out, std::ostream& err);
int cmd_track(const Globals& g, const TrackArgs& a, std::ostream& out, std::ostream& err);
int cmd_calibrate(const Globals& g, const CalibrateArgs& a, std::ostream& out, std::ostream& err);
int cmd_eval(const Globals& g, const EvalArgs& a, std::ostream& out, std::ostream& err);

// Full command line entry point (argv[0] is the program name).
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

int exit_code_for(oct_status status);

inline constexpr const char* kTraceHeader =
    "frame_index,pupil_x,pupil_y,pupil_a,pupil_b,pupil_angle,cr_x,cr_y,theta_h_deg,theta_v_deg,valid,latency_ms";

}  // namespace ocutrack::cli
