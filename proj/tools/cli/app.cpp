#include <CLI11.hpp>

#include "commands.hpp"

namespace ocutrack::cli {

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"ocutrack: synthetic-eye U-Net pupil/CR tracker"};
  app.require_subcommand(1);

  std::string config_path;
  Globals g;
  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "seed for every random choice (U64)");
  app.add_option("--workers", g.workers, "frame-level worker threads for track")->check(CLI::PositiveNumber);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "generate the pupil and CR training sets");
  synth->fallthrough();
  synth->add_option("--out", sa.out_dir, "output directory (default: paths.dataset)");
  synth->add_option("--pupil-count", sa.pupil_count, "pupil set size");
  synth->add_option("--cr-count", sa.cr_count, "CR set size");
  synth->add_option("--ramp", sa.ramp, "write an N-frame horizontal gaze ramp instead");
  synth->add_option("--ramp-from", sa.ramp_from_deg, "ramp start, degrees");
  synth->add_option("--ramp-to", sa.ramp_to_deg, "ramp end, degrees");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "train or resume a segmentation model");
  train->fallthrough();
  train->add_option("--target", ta.target, "pupil | cr")->check(CLI::IsMember({"pupil", "cr"}));
  train->add_option("--dataset", ta.dataset, "dataset directory (default: paths.dataset/<target>)");
  train->add_option("--holdout-dataset", ta.holdout_dataset, "separate held-out dataset for per-epoch metrics");
  train->add_option("--resume", ta.resume, "weights file to continue training from");
  train->add_option("--out", ta.out, "weights output (default: paths.models/<target>.ocuw)");
  train->add_option("--epochs", ta.epochs, "epochs to run (default: unet.epochs)");
  train->add_option("--report", ta.report, "also write the epoch table here (appended on --resume)");

  TrackArgs ka;
  auto* track = app.add_subcommand("track", "track gaze over a directory of PGM frames");
  track->fallthrough();
  track->add_option("--frames", ka.frames, "frames directory (default: paths.frames)");
  track->add_option("--pupil-model", ka.pupil_model, "pupil weights")->required();
  track->add_option("--cr-model", ka.cr_model, "CR weights")->required();
  track->add_option("--calibration", ka.calibration, "calibration JSON (default: config calibration)");
  track->add_option("--out", ka.out, "trace CSV (default: paths.outputs/trace.csv)");
  track->add_option("--overlay", ka.overlay, "directory for per-frame image/mask PGM triplets");

  CalibrateArgs ca;
  auto* calibrate = app.add_subcommand("calibrate", "fit k and theta0 from a camera-swing trace");
  calibrate->fallthrough();
  calibrate->add_option("--swing", ca.swing, "CSV of phi_deg,dx_px,dy_px")->required();
  calibrate->add_option("--out", ca.out, "calibration JSON (default: paths.outputs/calibration.json)");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "score a model against dataset ground truth");
  eval->fallthrough();
  eval->add_option("--dataset", ea.dataset, "dataset directory (default: paths.dataset/<target>)");
  eval->add_option("--model", ea.model, "weights file")->required();
  eval->add_option("--target", ea.target, "pupil | cr")->check(CLI::IsMember({"pupil", "cr"}));
  eval->add_flag("--baseline", ea.baseline, "add classical-pipeline columns");
  eval->add_option("--split", ea.split, "all | holdout")->check(CLI::IsMember({"all", "holdout"}));
  eval->add_option("--report", ea.report, "also write the report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << "run with --help for usage\n";
    return kExitUsage;
  }

  try {
    g.config = config_path.empty() ? default_config() : load_config_file(config_path);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  }

  if (*synth) return cmd_synth(g, sa, out, err);
  if (*train) return cmd_train(g, ta, out, err);
  if (*track) return cmd_track(g, ka, out, err);
  if (*calibrate) return cmd_calibrate(g, ca, out, err);
  return cmd_eval(g, ea, out, err);
}

}  // namespace ocutrack::cli
