#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numbers>
#include <sstream>
#include <thread>
#include <vector>

namespace ocutrack::cli {

namespace fs = std::filesystem;

namespace {

struct Failure {
  int code;
  std::string message;
};

void check(oct_status s, const std::string& context) {
  if (s != OCT_OK) throw Failure{exit_code_for(s), context + ": " + oct_last_error()};
}

[[noreturn]] void usage(const std::string& msg) { throw Failure{kExitUsage, msg}; }

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using Image = std::unique_ptr<oct_image, Deleter<oct_image, oct_image_free>>;
using Mask = std::unique_ptr<oct_mask, Deleter<oct_mask, oct_mask_free>>;
using Model = std::unique_ptr<oct_model, Deleter<oct_model, oct_model_free>>;
using Dataset = std::unique_ptr<oct_dataset, Deleter<oct_dataset, oct_dataset_free>>;
using Tracker = std::unique_ptr<oct_tracker, Deleter<oct_tracker, oct_tracker_free>>;

Dataset load_dataset(const std::string& dir) {
  oct_dataset* d = nullptr;
  check(oct_dataset_load(dir.c_str(), &d), "loading dataset " + dir);
  return Dataset(d);
}

Model load_model(const std::string& path) {
  oct_model* m = nullptr;
  check(oct_model_load(path.c_str(), &m), "loading weights " + path);
  return Model(m);
}

oct_target parse_target(const std::string& t) {
  if (t == "pupil") return OCT_TARGET_PUPIL;
  if (t == "cr") return OCT_TARGET_CR;
  usage("target must be 'pupil' or 'cr', got '" + t + "'");
}

void ensure_parent_dir(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (parent.empty()) return;
  std::error_code ec;
  fs::create_directories(parent, ec);
  if (ec) throw Failure{kExitIo, "cannot create directory " + parent.string()};
}

std::ofstream open_output(const std::string& path, std::ios::openmode mode = std::ios::trunc) {
  ensure_parent_dir(path);
  std::ofstream f(path, std::ios::binary | std::ios::out | mode);
  if (!f) throw Failure{kExitIo, "cannot open for writing: " + path};
  return f;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  // nearest rank
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
  return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

constexpr double kDeg = 180.0 / std::numbers::pi;

template <typename F>
int guarded(std::ostream& err, F&& f) {
  try {
    return f();
  } catch (const Failure& e) {
    err << "error: " << e.message << "\n";
    return e.code;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace

int exit_code_for(oct_status s) {
  switch (s) {
    case OCT_OK:
      return kExitOk;
    case OCT_ERR_INVALID_ARGUMENT:
    case OCT_ERR_SIZE_MISMATCH:
    case OCT_ERR_DIMENSION_MISMATCH:
    case OCT_ERR_EMPTY_DATASET:
      return kExitUsage;
    case OCT_ERR_IO:
    case OCT_ERR_MALFORMED_HEADER:
    case OCT_ERR_TRUNCATED_DATA:
    case OCT_ERR_BAD_MAGIC:
    case OCT_ERR_VERSION_UNSUPPORTED:
    case OCT_ERR_MANIFEST_MISMATCH:
    case OCT_ERR_TRUNCATED_PAYLOAD:
      return kExitIo;
    case OCT_ERR_INFEASIBLE_INPUT:
    case OCT_ERR_ODD_DIMENSION:
    case OCT_ERR_CROP_IMPOSSIBLE:
    case OCT_ERR_SHAPE_MISMATCH:
      return kExitInfeasible;
    case OCT_ERR_INSUFFICIENT_DATA:
    case OCT_ERR_DEGENERATE_GEOMETRY:
      return kExitCalibration;
    default:
      return kExitFailure;
  }
}

// ---- synth ------------------------------------------------------------------

int cmd_synth(const Globals& g, const SynthArgs& a, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig& c = g.config;
    const std::string dir = a.out_dir.empty() ? c.paths.dataset : a.out_dir;
    const char* dist = c.synth.distribution_json ? c.synth.distribution_json->c_str() : nullptr;

    if (a.ramp > 0) {
      oct_dataset* d = nullptr;
      check(oct_dataset_gaze_ramp(a.ramp, a.ramp_from_deg / kDeg, a.ramp_to_deg / kDeg, g.seed, &d), "gaze ramp");
      Dataset ramp(d);
      check(oct_dataset_save(ramp.get(), dir.c_str()), "writing " + dir);
      // swing trace of the same eye at rest gaze, for `calibrate`
      oct_truth t;
      check(oct_dataset_truth(ramp.get(), 0, &t), "ramp truth");
      const std::string swing = (fs::path(dir) / "swing.csv").string();
      auto f = open_output(swing);
      f << "phi_deg,dx_px,dy_px\n";
      const oct_eye eye{0.0, 0.0, 0.0, 1.0, 0.0, 0.0};
      for (int deg = -20; deg <= 20; deg += 5) {
        double px, py, cx, cy;
        check(oct_project_eye(&eye, deg / kDeg, t.k_px, 0.0, 0.0, &px, &py, &cx, &cy), "swing oracle");
        f << deg << "," << fmt("%.9f", px - cx) << "," << fmt("%.9f", py - cy) << "\n";
      }
      if (!f) throw Failure{kExitIo, "write failed: " + swing};
      out << (fs::path(dir) / "manifest.json").string() << "\n" << swing << "\n";
      return kExitOk;
    }

    const std::size_t np = a.pupil_count.value_or(c.synth.pupil_count);
    const std::size_t nc = a.cr_count.value_or(c.synth.cr_count);
    const std::pair<const char*, std::pair<std::size_t, std::uint64_t>> sets[] = {{"pupil", {np, g.seed}},
                                                                                 {"cr", {nc, g.seed + 1}}};
    for (const auto& [name, spec] : sets) {
      oct_dataset* d = nullptr;
      check(oct_dataset_generate(spec.first, dist, spec.second, &d), std::string("generating ") + name + " set");
      Dataset ds(d);
      const std::string sub = (fs::path(dir) / name).string();
      check(oct_dataset_save(ds.get(), sub.c_str()), "writing " + sub);
      out << (fs::path(sub) / "manifest.json").string() << "\n";
    }
    return kExitOk;
  });
}

// ---- train ------------------------------------------------------------------

namespace {

struct TrainSink {
  std::ostream* out;
  std::ofstream* report;
};

std::string epoch_row(const oct_epoch_stats& s) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%5d  %.6f  %.6f  %.6f  %8.2f", s.epoch, s.mean_loss, s.pixel_accuracy, s.iou,
                s.seconds);
  return buf;
}

constexpr const char* kReportHeader = "epoch  loss      pixel_acc iou       seconds";

void on_epoch(const oct_epoch_stats* s, void* user) {
  auto* sink = static_cast<TrainSink*>(user);
  const std::string row = epoch_row(*s);
  *sink->out << row << "\n" << std::flush;
  if (sink->report) *sink->report << row << "\n" << std::flush;
}

}  // namespace

int cmd_train(const Globals& g, const TrainArgs& a, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig& c = g.config;
    const oct_target target = parse_target(a.target);
    const std::string dataset_dir = a.dataset.empty() ? (fs::path(c.paths.dataset) / a.target).string() : a.dataset;
    const std::string weights = a.out.empty() ? (fs::path(c.paths.models) / (a.target + ".ocuw")).string() : a.out;

    Model model;
    if (!a.resume.empty()) {
      model = load_model(a.resume);
    } else {
      int oh = 0, ow = 0;
      check(oct_unet_output_shape(&c.unet.config, &oh, &ow), "model configuration");
      oct_model* m = nullptr;
      check(oct_model_build(&c.unet.config, g.seed, &m), "building model");
      model.reset(m);
    }
    const Dataset train = load_dataset(dataset_dir);
    Dataset holdout;
    if (!a.holdout_dataset.empty()) holdout = load_dataset(a.holdout_dataset);

    oct_train_hyper hyper = c.unet.hyper;
    hyper.shuffle_seed = g.seed;
    if (a.epochs) {
      if (*a.epochs < 1) usage("--epochs must be >= 1");
      hyper.epochs = *a.epochs;
    }

    std::ofstream report;
    if (!a.report.empty()) {
      const bool append = !a.resume.empty() && fs::exists(a.report);
      report = open_output(a.report, append ? std::ios::app : std::ios::trunc);
      if (!append) report << kReportHeader << "\n";
    }
    TrainSink sink{&out, a.report.empty() ? nullptr : &report};
    out << kReportHeader << "\n";
    if (holdout) {
      check(oct_model_train_holdout(model.get(), train.get(), holdout.get(), target, &hyper, on_epoch, &sink),
            "training");
    } else {
      size_t n_train = 0, n_hold = 0;
      check(oct_model_train(model.get(), train.get(), target, &hyper, on_epoch, &sink, &n_train, &n_hold), "training");
    }
    ensure_parent_dir(weights);
    check(oct_model_save(model.get(), weights.c_str()), "writing weights");
    out << "weights: " << weights << "\n";
    return kExitOk;
  });
}

// ---- track ------------------------------------------------------------------

namespace {

bool is_frame_file(const fs::path& p) {
  const std::string name = p.filename().string();
  auto ends_with = [&](const std::string& suffix) {
    return name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  return ends_with(".pgm") && !ends_with("_pupil.pgm") && !ends_with("_cr.pgm");
}

std::string trace_row(std::size_t index, const oct_frame_result& r) {
  std::ostringstream row;
  row << index << ",";
  if (r.valid) {
    const auto& f = r.features;
    row << fmt("%.4f", f.pupil_x) << "," << fmt("%.4f", f.pupil_y) << "," << fmt("%.4f", f.pupil_a) << ","
        << fmt("%.4f", f.pupil_b) << "," << fmt("%.4f", f.pupil_angle * kDeg) << "," << fmt("%.4f", f.cr_x) << ","
        << fmt("%.4f", f.cr_y) << "," << fmt("%.4f", r.theta_h_deg) << "," << fmt("%.4f", r.theta_v_deg) << ",1,";
  } else {
    row << ",,,,,,,,,0,";
  }
  row << fmt("%.3f", r.latency_ms);
  return row.str();
}

}  // namespace

int cmd_track(const Globals& g, const TrackArgs& a, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig& c = g.config;
    const std::string frames_dir = a.frames.empty() ? c.paths.frames : a.frames;
    const std::string trace = a.out.empty() ? (fs::path(c.paths.outputs) / "trace.csv").string() : a.out;
    if (a.pupil_model.empty() || a.cr_model.empty()) usage("track needs --pupil-model and --cr-model");
    if (g.workers < 1) usage("--workers must be >= 1");

    std::vector<fs::path> frames;
    std::error_code ec;
    for (fs::directory_iterator it(frames_dir, ec), end; !ec && it != end; it.increment(ec))
      if (it->is_regular_file() && is_frame_file(it->path())) frames.push_back(it->path());
    if (ec) throw Failure{kExitIo, "cannot list frames directory " + frames_dir};
    std::sort(frames.begin(), frames.end());

    const Model pupil = load_model(a.pupil_model);
    const Model cr = load_model(a.cr_model);
    const std::string calib_path = a.calibration.empty() ? c.calibration : a.calibration;
    oct_calibration calib{};
    const bool have_calib = !calib_path.empty();
    if (have_calib) check(oct_calibration_load(calib_path.c_str(), &calib), "loading calibration " + calib_path);
    else err << "warning: no calibration given; every row will be invalid\n";

    const oct_tracker_options opts = tracker_options(c);
    oct_tracker* t = nullptr;
    check(oct_tracker_create(pupil.get(), cr.get(), have_calib ? &calib : nullptr, &opts, &t), "creating tracker");
    const Tracker tracker(t);
    if (!a.overlay.empty()) {
      fs::create_directories(a.overlay, ec);
      if (ec) throw Failure{kExitIo, "cannot create overlay directory " + a.overlay};
    }

    // workers fill slots by frame index; rows are emitted in index order afterwards
    std::vector<oct_frame_result> results(frames.size());
    std::vector<std::string> problems(frames.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i = next++; i < frames.size(); i = next++) {
        oct_frame_result r{};
        oct_image* img = nullptr;
        if (oct_image_load_pgm(frames[i].string().c_str(), &img) != OCT_OK) {
          problems[i] = oct_last_error();
          results[i] = r;
          continue;
        }
        const Image image(img);
        oct_mask* pm = nullptr;
        oct_mask* cm = nullptr;
        const bool overlay = !a.overlay.empty();
        if (oct_tracker_process(tracker.get(), image.get(), &r, overlay ? &pm : nullptr, overlay ? &cm : nullptr) !=
            OCT_OK) {
          problems[i] = oct_last_error();
          r = oct_frame_result{};
        }
        const Mask pmask(pm), cmask(cm);
        if (overlay && pmask && cmask) {
          char stem[32];
          std::snprintf(stem, sizeof stem, "%04zu", i);
          const fs::path base(a.overlay);
          if (oct_image_save_pgm(image.get(), (base / (std::string(stem) + "_image.pgm")).string().c_str()) != OCT_OK ||
              oct_mask_save_pgm(pmask.get(), (base / (std::string(stem) + "_pupil.pgm")).string().c_str()) != OCT_OK ||
              oct_mask_save_pgm(cmask.get(), (base / (std::string(stem) + "_cr.pgm")).string().c_str()) != OCT_OK)
            problems[i] = oct_last_error();
        }
        results[i] = r;
      }
    };
    std::vector<std::thread> pool;
    for (int w = 1; w < g.workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();

    auto f = open_output(trace);
    f << kTraceHeader << "\n";
    std::vector<double> latencies;
    std::size_t valid = 0, over = 0;
    for (std::size_t i = 0; i < frames.size(); ++i) {
      if (!problems[i].empty()) err << "warning: frame " << frames[i].filename().string() << ": " << problems[i] << "\n";
      f << trace_row(i, results[i]) << "\n";
      latencies.push_back(results[i].latency_ms);
      valid += results[i].valid ? 1 : 0;
      over += results[i].latency_ms > c.max_latency_ms ? 1 : 0;
    }
    if (!f) throw Failure{kExitIo, "write failed: " + trace};
    char summary[256];
    std::snprintf(summary, sizeof summary,
                  "frames=%zu valid=%zu p50_latency_ms=%.3f p95_latency_ms=%.3f over_budget=%zu max_latency_ms=%.1f",
                  frames.size(), valid, percentile(latencies, 0.5), percentile(latencies, 0.95), over, c.max_latency_ms);
    out << summary << "\n";
    return kExitOk;
  });
}

// ---- calibrate ----------------------------------------------------------------

int cmd_calibrate(const Globals& g, const CalibrateArgs& a, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (a.swing.empty()) usage("calibrate needs --swing");
    const std::string dest = a.out.empty() ? (fs::path(g.config.paths.outputs) / "calibration.json").string() : a.out;
    std::ifstream f(a.swing);
    if (!f) throw Failure{kExitIo, "cannot read swing trace " + a.swing};
    std::vector<oct_swing_measurement> m;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") == std::string::npos) continue;
      double phi, dx, dy;
      char c1, c2;
      std::istringstream row(line);
      if (!(row >> phi >> c1 >> dx >> c2 >> dy) || c1 != ',' || c2 != ',') {
        if (line_no == 1) continue;  // header
        throw Failure{kExitIo, "malformed swing row " + std::to_string(line_no) + " in " + a.swing};
      }
      m.push_back({phi / kDeg, dx, dy});
    }
    oct_calibration calib;
    check(oct_calibrate(m.data(), m.size(), &calib), "calibration");
    ensure_parent_dir(dest);
    check(oct_calibration_save(&calib, dest.c_str()), "writing calibration");
    char buf[256];
    std::snprintf(buf, sizeof buf, "k_px=%.6f theta0_h_deg=%.6f theta0_v_deg=%.6f residual_px=%.6g n=%d", calib.k_px,
                  calib.theta0_h * kDeg, calib.theta0_v * kDeg, calib.fit_residual_px, calib.n_measurements);
    out << buf << "\n" << dest << "\n";
    return kExitOk;
  });
}

// ---- eval -------------------------------------------------------------------

namespace {

struct ErrorStats {
  std::size_t detected = 0;
  std::size_t total = 0;
  std::vector<double> errors;
};

std::string stats_cell(const ErrorStats& s, const std::string& what) {
  if (what == "detected") return std::to_string(s.detected) + "/" + std::to_string(s.total);
  if (s.errors.empty()) return "n/a";
  if (what == "mean") {
    double sum = 0;
    for (double e : s.errors) sum += e;
    return fmt("%.4f", sum / static_cast<double>(s.errors.size()));
  }
  if (what == "median") return fmt("%.4f", percentile(s.errors, 0.5));
  if (what == "p95") return fmt("%.4f", percentile(s.errors, 0.95));
  return fmt("%.4f", *std::max_element(s.errors.begin(), s.errors.end()));
}

}  // namespace

int cmd_eval(const Globals& g, const EvalArgs& a, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig& c = g.config;
    const oct_target target = parse_target(a.target);
    if (a.model.empty()) usage("eval needs --model");
    if (a.split != "all" && a.split != "holdout") usage("--split must be 'all' or 'holdout'");
    const std::string dataset_dir = a.dataset.empty() ? (fs::path(c.paths.dataset) / a.target).string() : a.dataset;
    const Dataset ds = load_dataset(dataset_dir);
    const Model model = load_model(a.model);
    const std::size_t n = oct_dataset_size(ds.get());

    std::vector<size_t> indices;
    if (a.split == "holdout") {
      oct_train_hyper h = c.unet.hyper;
      h.shuffle_seed = g.seed;
      size_t count = 0;
      check(oct_holdout_indices(n, &h, nullptr, 0, &count), "holdout split");
      indices.resize(count);
      check(oct_holdout_indices(n, &h, indices.data(), count, &count), "holdout split");
    } else {
      for (std::size_t i = 0; i < n; ++i) indices.push_back(i);
    }
    if (indices.empty()) usage("evaluation set is empty");

    oct_seg_score score;
    check(oct_model_evaluate(model.get(), ds.get(), target, indices.data(), indices.size(), c.featext.prob_threshold,
                             &score),
          "evaluation");

    ErrorStats net, base;
    for (std::size_t i : indices) {
      oct_image* im = nullptr;
      check(oct_dataset_image(ds.get(), i, &im), "dataset image");
      const Image image(im);
      oct_truth truth;
      check(oct_dataset_truth(ds.get(), i, &truth), "dataset truth");
      const double tx = target == OCT_TARGET_PUPIL ? truth.pupil_x : truth.cr_x;
      const double ty = target == OCT_TARGET_PUPIL ? truth.pupil_y : truth.cr_y;

      oct_mask* pm = nullptr;
      check(oct_model_predict(model.get(), image.get(), c.featext.prob_threshold, &pm), "prediction");
      const Mask pred(pm);
      oct_mask* em = nullptr;
      check(oct_mask_create(oct_image_width(image.get()), oct_image_height(image.get()), nullptr, &em), "mask");
      const Mask empty(em);
      oct_features f;
      const bool pupil_target = target == OCT_TARGET_PUPIL;
      check(oct_extract_features(pupil_target ? pred.get() : empty.get(), pupil_target ? empty.get() : pred.get(),
                                 image.get(), c.featext.cr_area_min, c.featext.cr_area_max, &f),
            "feature extraction");
      ++net.total;
      if (pupil_target ? f.pupil_found : f.cr_found) {
        ++net.detected;
        net.errors.push_back(pupil_target ? std::hypot(f.pupil_x - tx, f.pupil_y - ty) : std::hypot(f.cr_x - tx, f.cr_y - ty));
      }

      if (a.baseline) {
        oct_features b;
        check(oct_classical_pipeline(image.get(), &c.classical, &b), "classical pipeline");
        ++base.total;
        if (pupil_target ? b.pupil_found : b.cr_found) {
          ++base.detected;
          base.errors.push_back(pupil_target ? std::hypot(b.pupil_x - tx, b.pupil_y - ty) : std::hypot(b.cr_x - tx, b.cr_y - ty));
        }
      }
    }

    std::ostringstream rep;
    char line[256];
    auto row = [&](const char* name, const std::string& nv, const std::string& bv) {
      if (a.baseline) std::snprintf(line, sizeof line, "%-18s %-12s %-12s\n", name, nv.c_str(), bv.c_str());
      else std::snprintf(line, sizeof line, "%-18s %-12s\n", name, nv.c_str());
      rep << line;
    };
    rep << "target: " << a.target << "  samples: " << indices.size() << "  split: " << a.split << "\n";
    row("metric", "network", "classical");
    row("pixel_accuracy", fmt("%.6f", score.pixel_accuracy), "n/a");
    row("iou", fmt("%.6f", score.iou), "n/a");
    row("detected", stats_cell(net, "detected"), stats_cell(base, "detected"));
    row("center_err_mean", stats_cell(net, "mean"), stats_cell(base, "mean"));
    row("center_err_median", stats_cell(net, "median"), stats_cell(base, "median"));
    row("center_err_p95", stats_cell(net, "p95"), stats_cell(base, "p95"));
    row("center_err_max", stats_cell(net, "max"), stats_cell(base, "max"));
    out << rep.str();
    if (!a.report.empty()) {
      auto f = open_output(a.report);
      f << rep.str();
      if (!f) throw Failure{kExitIo, "write failed: " + a.report};
    }
    return kExitOk;
  });
}

}  // namespace ocutrack::cli
