#include "ocutrack/ocutrack.h"

#include <chrono>
#include <cmath>
#include <cstring>
#include <new>
#include <numbers>
#include <string>
#include <vector>

#include "classical.hpp"
#include "error.hpp"
#include "featext.hpp"
#include "gaze.hpp"
#include "imagekit.hpp"
#include "synth.hpp"
#include "unet.hpp"

using namespace ocutrack;

struct oct_image {
  imagekit::GrayImage img;
};
struct oct_mask {
  imagekit::BinaryMask mask;
};
struct oct_model {
  unet::UNetModel model;
};
struct oct_dataset {
  std::vector<synth::SynthSample> samples;
  synth::SceneDistribution distribution;
  std::uint64_t master_seed = 0;
};
struct oct_tracker {
  unet::UNetModel pupil;
  unet::UNetModel cr;
  bool has_calibration = false;
  gaze::CalibrationModel calibration;
  oct_tracker_options options;
};

namespace {

thread_local std::string g_last_error;

oct_status status_of(ErrorCode code) { return static_cast<oct_status>(static_cast<int>(code) + 1); }

oct_status fail(oct_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

template <typename F>
oct_status guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return OCT_OK;
  } catch (const Error& e) {
    return fail(status_of(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(OCT_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(OCT_ERR_INTERNAL, e.what());
  }
}

#define OCT_REQUIRE(cond, what)                                      \
  do {                                                               \
    if (!(cond)) return fail(OCT_ERR_INVALID_ARGUMENT, (what));      \
  } while (0)

unet::UNetConfig to_core(const oct_unet_config& c) {
  return {c.depth, c.base_channels, c.in_channels, c.out_channels, c.input_height, c.input_width};
}

oct_unet_config from_core(const unet::UNetConfig& c) {
  return {c.depth, c.base_channels, c.in_channels, c.out_channels, c.input_height, c.input_width};
}

unet::TrainHyper to_core(const oct_train_hyper& h) {
  return {h.lr, h.momentum, h.epochs, h.holdout_fraction, h.shuffle_seed};
}

oct_features to_c(const featext::FrameFeatures& f) {
  oct_features out{};
  if (f.pupil) {
    out.pupil_found = 1;
    out.pupil_x = f.pupil->center.x;
    out.pupil_y = f.pupil->center.y;
    out.pupil_a = f.pupil->a;
    out.pupil_b = f.pupil->b;
    out.pupil_angle = f.pupil->angle;
  }
  out.pupil_confidence = f.pupil_confidence;
  if (f.cr) {
    out.cr_found = 1;
    out.cr_x = f.cr->x;
    out.cr_y = f.cr->y;
  }
  out.cr_confidence = f.cr_confidence;
  out.classical = f.source == featext::Source::Classical ? 1 : 0;
  return out;
}

const imagekit::BinaryMask& target_mask(const synth::SynthSample& s, oct_target t) {
  if (t != OCT_TARGET_PUPIL && t != OCT_TARGET_CR) throw Error(ErrorCode::InvalidArgument, "unknown target");
  return t == OCT_TARGET_CR ? s.cr_mask : s.pupil_mask;
}

std::vector<unet::Sample> samples_for(const oct_dataset& ds, oct_target t, const size_t* indices, size_t n) {
  std::vector<unet::Sample> out;
  if (!indices) {
    for (const auto& s : ds.samples) out.push_back({&s.image, &target_mask(s, t)});
    return out;
  }
  for (size_t i = 0; i < n; ++i) {
    if (indices[i] >= ds.samples.size()) throw Error(ErrorCode::InvalidArgument, "sample index out of range");
    const auto& s = ds.samples[indices[i]];
    out.push_back({&s.image, &target_mask(s, t)});
  }
  return out;
}

gaze::CalibrationModel to_core(const oct_calibration& c) {
  return {c.k_px, c.theta0_h, c.theta0_v, c.fit_residual_px, c.n_measurements};
}

oct_calibration from_core(const gaze::CalibrationModel& c) {
  return {c.k_px, c.theta0_h, c.theta0_v, c.fit_residual_px, c.n_measurements};
}

}  // namespace

extern "C" {

const char* oct_status_name(oct_status s) {
  if (s == OCT_OK) return "Ok";
  if (s == OCT_ERR_INTERNAL) return "Internal";
  if (s > OCT_OK && s < OCT_ERR_INTERNAL) return error_code_name(static_cast<ErrorCode>(static_cast<int>(s) - 1));
  return "Unknown";
}

const char* oct_last_error(void) { return g_last_error.c_str(); }

/* images and masks */

oct_status oct_image_create(int width, int height, const float* data, oct_image** out) {
  OCT_REQUIRE(out && width > 0 && height > 0, "image dimensions must be positive");
  return guarded([&] {
    auto* h = new oct_image{imagekit::GrayImage(width, height)};
    if (data) std::memcpy(h->img.data.data(), data, h->img.data.size() * sizeof(float));
    *out = h;
  });
}

oct_status oct_image_load_pgm(const char* path, oct_image** out) {
  OCT_REQUIRE(path && out, "null argument");
  return guarded([&] { *out = new oct_image{imagekit::load_pgm_file(path)}; });
}

oct_status oct_image_save_pgm(const oct_image* image, const char* path) {
  OCT_REQUIRE(image && path, "null argument");
  return guarded([&] { imagekit::save_pgm_file(image->img, path); });
}

int oct_image_width(const oct_image* image) { return image ? image->img.width : 0; }
int oct_image_height(const oct_image* image) { return image ? image->img.height : 0; }
const float* oct_image_data(const oct_image* image) { return image ? image->img.data.data() : nullptr; }
void oct_image_free(oct_image* image) { delete image; }

oct_status oct_mask_create(int width, int height, const uint8_t* data, oct_mask** out) {
  OCT_REQUIRE(out && width > 0 && height > 0, "mask dimensions must be positive");
  return guarded([&] {
    auto* m = new oct_mask{imagekit::BinaryMask(width, height)};
    if (data)
      for (std::size_t i = 0; i < m->mask.data.size(); ++i) m->mask.data[i] = data[i] ? 1 : 0;
    *out = m;
  });
}

oct_status oct_mask_load_pgm(const char* path, oct_mask** out) {
  OCT_REQUIRE(path && out, "null argument");
  return guarded([&] { *out = new oct_mask{imagekit::image_to_mask(imagekit::load_pgm_file(path))}; });
}

oct_status oct_mask_save_pgm(const oct_mask* mask, const char* path) {
  OCT_REQUIRE(mask && path, "null argument");
  return guarded([&] { imagekit::save_pgm_file(imagekit::mask_to_image(mask->mask), path); });
}

int oct_mask_width(const oct_mask* mask) { return mask ? mask->mask.width : 0; }
int oct_mask_height(const oct_mask* mask) { return mask ? mask->mask.height : 0; }
const uint8_t* oct_mask_data(const oct_mask* mask) { return mask ? mask->mask.data.data() : nullptr; }
void oct_mask_free(oct_mask* mask) { delete mask; }

/* U-Net */

void oct_unet_default_config(oct_unet_config* out) {
  if (out) *out = from_core(unet::default_config());
}

void oct_train_default_hyper(oct_train_hyper* out) {
  if (!out) return;
  const unet::TrainHyper h;
  *out = {h.lr, h.momentum, h.epochs, h.holdout_fraction, h.shuffle_seed};
}

oct_status oct_unet_output_shape(const oct_unet_config* config, int* out_height, int* out_width) {
  OCT_REQUIRE(config && out_height && out_width, "null argument");
  return guarded([&] {
    const auto s = unet::output_shape(to_core(*config));
    *out_height = s.height;
    *out_width = s.width;
  });
}

oct_status oct_model_build(const oct_unet_config* config, uint64_t seed, oct_model** out) {
  OCT_REQUIRE(config && out, "null argument");
  return guarded([&] { *out = new oct_model{unet::build(to_core(*config), seed)}; });
}

oct_status oct_model_load(const char* path, oct_model** out) {
  OCT_REQUIRE(path && out, "null argument");
  return guarded([&] { *out = new oct_model{unet::load_weights_file(path)}; });
}

oct_status oct_model_save(const oct_model* model, const char* path) {
  OCT_REQUIRE(model && path, "null argument");
  return guarded([&] { unet::save_weights_file(model->model, path); });
}

oct_status oct_model_config(const oct_model* model, oct_unet_config* out) {
  OCT_REQUIRE(model && out, "null argument");
  *out = from_core(model->model.config);
  return OCT_OK;
}

int oct_model_trained_epochs(const oct_model* model) { return model ? model->model.trained_epochs : 0; }
void oct_model_free(oct_model* model) { delete model; }

oct_status oct_model_predict(const oct_model* model, const oct_image* image, float prob_threshold, oct_mask** out) {
  OCT_REQUIRE(model && image && out, "null argument");
  return guarded([&] { *out = new oct_mask{unet::predict_mask(model->model, image->img, prob_threshold)}; });
}

oct_status oct_model_train(oct_model* model, const oct_dataset* dataset, oct_target target,
                           const oct_train_hyper* hyper, oct_epoch_callback on_epoch, void* user,
                           size_t* train_count, size_t* holdout_count) {
  OCT_REQUIRE(model && dataset && hyper, "null argument");
  return guarded([&] {
    const auto samples = samples_for(*dataset, target, nullptr, 0);
    unet::EpochCallback cb;
    if (on_epoch)
      cb = [&](const unet::EpochStats& s) {
        const oct_epoch_stats c{s.epoch, s.mean_loss, s.pixel_accuracy, s.iou, s.seconds};
        on_epoch(&c, user);
      };
    const auto report = unet::train(model->model, samples, to_core(*hyper), cb);
    if (train_count) *train_count = report.train_count;
    if (holdout_count) *holdout_count = report.holdout_count;
  });
}

oct_status oct_model_train_holdout(oct_model* model, const oct_dataset* train_set, const oct_dataset* holdout_set,
                                   oct_target target, const oct_train_hyper* hyper, oct_epoch_callback on_epoch,
                                   void* user) {
  OCT_REQUIRE(model && train_set && holdout_set && hyper, "null argument");
  return guarded([&] {
    const auto train = samples_for(*train_set, target, nullptr, 0);
    const auto holdout = samples_for(*holdout_set, target, nullptr, 0);
    unet::EpochCallback cb;
    if (on_epoch)
      cb = [&](const unet::EpochStats& s) {
        const oct_epoch_stats c{s.epoch, s.mean_loss, s.pixel_accuracy, s.iou, s.seconds};
        on_epoch(&c, user);
      };
    unet::train(model->model, train, holdout, to_core(*hyper), cb);
  });
}

oct_status oct_model_evaluate(const oct_model* model, const oct_dataset* dataset, oct_target target,
                              const size_t* indices, size_t n_indices, float prob_threshold, oct_seg_score* out) {
  OCT_REQUIRE(model && dataset && out, "null argument");
  return guarded([&] {
    const auto samples = samples_for(*dataset, target, indices, n_indices);
    const auto s = unet::evaluate(model->model, samples, prob_threshold);
    *out = {s.pixel_accuracy, s.iou, s.pixels};
  });
}

oct_status oct_holdout_indices(size_t n, const oct_train_hyper* hyper, size_t* out, size_t capacity, size_t* count) {
  OCT_REQUIRE(hyper && count && (out || capacity == 0), "null argument");
  return guarded([&] {
    const auto idx = unet::holdout_indices(n, to_core(*hyper));
    *count = idx.size();
    for (size_t i = 0; i < idx.size() && i < capacity; ++i) out[i] = idx[i];
  });
}

/* datasets */

oct_status oct_dataset_generate(size_t n, const char* distribution_json, uint64_t master_seed, oct_dataset** out) {
  OCT_REQUIRE(out, "null argument");
  return guarded([&] {
    auto* ds = new oct_dataset;
    try {
      if (distribution_json) ds->distribution = synth::distribution_from_json(distribution_json);
      ds->samples = synth::make_dataset(n, ds->distribution, master_seed);
      ds->master_seed = master_seed;
    } catch (...) {
      delete ds;
      throw;
    }
    *out = ds;
  });
}

oct_status oct_dataset_gaze_ramp(size_t n, double gaze_from, double gaze_to, uint64_t master_seed,
                                 oct_dataset** out) {
  OCT_REQUIRE(out, "null argument");
  return guarded([&] {
    auto* ds = new oct_dataset;
    try {
      ds->samples = synth::make_gaze_ramp(n, gaze_from, gaze_to, ds->distribution, master_seed);
      ds->master_seed = master_seed;
    } catch (...) {
      delete ds;
      throw;
    }
    *out = ds;
  });
}

oct_status oct_dataset_save(const oct_dataset* dataset, const char* dir) {
  OCT_REQUIRE(dataset && dir, "null argument");
  return guarded([&] { synth::save_dataset(dataset->samples, dataset->distribution, dataset->master_seed, dir); });
}

oct_status oct_dataset_load(const char* dir, oct_dataset** out) {
  OCT_REQUIRE(dir && out, "null argument");
  return guarded([&] {
    auto loaded = synth::load_dataset(dir);
    *out = new oct_dataset{std::move(loaded.samples), loaded.distribution, loaded.master_seed};
  });
}

size_t oct_dataset_size(const oct_dataset* dataset) { return dataset ? dataset->samples.size() : 0; }

oct_status oct_dataset_image(const oct_dataset* dataset, size_t index, oct_image** out) {
  OCT_REQUIRE(dataset && out, "null argument");
  OCT_REQUIRE(index < dataset->samples.size(), "sample index out of range");
  return guarded([&] { *out = new oct_image{dataset->samples[index].image}; });
}

oct_status oct_dataset_mask(const oct_dataset* dataset, size_t index, oct_target target, oct_mask** out) {
  OCT_REQUIRE(dataset && out, "null argument");
  OCT_REQUIRE(index < dataset->samples.size(), "sample index out of range");
  return guarded([&] { *out = new oct_mask{target_mask(dataset->samples[index], target)}; });
}

oct_status oct_dataset_truth(const oct_dataset* dataset, size_t index, oct_truth* out) {
  OCT_REQUIRE(dataset && out, "null argument");
  OCT_REQUIRE(index < dataset->samples.size(), "sample index out of range");
  const auto& t = dataset->samples[index].truth;
  *out = {t.pupil_center.x, t.pupil_center.y, t.pupil_ellipse.a, t.pupil_ellipse.b, t.pupil_ellipse.angle,
          t.cr_center.x,    t.cr_center.y,    t.gaze_h,          t.gaze_v,          t.camera_angle,
          t.k_px};
  return OCT_OK;
}

void oct_dataset_free(oct_dataset* dataset) { delete dataset; }

oct_status oct_default_distribution_json(char* buf, size_t capacity, size_t* needed) {
  OCT_REQUIRE(buf || capacity == 0, "null buffer");
  return guarded([&] {
    const std::string text = synth::distribution_to_json(synth::SceneDistribution{});
    if (needed) *needed = text.size() + 1;
    if (capacity > 0) {
      const size_t n = std::min(capacity - 1, text.size());
      std::memcpy(buf, text.data(), n);
      buf[n] = '\0';
    }
  });
}

/* features */

oct_status oct_extract_features(const oct_mask* pupil_mask, const oct_mask* cr_mask, const oct_image* image,
                                int cr_area_min, int cr_area_max, oct_features* out) {
  OCT_REQUIRE(pupil_mask && cr_mask && image && out, "null argument");
  OCT_REQUIRE(cr_area_min >= 1 && cr_area_max >= cr_area_min, "invalid CR area range");
  return guarded([&] {
    *out = to_c(featext::extract_features(pupil_mask->mask, cr_mask->mask, image->img, {cr_area_min, cr_area_max}));
  });
}

void oct_classical_default_config(oct_classical_config* out) {
  if (!out) return;
  const classical::ClassicalConfig c;
  *out = oct_classical_config{};
  out->cr_threshold = c.cr_threshold;
  out->cr_area_min = c.cr_area_range.min;
  out->cr_area_max = c.cr_area_range.max;
  out->cr_inpaint_margin = c.cr_inpaint_margin;
  out->n_radii = static_cast<int>(c.radii.size());
  for (size_t i = 0; i < c.radii.size(); ++i) out->radii[i] = c.radii[i];
  out->n_rays = c.starburst.n_rays;
  out->max_radius = c.starburst.max_radius;
  out->gradient_threshold = c.starburst.gradient_threshold;
  out->max_iterations = c.starburst.max_iterations;
  out->convergence_eps = c.starburst.convergence_eps;
}

oct_status oct_classical_pipeline(const oct_image* image, const oct_classical_config* config, oct_features* out) {
  OCT_REQUIRE(image && out, "null argument");
  classical::ClassicalConfig c;
  if (config) {
    OCT_REQUIRE(config->n_radii >= 1 && config->n_radii <= 8, "n_radii must be in [1, 8]");
    OCT_REQUIRE(config->cr_area_min >= 1 && config->cr_area_max >= config->cr_area_min, "invalid CR area range");
    c.cr_threshold = config->cr_threshold;
    c.cr_area_range = {config->cr_area_min, config->cr_area_max};
    c.cr_inpaint_margin = config->cr_inpaint_margin;
    c.radii.assign(config->radii, config->radii + config->n_radii);
    c.starburst = {config->n_rays, config->max_radius, config->gradient_threshold, config->max_iterations,
                   config->convergence_eps};
  }
  return guarded([&] {
    classical::validate(c.starburst);
    *out = to_c(classical::classical_pipeline(image->img, c));
  });
}

/* gaze */

oct_status oct_project_eye(const oct_eye* eye, double camera_angle, double pixel_scale, double principal_x,
                           double principal_y, double* pupil_x, double* pupil_y, double* cr_x, double* cr_y) {
  OCT_REQUIRE(eye && pupil_x && pupil_y && cr_x && cr_y, "null argument");
  return guarded([&] {
    gaze::EyeModel3D e;
    e.corneal_center = {eye->corneal_x, eye->corneal_y, eye->corneal_z};
    e.rp = eye->rp;
    e.gaze_h = eye->gaze_h;
    e.gaze_v = eye->gaze_v;
    const auto p = gaze::project_eye(e, camera_angle, pixel_scale, {principal_x, principal_y});
    *pupil_x = p.pupil.x;
    *pupil_y = p.pupil.y;
    *cr_x = p.cr.x;
    *cr_y = p.cr.y;
  });
}

oct_status oct_calibrate(const oct_swing_measurement* measurements, size_t n, oct_calibration* out) {
  OCT_REQUIRE((measurements || n == 0) && out, "null argument");
  return guarded([&] {
    std::vector<gaze::SwingMeasurement> m;
    for (size_t i = 0; i < n; ++i) m.push_back({measurements[i].camera_angle, measurements[i].dx, measurements[i].dy});
    *out = from_core(gaze::calibrate(m));
  });
}

oct_status oct_calibration_save(const oct_calibration* calib, const char* path) {
  OCT_REQUIRE(calib && path, "null argument");
  return guarded([&] {
    const std::string text = gaze::calibration_to_json(to_core(*calib));
    FILE* f = std::fopen(path, "wb");
    if (!f) throw Error(ErrorCode::Io, std::string("cannot open for writing: ") + path);
    const bool ok = std::fwrite(text.data(), 1, text.size(), f) == text.size();
    if (std::fclose(f) != 0 || !ok) throw Error(ErrorCode::Io, std::string("write failed: ") + path);
  });
}

oct_status oct_calibration_load(const char* path, oct_calibration* out) {
  OCT_REQUIRE(path && out, "null argument");
  return guarded([&] {
    FILE* f = std::fopen(path, "rb");
    if (!f) throw Error(ErrorCode::Io, std::string("cannot open for reading: ") + path);
    std::string text;
    char buf[4096];
    size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) text.append(buf, n);
    std::fclose(f);
    *out = from_core(gaze::calibration_from_json(text));
  });
}

oct_status oct_gaze_angle(const oct_calibration* calib, double pupil_x, double pupil_y, double cr_x, double cr_y,
                          oct_gaze* out) {
  OCT_REQUIRE(calib && out, "null argument");
  return guarded([&] {
    const auto g = gaze::gaze_angle(to_core(*calib), {pupil_x, pupil_y}, {cr_x, cr_y});
    *out = {g.theta_h, g.theta_v, g.clamped ? 1 : 0};
  });
}

/* tracking */

void oct_tracker_default_options(oct_tracker_options* out) {
  if (out) *out = {0.5f, 0.05, 2, 200};
}

oct_status oct_tracker_create(const oct_model* pupil_model, const oct_model* cr_model, const oct_calibration* calib,
                              const oct_tracker_options* options, oct_tracker** out) {
  OCT_REQUIRE(pupil_model && cr_model && out, "null argument");
  OCT_REQUIRE(pupil_model->model.config == cr_model->model.config, "pupil and CR models must share a configuration");
  oct_tracker_options opts;
  oct_tracker_default_options(&opts);
  if (options) opts = *options;
  OCT_REQUIRE(opts.cr_area_min >= 1 && opts.cr_area_max >= opts.cr_area_min, "invalid CR area range");
  OCT_REQUIRE(opts.confidence_threshold >= 0 && opts.confidence_threshold <= 1, "confidence_threshold must be in [0, 1]");
  OCT_REQUIRE(opts.prob_threshold > 0 && opts.prob_threshold < 1, "prob_threshold must be in (0, 1)");
  OCT_REQUIRE(!calib || calib->k_px > 0, "calibration k_px must be positive");
  return guarded([&] {
    auto* t = new oct_tracker{pupil_model->model, cr_model->model, calib != nullptr, {}, opts};
    if (calib) t->calibration = to_core(*calib);
    *out = t;
  });
}

oct_status oct_tracker_process(const oct_tracker* tracker, const oct_image* image, oct_frame_result* out,
                               oct_mask** pupil_mask_out, oct_mask** cr_mask_out) {
  OCT_REQUIRE(tracker && image && out, "null argument");
  return guarded([&] {
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    const auto& o = tracker->options;
    auto pm = unet::predict_mask(tracker->pupil, image->img, o.prob_threshold);
    auto cm = unet::predict_mask(tracker->cr, image->img, o.prob_threshold);
    const auto f = featext::extract_features(pm, cm, image->img, {o.cr_area_min, o.cr_area_max});
    oct_frame_result r{};
    r.features = to_c(f);
    const bool detected = f.pupil && f.cr && f.pupil_confidence >= o.confidence_threshold &&
                          f.cr_confidence >= o.confidence_threshold;
    if (detected && tracker->has_calibration) {
      const auto g = gaze::gaze_angle(tracker->calibration, f.pupil->center, *f.cr);
      r.theta_h_deg = g.theta_h * 180.0 / std::numbers::pi;
      r.theta_v_deg = g.theta_v * 180.0 / std::numbers::pi;
      r.valid = g.clamped ? 0 : 1;
    }
    r.latency_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    if (pupil_mask_out) *pupil_mask_out = new oct_mask{std::move(pm)};
    if (cr_mask_out) *cr_mask_out = new oct_mask{std::move(cm)};
    *out = r;
  });
}

void oct_tracker_free(oct_tracker* tracker) { delete tracker; }

}  // extern "C"
