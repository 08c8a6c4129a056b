#ifndef OCUTRACK_OCUTRACK_H
#define OCUTRACK_OCUTRACK_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define OCT_API __declspec(dllexport)
#else
#define OCT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* ---- status ------------------------------------------------------------ */

typedef enum oct_status {
  OCT_OK = 0,
  OCT_ERR_INVALID_ARGUMENT,
  OCT_ERR_IO,
  OCT_ERR_MALFORMED_HEADER,
  OCT_ERR_TRUNCATED_DATA,
  OCT_ERR_IMAGE_TOO_SMALL,
  OCT_ERR_DIMENSION_MISMATCH,
  OCT_ERR_SHAPE_MISMATCH,
  OCT_ERR_ODD_DIMENSION,
  OCT_ERR_CROP_IMPOSSIBLE,
  OCT_ERR_INFEASIBLE_INPUT,
  OCT_ERR_SIZE_MISMATCH,
  OCT_ERR_EMPTY_DATASET,
  OCT_ERR_BAD_MAGIC,
  OCT_ERR_VERSION_UNSUPPORTED,
  OCT_ERR_MANIFEST_MISMATCH,
  OCT_ERR_TRUNCATED_PAYLOAD,
  OCT_ERR_DEGENERATE_INPUT,
  OCT_ERR_NO_CENTER,
  OCT_ERR_TOO_FEW_EDGES,
  OCT_ERR_FEATURE_OUT_OF_FRAME,
  OCT_ERR_INSUFFICIENT_DATA,
  OCT_ERR_DEGENERATE_GEOMETRY,
  OCT_ERR_INTERNAL
} oct_status;

OCT_API const char* oct_status_name(oct_status status);

/* Message of the last failing call on this thread; empty after success. */
OCT_API const char* oct_last_error(void);

/* ---- images and masks ------------------------------------------------- */

typedef struct oct_image oct_image;
typedef struct oct_mask oct_mask;

/* data may be NULL for a zero image; otherwise width*height floats in [0,1]. */
OCT_API oct_status oct_image_create(int width, int height, const float* data, oct_image** out);
OCT_API oct_status oct_image_load_pgm(const char* path, oct_image** out);
OCT_API oct_status oct_image_save_pgm(const oct_image* image, const char* path);
OCT_API int oct_image_width(const oct_image* image);
OCT_API int oct_image_height(const oct_image* image);
OCT_API const float* oct_image_data(const oct_image* image);
OCT_API void oct_image_free(oct_image* image);

/* data may be NULL for an empty mask; otherwise width*height bytes, nonzero = set. */
OCT_API oct_status oct_mask_create(int width, int height, const uint8_t* data, oct_mask** out);
/* Masks read from PGM treat every nonzero pixel as set and save as 0/255. */
OCT_API oct_status oct_mask_load_pgm(const char* path, oct_mask** out);
OCT_API oct_status oct_mask_save_pgm(const oct_mask* mask, const char* path);
OCT_API int oct_mask_width(const oct_mask* mask);
OCT_API int oct_mask_height(const oct_mask* mask);
OCT_API const uint8_t* oct_mask_data(const oct_mask* mask);
OCT_API void oct_mask_free(oct_mask* mask);

/* ---- U-Net ------------------------------------------------------------ */

typedef struct oct_unet_config {
  int depth;
  int base_channels;
  int in_channels;
  int out_channels;
  int input_height;
  int input_width;
} oct_unet_config;

typedef struct oct_train_hyper {
  float lr;
  float momentum;
  int epochs;
  double holdout_fraction;
  uint64_t shuffle_seed;
} oct_train_hyper;

typedef struct oct_epoch_stats {
  int epoch;
  double mean_loss;
  double pixel_accuracy;
  double iou;
  double seconds;
} oct_epoch_stats;

typedef struct oct_seg_score {
  double pixel_accuracy;
  double iou;
  size_t pixels;
} oct_seg_score;

typedef enum oct_target { OCT_TARGET_PUPIL = 0, OCT_TARGET_CR = 1 } oct_target;

typedef struct oct_model oct_model;
typedef struct oct_dataset oct_dataset;

typedef void (*oct_epoch_callback)(const oct_epoch_stats* stats, void* user);

OCT_API void oct_unet_default_config(oct_unet_config* out);
OCT_API void oct_train_default_hyper(oct_train_hyper* out);
OCT_API oct_status oct_unet_output_shape(const oct_unet_config* config, int* out_height, int* out_width);

OCT_API oct_status oct_model_build(const oct_unet_config* config, uint64_t seed, oct_model** out);
OCT_API oct_status oct_model_load(const char* path, oct_model** out);
OCT_API oct_status oct_model_save(const oct_model* model, const char* path);
OCT_API oct_status oct_model_config(const oct_model* model, oct_unet_config* out);
OCT_API int oct_model_trained_epochs(const oct_model* model);
OCT_API void oct_model_free(oct_model* model);

OCT_API oct_status oct_model_predict(const oct_model* model, const oct_image* image, float prob_threshold,
                                     oct_mask** out);

/* Trains on the dataset's masks for the target. Epoch numbers continue from
   the model's trained_epochs, so a loaded model resumes. */
OCT_API oct_status oct_model_train(oct_model* model, const oct_dataset* dataset, oct_target target,
                                   const oct_train_hyper* hyper, oct_epoch_callback on_epoch, void* user,
                                   size_t* train_count, size_t* holdout_count);

/* Like oct_model_train, but every epoch is scored on a separate held-out
   dataset and hyper->holdout_fraction is ignored. */
OCT_API oct_status oct_model_train_holdout(oct_model* model, const oct_dataset* train_set,
                                           const oct_dataset* holdout_set, oct_target target,
                                           const oct_train_hyper* hyper, oct_epoch_callback on_epoch, void* user);

/* indices == NULL scores the whole dataset. */
OCT_API oct_status oct_model_evaluate(const oct_model* model, const oct_dataset* dataset, oct_target target,
                                      const size_t* indices, size_t n_indices, float prob_threshold,
                                      oct_seg_score* out);

/* Writes up to capacity holdout indices for an n-sample dataset; *count gets the full number. */
OCT_API oct_status oct_holdout_indices(size_t n, const oct_train_hyper* hyper, size_t* out, size_t capacity,
                                       size_t* count);

/* ---- synthetic datasets ----------------------------------------------- */

typedef struct oct_truth {
  double pupil_x, pupil_y;
  double pupil_a, pupil_b, pupil_angle;
  double cr_x, cr_y;
  double gaze_h, gaze_v; /* rad */
  double camera_angle;   /* rad */
  double k_px;
} oct_truth;

/* distribution_json == NULL uses the default scene distribution. */
OCT_API oct_status oct_dataset_generate(size_t n, const char* distribution_json, uint64_t master_seed,
                                        oct_dataset** out);
OCT_API oct_status oct_dataset_save(const oct_dataset* dataset, const char* dir);
OCT_API oct_status oct_dataset_load(const char* dir, oct_dataset** out);
OCT_API size_t oct_dataset_size(const oct_dataset* dataset);
OCT_API oct_status oct_dataset_image(const oct_dataset* dataset, size_t index, oct_image** out);
OCT_API oct_status oct_dataset_mask(const oct_dataset* dataset, size_t index, oct_target target, oct_mask** out);
OCT_API oct_status oct_dataset_truth(const oct_dataset* dataset, size_t index, oct_truth* out);
OCT_API void oct_dataset_free(oct_dataset* dataset);

/* Frames along a horizontal gaze ramp from gaze_from to gaze_to (rad), other
   scene parameters drawn from the default distribution. */
OCT_API oct_status oct_dataset_gaze_ramp(size_t n, double gaze_from, double gaze_to, uint64_t master_seed,
                                         oct_dataset** out);

/* Copies the JSON text into buf (NUL-terminated, truncated to capacity);
   *needed gets the full length including the terminator. */
OCT_API oct_status oct_default_distribution_json(char* buf, size_t capacity, size_t* needed);

/* ---- features --------------------------------------------------------- */

typedef struct oct_features {
  int pupil_found;
  double pupil_x, pupil_y, pupil_a, pupil_b, pupil_angle;
  double pupil_confidence;
  int cr_found;
  double cr_x, cr_y;
  double cr_confidence;
  int classical; /* 1 when produced by the classical pipeline */
} oct_features;

OCT_API oct_status oct_extract_features(const oct_mask* pupil_mask, const oct_mask* cr_mask, const oct_image* image,
                                        int cr_area_min, int cr_area_max, oct_features* out);

typedef struct oct_classical_config {
  float cr_threshold;
  int cr_area_min;
  int cr_area_max;
  int cr_inpaint_margin;
  int radii[8];
  int n_radii;
  int n_rays;
  double max_radius;
  double gradient_threshold;
  int max_iterations;
  double convergence_eps;
} oct_classical_config;

OCT_API void oct_classical_default_config(oct_classical_config* out);
OCT_API oct_status oct_classical_pipeline(const oct_image* image, const oct_classical_config* config,
                                          oct_features* out);

/* ---- gaze ------------------------------------------------------------- */

typedef struct oct_calibration {
  double k_px;
  double theta0_h; /* rad */
  double theta0_v;
  double fit_residual_px;
  int n_measurements;
} oct_calibration;

typedef struct oct_swing_measurement {
  double camera_angle; /* rad */
  double dx;
  double dy;
} oct_swing_measurement;

typedef struct oct_gaze {
  double theta_h; /* rad */
  double theta_v;
  int clamped;
} oct_gaze;

typedef struct oct_eye {
  double corneal_x, corneal_y, corneal_z; /* mm */
  double rp;                              /* mm, corneal center to pupil */
  double gaze_h, gaze_v;                  /* rad */
} oct_eye;

/* Orthographic projection oracle: pupil and CR pixel positions seen by a
   camera swung by camera_angle about the vertical axis. */
OCT_API oct_status oct_project_eye(const oct_eye* eye, double camera_angle, double pixel_scale, double principal_x,
                                   double principal_y, double* pupil_x, double* pupil_y, double* cr_x, double* cr_y);

OCT_API oct_status oct_calibrate(const oct_swing_measurement* measurements, size_t n, oct_calibration* out);
OCT_API oct_status oct_calibration_save(const oct_calibration* calib, const char* path);
OCT_API oct_status oct_calibration_load(const char* path, oct_calibration* out);
OCT_API oct_status oct_gaze_angle(const oct_calibration* calib, double pupil_x, double pupil_y, double cr_x,
                                  double cr_y, oct_gaze* out);

/* ---- per-frame tracking ----------------------------------------------- */

typedef struct oct_tracker_options {
  float prob_threshold;
  double confidence_threshold;
  int cr_area_min;
  int cr_area_max;
} oct_tracker_options;

typedef struct oct_frame_result {
  oct_features features;
  double theta_h_deg;
  double theta_v_deg;
  int valid;
  double latency_ms;
} oct_frame_result;

typedef struct oct_tracker oct_tracker;

OCT_API void oct_tracker_default_options(oct_tracker_options* out);

/* Copies both models; calib may be NULL, in which case no frame is valid. */
OCT_API oct_status oct_tracker_create(const oct_model* pupil_model, const oct_model* cr_model,
                                      const oct_calibration* calib, const oct_tracker_options* options,
                                      oct_tracker** out);

/* Safe to call concurrently on one tracker. Optional mask outputs may be NULL. */
OCT_API oct_status oct_tracker_process(const oct_tracker* tracker, const oct_image* image, oct_frame_result* out,
                                       oct_mask** pupil_mask_out, oct_mask** cr_mask_out);
OCT_API void oct_tracker_free(oct_tracker* tracker);

#ifdef __cplusplus
}
#endif

#endif
