/*
 * Copyright 2026 The cemx Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef CEMX_CEMX_H
#define CEMX_CEMX_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define CEMX_API __attribute__((visibility("default")))
#else
#define CEMX_API
#endif

/* Status codes. Values 1..13 mirror the library's error kinds. */
typedef enum cemx_status {
  CEMX_OK = 0,
  CEMX_ERR_INVALID_DIMS = 1,
  CEMX_ERR_IO = 2,
  CEMX_ERR_KERNEL_FORMAT = 3,
  CEMX_ERR_SINGULAR_KERNEL = 4,
  CEMX_ERR_ORACLE_TOO_LARGE = 5,
  CEMX_ERR_GRAPH_SHAPE = 6,
  CEMX_ERR_EMPTY_REGION = 7,
  CEMX_ERR_INVALID_PARAM = 8,
  CEMX_ERR_CALIBRATION = 9,
  CEMX_ERR_ESTIMATION = 10,
  CEMX_ERR_BUSY = 11,
  CEMX_ERR_NOTHING_TO_UNDO = 12,
  CEMX_ERR_NOT_FOUND = 13,
  CEMX_ERR_NULL_ARGUMENT = 64,
  CEMX_ERR_INTERNAL = 99
} cemx_status;

typedef enum cemx_boundary { CEMX_PERIODIC = 0, CEMX_REPLICATE = 1 } cemx_boundary;
typedef enum cemx_mode { CEMX_MODE_DIRECT = 0, CEMX_MODE_GENERATOR = 1 } cemx_mode;

typedef struct cemx_image cemx_image;
typedef struct cemx_kernel cemx_kernel;
typedef struct cemx_operator cemx_operator;
typedef struct cemx_generator cemx_generator;
typedef struct cemx_session cemx_session;
typedef struct cemx_server cemx_server;

typedef struct cemx_residual {
  double linf;
  double rms;
  long samples;
} cemx_residual;

typedef struct cemx_inverse_report {
  int grid_rows;
  int grid_cols;
  double min_magnitude;
  double max_magnitude;
  double eps;
  int floored_bins;
} cemx_inverse_report;

typedef struct cemx_diversity_report {
  double sigma;
  double rmse_mean;
  double rmse_std;
} cemx_diversity_report;

typedef struct cemx_session_config {
  int factor;
  cemx_boundary boundary;
  cemx_mode mode;
  double tau;
  int history_limit;
} cemx_session_config;

/* Return nonzero to keep going. */
typedef int (*cemx_progress_fn)(int step, double value, void* user);

/* Library */
CEMX_API const char* cemx_version(void);
CEMX_API const char* cemx_status_name(cemx_status status);
/* Message of the last failed call on this thread; empty after a success. */
CEMX_API const char* cemx_last_error(void);
/* Strings returned through char** out parameters are freed with this. */
CEMX_API void cemx_string_free(char* s);

/* Images: planar doubles, sample (c, y, x) at data[(c * height + y) * width + x]. */
CEMX_API cemx_status cemx_image_create(int width, int height, int channels, const double* data, cemx_image** out);
CEMX_API cemx_status cemx_image_load(const char* path, cemx_image** out);
CEMX_API cemx_status cemx_image_save(const cemx_image* img, const char* path);
CEMX_API void cemx_image_free(cemx_image* img);
CEMX_API int cemx_image_width(const cemx_image* img);
CEMX_API int cemx_image_height(const cemx_image* img);
CEMX_API int cemx_image_channels(const cemx_image* img);
CEMX_API const double* cemx_image_data(const cemx_image* img);

/* Kernels */
CEMX_API cemx_status cemx_kernel_bicubic(int factor, cemx_kernel** out);
CEMX_API cemx_status cemx_kernel_gaussian(int size, double sigma, cemx_kernel** out);
CEMX_API cemx_status cemx_kernel_load(const char* path, int normalize, cemx_kernel** out);
CEMX_API cemx_status cemx_kernel_save(const cemx_kernel* k, const char* path);
CEMX_API cemx_status cemx_kernel_to_json(const cemx_kernel* k, char** out);
CEMX_API void cemx_kernel_free(cemx_kernel* k);
CEMX_API cemx_status cemx_kernel_invert(const cemx_kernel* k, int factor, int grid, cemx_inverse_report* out);

/* Consistency operator */
CEMX_API cemx_status cemx_operator_create(const cemx_kernel* k, int factor, int hr_width, int hr_height,
                                          cemx_boundary boundary, cemx_operator** out);
CEMX_API void cemx_operator_free(cemx_operator* op);
CEMX_API cemx_status cemx_degrade(const cemx_operator* op, const cemx_image* x, cemx_image** out);
CEMX_API cemx_status cemx_cem_apply(const cemx_operator* op, const cemx_image* x_inc, const cemx_image* y,
                                    cemx_image** out);
CEMX_API cemx_status cemx_project_nullspace(const cemx_operator* op, const cemx_image* u, cemx_image** out);
CEMX_API cemx_status cemx_consistency(const cemx_operator* op, const cemx_image* x_hat, const cemx_image* y,
                                      cemx_residual* out);
CEMX_API cemx_status cemx_bicubic_upsample(const cemx_image* y, int factor, cemx_image** out);

/* Metrics (0-255 scale) */
CEMX_API cemx_status cemx_rmse(const cemx_image* a, const cemx_image* b, double* out);
/* +inf for identical images. */
CEMX_API cemx_status cemx_psnr(const cemx_image* a, const cemx_image* b, double* out);
/* reference may be NULL, leaving the rmse fields at 0. */
CEMX_API cemx_status cemx_diversity(const cemx_operator* op, const cemx_image* const* outputs, size_t count,
                                    const cemx_image* reference, cemx_diversity_report* out);

/* Generators */
CEMX_API cemx_status cemx_generator_toy(int factor, int channels, uint64_t seed, int zero_z_weights, int features,
                                        cemx_generator** out);
CEMX_API cemx_status cemx_generator_load(const char* path, cemx_generator** out);
CEMX_API cemx_status cemx_generator_save(const cemx_generator* g, const char* path);
CEMX_API void cemx_generator_free(cemx_generator* g);

/* Sessions */
CEMX_API void cemx_session_config_default(cemx_session_config* cfg);
/* generator is copied and required in generator mode; NULL otherwise. */
CEMX_API cemx_status cemx_session_create(const cemx_image* y, const cemx_kernel* k, const cemx_session_config* cfg,
                                         const cemx_generator* generator, cemx_session** out);
CEMX_API cemx_status cemx_session_load(const char* dir, cemx_session** out);
CEMX_API cemx_status cemx_session_export(const cemx_session* s, const char* dir);
CEMX_API void cemx_session_free(cemx_session* s);
CEMX_API cemx_status cemx_session_hr_size(const cemx_session* s, int* width, int* height);
CEMX_API cemx_status cemx_session_x_hat(const cemx_session* s, cemx_image** out);
CEMX_API cemx_status cemx_session_latent(const cemx_session* s, cemx_image** out);
CEMX_API cemx_status cemx_session_consistency(const cemx_session* s, cemx_residual* out);
/* spec_json is an edit job spec; report_json (may be NULL) receives the job report. */
CEMX_API cemx_status cemx_session_run_edit(cemx_session* s, const char* spec_json, cemx_progress_fn progress,
                                           void* user, char** report_json);
/* region_json NULL means the whole image. */
CEMX_API cemx_status cemx_session_set_knobs(cemx_session* s, const char* region_json, double l1, double l2,
                                            double theta, int eigen_mode);
CEMX_API cemx_status cemx_session_undo(cemx_session* s);
CEMX_API cemx_status cemx_session_alternatives(cemx_session* s, int n, int anchored, int steps, uint64_t seed);
CEMX_API cemx_status cemx_session_alternative(const cemx_session* s, size_t index, cemx_image** out);
CEMX_API cemx_status cemx_session_adopt(cemx_session* s, size_t index);

/* Losses and training */
CEMX_API cemx_status cemx_calibrate(const cemx_image* const* images, size_t count, char** json_out);
/* options_json may be NULL for defaults; report_json (may be NULL) gets per-step losses. */
CEMX_API cemx_status cemx_train_toy(const cemx_image* const* images, size_t count, const cemx_kernel* k,
                                    const char* options_json, cemx_generator** out, char** report_json);
/* Runs every registered loss and edit objective through a finite-difference check. */
CEMX_API cemx_status cemx_gradcheck_all(uint64_t seed, double tol, char** report_json, int* all_passed);

/* HTTP service */
CEMX_API cemx_status cemx_server_create(const char* export_root, cemx_server** out);
/* addr NULL uses CEMX_ADDR or 127.0.0.1:8787; port 0 picks a free port. */
CEMX_API cemx_status cemx_server_start(cemx_server* srv, const char* addr, int* port);
CEMX_API cemx_status cemx_server_run(cemx_server* srv, const char* addr);
CEMX_API void cemx_server_stop(cemx_server* srv);
CEMX_API void cemx_server_free(cemx_server* srv);

#ifdef __cplusplus
}
#endif

#endif /* CEMX_CEMX_H */
