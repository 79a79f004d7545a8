/* flowanom C API.
 *
 * Flow records in, anomaly reports out. Every object is an opaque handle
 * created by a constructor below and released by the matching *_free
 * function; *_free accepts NULL. Functions return FA_OK or an error status;
 * fa_last_error() then holds a one-line message for the calling thread. */
#ifndef FLOWANOM_FLOWANOM_H
#define FLOWANOM_FLOWANOM_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define FA_API __declspec(dllexport)
#else
#define FA_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fa_status {
  FA_OK = 0,
  FA_ERR_INVALID_ARGUMENT = 1,
  FA_ERR_UNREADABLE_INPUT = 2,
  FA_ERR_PARSE = 3,
  FA_ERR_DISTANCE_CONFLICT = 4,
  FA_ERR_UNKNOWN_SERVICE = 5,
  FA_ERR_STOP_NOT_ON_ROUTE = 6,
  FA_ERR_WRONG_DIRECTION = 7,
  FA_ERR_DISTANCE_MISMATCH = 8,
  FA_ERR_EMPTY_INPUT = 9,
  FA_ERR_MISSING_SEGMENT_SPEED = 10,
  FA_ERR_NON_POSITIVE_VARIANCE = 11,
  FA_ERR_ZERO_VARIANCE = 12,
  FA_ERR_SEGMENT_NOT_ON_PATH = 13,
  FA_ERR_TOO_FEW_RECORDS = 14,
  FA_ERR_ALL_ROWS_REJECTED = 15,
  FA_ERR_DISCONNECTED = 16,
  FA_ERR_INCONSISTENT = 17,
  FA_ERR_DUPLICATE_POSITION = 18,
  FA_ERR_INTERNAL = 99
} fa_status;

typedef enum fa_model_kind {
  FA_MODEL_BASELINE1 = 0,
  FA_MODEL_BASELINE2 = 1,
  FA_MODEL_EDGE = 2,
  FA_MODEL_SMOOTHED = 3
} fa_model_kind;

typedef struct fa_records fa_records;
typedef struct fa_routes fa_routes;
typedef struct fa_network fa_network;
typedef struct fa_model fa_model;
typedef struct fa_scored fa_scored;
typedef struct fa_reports fa_reports;

FA_API const char* fa_version(void);
FA_API const char* fa_status_name(fa_status status);
FA_API const char* fa_last_error(void);

/* ---- records ---- */

FA_API fa_status fa_records_read(const char* path, fa_records** out);
FA_API size_t fa_records_count(const fa_records* records);
/* Rows skipped while reading; line numbers are 1-based. */
FA_API size_t fa_records_rejected_count(const fa_records* records);
FA_API fa_status fa_records_rejected_at(const fa_records* records, size_t index, size_t* line,
                                        const char** reason);
FA_API void fa_records_free(fa_records* records);

/* ---- routes and network ---- */

FA_API fa_status fa_routes_infer(const fa_records* records, double distance_tolerance,
                                 fa_routes** out);
FA_API fa_status fa_routes_read(const char* path, fa_routes** out);
/* rejects_path may be NULL. */
FA_API fa_status fa_routes_write(const fa_routes* routes, const char* routes_path,
                                 const char* rejects_path);
FA_API size_t fa_routes_accepted_count(const fa_routes* routes);
FA_API size_t fa_routes_rejected_count(const fa_routes* routes);
FA_API void fa_routes_free(fa_routes* routes);

FA_API fa_status fa_network_build(const fa_routes* routes, double distance_tolerance,
                                  fa_network** out);
FA_API size_t fa_network_node_count(const fa_network* network);
FA_API size_t fa_network_segment_count(const fa_network* network);
FA_API void fa_network_free(fa_network* network);

/* ---- models ---- */

typedef struct fa_train_config {
  double eta;
  double tau;
  double psi;
  int epochs;
  double c_min;
  uint64_t shuffle_seed;
  int variance_refresh;
  double sigma2_floor;
} fa_train_config;

FA_API void fa_train_config_init(fa_train_config* cfg);

typedef void (*fa_epoch_fn)(int epoch, double sse, double sigma2, void* user);

/* Records that do not resolve onto the network (unknown service, distance
 * mismatch beyond the tolerance) are left out; *skipped receives their
 * count when non-NULL. on_epoch may be NULL. */
FA_API fa_status fa_model_train(const fa_network* network, const fa_records* records,
                                fa_model_kind kind, const fa_train_config* cfg,
                                double distance_tolerance, fa_epoch_fn on_epoch, void* user,
                                fa_model** out, size_t* skipped);
FA_API fa_status fa_model_save(const fa_model* model, const char* path);
FA_API fa_status fa_model_load(const char* path, fa_model** out);
FA_API fa_model_kind fa_model_get_kind(const fa_model* model);
FA_API double fa_model_sigma2(const fa_model* model);
FA_API fa_status fa_model_expected_time(const fa_model* model, const fa_network* network,
                                        const char* service, const char* origin,
                                        const char* destination, double distance_m,
                                        double* seconds);
FA_API void fa_model_free(fa_model* model);

/* ---- cross validation ---- */

FA_API fa_status fa_crossval(const fa_network* network, const fa_records* records, int k,
                             const fa_model_kind* kinds, size_t n_kinds,
                             const fa_train_config* cfg, uint64_t seed,
                             double distance_tolerance, const char* out_path);

/* ---- detection and localization ---- */

typedef struct fa_detect_config {
  double delta_quantile;
  int use_override;
  double delta_override;
} fa_detect_config;

FA_API void fa_detect_config_init(fa_detect_config* cfg);

FA_API fa_status fa_detect(const fa_model* model, const fa_network* network,
                           const fa_records* records, const fa_detect_config* cfg,
                           double distance_tolerance, fa_scored** out, size_t* skipped);
FA_API fa_status fa_scored_write(const fa_scored* scored, const char* path);
FA_API fa_status fa_scored_read(const char* path, const fa_network* network, fa_scored** out);
FA_API double fa_scored_delta(const fa_scored* scored);
FA_API size_t fa_scored_total(const fa_scored* scored);
FA_API size_t fa_scored_significant(const fa_scored* scored);
FA_API void fa_scored_free(fa_scored* scored);

FA_API fa_status fa_localize(const fa_scored* scored, fa_reports** out);
/* daily_path may be NULL. */
FA_API fa_status fa_reports_write(const fa_reports* reports, const char* report_path,
                                  const char* daily_path);
FA_API size_t fa_reports_count(const fa_reports* reports);
/* Ranked access; rank 0 is the top anomaly. */
FA_API const char* fa_reports_record_id(const fa_reports* reports, size_t rank);
FA_API size_t fa_reports_containment(const fa_reports* reports, size_t rank);
FA_API void fa_reports_free(fa_reports* reports);

/* ---- synthetic data ---- */

typedef struct fa_synth_config {
  int n_services;
  int stops_per_service;
  int shared_corridor;
  double segment_min_m;
  double segment_max_m;
  double speed_min_mps;
  double speed_max_mps;
  uint64_t n_records;
  double noise_sigma2;
  double max_physical_speed;
  double day_start;
  double day_length_s;
  double time_resolution_s;
  int congestion;               /* non-zero plants a congested segment */
  const char* congested_from;   /* NULL picks a mid-route segment */
  const char* congested_to;
  double window_start;
  double window_end;
  double slowdown;
  uint64_t seed;
} fa_synth_config;

FA_API void fa_synth_config_init(fa_synth_config* cfg);

/* routes_path may be NULL. */
FA_API fa_status fa_simulate(const fa_synth_config* cfg, const char* records_path,
                             const char* truth_path, const char* routes_path);

#ifdef __cplusplus
}
#endif

#endif /* FLOWANOM_FLOWANOM_H */
