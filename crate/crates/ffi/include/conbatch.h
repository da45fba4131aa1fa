#ifndef CONBATCH_H
#define CONBATCH_H

/* Generated by cbindgen. Do not edit. */

#include <stddef.h>
#include <stdint.h>
#include <stdbool.h>

typedef enum CbStatus {
  CB_STATUS_OK = 0,
  CB_STATUS_NULL_POINTER = 1,
  CB_STATUS_INVALID_ARGUMENT = 2,
  CB_STATUS_IO = 3,
  CB_STATUS_INVALID_DATASET = 4,
  CB_STATUS_NOT_IN_POOL = 5,
  CB_STATUS_NUMERIC = 6,
  CB_STATUS_BUFFER_TOO_SMALL = 7,
  CB_STATUS_PANIC = 8,
} CbStatus;

typedef enum CbCostVariant {
  CB_COST_VARIANT_NONE = 0,
  CB_COST_VARIANT_DISTANCE = 1,
  CB_COST_VARIANT_DISTANCE_RETURN = 2,
} CbCostVariant;

typedef enum CbMetric {
  CB_METRIC_HAVERSINE = 0,
  CB_METRIC_PLANAR = 1,
} CbMetric;

typedef enum CbStrategy {
  CB_STRATEGY_RANDOM = 0,
  CB_STRATEGY_GREEDY = 1,
  CB_STRATEGY_THRESHOLD = 2,
  CB_STRATEGY_UNCONSTRAINED = 3,
} CbStrategy;

typedef struct CbCostModel CbCostModel;

typedef struct CbCube CbCube;

typedef struct CbDataset CbDataset;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next call into the library on the same thread.
 */
const char *cb_last_error_message(void);

/**
 * Great-circle distance in meters.
 */
double cb_haversine(double lat1, double lon1, double lat2, double lon2);

/**
 * Shannon entropy in nats.
 *
 * # Safety
 * `probs` must point to `len` readable values; `out` must be writable.
 */
enum CbStatus cb_entropy(const double *probs, size_t len, double *out);

/**
 * Loads a dataset directory.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum CbStatus cb_dataset_load(const char *path, struct CbDataset **out);

/**
 * Generates a synthetic dataset from a JSON spec.
 *
 * # Safety
 * `spec_json` must be a NUL-terminated string; `out` must be writable.
 */
enum CbStatus cb_dataset_synth(const char *spec_json, uint64_t seed, struct CbDataset **out);

/**
 * Number of samples, or 0 for a null handle.
 *
 * # Safety
 * `ds` must be null or a live handle.
 */
size_t cb_dataset_len(const struct CbDataset *ds);

/**
 * Copies the pool indices into `buf`. `out_len` always receives the pool
 * size; `BUFFER_TOO_SMALL` is returned if it exceeds `cap`.
 *
 * # Safety
 * `ds` must be a live handle, `buf` writable for `cap` entries.
 */
enum CbStatus cb_dataset_pool(const struct CbDataset *ds, size_t *buf, size_t cap, size_t *out_len);

/**
 * # Safety
 * `ds` must be null or a handle not yet freed.
 */
void cb_dataset_free(struct CbDataset *ds);

/**
 * Builds a predictive cube from `rows * draws * classes` probabilities laid
 * out row, draw, class. `index_map[r]` is the dataset index of row `r`.
 *
 * # Safety
 * Pointers must be readable for the stated lengths; `out` writable.
 */
enum CbStatus cb_cube_new(const double *probs,
                          size_t rows,
                          size_t draws,
                          size_t classes,
                          const size_t *index_map,
                          struct CbCube **out);

/**
 * Single-point mutual information of cube row `row`.
 *
 * # Safety
 * `cube` must be a live handle; `out` writable.
 */
enum CbStatus cb_cube_bald(const struct CbCube *cube, size_t row, double *out);

/**
 * Joint mutual information of a set of cube rows.
 *
 * # Safety
 * `cube` must be a live handle; `rows` readable for `len`; `out` writable.
 */
enum CbStatus cb_cube_batch_mutual_information(const struct CbCube *cube,
                                               const size_t *rows,
                                               size_t len,
                                               size_t exact_config_cap,
                                               size_t n_sim,
                                               uint64_t seed,
                                               double *out);

/**
 * # Safety
 * `cube` must be null or a handle not yet freed.
 */
void cb_cube_free(struct CbCube *cube);

/**
 * Cost model without area costs. `ref_lat_deg` is used by the planar metric.
 *
 * # Safety
 * `out` must be writable.
 */
enum CbStatus cb_cost_model_new(enum CbCostVariant variant,
                                enum CbMetric metric,
                                double ref_lat_deg,
                                struct CbCostModel **out);

/**
 * Area-cost model from parallel arrays of area ids and costs.
 *
 * # Safety
 * `ids` and `costs` must be readable for `len`; `out` writable.
 */
enum CbStatus cb_cost_model_area(const uint32_t *ids,
                                 const double *costs,
                                 size_t len,
                                 struct CbCostModel **out);

/**
 * # Safety
 * `cost` must be null or a handle not yet freed.
 */
void cb_cost_model_free(struct CbCostModel *cost);

/**
 * Selects one batch from `pool` (dataset indices, each present in the cube's
 * index map). `budget` may be `INFINITY`. Selected dataset indices are
 * written to `out_indices` in selection order.
 *
 * # Safety
 * Handles must be live; `pool` readable for `pool_len`; `out_indices`
 * writable for `out_cap`; `out_len` and `out_total_cost` writable.
 */
enum CbStatus cb_select_batch(enum CbStrategy strategy,
                              const struct CbCube *cube,
                              const struct CbDataset *ds,
                              const struct CbCostModel *cost,
                              const size_t *pool,
                              size_t pool_len,
                              double budget,
                              size_t n_max,
                              size_t exact_config_cap,
                              size_t n_sim,
                              uint64_t seed,
                              size_t *out_indices,
                              size_t out_cap,
                              size_t *out_len,
                              double *out_total_cost);

/**
 * Runs one seed of an experiment described by a JSON run config and returns
 * the result series as JSON. Free the string with `cb_string_free`.
 *
 * # Safety
 * `config_json` must be a NUL-terminated string; `out_json` writable.
 */
enum CbStatus cb_run_experiment(const char *config_json, uint64_t seed, char **out_json);

/**
 * # Safety
 * `s` must be null or a string returned by this library and not yet freed.
 */
void cb_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONBATCH_H */
