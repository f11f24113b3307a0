#ifndef PARASHARD_H
#define PARASHARD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Bits of [`PsCostReport::infeasible_reasons`].
 */
#define PS_REASON_MICROBATCH 1

#define PS_REASON_MEMORY 2

#define PS_REASON_SLO 4

/**
 * Result code of every fallible call.
 */
typedef enum PsStatus {
  PS_STATUS_OK = 0,
  PS_STATUS_NULL_ARGUMENT = 1,
  PS_STATUS_INVALID_UTF8 = 2,
  PS_STATUS_IO = 3,
  PS_STATUS_PARSE = 4,
  PS_STATUS_INVALID_CONFIG = 5,
  /**
   * Parallel degrees do not multiply to the world size.
   */
  PS_STATUS_BINDING = 6,
  PS_STATUS_UNSUPPORTED = 7,
  PS_STATUS_INVALID_ARGUMENT = 8,
  /**
   * The plan has no feasible configuration.
   */
  PS_STATUS_EMPTY_PLAN = 9,
  PS_STATUS_PANIC = 10,
} PsStatus;

typedef enum PsMode {
  /**
   * Use the mode stored in the configuration.
   */
  PS_MODE_DEFAULT = 0,
  PS_MODE_TRAINING = 1,
  PS_MODE_PREFILL = 2,
} PsMode;

typedef enum PsRankKey {
  PS_RANK_KEY_MFU = 0,
  PS_RANK_KEY_THROUGHPUT = 1,
  PS_RANK_KEY_STEP_TIME = 2,
  PS_RANK_KEY_MEMORY = 3,
} PsRankKey;

typedef enum PsCollective {
  PS_COLLECTIVE_REDUCE = 0,
  PS_COLLECTIVE_GATHER = 1,
  PS_COLLECTIVE_RING_ALL_GATHER = 2,
  PS_COLLECTIVE_RING_REDUCE_SCATTER = 3,
  PS_COLLECTIVE_ALL_TO_ALL = 4,
  PS_COLLECTIVE_ALL_REDUCE = 5,
  PS_COLLECTIVE_P2P_SEND_RECV = 6,
} PsCollective;

/**
 * Opaque loaded configuration.
 */
typedef struct PsConfig PsConfig;

/**
 * Flat summary of one configuration's cost estimate.
 */
typedef struct PsCostReport {
  uint32_t dp;
  uint32_t pp;
  uint32_t tp;
  uint32_t cp;
  bool feasible;
  /**
   * Zero when feasible; otherwise a mask of `PS_REASON_*` bits.
   */
  uint32_t infeasible_reasons;
  double flops_cube_per_device;
  double flops_vector_per_device;
  uint64_t weight_bytes;
  uint64_t activation_bytes;
  uint64_t training_state_bytes;
  uint64_t comm_bytes_intra;
  uint64_t comm_bytes_inter;
  double compute_time_s;
  double comm_time_s;
  double bubble_fraction;
  double step_time_s;
  double throughput_tok_s;
  double mfu_pct;
  double ttft_s;
  uint64_t num_microbatches;
  uint64_t layers_per_stage;
} PsCostReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Loads a JSON configuration file into a new handle.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PsStatus parashard_config_load(const char *path, struct PsConfig **out);

/**
 * Parses a JSON configuration held in memory into a new handle.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PsStatus parashard_config_parse(const char *json, struct PsConfig **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `config` must come from a load/parse call and not be freed twice.
 */
void parashard_config_free(struct PsConfig *config);

/**
 * Number of devices the configuration describes.
 *
 * # Safety
 * `config` must be a live handle or null.
 */
uint64_t parashard_config_world(const struct PsConfig *config);

/**
 * Cost estimate of one (dp, pp, tp, cp) configuration. An infeasible
 * configuration still returns [`PsStatus::Ok`] with `feasible` false.
 *
 * # Safety
 * `config` must be a live handle and `out` a valid pointer.
 */
enum PsStatus parashard_analyze(const struct PsConfig *config,
                                uint32_t dp,
                                uint32_t pp,
                                uint32_t tp,
                                uint32_t cp,
                                enum PsMode mode,
                                struct PsCostReport *out);

/**
 * Sweeps every configuration and writes the ranked plan as CSV. `top` of
 * zero keeps every row. The string must be released with
 * [`parashard_string_free`]. Returns [`PsStatus::EmptyPlan`] (with the CSV
 * still written) when nothing is feasible.
 *
 * # Safety
 * `config` must be a live handle and `out` a valid pointer.
 */
enum PsStatus parashard_plan_csv(const struct PsConfig *config,
                                 enum PsRankKey key,
                                 size_t top,
                                 enum PsMode mode,
                                 char **out);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void parashard_string_free(char *s);

/**
 * Bytes each device sends for one collective over `n` ranks.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum PsStatus parashard_data_moved_per_device(enum PsCollective kind,
                                              uint64_t n,
                                              uint64_t tensor_bytes,
                                              double *out);

/**
 * Message describing the last failure on this thread, or null. Valid
 * until the next call into the library from the same thread.
 */
const char *parashard_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *parashard_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PARASHARD_H */
