#ifndef MATCHBANDIT_H
#define MATCHBANDIT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MbStatus {
  MB_STATUS_OK = 0,
  MB_STATUS_NULL_POINTER = 1,
  MB_STATUS_INVALID_ARGUMENT = 2,
  MB_STATUS_CONFIG = 3,
  MB_STATUS_RUNTIME = 4,
  MB_STATUS_PANIC = 5,
} MbStatus;

// A market instance with its feedback streams.
typedef struct MbEnvironment MbEnvironment;

// The record of one completed run.
typedef struct MbTrace MbTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer
// stays valid until the next failing call on the same thread.
const char *mb_last_error_message(void);

// Generates a random market with `n_agents` agents, `n_arms` arms,
// `dim`-dimensional features and capacity `capacity`.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum MbStatus mb_environment_generate(size_t n_agents,
                                      size_t n_arms,
                                      size_t dim,
                                      size_t capacity,
                                      uint64_t seed,
                                      uint64_t feedback_seed,
                                      struct MbEnvironment **out);

// Loads a market from an instance JSON document.
//
// # Safety
// `json` must be a NUL-terminated string and `out` writable.
enum MbStatus mb_environment_from_json(const char *json,
                                       uint64_t feedback_seed,
                                       struct MbEnvironment **out);

// # Safety
// `env` must be null or a handle from this library not yet freed.
void mb_environment_free(struct MbEnvironment *env);

// Expected revenue of the optimal matching.
//
// # Safety
// `env` must be a live handle and `out` writable.
enum MbStatus mb_environment_oracle_value(const struct MbEnvironment *env, double *out);

// Runs the policy described by `config_json` on a copy of the market, so
// the same handle replays identical feedback on every call.
//
// # Safety
// `env` must be a live handle, `config_json` NUL-terminated and `out`
// writable.
enum MbStatus mb_run(const struct MbEnvironment *env,
                     const char *config_json,
                     struct MbTrace **out);

// # Safety
// `trace` must be null or a handle from this library not yet freed.
void mb_trace_free(struct MbTrace *trace);

// Number of rounds played.
//
// # Safety
// `trace` must be a live handle.
size_t mb_trace_rounds(const struct MbTrace *trace);

// Number of epochs; zero for the per-round baseline.
//
// # Safety
// `trace` must be a live handle.
size_t mb_trace_epochs(const struct MbTrace *trace);

// Combinatorial optimizer calls over the run.
//
// # Safety
// `trace` must be a live handle.
uint64_t mb_trace_optimizer_calls(const struct MbTrace *trace);

// Copies up to `len` cumulative regret values into `buf` and stores the
// number written in `written`.
//
// # Safety
// `trace` must be a live handle, `buf` valid for `len` doubles and
// `written` writable.
enum MbStatus mb_trace_cumulative_regret(const struct MbTrace *trace,
                                         double *buf,
                                         size_t len,
                                         size_t *written);

// Crate version as a static NUL-terminated string.
const char *mb_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MATCHBANDIT_H */
