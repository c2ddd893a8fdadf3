#ifndef DACMDP_H
#define DACMDP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result of every fallible call.
 */
typedef enum DacmdpStatus {
  DACMDP_STATUS_OK = 0,
  /**
   * Invalid parameter value.
   */
  DACMDP_STATUS_ERR_CONFIG = 1,
  /**
   * Malformed or inconsistent data.
   */
  DACMDP_STATUS_ERR_DATA = 2,
  /**
   * Non-finite values or divergence.
   */
  DACMDP_STATUS_ERR_NUMERIC = 3,
  /**
   * File could not be read or written.
   */
  DACMDP_STATUS_ERR_IO = 4,
  /**
   * A required pointer argument was null.
   */
  DACMDP_STATUS_ERR_NULL = 5,
  /**
   * Internal panic caught at the boundary.
   */
  DACMDP_STATUS_ERR_PANIC = 6,
} DacmdpStatus;

/**
 * Dataset file format selector.
 */
typedef enum DacmdpFormat {
  /**
   * Chosen from the file extension.
   */
  DACMDP_FORMAT_AUTO = 0,
  DACMDP_FORMAT_JSONL = 1,
  DACMDP_FORMAT_BINARY = 2,
} DacmdpFormat;

typedef struct DacmdpDataset DacmdpDataset;

typedef struct DacmdpMdp DacmdpMdp;

typedef struct DacmdpPolicy DacmdpPolicy;

typedef struct DacmdpSolution DacmdpSolution;

/**
 * Compilation and solve settings.
 */
typedef struct DacmdpConfig {
  size_t k;
  size_t k_pi;
  double cost;
  double gamma;
  bool weighted;
  bool sknn;
  double delta_min;
  size_t max_iters;
} DacmdpConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread ("" if none). Valid until
 * the next failing call on the same thread.
 */
const char *dacmdp_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dacmdp_version(void);

struct DacmdpConfig dacmdp_config_default(void);

enum DacmdpStatus dacmdp_dataset_load(const char *path,
                                      enum DacmdpFormat format,
                                      struct DacmdpDataset **out);

/**
 * Number of tuples (0 for a null handle).
 */
size_t dacmdp_dataset_len(const struct DacmdpDataset *ds);

size_t dacmdp_dataset_state_dim(const struct DacmdpDataset *ds);

void dacmdp_dataset_free(struct DacmdpDataset *ds);

/**
 * Compile `ds` into a core MDP.
 */
enum DacmdpStatus dacmdp_compile(const struct DacmdpDataset *ds,
                                 const struct DacmdpConfig *config,
                                 struct DacmdpMdp **out);

enum DacmdpStatus dacmdp_mdp_load(const char *path, struct DacmdpMdp **out);

enum DacmdpStatus dacmdp_mdp_save(const struct DacmdpMdp *mdp, const char *path);

size_t dacmdp_mdp_n_states(const struct DacmdpMdp *mdp);

size_t dacmdp_mdp_n_actions(const struct DacmdpMdp *mdp);

/**
 * New MDP with `modifier` (`action_penalty:<a>:<p>`, `discount:<g>` or
 * `slip:<p>`, numeric actions) applied. The input is left unchanged.
 */
enum DacmdpStatus dacmdp_mdp_apply_modifier(const struct DacmdpMdp *mdp,
                                            const char *modifier,
                                            struct DacmdpMdp **out);

void dacmdp_mdp_free(struct DacmdpMdp *mdp);

/**
 * Solve with value iteration. `gamma < 0` uses the MDP's stored discount;
 * `threads == 0` uses the global worker pool.
 */
enum DacmdpStatus dacmdp_solve(const struct DacmdpMdp *mdp,
                               double gamma,
                               double delta_min,
                               size_t max_iters,
                               size_t threads,
                               struct DacmdpSolution **out);

enum DacmdpStatus dacmdp_solution_load(const char *path, struct DacmdpSolution **out);

enum DacmdpStatus dacmdp_solution_save(const struct DacmdpSolution *sol, const char *path);

size_t dacmdp_solution_iterations(const struct DacmdpSolution *sol);

/**
 * Final sup-norm residual (NaN for a null handle).
 */
double dacmdp_solution_residual(const struct DacmdpSolution *sol);

bool dacmdp_solution_converged(const struct DacmdpSolution *sol);

/**
 * Copy V into `out` (capacity `len`, must be at least the state count).
 */
enum DacmdpStatus dacmdp_solution_values(const struct DacmdpSolution *sol, double *out, size_t len);

/**
 * Copy the row-major `n_states × n_actions` Q table into `out`.
 */
enum DacmdpStatus dacmdp_solution_q(const struct DacmdpSolution *sol, double *out, size_t len);

void dacmdp_solution_free(struct DacmdpSolution *sol);

/**
 * Lookahead policy over a solved MDP. `ds` must be the dataset the MDP was
 * compiled from; modifiers recorded on the MDP are honored. The policy keeps
 * its own copies, so the inputs may be freed afterwards.
 */
enum DacmdpStatus dacmdp_policy_new(const struct DacmdpDataset *ds,
                                    const struct DacmdpMdp *mdp,
                                    const struct DacmdpSolution *sol,
                                    struct DacmdpPolicy **out);

/**
 * Greedy action for the observation `obs[0..len]`.
 */
enum DacmdpStatus dacmdp_policy_act(const struct DacmdpPolicy *policy,
                                    const float *obs,
                                    size_t len,
                                    size_t *action);

/**
 * Per-action scores for `obs` written to `out` (capacity `out_len`).
 */
enum DacmdpStatus dacmdp_policy_scores(const struct DacmdpPolicy *policy,
                                       const float *obs,
                                       size_t len,
                                       double *out,
                                       size_t out_len);

void dacmdp_policy_free(struct DacmdpPolicy *policy);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DACMDP_H */
