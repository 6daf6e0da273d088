#ifndef DUCCT_H
#define DUCCT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum DucctStatus {
  DUCCT_STATUS_OK = 0,
  DUCCT_STATUS_NULL_POINTER = 1,
  DUCCT_STATUS_INVALID_ARGUMENT = 2,
  DUCCT_STATUS_INVALID_STATE = 3,
  DUCCT_STATUS_CONSISTENCY = 4,
  DUCCT_STATUS_CONFIG = 5,
  DUCCT_STATUS_CONTRACT = 6,
  DUCCT_STATUS_IO = 7,
  DUCCT_STATUS_SERIALIZATION = 8,
  DUCCT_STATUS_PANIC = 9,
} DucctStatus;

// Outcome of a simulated episode.
typedef enum DucctEpisodeStatus {
  DUCCT_EPISODE_STATUS_SUCCESS = 0,
  DUCCT_EPISODE_STATUS_TIMEOUT = 1,
  DUCCT_EPISODE_STATUS_DIVERGED = 2,
} DucctEpisodeStatus;

// Opaque controller handle.
typedef struct DucctController DucctController;

// Opaque handle to a finished episode log.
typedef struct DucctEpisode DucctEpisode;

// Robot state belief. `cov` is the row-major 3×3 covariance of (x, y, psi).
typedef struct DucctBelief {
  double mean[3];
  double cov[9];
} DucctBelief;

// Predicted obstacle tube with `len` entries, starting at the current time.
// `means` holds `2 * len` values (x, y pairs), `covs` holds `4 * len` values
// (row-major 2×2 blocks).
typedef struct DucctObstacleTube {
  const double *means;
  const double *covs;
  size_t len;
} DucctObstacleTube;

// Result of one control cycle.
typedef struct DucctCommand {
  double v;
  double omega;
  double executed_risk;
  uint8_t all_rejected_fallback;
} DucctCommand;

// One logged simulation step.
typedef struct DucctStep {
  double t;
  double true_x;
  double true_y;
  double true_psi;
  double est_x;
  double est_y;
  double est_psi;
  double sigma_xx;
  double sigma_xy;
  double sigma_yy;
  double sigma_psipsi;
  double cmd_v;
  double cmd_w;
  double executed_risk;
  uint8_t collision;
  double min_ped_dist;
  double robot_social_force;
  uint8_t all_rejected_flag;
} DucctStep;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *ducct_version(void);

// Message of the last failed call on this thread, or NULL. The pointer stays
// valid until the next call into the library on the same thread.
const char *ducct_last_error_message(void);

// Creates a controller. `variant` is one of "vanilla", "dra", "ducct".
// `config_toml` may be NULL for defaults; only the `mppi`, `risk` and `ut`
// sections affect the controller.
//
// # Safety
// String arguments must be NUL-terminated or NULL; `out` must be writable.
enum DucctStatus ducct_controller_new(const char *variant,
                                      const char *config_toml,
                                      struct DucctController **out);

// Releases a controller. NULL is ignored.
//
// # Safety
// `ctrl` must come from [`ducct_controller_new`] and not be used afterwards.
void ducct_controller_free(struct DucctController *ctrl);

// Planning horizon in steps. Obstacle tubes need at least `horizon + 1` entries.
//
// # Safety
// `ctrl` must be a live handle and `out` writable.
enum DucctStatus ducct_controller_horizon(const struct DucctController *ctrl, size_t *out);

// Runs one control cycle and keeps the shifted plan as the next warm start.
// `seed` and `cycle` key the random streams, so equal inputs reproduce the
// same command.
//
// # Safety
// `ctrl` must be a live handle, `belief` readable, `tubes` must point to
// `n_tubes` valid descriptors (may be NULL when `n_tubes` is 0) and `out`
// writable.
enum DucctStatus ducct_controller_cycle(struct DucctController *ctrl,
                                        const struct DucctBelief *belief,
                                        const struct DucctObstacleTube *tubes,
                                        size_t n_tubes,
                                        double goal_x,
                                        double goal_y,
                                        uint64_t seed,
                                        uint64_t cycle,
                                        struct DucctCommand *out);

// Runs a full closed-loop episode. Names follow the CLI: scenario
// "c3p3"/"c6p6"/"c9p9"/"empty", variant "vanilla"/"dra"/"ducct", regimes
// "standard"/"under"/"over". `config_toml` may be NULL for defaults.
//
// # Safety
// String arguments must be NUL-terminated (config may be NULL); `out` writable.
enum DucctStatus ducct_episode_run(const char *scenario,
                                   const char *variant,
                                   const char *loc,
                                   const char *pred,
                                   uint64_t seed,
                                   const char *config_toml,
                                   struct DucctEpisode **out);

// Releases an episode. NULL is ignored.
//
// # Safety
// `ep` must come from [`ducct_episode_run`] and not be used afterwards.
void ducct_episode_free(struct DucctEpisode *ep);

// # Safety
// `ep` must be a live handle and `out` writable.
enum DucctStatus ducct_episode_status(const struct DucctEpisode *ep, enum DucctEpisodeStatus *out);

// Number of logged steps.
//
// # Safety
// `ep` must be a live handle and `out` writable.
enum DucctStatus ducct_episode_len(const struct DucctEpisode *ep, size_t *out);

// Copies step `index` into `out`.
//
// # Safety
// `ep` must be a live handle and `out` writable.
enum DucctStatus ducct_episode_step(const struct DucctEpisode *ep,
                                    size_t index,
                                    struct DucctStep *out);

// Writes `<stem>.csv` and `<stem>.json` into `dir`, the same files the CLI
// produces.
//
// # Safety
// `ep` must be a live handle and `dir` NUL-terminated.
enum DucctStatus ducct_episode_write(const struct DucctEpisode *ep, const char *dir);

// Probability that `query` is covered by a square footprint of half side
// `half_side` whose centre is Gaussian with `mean` and row-major 2×2 `cov`.
//
// # Safety
// `query` and `mean` must point to 2 values, `cov` to 4, `out` writable.
enum DucctStatus ducct_occ_prob(const double *query,
                                const double *mean,
                                const double *cov,
                                double half_side,
                                double *out);

// Brier score of `n` predicted probabilities against 0/1 outcomes.
//
// # Safety
// `preds` and `outcomes` must point to `n` values, `out` writable.
enum DucctStatus ducct_brier(const double *preds, const uint8_t *outcomes, size_t n, double *out);

// Log loss with predictions clipped to `[eps, 1 - eps]`. Pass `eps <= 0` for
// the library default.
//
// # Safety
// `preds` and `outcomes` must point to `n` values, `out` writable.
enum DucctStatus ducct_log_loss(const double *preds,
                                const uint8_t *outcomes,
                                size_t n,
                                double eps,
                                double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DUCCT_H */
