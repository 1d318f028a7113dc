#ifndef PQLAB_H
#define PQLAB_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PqlabStatus {
  PQLAB_STATUS_OK = 0,
  PQLAB_STATUS_NULL_POINTER = 1,
  PQLAB_STATUS_INVALID_UTF8 = 2,
  PQLAB_STATUS_VALIDATION = 3,
  PQLAB_STATUS_RUNTIME = 4,
  PQLAB_STATUS_OUT_OF_RANGE = 5,
  PQLAB_STATUS_PANIC = 6,
} PqlabStatus;

/**
 * Report records, ordered by window then phase.
 */
typedef struct PqlabReport PqlabReport;

/**
 * Parsed scenario.
 */
typedef struct PqlabScenario PqlabScenario;

/**
 * One report record. `phase` is 1, 2 or 3.
 */
typedef struct PqlabRecord {
  double t_start;
  uint32_t phase;
  double u_rms;
  double i_rms;
  double p;
  double q;
  double e_p;
  double e_q;
  double f_c;
  double thdu;
  double thdi;
  double pst;
  double plt;
} PqlabRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next call on the same thread.
 */
const char *pqlab_last_error(void);

/**
 * Library version, static storage.
 */
const char *pqlab_version(void);

enum PqlabStatus pqlab_scenario_parse(const char *text_toml, struct PqlabScenario **out);

void pqlab_scenario_free(struct PqlabScenario *s);

/**
 * Writes the 64-character hex hash and a terminating NUL; `buf_len` must be at least 65.
 */
enum PqlabStatus pqlab_scenario_hash(const struct PqlabScenario *s, char *buf, size_t buf_len);

/**
 * Runs the scenario, writing artifacts under `out_dir`. `report` may be null;
 * otherwise it receives the report, or null when none was requested.
 */
enum PqlabStatus pqlab_scenario_run(const struct PqlabScenario *s,
                                    const char *out_dir,
                                    struct PqlabReport **report);

/**
 * Report for `n_channels` (1 to 3) voltage channels of `n_samples` each,
 * stored channel after channel. `currents` is null or laid out the same way.
 */
enum PqlabStatus pqlab_analyze(double rate,
                               const double *voltages,
                               const double *currents,
                               size_t n_channels,
                               size_t n_samples,
                               double f_nominal,
                               size_t cycles,
                               bool allow_short,
                               struct PqlabReport **out);

size_t pqlab_report_len(const struct PqlabReport *r);

enum PqlabStatus pqlab_report_get(const struct PqlabReport *r,
                                  size_t index,
                                  struct PqlabRecord *out);

void pqlab_report_free(struct PqlabReport *r);

/**
 * Series R and X in mOhm from the supply to `tap` along one conductor.
 * `model` is `nominal`, `measured`, or a model override file path.
 */
enum PqlabStatus pqlab_path_impedance(const char *model,
                                      const char *tap,
                                      const char *conductor,
                                      double f_hz,
                                      double *r_mohm,
                                      double *x_mohm);

/**
 * THD (orders 2..40) of a whole-cycle window.
 */
enum PqlabStatus pqlab_thd(const double *samples, size_t n, double rate, double f_c, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PQLAB_H */
