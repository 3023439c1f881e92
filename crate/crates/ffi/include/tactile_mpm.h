#ifndef TACTILE_MPM_H
#define TACTILE_MPM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define TMPM_OK 0

/**
 * Null pointer, invalid UTF-8 or an out-of-range enum value.
 */
#define TMPM_ERR_ARGUMENT 1

#define TMPM_ERR_GRID_TOO_SMALL 2

#define TMPM_ERR_EMPTY_SCENE 3

#define TMPM_ERR_OUT_OF_GRID 4

#define TMPM_ERR_DEGENERATE_F 5

#define TMPM_ERR_PARSE 6

#define TMPM_ERR_EMPTY_CLOUD 7

#define TMPM_ERR_NO_SURFACE 8

#define TMPM_ERR_CROP_OUT_OF_BOUNDS 9

#define TMPM_ERR_SHAPE_MISMATCH 10

#define TMPM_ERR_SESSION_NOT_INITIALIZED 11

#define TMPM_ERR_NON_MONOTONIC_TIME 12

#define TMPM_ERR_PROTOCOL 13

#define TMPM_ERR_MANIFEST_MISMATCH 14

#define TMPM_ERR_CONFIG 15

#define TMPM_ERR_IO 16

/**
 * A Rust panic was caught at the boundary.
 */
#define TMPM_ERR_PANIC 17

/**
 * `vector` is the indenter velocity, m/s.
 */
#define TMPM_MODE_VELOCITY 0

/**
 * `vector` is the target indenter centroid, m.
 */
#define TMPM_MODE_POSITION 1

/**
 * A scene configuration and the directory its relative paths resolve
 * against.
 */
typedef struct TmpmScene TmpmScene;

typedef struct TmpmSession TmpmSession;

typedef struct TmpmStepResult {
  uint64_t step;
  double sim_time;
  /**
   * Indentation below the rest surface, m.
   */
  double depth;
  /**
   * Indenter centroid, m.
   */
  double position[3];
  bool terminal;
} TmpmStepResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL. Owned by the
 * library.
 */
const char *tmpm_last_error(void);

/**
 * Built-in scene: "default", "desk" or "tiny".
 *
 * # Safety
 * `name` must be NULL or a NUL-terminated string.
 */
struct TmpmScene *tmpm_scene_preset(const char *name);

/**
 * Scene from a TOML file; relative paths in it resolve against the
 * file's directory.
 *
 * # Safety
 * `path` must be NULL or a NUL-terminated string.
 */
struct TmpmScene *tmpm_scene_load(const char *path);

/**
 * Sets the output directory of sessions and datasets.
 *
 * # Safety
 * `scene` must come from this library; `dir` must be NULL or a
 * NUL-terminated string.
 */
int32_t tmpm_scene_set_output_dir(struct TmpmScene *scene, const char *dir);

/**
 * Runs the press-grid dataset of the scene and returns the number of
 * manifest rows through `rows`.
 *
 * # Safety
 * `scene` must come from this library; `rows` may be NULL.
 */
int32_t tmpm_scene_run_dataset(const struct TmpmScene *scene, size_t *rows);

/**
 * # Safety
 * `scene` must be NULL or come from this library, and not be used
 * afterwards.
 */
void tmpm_scene_free(struct TmpmScene *scene);

/**
 * Starts a coupling session. `object` NULL picks the scene's first
 * indenter; `session_dir` NULL uses `<output_dir>/session`. A negative
 * `max_depth` or a zero `max_steps` disables that terminal condition;
 * `substeps` 0 picks the count from the scene's timestep. The scene may
 * be freed while the session lives.
 *
 * # Safety
 * `scene` must come from this library; strings must be NULL or
 * NUL-terminated.
 */
struct TmpmSession *tmpm_session_new(const struct TmpmScene *scene,
                                     const char *object,
                                     double offset_x,
                                     double offset_y,
                                     double control_dt,
                                     size_t substeps,
                                     double max_depth,
                                     uint64_t max_steps,
                                     const char *session_dir);

/**
 * Applies one control step. With `request_image` set, the frame is
 * written as a PNG under the session directory; see
 * `tmpm_session_last_image`.
 *
 * # Safety
 * `session` must come from this library; `vector` must point to three
 * doubles; `out` may be NULL.
 */
int32_t tmpm_session_step(struct TmpmSession *session,
                          int32_t mode,
                          const double *vector,
                          double sim_time,
                          bool request_image,
                          struct TmpmStepResult *out);

/**
 * Current indentation below the rest surface, m; NaN for a null
 * session.
 *
 * # Safety
 * `session` must be NULL or come from this library.
 */
double tmpm_session_depth(const struct TmpmSession *session);

/**
 * Physics timestep of the session, s; NaN for a null session.
 *
 * # Safety
 * `session` must be NULL or come from this library.
 */
double tmpm_session_dt(const struct TmpmSession *session);

/**
 * Path of the image written by the last step, or NULL. Valid until the
 * next step or free.
 *
 * # Safety
 * `session` must be NULL or come from this library.
 */
const char *tmpm_session_last_image(const struct TmpmSession *session);

/**
 * # Safety
 * `session` must be NULL or come from this library, and not be used
 * afterwards.
 */
void tmpm_session_free(struct TmpmSession *session);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TACTILE_MPM_H */
