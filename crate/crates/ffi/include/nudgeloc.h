#ifndef NUDGELOC_H
#define NUDGELOC_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Filter mode reported in [`NlFrame`].
 */
typedef enum NlMode {
  NL_MODE_GLOBAL = 0,
  NL_MODE_TRACKING = 1,
} NlMode;

/**
 * Result codes.
 */
typedef enum NlStatus {
  NL_STATUS_OK = 0,
  NL_STATUS_NULL_POINTER = 1,
  NL_STATUS_INVALID_ARGUMENT = 2,
  NL_STATUS_CONFIG = 3,
  NL_STATUS_IO = 4,
  NL_STATUS_FORMAT = 5,
  NL_STATUS_FILTER = 6,
  /**
   * The filter has no particles yet; call an init function first.
   */
  NL_STATUS_NOT_INITIALIZED = 7,
  NL_STATUS_BUFFER_TOO_SMALL = 8,
  NL_STATUS_PANIC = 99,
} NlStatus;

/**
 * Opaque anchor database handle.
 */
typedef struct NlDatabase NlDatabase;

/**
 * Opaque filter handle. Owns copies of the scene and database.
 */
typedef struct NlFilter NlFilter;

/**
 * Opaque scene handle.
 */
typedef struct NlScene NlScene;

/**
 * Camera intrinsics.
 */
typedef struct NlIntrinsics {
  size_t width;
  size_t height;
  /**
   * Horizontal field of view in radians.
   */
  double horizontal_fov;
} NlIntrinsics;

/**
 * Per-frame filter output.
 */
typedef struct NlFrame {
  size_t frame;
  enum NlMode mode;
  enum NlMode next_mode;
  double estimate[12];
  double sigma2;
  size_t nudge_accepted;
  bool kidnap;
  double wall_ms;
} NlFrame;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL
 * terminated, truncated to `len`). Returns the full message length.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t nl_last_error(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *nl_version(void);

/**
 * The reference room with texture seed `seed`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum NlStatus nl_scene_default(uint64_t seed, struct NlScene **out);

/**
 * Scene from its JSON description.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum NlStatus nl_scene_from_json(const char *json, struct NlScene **out);

/**
 * # Safety
 * `scene` must be null or a handle from this library, not used afterwards.
 */
void nl_scene_free(struct NlScene *scene);

/**
 * Renders `scene` from `pose` into `rgb`, which must hold
 * `3 * width * height` floats.
 *
 * # Safety
 * Pointers must be valid; `rgb` must be writable for `rgb_len` floats.
 */
enum NlStatus nl_render(const struct NlScene *scene,
                        const double *pose,
                        struct NlIntrinsics k,
                        bool with_artifacts,
                        float *rgb,
                        size_t rgb_len);

/**
 * Builds an anchor database. `dense` selects the 2502-anchor grid,
 * otherwise the 504-anchor grid. Floaters follow the default filter
 * configuration.
 *
 * # Safety
 * `scene` and `out` must be valid pointers.
 */
enum NlStatus nl_database_build(const struct NlScene *scene,
                                bool dense,
                                struct NlIntrinsics k,
                                struct NlDatabase **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum NlStatus nl_database_load(const char *path, struct NlDatabase **out);

/**
 * # Safety
 * `db` must be a valid handle and `path` a NUL-terminated string.
 */
enum NlStatus nl_database_save(const struct NlDatabase *db, const char *path);

/**
 * Number of anchors, or 0 for a null handle.
 *
 * # Safety
 * `db` must be null or a valid handle.
 */
size_t nl_database_len(const struct NlDatabase *db);

/**
 * # Safety
 * `db` must be null or a handle from this library, not used afterwards.
 */
void nl_database_free(struct NlDatabase *db);

/**
 * Creates a filter. `config_json` may be null for defaults; `db` may be
 * null to run without nudging. The scene and database are copied.
 *
 * # Safety
 * Pointers must be null where allowed or valid otherwise.
 */
enum NlStatus nl_filter_new(const struct NlScene *scene,
                            const struct NlDatabase *db,
                            const char *config_json,
                            uint64_t seed,
                            struct NlFilter **out);

/**
 * # Safety
 * `filter` must be null or a handle from this library, not used afterwards.
 */
void nl_filter_free(struct NlFilter *filter);

/**
 * Spreads particles uniformly over the room.
 *
 * # Safety
 * `filter` must be a valid handle.
 */
enum NlStatus nl_filter_init_global(struct NlFilter *filter);

/**
 * Draws particles from the tracking prior around `pose`.
 *
 * # Safety
 * `filter` must be a valid handle and `pose` point to 12 doubles.
 */
enum NlStatus nl_filter_init_tracking(struct NlFilter *filter, const double *pose);

/**
 * Runs one filter iteration on the camera image `rgb` (intrinsics `k`)
 * after the relative motion `odom`, writing the result to `out`.
 *
 * # Safety
 * Pointers must be valid; `rgb` must hold `3 * k.width * k.height` floats.
 */
enum NlStatus nl_filter_step(struct NlFilter *filter,
                             const float *rgb,
                             struct NlIntrinsics k,
                             const double *odom,
                             struct NlFrame *out);

/**
 * Number of particles, or 0 before initialization.
 *
 * # Safety
 * `filter` must be null or a valid handle.
 */
size_t nl_filter_particle_count(const struct NlFilter *filter);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NUDGELOC_H */
