#ifndef ARTIC_H
#define ARTIC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum ArticStatus {
  ARTIC_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  ARTIC_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  ARTIC_STATUS_INVALID_UTF8 = 2,
  /**
   * A file could not be read.
   */
  ARTIC_STATUS_IO = 3,
  /**
   * JSON or file contents could not be parsed.
   */
  ARTIC_STATUS_PARSE = 4,
  /**
   * Inputs parsed but violate a precondition.
   */
  ARTIC_STATUS_INVALID = 5,
  /**
   * An output buffer is too small.
   */
  ARTIC_STATUS_BUFFER_TOO_SMALL = 6,
  /**
   * An internal error that should not happen.
   */
  ARTIC_STATUS_INTERNAL = 7,
} ArticStatus;

/**
 * A loaded denoiser checkpoint.
 */
typedef struct ArticModel ArticModel;

/**
 * An articulated object with its mesh references.
 */
typedef struct ArticObject ArticObject;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static string.
 */
const char *artic_version(void);

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *artic_last_error(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` is null or came from this library and was not freed before.
 */
void artic_string_free(char *s);

/**
 * Loads a safetensors checkpoint.
 *
 * # Safety
 * `path` is a NUL-terminated string; `out` is writable.
 */
enum ArticStatus artic_model_load(const char *path, struct ArticModel **out);

/**
 * # Safety
 * `m` is null or a handle from [`artic_model_load`] not freed before.
 */
void artic_model_free(struct ArticModel *m);

/**
 * Reads, validates and normalizes an AOJ file.
 *
 * # Safety
 * `path` is a NUL-terminated string; `out` is writable.
 */
enum ArticStatus artic_object_load(const char *path, struct ArticObject **out);

/**
 * Parses and validates AOJ text without renormalizing it. Relative mesh
 * paths resolve against the working directory.
 *
 * # Safety
 * `json` is a NUL-terminated string; `out` is writable.
 */
enum ArticStatus artic_object_from_json(const char *json, struct ArticObject **out);

/**
 * # Safety
 * `o` is null or a live object handle not freed before.
 */
void artic_object_free(struct ArticObject *o);

/**
 * Number of parts, or 0 for a null handle.
 *
 * # Safety
 * `o` is null or a live object handle.
 */
size_t artic_object_part_count(const struct ArticObject *o);

/**
 * AOJ text of the object.
 *
 * # Safety
 * `o` is a live object handle; `out` is writable.
 */
enum ArticStatus artic_object_to_json(const struct ArticObject *o, char **out);

/**
 * World poses with every joint at normalized coordinate `q`: one row-major
 * 4x4 matrix per part, in part order, so `out` needs `16 * part_count`
 * doubles.
 *
 * # Safety
 * `o` is a live object handle; `out` points to `capacity` writable doubles.
 */
enum ArticStatus artic_object_pose(const struct ArticObject *o,
                                   double q,
                                   double *out,
                                   size_t capacity);

/**
 * Articulation overlap ratio in [0, 1].
 *
 * # Safety
 * `o` is a live object handle; `out` is writable.
 */
enum ArticStatus artic_object_aor(const struct ArticObject *o, double *out);

/**
 * Metric report JSON comparing `gen` with `gt`. `config_json` may be null
 * for the default evaluation settings.
 *
 * # Safety
 * Handles are live; `config_json` is null or NUL-terminated; `out` is
 * writable.
 */
enum ArticStatus artic_evaluate(const struct ArticObject *gen,
                                const struct ArticObject *gt,
                                const char *config_json,
                                char **out);

/**
 * Samples objects. `request_json` holds `graph` (required), optional
 * `features` (path to a feature file) and `category`, and the generation
 * parameters `omega`, `num_samples`, `seed` and `pins`. The result is a JSON
 * array of `{seed, object, rows}`.
 *
 * # Safety
 * `model` is live; `request_json` is NUL-terminated; `out` is writable.
 */
enum ArticStatus artic_generate(const struct ArticModel *model,
                                const char *request_json,
                                char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ARTIC_H */
