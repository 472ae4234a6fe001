#ifndef ACD_H
#define ACD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of a C API call.
 */
typedef enum AcdStatus {
  ACD_STATUS_OK = 0,
  ACD_STATUS_NULL_POINTER = 1,
  ACD_STATUS_INVALID_UTF8 = 2,
  ACD_STATUS_INVALID_ARGUMENT = 3,
  ACD_STATUS_IO = 4,
  ACD_STATUS_PARSE = 5,
  ACD_STATUS_VALIDATION = 6,
  ACD_STATUS_CONFIG = 7,
  ACD_STATUS_TRAINING = 8,
  ACD_STATUS_MISSING_ARTIFACT = 9,
  ACD_STATUS_STALE_ARTIFACT = 10,
  ACD_STATUS_PANIC = 11,
} AcdStatus;

/**
 * Opaque handle to a loaded model.
 */
typedef struct AcdEngine AcdEngine;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Opens the artifacts in `artifact_dir`. `lexicon_path` and
 * `stopwords_path` may be null to use the bundled restaurant lexicon and
 * English stopword list; they must match what the artifacts were built
 * with. On success `*out` receives a handle to free with
 * [`acd_engine_free`].
 *
 * # Safety
 * String arguments are null or NUL-terminated; `out` is a valid pointer.
 */
enum AcdStatus acd_engine_open(const char *artifact_dir,
                               const char *lexicon_path,
                               const char *stopwords_path,
                               struct AcdEngine **out);

/**
 * Releases an engine. Null is ignored.
 *
 * # Safety
 * `engine` is null or a handle from [`acd_engine_open`] not yet freed.
 */
void acd_engine_free(struct AcdEngine *engine);

/**
 * Number of scored categories (the fallback category is not scored).
 *
 * # Safety
 * `engine` is null or a live handle.
 */
size_t acd_engine_category_count(const struct AcdEngine *engine);

/**
 * Name of category `index`, or null when out of range. The string is
 * borrowed from the engine.
 *
 * # Safety
 * `engine` is null or a live handle.
 */
const char *acd_engine_category_name(const struct AcdEngine *engine, size_t index);

/**
 * Writes the final interpolated score of every category, in category
 * order, to `out`, which holds `out_len` doubles.
 *
 * # Safety
 * `engine` is a live handle, `text` is NUL-terminated, and `out` points to
 * `out_len` writable doubles.
 */
enum AcdStatus acd_engine_scores(const struct AcdEngine *engine,
                                 const char *text,
                                 double alpha,
                                 double *out,
                                 size_t out_len);

/**
 * Detects the categories of `text` and returns the detection as a JSON
 * object `{"id", "scores", "assigned"}` in `*out_json`, to be released
 * with [`acd_string_free`].
 *
 * # Safety
 * `engine` is a live handle, `id` and `text` are NUL-terminated, and
 * `out_json` is a valid pointer.
 */
enum AcdStatus acd_engine_detect_json(const struct AcdEngine *engine,
                                      const char *id,
                                      const char *text,
                                      double alpha,
                                      double threshold,
                                      char **out_json);

/**
 * Logistic calibration of a raw similarity.
 */
double acd_calibrate(double similarity);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` is null or a string from this library not yet freed.
 */
void acd_string_free(char *s);

/**
 * Message of the last failed call on this thread, or null. Valid until
 * the next failing call on the same thread.
 */
const char *acd_last_error(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ACD_H */
