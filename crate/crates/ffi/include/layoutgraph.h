#ifndef LAYOUTGRAPH_H
#define LAYOUTGRAPH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum LgStatus {
  LG_OK = 0,
  /**
   * A required pointer argument was NULL.
   */
  LG_ERR_NULL = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  LG_ERR_UTF8 = 2,
  /**
   * Malformed JSON or an unknown option value.
   */
  LG_ERR_PARSE = 3,
  /**
   * Well-formed input that breaks a rule (unknown element, out-of-canvas box, ...).
   */
  LG_ERR_VALIDATION = 4,
  LG_ERR_IO = 5,
  /**
   * Unreadable checkpoint or a model unfit for the request.
   */
  LG_ERR_MODEL = 6,
  /**
   * A bug: a panic or an unexpected internal failure.
   */
  LG_ERR_INTERNAL = 7,
} LgStatus;

/**
 * A GUI being completed.
 */
typedef struct LgLayout LgLayout;

/**
 * A loaded checkpoint.
 */
typedef struct LgModel LgModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static string.
 */
const char *lg_version(void);

/**
 * Message of the last failed call on this thread ("" after a success).
 * Valid until the next call on this thread.
 */
const char *lg_last_error_message(void);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void lg_string_free(char *s);

/**
 * Loads a checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum LgStatus lg_model_load(const char *path, struct LgModel **out);

/**
 * Checkpoint metadata as JSON.
 *
 * # Safety
 * `model` must be a live handle; `out_json` must be writable.
 */
enum LgStatus lg_model_info(const struct LgModel *model, char **out_json);

/**
 * Releases a model. NULL is ignored.
 *
 * # Safety
 * `model` must come from [`lg_model_load`] and not have been freed.
 */
void lg_model_free(struct LgModel *model);

/**
 * Parses and validates a GUI.
 *
 * # Safety
 * `gui_json` must be a NUL-terminated string; `out` must be writable.
 */
enum LgStatus lg_layout_new(const char *gui_json, struct LgLayout **out);

/**
 * Places an unplaced element at the given box (inside the canvas).
 *
 * # Safety
 * `layout` must be a live handle; `element_id` a NUL-terminated string.
 */
enum LgStatus lg_layout_accept(struct LgLayout *layout,
                               const char *element_id,
                               int64_t x,
                               int64_t y,
                               int64_t w,
                               int64_t h);

/**
 * The layout's canonical JSON.
 *
 * # Safety
 * `layout` must be a live handle; `out_json` must be writable.
 */
enum LgStatus lg_layout_to_json(const struct LgLayout *layout, char **out_json);

/**
 * Releases a layout. NULL is ignored.
 *
 * # Safety
 * `layout` must come from [`lg_layout_new`] and not have been freed.
 */
void lg_layout_free(struct LgLayout *layout);

/**
 * Constraints among a GUI's placed elements, as a JSON array. `tol < 0`
 * uses the default tolerance.
 *
 * # Safety
 * `gui_json` must be a NUL-terminated string; `out_json` must be writable.
 */
enum LgStatus lg_extract_constraints(const char *gui_json, int64_t tol, char **out_json);

/**
 * Suggestions as a JSON array. `mode` is "single", "group" or "all"
 * (NULL = "single"); `target` (may be NULL) forces the element in
 * single mode.
 *
 * # Safety
 * `model` and `layout` must be live handles; strings NUL-terminated or
 * NULL where allowed; `out_json` must be writable.
 */
enum LgStatus lg_suggest(const struct LgModel *model,
                         const struct LgLayout *layout,
                         const char *mode,
                         const char *target,
                         char **out_json);

/**
 * Topic prediction as JSON `{"topic": ..., "probabilities": [...]}`.
 *
 * # Safety
 * `model` and `layout` must be live handles; `out_json` must be writable.
 */
enum LgStatus lg_classify(const struct LgModel *model,
                          const struct LgLayout *layout,
                          char **out_json);

/**
 * Validates a GUI and re-serialises it canonically (sorted keys, no
 * whitespace).
 *
 * # Safety
 * `gui_json` must be a NUL-terminated string; `out_json` must be writable.
 */
enum LgStatus lg_gui_canonicalize(const char *gui_json, char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LAYOUTGRAPH_H */
