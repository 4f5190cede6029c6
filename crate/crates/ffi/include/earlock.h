#ifndef EARLOCK_H
#define EARLOCK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  EARLOCK_STATUS_OK = 0,
  EARLOCK_STATUS_NULL_ARGUMENT = 1,
  EARLOCK_STATUS_INVALID_UTF8 = 2,
  EARLOCK_STATUS_IO = 3,
  EARLOCK_STATUS_INVALID_INPUT = 4,
  EARLOCK_STATUS_PROTOCOL = 5,
  EARLOCK_STATUS_UNKNOWN_SUBJECT = 6,
  EARLOCK_STATUS_BUFFER_TOO_SMALL = 7,
  EARLOCK_STATUS_INTERNAL = 8,
} EarlockStatus;

typedef enum {
  EARLOCK_RULE_WHOLE = 0,
  EARLOCK_RULE_CONCAT = 1,
  EARLOCK_RULE_DS = 2,
} EarlockRule;

typedef enum {
  EARLOCK_METRIC_EUCLID = 0,
  EARLOCK_METRIC_NN = 1,
} EarlockMetric;

/**
 * Run configuration.
 */
typedef struct EarlockConfig EarlockConfig;

/**
 * Every template of a store, in subject order.
 */
typedef struct EarlockGallery EarlockGallery;

/**
 * One enrolled or probe template.
 */
typedef struct EarlockTemplate EarlockTemplate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *earlock_version(void);

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next call into the library on this thread.
 */
const char *earlock_last_error(void);

/**
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
EarlockStatus earlock_config_new(EarlockConfig **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` as in `earlock_config_new`.
 */
EarlockStatus earlock_config_load(const char *path, EarlockConfig **out);

/**
 * Sets the acceptance thresholds for concatenated (`psi`) and fused
 * (`phi`) distances.
 *
 * # Safety
 * `config` must be a live handle.
 */
EarlockStatus earlock_config_set_thresholds(EarlockConfig *config, double psi, double phi);

/**
 * # Safety
 * `config` must be null or a handle not yet freed.
 */
void earlock_config_free(EarlockConfig *config);

/**
 * Segments and describes an image (PNG or PPM, with an optional
 * `{stem}.mask.png` beside it) into a template.
 *
 * # Safety
 * Strings must be NUL-terminated, `config` a live handle, `out` writable.
 */
EarlockStatus earlock_template_build(const char *image_path,
                                     const char *subject_id,
                                     const EarlockConfig *config,
                                     EarlockTemplate **out);

/**
 * # Safety
 * `path` must be NUL-terminated and `out` writable.
 */
EarlockStatus earlock_template_load(const char *path, EarlockTemplate **out);

/**
 * # Safety
 * `template` must be a live handle and `path` NUL-terminated.
 */
EarlockStatus earlock_template_save(const EarlockTemplate *template_, const char *path);

/**
 * Copies the subject id into `buf`; see `earlock_gallery_subject`.
 *
 * # Safety
 * `template` must be a live handle; `buf` must hold `len` bytes; `needed`
 * may be null.
 */
EarlockStatus earlock_template_subject(const EarlockTemplate *template_,
                                       char *buf,
                                       size_t len,
                                       size_t *needed);

/**
 * Number of keypoints the template carries for a rule (`DS` counts the
 * augmented slice set).
 *
 * # Safety
 * `template` must be a live handle and `out` writable.
 */
EarlockStatus earlock_template_feature_count(const EarlockTemplate *template_,
                                             EarlockRule rule,
                                             size_t *out);

/**
 * # Safety
 * `template` must be null or a handle not yet freed.
 */
void earlock_template_free(EarlockTemplate *template_);

/**
 * Loads every template of an enrolled store directory.
 *
 * # Safety
 * `store_dir` must be NUL-terminated and `out` writable.
 */
EarlockStatus earlock_gallery_open(const char *store_dir, EarlockGallery **out);

/**
 * Number of templates; 0 for a null handle.
 *
 * # Safety
 * `gallery` must be null or a live handle.
 */
size_t earlock_gallery_len(const EarlockGallery *gallery);

/**
 * Copies the id of entry `index` NUL-terminated into `buf` of `len`
 * bytes. `needed` (nullable) receives the required size.
 *
 * # Safety
 * `gallery` must be a live handle; `buf` must hold `len` bytes.
 */
EarlockStatus earlock_gallery_subject(const EarlockGallery *gallery,
                                      size_t index,
                                      char *buf,
                                      size_t len,
                                      size_t *needed);

/**
 * # Safety
 * `gallery` must be null or a handle not yet freed.
 */
void earlock_gallery_free(EarlockGallery *gallery);

/**
 * Dissimilarity of `probe` to `reference`; lower is better and infinity
 * marks a comparison that cannot succeed.
 *
 * # Safety
 * Handles must be live and `out_score` writable.
 */
EarlockStatus earlock_score(const EarlockTemplate *probe,
                            const EarlockTemplate *reference,
                            EarlockRule rule,
                            EarlockMetric metric,
                            const EarlockConfig *config,
                            double *out_score);

/**
 * Writes up to `k` best gallery indices and scores, best first, and the
 * count written to `out_written`.
 *
 * # Safety
 * Handles must be live; `out_indices` and `out_scores` must hold `k`
 * elements; `out_written` must be writable.
 */
EarlockStatus earlock_identify(const EarlockTemplate *probe,
                               const EarlockGallery *gallery,
                               EarlockRule rule,
                               EarlockMetric metric,
                               const EarlockConfig *config,
                               size_t k,
                               size_t *out_indices,
                               double *out_scores,
                               size_t *out_written);

/**
 * Accepts iff the score against the claimed subject does not exceed the
 * configured threshold for the rule and metric.
 *
 * # Safety
 * Handles must be live, `claimed_id` NUL-terminated and the outputs
 * writable.
 */
EarlockStatus earlock_verify(const EarlockTemplate *probe,
                             const EarlockGallery *gallery,
                             const char *claimed_id,
                             EarlockRule rule,
                             EarlockMetric metric,
                             const EarlockConfig *config,
                             bool *out_accept,
                             double *out_score);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EARLOCK_H */
