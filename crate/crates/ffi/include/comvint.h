#ifndef COMVINT_H
#define COMVINT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ComvintStatus {
  COMVINT_STATUS_OK = 0,
  COMVINT_STATUS_NULL_ARGUMENT = 1,
  COMVINT_STATUS_INVALID_ARGUMENT = 2,
  COMVINT_STATUS_IO = 3,
  COMVINT_STATUS_CONFIG = 4,
  COMVINT_STATUS_PIPELINE = 5,
  COMVINT_STATUS_HALTED = 6,
  COMVINT_STATUS_INSUFFICIENT = 7,
  COMVINT_STATUS_NOT_FOUND = 8,
  COMVINT_STATUS_PANIC = 99,
} ComvintStatus;

// Opaque annotated-image corpus.
typedef struct ComvintCorpus ComvintCorpus;

// Opaque list of instruction records.
typedef struct ComvintDataset ComvintDataset;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread, or null.
// The pointer stays valid until the next call into this library.
const char *comvint_last_error(void);

// Library version as a static string.
const char *comvint_version(void);

// # Safety
// `s` must be null or a string returned by this library.
void comvint_string_free(char *s);

// Loads a corpus. `format` is one of `flickr30k_entities`, `visual_genome`
// or `canonical`.
//
// # Safety
// `path` and `format` must be NUL-terminated strings; `out` must be writable.
enum ComvintStatus comvint_corpus_load(const char *path,
                                       const char *format,
                                       struct ComvintCorpus **out);

// # Safety
// `corpus` must be null or a handle from this library, not yet freed.
void comvint_corpus_free(struct ComvintCorpus *corpus);

// Number of images; 0 for a null handle.
//
// # Safety
// `corpus` must be null or a live handle.
uintptr_t comvint_corpus_len(const struct ComvintCorpus *corpus);

// New corpus holding images whose caption richness is at least `min_chars`.
//
// # Safety
// `corpus` must be a live handle; `out` must be writable.
enum ComvintStatus comvint_corpus_filter_caption_richness(const struct ComvintCorpus *corpus,
                                                          uintptr_t min_chars,
                                                          struct ComvintCorpus **out);

// New corpus holding images with at most `max_objects` objects.
//
// # Safety
// `corpus` must be a live handle; `out` must be writable.
enum ComvintStatus comvint_corpus_filter_object_count(const struct ComvintCorpus *corpus,
                                                      uintptr_t max_objects,
                                                      struct ComvintCorpus **out);

// Name of the rarest object in `image_id`, by document frequency over the corpus.
//
// # Safety
// `corpus` must be a live handle, `image_id` a NUL-terminated string and
// `out` writable. Free the result with `comvint_string_free`.
enum ComvintStatus comvint_corpus_topic_entity(const struct ComvintCorpus *corpus,
                                               const char *image_id,
                                               char **out);

// Reads a JSON-lines dataset.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum ComvintStatus comvint_dataset_read(const char *path, struct ComvintDataset **out);

// # Safety
// `dataset` must be null or a handle from this library, not yet freed.
void comvint_dataset_free(struct ComvintDataset *dataset);

// Number of records; 0 for a null handle.
//
// # Safety
// `dataset` must be null or a live handle.
uintptr_t comvint_dataset_len(const struct ComvintDataset *dataset);

// Writes the dataset as JSON lines.
//
// # Safety
// `dataset` must be a live handle and `path` a NUL-terminated string.
enum ComvintStatus comvint_dataset_write(const struct ComvintDataset *dataset, const char *path);

// Records from complication rounds `0..=max_round`.
//
// # Safety
// `dataset` must be a live handle; `out` must be writable.
enum ComvintStatus comvint_dataset_subset_by_round(const struct ComvintDataset *dataset,
                                                   uint32_t max_round,
                                                   struct ComvintDataset **out);

// Seeded sample of `total` records split `cross_modal : outside_knowledge`.
//
// # Safety
// `dataset` must be a live handle; `out` must be writable.
enum ComvintStatus comvint_dataset_mix(const struct ComvintDataset *dataset,
                                       uint64_t cross_modal,
                                       uint64_t outside_knowledge,
                                       uintptr_t total,
                                       uint64_t seed,
                                       struct ComvintDataset **out);

// Writes the conversation-format export. `paren_options` selects `(A) text`
// over `A. text`.
//
// # Safety
// `dataset` must be a live handle and `path` a NUL-terminated string.
enum ComvintStatus comvint_dataset_export(const struct ComvintDataset *dataset,
                                          const char *path,
                                          bool paren_options);

// Composition and length statistics as a JSON object.
//
// # Safety
// `dataset` must be a live handle; `out` must be writable. Free the result
// with `comvint_string_free`.
enum ComvintStatus comvint_dataset_stats_json(const struct ComvintDataset *dataset, char **out);

// Runs the full pipeline from a TOML config. With a non-null
// `mock_script` the scripted provider is used instead of HTTP.
// `halt_after` > 0 stops after that many checkpoints with
// `COMVINT_STATUS_HALTED`. On success `out_dataset_path` (if non-null)
// receives the path of the written dataset.
//
// # Safety
// String arguments must be NUL-terminated (`mock_script` may be null);
// `out_dataset_path` must be null or writable.
enum ComvintStatus comvint_run(const char *config_path,
                               const char *mock_script,
                               const char *out_dir,
                               uintptr_t halt_after,
                               char **out_dataset_path);

// Resumes run `run_id` under `out_dir` from its last checkpoint.
//
// # Safety
// Same contract as `comvint_run`.
enum ComvintStatus comvint_resume(const char *run_id,
                                  const char *mock_script,
                                  const char *out_dir,
                                  uintptr_t halt_after,
                                  char **out_dataset_path);

// Evaluates a predictions file. `kind` is `yes_no` or `choice`; the
// report is returned as JSON.
//
// # Safety
// `kind` and `predictions_path` must be NUL-terminated; `out` must be
// writable. Free the result with `comvint_string_free`.
enum ComvintStatus comvint_eval_json(const char *kind, const char *predictions_path, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COMVINT_H */
