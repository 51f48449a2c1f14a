#ifndef EVOKD_H
#define EVOKD_H

#include <stddef.h>
#include <stdint.h>

#define EVOKD_OK 0

// Any error without a more specific code (I/O, parse, protocol).
#define EVOKD_ERR_FAILURE 1

#define EVOKD_ERR_CONFIG 2

#define EVOKD_ERR_TEACHER_UNAVAILABLE 3

#define EVOKD_ERR_NUMERIC 4

// A required pointer was null or a string was not UTF-8.
#define EVOKD_ERR_INVALID_ARGUMENT 5

// A Rust panic was caught at the boundary.
#define EVOKD_ERR_PANIC 6

#define EVOKD_EVENT_REPEAT 0

#define EVOKD_EVENT_CHAT 1

#define EVOKD_EVENT_REVIEW 2

// Opaque student model handle.
typedef struct EvokdModel EvokdModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null after a success.
// The pointer stays valid until the next call into this library on the same thread.
const char *evokd_last_error_message(void);

// Library version as a static string.
const char *evokd_version(void);

// Creates an all-zero model. `task_json` has the same shape as a task file:
// `{"name": ..., "description": ..., "labels": [...]}`. A `dim` of 0 selects the default.
//
// # Safety
// `task_json` must be a valid C string and `out` a valid pointer.
int32_t evokd_model_new(const char *task_json, size_t dim, struct EvokdModel **out);

// # Safety
// `path` must be a valid C string and `out` a valid pointer.
int32_t evokd_model_load(const char *path, struct EvokdModel **out);

// # Safety
// `model` must be a live handle and `path` a valid C string.
int32_t evokd_model_save(const struct EvokdModel *model, const char *path);

// Releases a handle. Null is ignored.
//
// # Safety
// `model` must be null or a handle not yet freed.
void evokd_model_free(struct EvokdModel *model);

// Number of labels, or 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t evokd_model_num_labels(const struct EvokdModel *model);

// Name of label `index`, owned by the handle. Null when out of range.
//
// # Safety
// `model` must be null or a live handle.
const char *evokd_model_label(const struct EvokdModel *model, size_t index);

// Number of training steps applied so far.
//
// # Safety
// `model` must be null or a live handle.
uint64_t evokd_model_version(const struct EvokdModel *model);

// Predicts one text. `probs` may be null; otherwise it receives
// `min(probs_len, num_labels)` probabilities in label order.
//
// # Safety
// `model` must be a live handle, `text` a valid C string, `out_label` a valid
// pointer and `probs` null or valid for `probs_len` writes.
int32_t evokd_model_predict(const struct EvokdModel *model,
                            const char *text,
                            size_t *out_label,
                            double *probs,
                            size_t probs_len);

// One clipped SGD step on `n` labeled texts, in place. On failure the model is unchanged.
//
// # Safety
// `model` must be a live handle, `texts` and `labels` valid arrays of `n`
// C strings, and `out_loss` null or a valid pointer.
int32_t evokd_model_train_step(struct EvokdModel *model,
                               const char *const *texts,
                               const char *const *labels,
                               size_t n,
                               double learning_rate,
                               double clip_norm,
                               double *out_loss);

// Macro F1 of the model on a JSONL file of `{"text", "label"}` lines.
//
// # Safety
// `model` must be a live handle, `path` a valid C string and `out_macro_f1` a valid pointer.
int32_t evokd_model_evaluate(const struct EvokdModel *model,
                             const char *path,
                             double *out_macro_f1);

// Event at a loop step: `EVOKD_EVENT_REPEAT`, `_CHAT` or `_REVIEW`.
// A `review` of 0 disables review. Returns -1 when `chat` is 0.
int32_t evokd_classify_step(uint64_t step, uint64_t chat, uint64_t review);

// Easy and hard sample counts for a generated batch of size `b`.
//
// # Safety
// `out_easy` and `out_hard` must be valid pointers.
int32_t evokd_batch_split(size_t b, size_t *out_easy, size_t *out_hard);

// Token estimate used for teacher budgets. Returns 0 for null or non-UTF-8 input.
//
// # Safety
// `text` must be null or a valid C string.
uint64_t evokd_token_count(const char *text);

// Runs the distillation loop.
//
// `teacher` is `"synthetic"`, `"llm"` (endpoint and key from the environment)
// or `"scripted:DIR"`. With the synthetic teacher, `task_path` and
// `train_path` may be null: the built-in task is used and one sample per
// label is drawn. Otherwise both are required. `config_json`, `eval_path`,
// `out_dir` and `out_model` may be null. The run seed comes from the config.
//
// # Safety
// Every non-null string must be a valid C string and `out_model` null or a valid pointer.
int32_t evokd_distill(const char *config_json,
                      const char *teacher,
                      const char *task_path,
                      const char *train_path,
                      const char *eval_path,
                      const char *out_dir,
                      struct EvokdModel **out_model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EVOKD_H */
