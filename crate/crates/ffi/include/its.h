/*
 * C interface for the answer grader: boxed-answer extraction,
 * canonicalization, equivalence, and one-shot grading.
 *
 * Generated by cbindgen from crates/ffi/src/lib.rs — do not edit by hand.
 */

#ifndef ITS_H
#define ITS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// `mode` argument: read answers as math expressions.
#define ITS_MODE_MATH 0

// `mode` argument: read answers as multiple-choice letters A-D.
#define ITS_MODE_CHOICE 1

// `pick` argument: trust the last boxed answer in the completion.
#define ITS_PICK_LAST 0

// `pick` argument: trust the first boxed answer instead.
#define ITS_PICK_FIRST 1

// `its_answer_kind` results.
#define ITS_KIND_INTEGER 0

#define ITS_KIND_RATIO 1

#define ITS_KIND_DECIMAL 2

#define ITS_KIND_CHOICE 3

#define ITS_KIND_TEXT 4

// Result of every fallible call in this ABI.
typedef enum ItsStatus {
  // Success; out-parameters are valid.
  ITS_STATUS_OK = 0,
  // A required pointer argument was NULL.
  ITS_STATUS_NULL_ARGUMENT = 1,
  // An input string was not valid UTF-8.
  ITS_STATUS_INVALID_UTF8 = 2,
  // A mode/pick argument was outside its documented values.
  ITS_STATUS_INVALID_ARGUMENT = 3,
  // The text could not be canonicalized under the requested mode.
  ITS_STATUS_PARSE_FAILURE = 4,
  // The completion contains no extractable answer.
  ITS_STATUS_NO_ANSWER = 5,
  // An unexpected internal failure; out-parameters are untouched.
  ITS_STATUS_INTERNAL = 6,
} ItsStatus;

// An opaque canonical answer.
typedef struct ItsAnswer ItsAnswer;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// The crate version as a static string. Never freed.
const char *its_version(void);

// Extract the boxed answer from a completion into `*out_raw`.
//
// `pick` chooses between the last (`ITS_PICK_LAST`) and first
// (`ITS_PICK_FIRST`) box when several are present. Returns `NoAnswer` when
// the completion has no balanced `boxed{…}` marker. The result is the raw
// text between the braces; pass it to [`its_canonicalize`] to compare it.
//
// # Safety
// `completion` must be a valid NUL-terminated string and `out_raw` a valid
// pointer. On `Ok` the caller owns `*out_raw` and must release it with
// [`its_string_free`].
enum ItsStatus its_extract_boxed(const char *completion, int pick, char **out_raw);

// Canonicalize raw answer text into an opaque handle in `*out`.
//
// `mode` is `ITS_MODE_MATH` or `ITS_MODE_CHOICE`. Math mode accepts
// integers (with signs or thousands separators), finite decimals, LaTeX
// and plain fractions, and falls back to normalized text; choice mode
// requires exactly one standalone letter A-D. `ParseFailure` means the
// text has no canonical form under that mode.
//
// # Safety
// `raw` must be a valid NUL-terminated string and `out` a valid pointer.
// On `Ok` the caller owns `*out` and must release it with
// [`its_answer_free`].
enum ItsStatus its_canonicalize(const char *raw, int mode, struct ItsAnswer **out);

// The kind of a canonical answer as an `ITS_KIND_*` constant, or `-1` if
// `answer` is NULL.
//
// # Safety
// `answer` must be NULL or a handle from [`its_canonicalize`] that has not
// been freed.
int its_answer_kind(const struct ItsAnswer *answer);

// Render a canonical answer to text in `*out`. Feeding the result back
// through [`its_canonicalize`] yields an equal answer of the same kind.
//
// # Safety
// `answer` must be a live handle from [`its_canonicalize`] and `out` a
// valid pointer. On `Ok` the caller owns `*out` and must release it with
// [`its_string_free`].
enum ItsStatus its_answer_render(const struct ItsAnswer *answer, char **out);

// Whether two canonical answers are equivalent: `1` if equal, `0` if not,
// `-1` if either handle is NULL. Numeric answers compare by exact rational
// value regardless of spelling, choices by letter, text by normalized
// string; kinds that cannot hold the same value never compare equal.
//
// # Safety
// `a` and `b` must be NULL or live handles from [`its_canonicalize`].
int its_answers_equal(const struct ItsAnswer *a, const struct ItsAnswer *b);

// Grade one completion against one gold answer, writing `1` (correct) or
// `0` into `*out_correct`.
//
// This is the full grading path: extract the last boxed answer, fall back
// to a trailing "final answer is …" sentence, canonicalize under `mode`,
// and compare with the canonicalized gold. `ParseFailure` means the gold
// itself has no canonical form; `NoAnswer` means the completion yielded
// nothing comparable (reported instead of `Ok` with `0` so callers can
// tell a wrong answer from a missing one).
//
// # Safety
// `completion` and `gold` must be valid NUL-terminated strings and
// `out_correct` a valid pointer.
enum ItsStatus its_grade(const char *completion, const char *gold, int mode, int *out_correct);

// Release an answer handle. NULL is a no-op. Freeing the same handle twice
// is undefined behavior, as with `free()`.
//
// # Safety
// `answer` must be NULL or an unfreed handle from [`its_canonicalize`].
void its_answer_free(struct ItsAnswer *answer);

// Release a string returned by this library. NULL is a no-op.
//
// # Safety
// `s` must be NULL or an unfreed string returned by this library.
void its_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ITS_H */
