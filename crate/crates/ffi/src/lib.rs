//! C ABI over the answer grader: extract a boxed answer from a completion,
//! canonicalize answer text, compare canonical answers, and grade a
//! completion against a gold answer.
//!
//! Conventions, mirrored in the generated `include/its.h`:
//!
//! * Canonical answers are opaque `ItsAnswer` handles, created by
//!   [`its_canonicalize`] and released with [`its_answer_free`].
//! * Every returned string is a fresh NUL-terminated allocation owned by the
//!   caller, released with [`its_string_free`]. Never `free()` them directly.
//! * Functions report an [`ItsStatus`]; out-parameters are written only on
//!   `Ok`. Scalar queries (`its_answers_equal`, `its_answer_kind`) return
//!   `-1` on bad arguments instead.
//! * `mode` and `pick` parameters are plain ints so garbage values from C
//!   degrade to `InvalidArgument` rather than undefined behavior; the
//!   accepted values are exported as constants.

use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use its::grader::{
    answers_equal, canonicalize, extract_boxed_with, grade_run, AnswerMode, BenchmarkQuestion,
    BenchmarkSet, BoxSelection, CanonicalAnswer, FailureReason,
};
use its::inference::CompletionRecord;

/// Result of every fallible call in this ABI.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ItsStatus {
    /// Success; out-parameters are valid.
    Ok = 0,
    /// A required pointer argument was NULL.
    NullArgument = 1,
    /// An input string was not valid UTF-8.
    InvalidUtf8 = 2,
    /// A mode/pick argument was outside its documented values.
    InvalidArgument = 3,
    /// The text could not be canonicalized under the requested mode.
    ParseFailure = 4,
    /// The completion contains no extractable answer.
    NoAnswer = 5,
    /// An unexpected internal failure; out-parameters are untouched.
    Internal = 6,
}

/// `mode` argument: read answers as math expressions.
pub const ITS_MODE_MATH: c_int = 0;
/// `mode` argument: read answers as multiple-choice letters A-D.
pub const ITS_MODE_CHOICE: c_int = 1;

/// `pick` argument: trust the last boxed answer in the completion.
pub const ITS_PICK_LAST: c_int = 0;
/// `pick` argument: trust the first boxed answer instead.
pub const ITS_PICK_FIRST: c_int = 1;

/// `its_answer_kind` results.
pub const ITS_KIND_INTEGER: c_int = 0;
pub const ITS_KIND_RATIO: c_int = 1;
pub const ITS_KIND_DECIMAL: c_int = 2;
pub const ITS_KIND_CHOICE: c_int = 3;
pub const ITS_KIND_TEXT: c_int = 4;

/// An opaque canonical answer.
pub struct ItsAnswer {
    inner: CanonicalAnswer,
}

fn mode_of(mode: c_int) -> Option<AnswerMode> {
    match mode {
        ITS_MODE_MATH => Some(AnswerMode::Math),
        ITS_MODE_CHOICE => Some(AnswerMode::Choice),
        _ => None,
    }
}

fn pick_of(pick: c_int) -> Option<BoxSelection> {
    match pick {
        ITS_PICK_LAST => Some(BoxSelection::Last),
        ITS_PICK_FIRST => Some(BoxSelection::First),
        _ => None,
    }
}

/// Read a NUL-terminated C string as UTF-8.
///
/// # Safety
/// `ptr` must be NULL or a valid NUL-terminated string.
unsafe fn utf8_in<'a>(ptr: *const c_char) -> Result<&'a str, ItsStatus> {
    if ptr.is_null() {
        return Err(ItsStatus::NullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| ItsStatus::InvalidUtf8)
}

/// Hand a Rust string to C. Interior NULs cannot occur in our outputs (they
/// are rejected as invalid UTF-8 on the way in), but fail closed anyway.
fn string_out(s: String, out: *mut *mut c_char) -> ItsStatus {
    match CString::new(s) {
        Ok(cstring) => {
            unsafe { *out = cstring.into_raw() };
            ItsStatus::Ok
        }
        Err(_) => ItsStatus::Internal,
    }
}

fn guarded(body: impl FnOnce() -> ItsStatus) -> ItsStatus {
    catch_unwind(AssertUnwindSafe(body)).unwrap_or(ItsStatus::Internal)
}

/// The crate version as a static string. Never freed.
#[no_mangle]
pub extern "C" fn its_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Extract the boxed answer from a completion into `*out_raw`.
///
/// `pick` chooses between the last (`ITS_PICK_LAST`) and first
/// (`ITS_PICK_FIRST`) box when several are present. Returns `NoAnswer` when
/// the completion has no balanced `boxed{…}` marker. The result is the raw
/// text between the braces; pass it to [`its_canonicalize`] to compare it.
///
/// # Safety
/// `completion` must be a valid NUL-terminated string and `out_raw` a valid
/// pointer. On `Ok` the caller owns `*out_raw` and must release it with
/// [`its_string_free`].
#[no_mangle]
pub unsafe extern "C" fn its_extract_boxed(
    completion: *const c_char,
    pick: c_int,
    out_raw: *mut *mut c_char,
) -> ItsStatus {
    if out_raw.is_null() {
        return ItsStatus::NullArgument;
    }
    let completion = match utf8_in(completion) {
        Ok(s) => s,
        Err(status) => return status,
    };
    let Some(selection) = pick_of(pick) else {
        return ItsStatus::InvalidArgument;
    };
    guarded(|| match extract_boxed_with(completion, selection) {
        Some(extracted) => string_out(extracted.raw, out_raw),
        None => ItsStatus::NoAnswer,
    })
}

/// Canonicalize raw answer text into an opaque handle in `*out`.
///
/// `mode` is `ITS_MODE_MATH` or `ITS_MODE_CHOICE`. Math mode accepts
/// integers (with signs or thousands separators), finite decimals, LaTeX
/// and plain fractions, and falls back to normalized text; choice mode
/// requires exactly one standalone letter A-D. `ParseFailure` means the
/// text has no canonical form under that mode.
///
/// # Safety
/// `raw` must be a valid NUL-terminated string and `out` a valid pointer.
/// On `Ok` the caller owns `*out` and must release it with
/// [`its_answer_free`].
#[no_mangle]
pub unsafe extern "C" fn its_canonicalize(
    raw: *const c_char,
    mode: c_int,
    out: *mut *mut ItsAnswer,
) -> ItsStatus {
    if out.is_null() {
        return ItsStatus::NullArgument;
    }
    let raw = match utf8_in(raw) {
        Ok(s) => s,
        Err(status) => return status,
    };
    let Some(mode) = mode_of(mode) else {
        return ItsStatus::InvalidArgument;
    };
    guarded(|| match canonicalize(raw, mode) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(ItsAnswer { inner }));
            ItsStatus::Ok
        }
        Err(_) => ItsStatus::ParseFailure,
    })
}

/// The kind of a canonical answer as an `ITS_KIND_*` constant, or `-1` if
/// `answer` is NULL.
///
/// # Safety
/// `answer` must be NULL or a handle from [`its_canonicalize`] that has not
/// been freed.
#[no_mangle]
pub unsafe extern "C" fn its_answer_kind(answer: *const ItsAnswer) -> c_int {
    let Some(answer) = answer.as_ref() else {
        return -1;
    };
    match answer.inner {
        CanonicalAnswer::Integer(_) => ITS_KIND_INTEGER,
        CanonicalAnswer::Ratio(_) => ITS_KIND_RATIO,
        CanonicalAnswer::Decimal(_) => ITS_KIND_DECIMAL,
        CanonicalAnswer::Choice(_) => ITS_KIND_CHOICE,
        CanonicalAnswer::Text(_) => ITS_KIND_TEXT,
    }
}

/// Render a canonical answer to text in `*out`. Feeding the result back
/// through [`its_canonicalize`] yields an equal answer of the same kind.
///
/// # Safety
/// `answer` must be a live handle from [`its_canonicalize`] and `out` a
/// valid pointer. On `Ok` the caller owns `*out` and must release it with
/// [`its_string_free`].
#[no_mangle]
pub unsafe extern "C" fn its_answer_render(
    answer: *const ItsAnswer,
    out: *mut *mut c_char,
) -> ItsStatus {
    if out.is_null() {
        return ItsStatus::NullArgument;
    }
    let Some(answer) = answer.as_ref() else {
        return ItsStatus::NullArgument;
    };
    guarded(|| string_out(answer.inner.render(), out))
}

/// Whether two canonical answers are equivalent: `1` if equal, `0` if not,
/// `-1` if either handle is NULL. Numeric answers compare by exact rational
/// value regardless of spelling, choices by letter, text by normalized
/// string; kinds that cannot hold the same value never compare equal.
///
/// # Safety
/// `a` and `b` must be NULL or live handles from [`its_canonicalize`].
#[no_mangle]
pub unsafe extern "C" fn its_answers_equal(a: *const ItsAnswer, b: *const ItsAnswer) -> c_int {
    match (a.as_ref(), b.as_ref()) {
        (Some(a), Some(b)) => answers_equal(&a.inner, &b.inner) as c_int,
        _ => -1,
    }
}

/// Grade one completion against one gold answer, writing `1` (correct) or
/// `0` into `*out_correct`.
///
/// This is the full grading path: extract the last boxed answer, fall back
/// to a trailing "final answer is …" sentence, canonicalize under `mode`,
/// and compare with the canonicalized gold. `ParseFailure` means the gold
/// itself has no canonical form; `NoAnswer` means the completion yielded
/// nothing comparable (reported instead of `Ok` with `0` so callers can
/// tell a wrong answer from a missing one).
///
/// # Safety
/// `completion` and `gold` must be valid NUL-terminated strings and
/// `out_correct` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn its_grade(
    completion: *const c_char,
    gold: *const c_char,
    mode: c_int,
    out_correct: *mut c_int,
) -> ItsStatus {
    if out_correct.is_null() {
        return ItsStatus::NullArgument;
    }
    let completion = match utf8_in(completion) {
        Ok(s) => s,
        Err(status) => return status,
    };
    let gold = match utf8_in(gold) {
        Ok(s) => s,
        Err(status) => return status,
    };
    let Some(mode) = mode_of(mode) else {
        return ItsStatus::InvalidArgument;
    };
    let Ok(gold_canonical) = canonicalize(gold, mode) else {
        return ItsStatus::ParseFailure;
    };

    guarded(|| {
        let bench = BenchmarkSet {
            name: "ffi".to_string(),
            mode,
            integer_range: None,
            questions: vec![BenchmarkQuestion {
                query_id: "q".to_string(),
                query: String::new(),
                gold_answer: gold.to_string(),
                gold_canonical,
            }],
        };
        let completions = vec![CompletionRecord {
            query_id: "q".to_string(),
            completion: completion.to_string(),
            finish_reason: "stop".to_string(),
            error: None,
        }];
        match grade_run(&completions, &bench) {
            Ok((records, _)) => {
                let record = &records[0];
                match record.failure_reason {
                    Some(FailureReason::NoAnswerFound) => ItsStatus::NoAnswer,
                    Some(FailureReason::ParseFailure) => ItsStatus::NoAnswer,
                    _ => {
                        *out_correct = record.correct as c_int;
                        ItsStatus::Ok
                    }
                }
            }
            Err(_) => ItsStatus::Internal,
        }
    })
}

/// Release an answer handle. NULL is a no-op. Freeing the same handle twice
/// is undefined behavior, as with `free()`.
///
/// # Safety
/// `answer` must be NULL or an unfreed handle from [`its_canonicalize`].
#[no_mangle]
pub unsafe extern "C" fn its_answer_free(answer: *mut ItsAnswer) {
    if !answer.is_null() {
        drop(Box::from_raw(answer));
    }
}

/// Release a string returned by this library. NULL is a no-op.
///
/// # Safety
/// `s` must be NULL or an unfreed string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn its_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
