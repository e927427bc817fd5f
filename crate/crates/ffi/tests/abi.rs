//! Exercises the C ABI exactly as a C caller would: NUL-terminated strings
//! in, status codes and caller-owned allocations out, including the error
//! paths a binding generator needs to rely on.

use std::ffi::{c_char, c_int, CStr, CString};
use std::ptr;

use its_ffi::{
    its_answer_free, its_answer_kind, its_answer_render, its_answers_equal, its_canonicalize,
    its_extract_boxed, its_grade, its_string_free, its_version, ItsAnswer, ItsStatus,
    ITS_KIND_CHOICE, ITS_KIND_DECIMAL, ITS_KIND_INTEGER, ITS_KIND_RATIO, ITS_KIND_TEXT,
    ITS_MODE_CHOICE, ITS_MODE_MATH, ITS_PICK_FIRST, ITS_PICK_LAST,
};

fn cstr(s: &str) -> CString {
    CString::new(s).expect("test strings have no interior NUL")
}

/// Claim and free a returned string.
fn take_string(ptr: *mut c_char) -> String {
    assert!(!ptr.is_null());
    unsafe {
        let owned = CStr::from_ptr(ptr).to_str().expect("ABI returns UTF-8").to_string();
        its_string_free(ptr);
        owned
    }
}

fn canon(raw: &str, mode: c_int) -> *mut ItsAnswer {
    let raw = cstr(raw);
    let mut out: *mut ItsAnswer = ptr::null_mut();
    let status = unsafe { its_canonicalize(raw.as_ptr(), mode, &mut out) };
    assert_eq!(status, ItsStatus::Ok, "canonicalize({raw:?}) failed");
    assert!(!out.is_null());
    out
}

#[test]
fn version_is_a_static_string() {
    let version = unsafe { CStr::from_ptr(its_version()) };
    let text = version.to_str().expect("version is UTF-8");
    assert!(!text.is_empty());
    assert!(text.chars().next().unwrap().is_ascii_digit());
}

#[test]
fn extraction_honors_the_pick_argument() {
    let completion = cstr("First \\boxed{1} then \\boxed{2}");
    let mut out: *mut c_char = ptr::null_mut();

    let status = unsafe { its_extract_boxed(completion.as_ptr(), ITS_PICK_LAST, &mut out) };
    assert_eq!(status, ItsStatus::Ok);
    assert_eq!(take_string(out), "2");

    let mut out: *mut c_char = ptr::null_mut();
    let status = unsafe { its_extract_boxed(completion.as_ptr(), ITS_PICK_FIRST, &mut out) };
    assert_eq!(status, ItsStatus::Ok);
    assert_eq!(take_string(out), "1");

    let boxless = cstr("nothing to see here");
    let mut out: *mut c_char = ptr::null_mut();
    let status = unsafe { its_extract_boxed(boxless.as_ptr(), ITS_PICK_LAST, &mut out) };
    assert_eq!(status, ItsStatus::NoAnswer);
    assert!(out.is_null(), "out must be untouched on failure");

    let status = unsafe { its_extract_boxed(ptr::null(), ITS_PICK_LAST, &mut out) };
    assert_eq!(status, ItsStatus::NullArgument);
    let status = unsafe { its_extract_boxed(completion.as_ptr(), 7, &mut out) };
    assert_eq!(status, ItsStatus::InvalidArgument);
    let status = unsafe { its_extract_boxed(completion.as_ptr(), ITS_PICK_LAST, ptr::null_mut()) };
    assert_eq!(status, ItsStatus::NullArgument);
}

#[test]
fn canonical_answers_compare_by_value() {
    let half_ratio = canon("1/2", ITS_MODE_MATH);
    let half_decimal = canon("0.5", ITS_MODE_MATH);
    let third = canon("\\frac{1}{3}", ITS_MODE_MATH);
    let integer = canon("1,000", ITS_MODE_MATH);
    let text = canon("no real solution", ITS_MODE_MATH);
    let choice = canon("(b)", ITS_MODE_CHOICE);

    unsafe {
        assert_eq!(its_answers_equal(half_ratio, half_decimal), 1);
        assert_eq!(its_answers_equal(half_ratio, third), 0);
        assert_eq!(its_answers_equal(text, choice), 0);
        assert_eq!(its_answers_equal(ptr::null(), half_ratio), -1);

        assert_eq!(its_answer_kind(half_ratio), ITS_KIND_RATIO);
        assert_eq!(its_answer_kind(half_decimal), ITS_KIND_DECIMAL);
        assert_eq!(its_answer_kind(integer), ITS_KIND_INTEGER);
        assert_eq!(its_answer_kind(text), ITS_KIND_TEXT);
        assert_eq!(its_answer_kind(choice), ITS_KIND_CHOICE);
        assert_eq!(its_answer_kind(ptr::null()), -1);
    }

    // Rendering round-trips: the text form canonicalizes back to an equal
    // answer of the same kind.
    let mut rendered: *mut c_char = ptr::null_mut();
    let status = unsafe { its_answer_render(half_ratio, &mut rendered) };
    assert_eq!(status, ItsStatus::Ok);
    let rendered = take_string(rendered);
    assert_eq!(rendered, "1/2");
    let reparsed = canon(&rendered, ITS_MODE_MATH);
    unsafe {
        assert_eq!(its_answers_equal(half_ratio, reparsed), 1);
        assert_eq!(its_answer_kind(reparsed), ITS_KIND_RATIO);
    }

    unsafe {
        for handle in [half_ratio, half_decimal, third, integer, text, choice, reparsed] {
            its_answer_free(handle);
        }
        its_answer_free(ptr::null_mut());
        its_string_free(ptr::null_mut());
    }
}

#[test]
fn canonicalize_reports_parse_failures() {
    let mut out: *mut ItsAnswer = ptr::null_mut();
    let empty = cstr("   ");
    let status = unsafe { its_canonicalize(empty.as_ptr(), ITS_MODE_MATH, &mut out) };
    assert_eq!(status, ItsStatus::ParseFailure);
    assert!(out.is_null());

    let ambiguous = cstr("A and B");
    let status = unsafe { its_canonicalize(ambiguous.as_ptr(), ITS_MODE_CHOICE, &mut out) };
    assert_eq!(status, ItsStatus::ParseFailure);

    let fine = cstr("42");
    let status = unsafe { its_canonicalize(fine.as_ptr(), 9, &mut out) };
    assert_eq!(status, ItsStatus::InvalidArgument);
    let status = unsafe { its_canonicalize(ptr::null(), ITS_MODE_MATH, &mut out) };
    assert_eq!(status, ItsStatus::NullArgument);
}

#[test]
fn grading_walks_the_full_path() {
    let gold = cstr("72");
    let mut correct: c_int = -1;

    // Boxed answer.
    let boxed = cstr("Therefore \\boxed{72}.");
    let status = unsafe { its_grade(boxed.as_ptr(), gold.as_ptr(), ITS_MODE_MATH, &mut correct) };
    assert_eq!(status, ItsStatus::Ok);
    assert_eq!(correct, 1);

    // Fallback sentence, equivalent spelling.
    let sentence = cstr("The final answer is 72.0");
    let status =
        unsafe { its_grade(sentence.as_ptr(), gold.as_ptr(), ITS_MODE_MATH, &mut correct) };
    assert_eq!(status, ItsStatus::Ok);
    assert_eq!(correct, 1);

    // Wrong answer is Ok-with-zero, not an error.
    let wrong = cstr("\\boxed{71}");
    let status = unsafe { its_grade(wrong.as_ptr(), gold.as_ptr(), ITS_MODE_MATH, &mut correct) };
    assert_eq!(status, ItsStatus::Ok);
    assert_eq!(correct, 0);

    // No extractable answer is distinguishable from a wrong one.
    let silent = cstr("I cannot solve this.");
    correct = -1;
    let status = unsafe { its_grade(silent.as_ptr(), gold.as_ptr(), ITS_MODE_MATH, &mut correct) };
    assert_eq!(status, ItsStatus::NoAnswer);
    assert_eq!(correct, -1, "out_correct must be untouched on failure");

    // Unusable gold and bad arguments.
    let unusable_gold = cstr("   ");
    let status =
        unsafe { its_grade(boxed.as_ptr(), unusable_gold.as_ptr(), ITS_MODE_MATH, &mut correct) };
    assert_eq!(status, ItsStatus::ParseFailure);
    let status = unsafe { its_grade(boxed.as_ptr(), gold.as_ptr(), 5, &mut correct) };
    assert_eq!(status, ItsStatus::InvalidArgument);
    let status = unsafe { its_grade(ptr::null(), gold.as_ptr(), ITS_MODE_MATH, &mut correct) };
    assert_eq!(status, ItsStatus::NullArgument);
    let status =
        unsafe { its_grade(boxed.as_ptr(), gold.as_ptr(), ITS_MODE_MATH, ptr::null_mut()) };
    assert_eq!(status, ItsStatus::NullArgument);

    // Invalid UTF-8 is rejected before any parsing.
    let garbage = CString::new([0xffu8, 0xfe]).expect("no interior NUL");
    let status =
        unsafe { its_grade(garbage.as_ptr(), gold.as_ptr(), ITS_MODE_MATH, &mut correct) };
    assert_eq!(status, ItsStatus::InvalidUtf8);
}
