//! Final-answer extraction and mathematical equivalence.
//!
//! The grading pipeline is three pure stages: [`extract_boxed`] pulls the
//! committed answer out of a completion, [`canonicalize`] turns raw answer
//! text into an exact comparable form, and [`answers_equal`] decides
//! equivalence. [`grade_run`] drives the three over a completions file
//! against a benchmark gold set.
//!
//! Equivalence is deliberately exact-rational only: `\frac{1}{2}`, `0.5` and
//! `3/6` all meet, but there is no symbolic algebra (`\sqrt{8}` never equals
//! `2\sqrt{2}`). Anything unparseable falls back to a normalized string so a
//! buggy "smart" simplifier can never silently corrupt a score.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::CompletionRecord;

// ---------------------------------------------------------------------------
// Exact rationals
// ---------------------------------------------------------------------------

/// An exact rational in lowest terms with a positive denominator.
///
/// Arithmetic is checked `i128`; construction fails (and the caller falls
/// back to string comparison) rather than wrapping. Comparison cross-
/// multiplies in `i128`, which cannot overflow for the magnitudes this tool
/// produces (benchmark counts and short human-written answers).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rational {
    num: i128,
    den: i128,
}

impl Rational {
    pub fn new(num: i128, den: i128) -> Option<Rational> {
        if den == 0 {
            return None;
        }
        let negative = (num < 0) != (den < 0);
        let (n, d) = (num.unsigned_abs(), den.unsigned_abs());
        let g = gcd(n, d);
        let n = n / g;
        let d = d / g;
        if n > i128::MAX as u128 || d > i128::MAX as u128 {
            return None;
        }
        let num = if negative { -(n as i128) } else { n as i128 };
        Some(Rational {
            num,
            den: d as i128,
        })
    }

    pub fn integer(n: i128) -> Rational {
        Rational { num: n, den: 1 }
    }

    pub fn num(&self) -> i128 {
        self.num
    }

    pub fn den(&self) -> i128 {
        self.den
    }

    pub fn is_integer(&self) -> bool {
        self.den == 1
    }

    pub fn checked_add(self, other: Rational) -> Option<Rational> {
        let num = self
            .num
            .checked_mul(other.den)?
            .checked_add(other.num.checked_mul(self.den)?)?;
        Rational::new(num, self.den.checked_mul(other.den)?)
    }
}

impl PartialOrd for Rational {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Rational {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        let left = self
            .num
            .checked_mul(other.den)
            .expect("rational comparison overflow");
        let right = other
            .num
            .checked_mul(self.den)
            .expect("rational comparison overflow");
        left.cmp(&right)
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    if a == 0 {
        return b.max(1);
    }
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

// ---------------------------------------------------------------------------
// Canonical answers
// ---------------------------------------------------------------------------

/// The comparable form of an answer. Numeric variants all embed into exact
/// rationals and compare across each other; the remaining kinds only compare
/// within themselves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CanonicalAnswer {
    /// A rational with denominator 1 ("204", "1,000", "\frac{4}{2}").
    Integer(Rational),
    /// A non-integer rational from fraction syntax ("\frac{1}{2}", "3/6").
    Ratio(Rational),
    /// A non-integer rational that arrived as a finite decimal ("0.5").
    Decimal(Rational),
    /// A multiple-choice letter A–D.
    Choice(char),
    /// Fallback: lowercased text with whitespace runs collapsed.
    Text(String),
}

impl CanonicalAnswer {
    pub fn kind(&self) -> &'static str {
        match self {
            CanonicalAnswer::Integer(_) => "integer",
            CanonicalAnswer::Ratio(_) => "rational",
            CanonicalAnswer::Decimal(_) => "decimal-as-rational",
            CanonicalAnswer::Choice(_) => "choice-letter",
            CanonicalAnswer::Text(_) => "normalized-string",
        }
    }

    /// The display form. Feeding it back through [`canonicalize`] returns an
    /// equal answer of the same kind (idempotence).
    pub fn render(&self) -> String {
        match self {
            CanonicalAnswer::Integer(r) | CanonicalAnswer::Ratio(r) => r.to_string(),
            CanonicalAnswer::Decimal(r) => decimal_string(*r),
            CanonicalAnswer::Choice(c) => c.to_string(),
            CanonicalAnswer::Text(s) => s.clone(),
        }
    }

    pub fn as_rational(&self) -> Option<Rational> {
        match self {
            CanonicalAnswer::Integer(r)
            | CanonicalAnswer::Ratio(r)
            | CanonicalAnswer::Decimal(r) => Some(*r),
            _ => None,
        }
    }
}

/// Render a rational whose denominator divides a power of ten back to its
/// shortest decimal form ("1/2" → "0.5"). Falls back to "n/d" if the
/// magnitude defeats u128 scaling (never the case for human-scale answers).
fn decimal_string(r: Rational) -> String {
    let mut den = r.den() as u128;
    let mut twos = 0u32;
    let mut fives = 0u32;
    while den % 2 == 0 {
        den /= 2;
        twos += 1;
    }
    while den % 5 == 0 {
        den /= 5;
        fives += 1;
    }
    if den != 1 {
        return r.to_string(); // not a finite decimal; cannot happen via canonicalize
    }
    let k = twos.max(fives);
    let result = (|| {
        let pow10 = 10u128.checked_pow(k)?;
        let scale = pow10 / r.den() as u128;
        let scaled = r.num().unsigned_abs().checked_mul(scale)?;
        let int = scaled / pow10;
        let frac = scaled % pow10;
        let sign = if r.num() < 0 { "-" } else { "" };
        let mut s = format!("{sign}{int}.{frac:0width$}", width = k as usize);
        while s.ends_with('0') {
            s.pop();
        }
        Some(s)
    })();
    result.unwrap_or_else(|| r.to_string())
}

#[derive(Serialize, Deserialize)]
struct AnswerRepr {
    kind: String,
    value: String,
}

impl Serialize for CanonicalAnswer {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        AnswerRepr {
            kind: self.kind().to_string(),
            value: self.render(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CanonicalAnswer {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = AnswerRepr::deserialize(deserializer)?;
        parse_repr(&repr.kind, &repr.value).map_err(serde::de::Error::custom)
    }
}

fn parse_repr(kind: &str, value: &str) -> std::result::Result<CanonicalAnswer, String> {
    let numeric = |value: &str| {
        canonicalize(value, AnswerMode::Math)
            .ok()
            .and_then(|c| c.as_rational().map(|r| (c, r)))
            .ok_or_else(|| format!("unparseable {kind} value {value:?}"))
    };
    match kind {
        "integer" => {
            let (_, r) = numeric(value)?;
            if !r.is_integer() {
                return Err(format!("integer value {value:?} is not an integer"));
            }
            Ok(CanonicalAnswer::Integer(r))
        }
        "rational" => {
            let (_, r) = numeric(value)?;
            Ok(if r.is_integer() {
                CanonicalAnswer::Integer(r)
            } else {
                CanonicalAnswer::Ratio(r)
            })
        }
        "decimal-as-rational" => {
            let (_, r) = numeric(value)?;
            Ok(if r.is_integer() {
                CanonicalAnswer::Integer(r)
            } else {
                CanonicalAnswer::Decimal(r)
            })
        }
        "choice-letter" => {
            let mut chars = value.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) if ('A'..='D').contains(&c) => Ok(CanonicalAnswer::Choice(c)),
                _ => Err(format!("invalid choice letter {value:?}")),
            }
        }
        "normalized-string" => Ok(CanonicalAnswer::Text(value.to_string())),
        other => Err(format!("unknown answer kind {other:?}")),
    }
}

/// Exact equivalence on canonical forms.
///
/// Numeric kinds compare through their rational value, choice letters by
/// letter, normalized strings byte-for-byte; everything cross-category is
/// unequal. This is an equivalence relation (the property suite checks it).
pub fn answers_equal(a: &CanonicalAnswer, b: &CanonicalAnswer) -> bool {
    match (a.as_rational(), b.as_rational()) {
        (Some(x), Some(y)) => x == y,
        (None, None) => match (a, b) {
            (CanonicalAnswer::Choice(x), CanonicalAnswer::Choice(y)) => x == y,
            (CanonicalAnswer::Text(x), CanonicalAnswer::Text(y)) => x == y,
            _ => false,
        },
        _ => false,
    }
}

// ---------------------------------------------------------------------------
// Extraction
// ---------------------------------------------------------------------------

/// Answer text pulled out of a completion, with its byte span so audits can
/// jump to the evidence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedAnswer {
    pub raw: String,
    pub span: (usize, usize),
}

/// Which box to trust when a completion contains several.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoxSelection {
    /// Reasoning traces revise themselves; the final box is the model's
    /// committed answer. The default.
    #[default]
    Last,
    /// Take the first box instead (for ablating the last-box rule).
    First,
}

impl FromStr for BoxSelection {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "last" => Ok(BoxSelection::Last),
            "first" => Ok(BoxSelection::First),
            other => Err(Error::Config(format!(
                "unknown box selection {other:?} (expected last or first)"
            ))),
        }
    }
}

/// Extract the model's committed answer: the content of the last
/// well-balanced `\boxed{...}` (or bare `boxed{...}`), with nested braces
/// handled and `\{`-style escapes ignored for depth. When no box exists,
/// falls back to the trailing "final answer is X" pattern.
pub fn extract_boxed(completion: &str) -> Option<ExtractedAnswer> {
    extract_boxed_with(completion, BoxSelection::Last)
}

/// [`extract_boxed`] with an explicit box-selection rule.
pub fn extract_boxed_with(completion: &str, selection: BoxSelection) -> Option<ExtractedAnswer> {
    const MARKER: &str = "boxed{";
    let mut chosen: Option<ExtractedAnswer> = None;
    let mut from = 0;
    while let Some(found) = completion[from..].find(MARKER) {
        let content_start = from + found + MARKER.len();
        if let Some(content_end) = matching_brace(completion, content_start) {
            let extracted = ExtractedAnswer {
                raw: completion[content_start..content_end].to_string(),
                span: (content_start, content_end),
            };
            if selection == BoxSelection::First {
                return Some(extracted);
            }
            chosen = Some(extracted);
        }
        from = content_start;
    }
    chosen.or_else(|| final_answer_fallback(completion))
}

/// Scan from `start` (just past an opening brace) to the matching close.
/// A backslash escapes the next character, so `\{` and `\}` do not affect
/// depth. Returns the byte index of the closing brace, or None if the text
/// ends first.
fn matching_brace(s: &str, start: usize) -> Option<usize> {
    let mut depth = 1usize;
    let mut chars = s[start..].char_indices();
    while let Some((i, c)) = chars.next() {
        match c {
            '\\' => {
                chars.next();
            }
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(start + i);
                }
            }
            _ => {}
        }
    }
    None
}

static FINAL_ANSWER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)final\s+answer\s+is\b").expect("static regex"));

fn final_answer_fallback(completion: &str) -> Option<ExtractedAnswer> {
    let m = FINAL_ANSWER.find_iter(completion).last()?;
    let line_end = completion[m.end()..]
        .find('\n')
        .map(|i| m.end() + i)
        .unwrap_or(completion.len());
    let line = &completion[m.end()..line_end];
    let lead = line.trim_start_matches(|c: char| c.is_whitespace() || c == ':');
    let start = m.end() + (line.len() - lead.len());
    let trimmed = lead.trim_end_matches(|c: char| c.is_whitespace() || c == '.');
    if trimmed.is_empty() {
        return None;
    }
    let end = start + trimmed.len();
    Some(ExtractedAnswer {
        raw: trimmed.to_string(),
        span: (start, end),
    })
}

// ---------------------------------------------------------------------------
// Canonicalization
// ---------------------------------------------------------------------------

/// How a benchmark's answers are read. Declared in the benchmark file
/// header, never inferred from content.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnswerMode {
    Math,
    Choice,
}

impl fmt::Display for AnswerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnswerMode::Math => write!(f, "math"),
            AnswerMode::Choice => write!(f, "choice"),
        }
    }
}

/// Why canonicalization declined to produce a comparable value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseFailure {
    pub detail: String,
}

impl fmt::Display for ParseFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.detail)
    }
}

static INTEGER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[+-]?\d+$").expect("regex"));
static THOUSANDS: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[+-]?\d{1,3}(?:,\d{3})+$").expect("regex"));
static DECIMAL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^([+-]?)(\d*)\.(\d+)$").expect("regex"));
static FRAC: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^([+-]?)\\[dt]?frac\s*\{\s*([+-]?\d+)\s*\}\s*\{\s*([+-]?\d+)\s*\}$")
        .expect("regex")
});
static PLAIN_FRACTION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^([+-]?\d+)\s*/\s*([+-]?\d+)$").expect("regex"));
static CHOICE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b([A-Da-d])\b").expect("regex"));

/// Normalize raw answer text to a comparable form.
///
/// Math mode strips presentation wrappers (`$…$`, `\text{…}`, `\left`/
/// `\right`, trailing periods), then tries, in order: integer, thousands-
/// separated integer, finite decimal (kept exact as a rational), `\frac`/
/// `\dfrac`/`\tfrac`, and plain `a/b`. Anything else becomes a normalized
/// string (lowercased, whitespace collapsed) — never an error.
///
/// Choice mode requires exactly one distinct standalone letter A–D
/// (case-insensitive); zero or several distinct letters is a parse failure,
/// as is empty input in either mode.
pub fn canonicalize(raw: &str, mode: AnswerMode) -> std::result::Result<CanonicalAnswer, ParseFailure> {
    match mode {
        AnswerMode::Choice => canonicalize_choice(raw),
        AnswerMode::Math => canonicalize_math(raw),
    }
}

fn canonicalize_choice(raw: &str) -> std::result::Result<CanonicalAnswer, ParseFailure> {
    let mut letters: Vec<char> = CHOICE
        .captures_iter(raw)
        .map(|c| {
            c.get(1)
                .expect("group 1 always present")
                .as_str()
                .chars()
                .next()
                .expect("single letter")
                .to_ascii_uppercase()
        })
        .collect();
    letters.sort_unstable();
    letters.dedup();
    match letters.as_slice() {
        [one] => Ok(CanonicalAnswer::Choice(*one)),
        [] => Err(ParseFailure {
            detail: format!("no standalone choice letter A-D in {raw:?}"),
        }),
        several => Err(ParseFailure {
            detail: format!(
                "multiple distinct choice letters in {raw:?}: {}",
                several.iter().collect::<String>()
            ),
        }),
    }
}

fn canonicalize_math(raw: &str) -> std::result::Result<CanonicalAnswer, ParseFailure> {
    let s = strip_wrappers(raw);
    if s.is_empty() {
        return Err(ParseFailure {
            detail: "empty answer text".to_string(),
        });
    }
    if let Some(answer) = parse_numeric(&s) {
        return Ok(answer);
    }
    Ok(CanonicalAnswer::Text(normalize_text(&s)))
}

/// Peel presentation layers until a fixpoint: whitespace, trailing periods,
/// enclosing `$`/`$$`, a whole-string `\text{…}` wrapper, then drop
/// `\left`/`\right` sizing tokens.
fn strip_wrappers(raw: &str) -> String {
    let mut s = raw.trim().to_string();
    loop {
        let before = s.clone();
        while s.ends_with('.') {
            s.pop();
        }
        s = s.trim().to_string();
        if s.len() >= 2 && s.starts_with('$') && s.ends_with('$') {
            s = s[1..s.len() - 1].trim().to_string();
        }
        if let Some(inner) = unwrap_text_command(&s) {
            s = inner;
        }
        if s == before {
            break;
        }
    }
    strip_left_right(&s)
}

/// If the whole string is `\text{X}`, return X.
fn unwrap_text_command(s: &str) -> Option<String> {
    let rest = s.strip_prefix("\\text{")?;
    let start = s.len() - rest.len();
    let end = matching_brace(s, start)?;
    if end == s.len() - 1 {
        Some(s[start..end].trim().to_string())
    } else {
        None
    }
}

/// Remove `\left` / `\right` when they size a following delimiter, keeping
/// the delimiter itself. `\leftarrow` and other commands that merely share
/// the prefix are left alone.
fn strip_left_right(s: &str) -> String {
    const DELIMS: &[char] = &['(', ')', '[', ']', '{', '}', '|', '.', '<', '>', '/', '\\'];
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(pos) = rest.find('\\') {
        let (head, tail) = rest.split_at(pos);
        out.push_str(head);
        let token_len = if tail.starts_with("\\left") {
            5
        } else if tail.starts_with("\\right") {
            6
        } else {
            0
        };
        let after = &tail[token_len.max(1)..];
        if token_len > 0 && after.trim_start().starts_with(DELIMS) {
            rest = after;
        } else {
            out.push('\\');
            rest = &tail[1..];
        }
    }
    out.push_str(rest);
    out
}

fn normalize_text(s: &str) -> String {
    s.to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn parse_numeric(s: &str) -> Option<CanonicalAnswer> {
    if INTEGER.is_match(s) {
        let n: i128 = s.parse().ok()?;
        return Some(CanonicalAnswer::Integer(Rational::integer(n)));
    }
    if THOUSANDS.is_match(s) {
        let n: i128 = s.replace(',', "").parse().ok()?;
        return Some(CanonicalAnswer::Integer(Rational::integer(n)));
    }
    if let Some(caps) = DECIMAL.captures(s) {
        let negative = &caps[1] == "-";
        return decimal_rational(negative, &caps[2], &caps[3]);
    }
    if let Some(caps) = FRAC.captures(s) {
        let negative = &caps[1] == "-";
        return fraction_rational(negative, &caps[2], &caps[3], /* from_decimal= */ false);
    }
    if let Some(caps) = PLAIN_FRACTION.captures(s) {
        return fraction_rational(false, &caps[1], &caps[2], false);
    }
    None
}

fn decimal_rational(negative: bool, int_digits: &str, frac_digits: &str) -> Option<CanonicalAnswer> {
    let k = u32::try_from(frac_digits.len()).ok()?;
    let den = 10i128.checked_pow(k)?;
    let int_part: i128 = if int_digits.is_empty() {
        0
    } else {
        int_digits.parse().ok()?
    };
    let frac_part: i128 = frac_digits.parse().ok()?;
    let mut num = int_part.checked_mul(den)?.checked_add(frac_part)?;
    if negative {
        num = -num;
    }
    let r = Rational::new(num, den)?;
    Some(if r.is_integer() {
        CanonicalAnswer::Integer(r)
    } else {
        CanonicalAnswer::Decimal(r)
    })
}

fn fraction_rational(
    outer_negative: bool,
    num_str: &str,
    den_str: &str,
    from_decimal: bool,
) -> Option<CanonicalAnswer> {
    let mut num: i128 = num_str.parse().ok()?;
    let den: i128 = den_str.parse().ok()?;
    if outer_negative {
        num = num.checked_neg()?;
    }
    let r = Rational::new(num, den)?;
    Some(if r.is_integer() {
        CanonicalAnswer::Integer(r)
    } else if from_decimal {
        CanonicalAnswer::Decimal(r)
    } else {
        CanonicalAnswer::Ratio(r)
    })
}

// ---------------------------------------------------------------------------
// pass@1
// ---------------------------------------------------------------------------

/// A correct/total count. Display forms are computed with integer
/// round-half-up arithmetic so formatting never inherits float quirks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassAt1 {
    pub correct: u32,
    pub total: u32,
}

impl PassAt1 {
    /// Two-decimal percentage, e.g. 23/30 → "76.67".
    pub fn percent_string(&self) -> String {
        let (whole, frac) = round_half_up(self.correct, self.total, 10_000);
        format!("{whole}.{frac:02}")
    }

    /// Three-decimal fraction of one, e.g. 24/30 → "0.800".
    pub fn fraction_string(&self) -> String {
        let (whole, frac) = round_half_up(self.correct, self.total, 1_000);
        format!("{whole}.{frac:03}")
    }

    /// The exact value as a fraction of one, for ranking.
    pub fn as_rational(&self) -> Rational {
        if self.total == 0 {
            Rational::integer(0)
        } else {
            Rational::new(self.correct as i128, self.total as i128).expect("total is nonzero")
        }
    }
}

/// Scale `correct/total` by `scale`, round half-up, then split off the last
/// two (percent) or three (fraction) digits for display.
fn round_half_up(correct: u32, total: u32, scale: u64) -> (u64, u64) {
    let digits = if scale == 10_000 { 100 } else { 1_000 };
    if total == 0 {
        return (0, 0);
    }
    let p = correct as u64 * scale;
    let mut q = p / total as u64;
    let r = p % total as u64;
    if 2 * r >= total as u64 {
        q += 1;
    }
    (q / digits, q % digits)
}

// ---------------------------------------------------------------------------
// Benchmarks and grading
// ---------------------------------------------------------------------------

/// One benchmark question with its pre-canonicalized gold answer.
#[derive(Debug, Clone)]
pub struct BenchmarkQuestion {
    pub query_id: String,
    pub query: String,
    pub gold_answer: String,
    pub gold_canonical: CanonicalAnswer,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BenchmarkHeader {
    name: String,
    size: usize,
    mode: AnswerMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    integer_range: Option<(i64, i64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GoldLine {
    query_id: String,
    query: String,
    gold_answer: String,
    mode: AnswerMode,
}

/// A loaded benchmark gold set: header metadata plus questions. The optional
/// `integer_range` declares an integer-valued benchmark (e.g. answers 0–999)
/// and arms a sanity guard: any graded answer outside the range is marked
/// incorrect and flagged, catching extraction bugs before they pollute a
/// matrix.
#[derive(Debug, Clone)]
pub struct BenchmarkSet {
    pub name: String,
    pub mode: AnswerMode,
    pub integer_range: Option<(i64, i64)>,
    pub questions: Vec<BenchmarkQuestion>,
}

impl BenchmarkSet {
    pub fn size(&self) -> usize {
        self.questions.len()
    }
}

/// Load and validate a benchmark gold file: one header line
/// `{name, size, mode, integer_range?}` then `size` lines
/// `{query_id, query, gold_answer, mode}`. Every gold answer must
/// canonicalize under the declared mode at load time, so grading can never
/// fail on gold mid-run.
pub fn load_benchmark(path: &Path) -> Result<BenchmarkSet> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();

    let (_, first) = lines.next().ok_or_else(|| Error::Malformed {
        path: path.to_path_buf(),
        line: 1,
        detail: "empty benchmark file (missing header)".to_string(),
    })?;
    let first = first.map_err(|e| Error::io(path, e))?;
    let header: BenchmarkHeader = serde_json::from_str(&first).map_err(|e| Error::Malformed {
        path: path.to_path_buf(),
        line: 1,
        detail: format!("bad header: {e}"),
    })?;

    let mut questions = Vec::with_capacity(header.size);
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let gold: GoldLine = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            line: lineno,
            detail: e.to_string(),
        })?;
        if gold.mode != header.mode {
            return Err(Error::Malformed {
                path: path.to_path_buf(),
                line: lineno,
                detail: format!(
                    "question mode {} disagrees with header mode {}",
                    gold.mode, header.mode
                ),
            });
        }
        if let Some(prev) = seen.insert(gold.query_id.clone(), lineno) {
            return Err(Error::DuplicateId {
                path: path.to_path_buf(),
                id: gold.query_id,
                first: prev,
                second: lineno,
            });
        }
        let canonical =
            canonicalize(&gold.gold_answer, header.mode).map_err(|e| Error::GoldUnparseable {
                query_id: gold.query_id.clone(),
                mode: header.mode.to_string(),
                detail: e.detail,
            })?;
        if let Some((lo, hi)) = header.integer_range {
            if !integer_in_range(&canonical, lo, hi) {
                return Err(Error::GoldUnparseable {
                    query_id: gold.query_id.clone(),
                    mode: header.mode.to_string(),
                    detail: format!("gold answer outside declared integer range [{lo}, {hi}]"),
                });
            }
        }
        questions.push(BenchmarkQuestion {
            query_id: gold.query_id,
            query: gold.query,
            gold_answer: gold.gold_answer,
            gold_canonical: canonical,
        });
    }
    if questions.len() != header.size {
        return Err(Error::Malformed {
            path: path.to_path_buf(),
            line: 1,
            detail: format!(
                "header declares size {} but file holds {} questions",
                header.size,
                questions.len()
            ),
        });
    }
    Ok(BenchmarkSet {
        name: header.name,
        mode: header.mode,
        integer_range: header.integer_range,
        questions,
    })
}

pub fn save_benchmark(path: &Path, bench: &BenchmarkSet) -> Result<()> {
    let mut out = Vec::new();
    let header = BenchmarkHeader {
        name: bench.name.clone(),
        size: bench.questions.len(),
        mode: bench.mode,
        integer_range: bench.integer_range,
    };
    serde_json::to_writer(&mut out, &header).expect("header serializes");
    out.push(b'\n');
    for q in &bench.questions {
        let line = GoldLine {
            query_id: q.query_id.clone(),
            query: q.query.clone(),
            gold_answer: q.gold_answer.clone(),
            mode: bench.mode,
        };
        serde_json::to_writer(&mut out, &line).expect("gold line serializes");
        out.push(b'\n');
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}

fn integer_in_range(answer: &CanonicalAnswer, lo: i64, hi: i64) -> bool {
    match answer.as_rational() {
        Some(r) if r.is_integer() => r.num() >= lo as i128 && r.num() <= hi as i128,
        _ => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    NoAnswerFound,
    ParseFailure,
    Mismatch,
}

/// Per-question grading outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradeRecord {
    pub query_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extracted: Option<ExtractedAnswer>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub canonical: Option<CanonicalAnswer>,
    pub gold_canonical: CanonicalAnswer,
    pub correct: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure_reason: Option<FailureReason>,
    /// Free-form flag for auditors: endpoint errors, range-guard trips,
    /// plausible-but-unequal pairs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Grade a completed run against a benchmark.
///
/// The denominator is pinned to the benchmark size: completions must cover
/// exactly the gold query ids (the inference layer guarantees one completion
/// per question, with failures embedded as error records, which grade as
/// incorrect here).
pub fn grade_run(
    completions: &[CompletionRecord],
    bench: &BenchmarkSet,
) -> Result<(Vec<GradeRecord>, PassAt1)> {
    grade_run_with(completions, bench, BoxSelection::Last)
}

/// [`grade_run`] with an explicit box-selection rule.
pub fn grade_run_with(
    completions: &[CompletionRecord],
    bench: &BenchmarkSet,
    selection: BoxSelection,
) -> Result<(Vec<GradeRecord>, PassAt1)> {
    let gold: HashMap<&str, &BenchmarkQuestion> = bench
        .questions
        .iter()
        .map(|q| (q.query_id.as_str(), q))
        .collect();
    let mut seen: HashSet<&str> = HashSet::new();
    let mut records = Vec::with_capacity(completions.len());
    let mut correct_count = 0u32;

    for completion in completions {
        let question = gold
            .get(completion.query_id.as_str())
            .ok_or_else(|| Error::UnknownQueryId(completion.query_id.clone()))?;
        if !seen.insert(&completion.query_id) {
            return Err(Error::Invalid(format!(
                "duplicate completion for query id \"{}\"",
                completion.query_id
            )));
        }
        let record = grade_one(completion, question, bench, selection);
        if record.correct {
            correct_count += 1;
        }
        records.push(record);
    }

    if let Some(missing) = bench
        .questions
        .iter()
        .find(|q| !seen.contains(q.query_id.as_str()))
    {
        return Err(Error::MissingGold(missing.query_id.clone()));
    }

    let pass = PassAt1 {
        correct: correct_count,
        total: bench.questions.len() as u32,
    };
    Ok((records, pass))
}

fn grade_one(
    completion: &CompletionRecord,
    question: &BenchmarkQuestion,
    bench: &BenchmarkSet,
    selection: BoxSelection,
) -> GradeRecord {
    let gold_canonical = question.gold_canonical.clone();
    let base = GradeRecord {
        query_id: completion.query_id.clone(),
        extracted: None,
        canonical: None,
        gold_canonical,
        correct: false,
        failure_reason: None,
        note: None,
    };

    if let Some(err) = &completion.error {
        return GradeRecord {
            failure_reason: Some(FailureReason::NoAnswerFound),
            note: Some(format!("endpoint error: {err}")),
            ..base
        };
    }
    let Some(extracted) = extract_boxed_with(&completion.completion, selection) else {
        return GradeRecord {
            failure_reason: Some(FailureReason::NoAnswerFound),
            ..base
        };
    };
    let canonical = match canonicalize(&extracted.raw, bench.mode) {
        Ok(c) => c,
        Err(failure) => {
            return GradeRecord {
                extracted: Some(extracted),
                failure_reason: Some(FailureReason::ParseFailure),
                note: Some(failure.detail),
                ..base
            };
        }
    };
    if let Some((lo, hi)) = bench.integer_range {
        if !integer_in_range(&canonical, lo, hi) {
            return GradeRecord {
                extracted: Some(extracted),
                canonical: Some(canonical),
                failure_reason: Some(FailureReason::Mismatch),
                note: Some(format!(
                    "canonical answer outside the declared integer range [{lo}, {hi}]"
                )),
                ..base
            };
        }
    }
    let correct = answers_equal(&canonical, &base.gold_canonical);
    // Cross-kind mismatches (e.g. an answer that fell back to text against
    // a numeric gold) are where equivalence choices can silently shift
    // scores; flag them for human audit.
    let note = if !correct && canonical.kind() != base.gold_canonical.kind() {
        Some(format!(
            "kind mismatch for audit: answer is {} {:?}, gold is {} {:?}",
            canonical.kind(),
            canonical.render(),
            base.gold_canonical.kind(),
            base.gold_canonical.render()
        ))
    } else {
        None
    };
    GradeRecord {
        extracted: Some(extracted),
        canonical: Some(canonical),
        correct,
        failure_reason: if correct {
            None
        } else {
            Some(FailureReason::Mismatch)
        },
        note,
        ..base
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn math(raw: &str) -> CanonicalAnswer {
        canonicalize(raw, AnswerMode::Math).expect("math mode parses")
    }

    fn ratio(num: i128, den: i128) -> Rational {
        Rational::new(num, den).expect("valid rational")
    }

    #[test]
    fn extracts_simple_box() {
        let got = extract_boxed("so the answer is \\boxed{204}.").expect("found");
        assert_eq!(got.raw, "204");
    }

    #[test]
    fn extracts_nested_braces() {
        assert_eq!(extract_boxed("\\boxed{3^{2}}").unwrap().raw, "3^{2}");
        assert_eq!(
            extract_boxed("\\boxed{\\frac{1}{2}}").unwrap().raw,
            "\\frac{1}{2}"
        );
    }

    #[test]
    fn last_box_wins() {
        let got = extract_boxed("I think \\boxed{5} but actually \\boxed{7}").unwrap();
        assert_eq!(got.raw, "7");
    }

    #[test]
    fn first_box_selection_is_available_for_ablation() {
        let text = "I think \\boxed{5} but actually \\boxed{7}";
        assert_eq!(
            extract_boxed_with(text, BoxSelection::First).unwrap().raw,
            "5"
        );
        assert_eq!(
            extract_boxed_with(text, BoxSelection::Last).unwrap().raw,
            "7"
        );
    }

    #[test]
    fn bare_boxed_counts() {
        assert_eq!(extract_boxed("boxed{12} done").unwrap().raw, "12");
    }

    #[test]
    fn escaped_braces_do_not_close() {
        assert_eq!(
            extract_boxed("\\boxed{5 + \\{x\\}}").unwrap().raw,
            "5 + \\{x\\}"
        );
    }

    #[test]
    fn unbalanced_final_box_falls_back_to_earlier() {
        assert_eq!(extract_boxed("\\boxed{3} then \\boxed{oops").unwrap().raw, "3");
    }

    #[test]
    fn span_points_at_the_raw_text() {
        let text = "x \\boxed{42} y";
        let got = extract_boxed(text).unwrap();
        assert_eq!(&text[got.span.0..got.span.1], got.raw);
    }

    #[test]
    fn fallback_final_answer_pattern() {
        let got = extract_boxed("The final answer is 42.").unwrap();
        assert_eq!(got.raw, "42");
        let got = extract_boxed("Final answer is: x+1").unwrap();
        assert_eq!(got.raw, "x+1");
        let got = extract_boxed("the FINAL ANSWER IS 7\nmore text").unwrap();
        assert_eq!(got.raw, "7");
        let text = "final answer is 1. wait, the final answer is 2.";
        assert_eq!(extract_boxed(text).unwrap().raw, "2");
    }

    #[test]
    fn no_marker_no_fallback() {
        assert!(extract_boxed("no conclusion reached").is_none());
        assert!(extract_boxed("\\boxed{unclosed").is_none());
        assert!(extract_boxed("the final answer is   ").is_none());
    }

    #[test]
    fn canonicalizes_integers() {
        assert_eq!(math("204"), CanonicalAnswer::Integer(ratio(204, 1)));
        assert_eq!(math("  204  "), CanonicalAnswer::Integer(ratio(204, 1)));
        assert_eq!(math("+7"), CanonicalAnswer::Integer(ratio(7, 1)));
        assert_eq!(math("-13"), CanonicalAnswer::Integer(ratio(-13, 1)));
        assert_eq!(math("007").render(), "7");
    }

    #[test]
    fn canonicalizes_thousands_separators() {
        assert_eq!(math("1,000"), CanonicalAnswer::Integer(ratio(1000, 1)));
        assert_eq!(
            math("12,345,678"),
            CanonicalAnswer::Integer(ratio(12_345_678, 1))
        );
        // Bad grouping is not a thousands separator: stays text.
        assert_eq!(math("1,00"), CanonicalAnswer::Text("1,00".into()));
        assert_eq!(math("1,2"), CanonicalAnswer::Text("1,2".into()));
    }

    #[test]
    fn canonicalizes_fractions() {
        assert_eq!(math("\\frac{1}{2}"), CanonicalAnswer::Ratio(ratio(1, 2)));
        assert_eq!(math("\\dfrac{3}{4}"), CanonicalAnswer::Ratio(ratio(3, 4)));
        assert_eq!(math("\\tfrac{1}{3}"), CanonicalAnswer::Ratio(ratio(1, 3)));
        assert_eq!(math("-\\frac{1}{2}"), CanonicalAnswer::Ratio(ratio(-1, 2)));
        assert_eq!(math("\\frac{-1}{2}"), CanonicalAnswer::Ratio(ratio(-1, 2)));
        assert_eq!(math("\\frac{1}{-2}"), CanonicalAnswer::Ratio(ratio(-1, 2)));
        assert_eq!(math("\\frac{4}{2}"), CanonicalAnswer::Integer(ratio(2, 1)));
        assert_eq!(math("\\frac{0}{5}"), CanonicalAnswer::Integer(ratio(0, 1)));
        assert_eq!(math("6/4"), CanonicalAnswer::Ratio(ratio(3, 2)));
        // Division by zero is not a rational; it survives as text.
        assert_eq!(
            math("\\frac{1}{0}"),
            CanonicalAnswer::Text("\\frac{1}{0}".into())
        );
    }

    #[test]
    fn canonicalizes_decimals_exactly() {
        assert_eq!(math("0.5"), CanonicalAnswer::Decimal(ratio(1, 2)));
        assert_eq!(math("2.50"), CanonicalAnswer::Decimal(ratio(5, 2)));
        assert_eq!(math(".25"), CanonicalAnswer::Decimal(ratio(1, 4)));
        assert_eq!(math("-0.125"), CanonicalAnswer::Decimal(ratio(-1, 8)));
        // A decimal that reduces to an integer is an integer.
        assert_eq!(math("5.0"), CanonicalAnswer::Integer(ratio(5, 1)));
        assert_eq!(math("5."), CanonicalAnswer::Integer(ratio(5, 1)));
    }

    #[test]
    fn strips_presentation_wrappers() {
        assert_eq!(math("$18$"), CanonicalAnswer::Integer(ratio(18, 1)));
        assert_eq!(math("$$\\frac{1}{2}$$"), CanonicalAnswer::Ratio(ratio(1, 2)));
        assert_eq!(math("\\text{east}"), CanonicalAnswer::Text("east".into()));
        assert_eq!(math("\\text{ EAST }."), CanonicalAnswer::Text("east".into()));
        assert_eq!(
            math("\\left(3, 4\\right)"),
            CanonicalAnswer::Text("(3, 4)".into())
        );
        // Only the sizing tokens are stripped, not commands sharing the prefix.
        assert_eq!(math("\\leftover"), CanonicalAnswer::Text("\\leftover".into()));
    }

    #[test]
    fn falls_back_to_normalized_text() {
        assert_eq!(math("Twelve  Apples"), CanonicalAnswer::Text("twelve apples".into()));
        assert_eq!(math("10^{2}"), CanonicalAnswer::Text("10^{2}".into()));
        assert_eq!(math("\\sqrt{2}"), CanonicalAnswer::Text("\\sqrt{2}".into()));
        assert_eq!(math("1 000"), CanonicalAnswer::Text("1 000".into()));
        // Digits beyond i128 fall back to text rather than overflowing.
        let huge = "9".repeat(50);
        assert_eq!(math(&huge), CanonicalAnswer::Text(huge.clone()));
    }

    #[test]
    fn empty_math_answer_is_a_parse_failure() {
        assert!(canonicalize("", AnswerMode::Math).is_err());
        assert!(canonicalize("   ", AnswerMode::Math).is_err());
        assert!(canonicalize(" . ", AnswerMode::Math).is_err());
    }

    #[test]
    fn choice_mode_extracts_single_letters() {
        let choice = |raw: &str| canonicalize(raw, AnswerMode::Choice);
        assert_eq!(choice("(C)").unwrap(), CanonicalAnswer::Choice('C'));
        assert_eq!(choice("c").unwrap(), CanonicalAnswer::Choice('C'));
        assert_eq!(choice("The answer is (D).").unwrap(), CanonicalAnswer::Choice('D'));
        assert_eq!(choice("b/B").unwrap(), CanonicalAnswer::Choice('B'));
        assert!(choice("A and B").is_err());
        assert!(choice("none").is_err());
        assert!(choice("E").is_err());
        // Letters embedded in words are not standalone.
        assert!(choice("abcd").is_err());
    }

    #[test]
    fn equality_is_numeric_across_kinds() {
        assert!(answers_equal(&math("204"), &math("204")));
        assert!(!answers_equal(&math("204"), &math("205")));
        assert!(answers_equal(&math("\\frac{1}{2}"), &math("0.5")));
        assert!(answers_equal(&math("\\frac{4}{2}"), &math("2")));
        assert!(answers_equal(&math("6/4"), &math("1.5")));
        assert!(answers_equal(&math("east"), &math("East")));
        assert!(!answers_equal(&math("east"), &math("west")));
        // Cross-category comparisons are always unequal.
        assert!(!answers_equal(
            &CanonicalAnswer::Decimal(ratio(1, 2)),
            &CanonicalAnswer::Text("0.5".into())
        ));
        assert!(!answers_equal(
            &CanonicalAnswer::Choice('C'),
            &CanonicalAnswer::Text("c".into())
        ));
    }

    #[test]
    fn canonicalize_is_idempotent_through_render() {
        let inputs = [
            "204", "-13", "1,000", "\\frac{1}{2}", "\\frac{-7}{3}", "0.5", "-0.125", "5.0",
            "$18$", "\\text{east}", "Twelve  Apples", "10^{2}", "3/6",
        ];
        for input in inputs {
            let once = math(input);
            let twice = math(&once.render());
            assert_eq!(once, twice, "canonicalize not idempotent for {input:?}");
        }
        let choice_once = canonicalize("(C)", AnswerMode::Choice).unwrap();
        let choice_twice = canonicalize(&choice_once.render(), AnswerMode::Choice).unwrap();
        assert_eq!(choice_once, choice_twice);
    }

    #[test]
    fn serde_round_trips_every_kind() {
        let answers = [
            math("204"),
            math("\\frac{1}{2}"),
            math("0.125"),
            CanonicalAnswer::Choice('B'),
            math("some words here"),
        ];
        for answer in answers {
            let json = serde_json::to_string(&answer).unwrap();
            let back: CanonicalAnswer = serde_json::from_str(&json).unwrap();
            assert_eq!(answer, back, "round trip failed via {json}");
        }
        let json = serde_json::to_string(&math("0.5")).unwrap();
        assert_eq!(json, r#"{"kind":"decimal-as-rational","value":"0.5"}"#);
    }

    #[test]
    fn percent_strings_round_half_up() {
        let pct = |correct, total| PassAt1 { correct, total }.percent_string();
        assert_eq!(pct(23, 30), "76.67");
        assert_eq!(pct(0, 30), "0.00");
        assert_eq!(pct(474, 500), "94.80");
        assert_eq!(pct(24, 30), "80.00");
        assert_eq!(pct(1, 3), "33.33");
        assert_eq!(pct(2, 3), "66.67");
        assert_eq!(pct(30, 30), "100.00");
        // Exact half rounds up: 5/800 = 0.625%.
        assert_eq!(pct(5, 800), "0.63");
    }

    #[test]
    fn fraction_strings_use_three_decimals() {
        let frac = |correct, total| PassAt1 { correct, total }.fraction_string();
        assert_eq!(frac(22, 30), "0.733");
        assert_eq!(frac(24, 30), "0.800");
        assert_eq!(frac(471, 500), "0.942");
        assert_eq!(frac(30, 30), "1.000");
        assert_eq!(frac(29, 30), "0.967");
        assert_eq!(frac(0, 30), "0.000");
    }

    #[test]
    fn rational_reduction_and_ordering() {
        assert_eq!(ratio(2, 4), ratio(1, 2));
        assert_eq!(ratio(-2, 4), ratio(1, -2));
        assert_eq!(ratio(-2, 4).den(), 2);
        assert!(ratio(1, 3) < ratio(1, 2));
        assert!(ratio(-1, 2) < ratio(0, 1));
        assert!(Rational::new(1, 0).is_none());
        assert_eq!(
            ratio(1, 2).checked_add(ratio(1, 3)),
            Some(ratio(5, 6))
        );
    }

    fn mini_benchmark(mode: AnswerMode, golds: &[(&str, &str)]) -> BenchmarkSet {
        let questions = golds
            .iter()
            .map(|(id, gold)| BenchmarkQuestion {
                query_id: id.to_string(),
                query: format!("question {id}"),
                gold_answer: gold.to_string(),
                gold_canonical: canonicalize(gold, mode).unwrap(),
            })
            .collect();
        BenchmarkSet {
            name: "mini".to_string(),
            mode,
            integer_range: None,
            questions,
        }
    }

    fn completion(id: &str, text: &str) -> CompletionRecord {
        CompletionRecord {
            query_id: id.to_string(),
            completion: text.to_string(),
            finish_reason: "stop".to_string(),
            error: None,
        }
    }

    #[test]
    fn grade_run_counts_and_reasons() {
        let bench = mini_benchmark(
            AnswerMode::Math,
            &[("q1", "204"), ("q2", "\\frac{1}{2}"), ("q3", "17")],
        );
        let completions = vec![
            completion("q1", "thus \\boxed{204}"),
            completion("q2", "we get \\boxed{0.5}"),
            CompletionRecord {
                query_id: "q3".to_string(),
                completion: String::new(),
                finish_reason: "error".to_string(),
                error: Some("connect timeout".to_string()),
            },
        ];
        let (records, pass) = grade_run(&completions, &bench).unwrap();
        assert_eq!(pass, PassAt1 { correct: 2, total: 3 });
        assert_eq!(pass.percent_string(), "66.67");
        assert!(records[0].correct && records[1].correct);
        assert_eq!(records[2].failure_reason, Some(FailureReason::NoAnswerFound));
        assert!(records[2].note.as_deref().unwrap().contains("connect timeout"));
    }

    #[test]
    fn grade_run_requires_exact_coverage() {
        let bench = mini_benchmark(AnswerMode::Math, &[("q1", "1"), ("q2", "2")]);
        let err = grade_run(&[completion("q1", "\\boxed{1}")], &bench).unwrap_err();
        assert!(matches!(err, Error::MissingGold(ref id) if id == "q2"));
        let err = grade_run(
            &[
                completion("q1", "\\boxed{1}"),
                completion("qX", "\\boxed{9}"),
            ],
            &bench,
        )
        .unwrap_err();
        assert!(matches!(err, Error::UnknownQueryId(ref id) if id == "qX"));
        let err = grade_run(
            &[completion("q1", "\\boxed{1}"), completion("q1", "\\boxed{1}")],
            &bench,
        )
        .unwrap_err();
        assert!(err.to_string().contains("duplicate completion"));
    }

    #[test]
    fn cross_kind_mismatches_carry_an_audit_note() {
        let bench = mini_benchmark(AnswerMode::Math, &[("q1", "204"), ("q2", "204")]);
        let completions = vec![
            completion("q1", "\\boxed{2\\sqrt{51}}"), // text vs integer: flagged
            completion("q2", "\\boxed{205}"),         // plain numeric miss: not flagged
        ];
        let (records, _) = grade_run(&completions, &bench).unwrap();
        assert!(records[0].note.as_deref().unwrap().contains("kind mismatch"));
        assert_eq!(records[1].failure_reason, Some(FailureReason::Mismatch));
        assert!(records[1].note.is_none());
    }

    #[test]
    fn integer_range_guard_flags_out_of_range_answers() {
        let mut bench = mini_benchmark(AnswerMode::Math, &[("q1", "204")]);
        bench.integer_range = Some((0, 999));
        let (records, pass) = grade_run(&[completion("q1", "\\boxed{1204}")], &bench).unwrap();
        assert!(!records[0].correct);
        assert!(records[0].note.as_deref().unwrap().contains("integer range"));
        assert_eq!(pass.correct, 0);

        let (records, _) = grade_run(&[completion("q1", "\\boxed{\\frac{1}{2}}")], &bench).unwrap();
        assert!(!records[0].correct);
        assert!(records[0].note.is_some());
    }

    #[test]
    fn benchmark_file_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bench.jsonl");
        let bench = mini_benchmark(AnswerMode::Math, &[("q1", "1"), ("q2", "2")]);
        save_benchmark(&path, &bench).unwrap();
        let loaded = load_benchmark(&path).unwrap();
        assert_eq!(loaded.name, "mini");
        assert_eq!(loaded.size(), 2);
        assert_eq!(loaded.questions[1].gold_canonical, math("2"));

        // Header size disagreeing with the body is rejected.
        let text = std::fs::read_to_string(&path).unwrap();
        let tampered = text.replacen("\"size\":2", "\"size\":3", 1);
        std::fs::write(&path, tampered).unwrap();
        let err = load_benchmark(&path).unwrap_err();
        assert!(err.to_string().contains("declares size 3"));
    }

    #[test]
    fn benchmark_rejects_mode_mismatch_and_bad_gold() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bench.jsonl");
        std::fs::write(
            &path,
            concat!(
                "{\"name\":\"x\",\"size\":1,\"mode\":\"choice\"}\n",
                "{\"query_id\":\"q1\",\"query\":\"?\",\"gold_answer\":\"C\",\"mode\":\"math\"}\n",
            ),
        )
        .unwrap();
        let err = load_benchmark(&path).unwrap_err();
        assert!(err.to_string().contains("disagrees with header mode"));

        std::fs::write(
            &path,
            concat!(
                "{\"name\":\"x\",\"size\":1,\"mode\":\"choice\"}\n",
                "{\"query_id\":\"q1\",\"query\":\"?\",\"gold_answer\":\"maybe E\",\"mode\":\"choice\"}\n",
            ),
        )
        .unwrap();
        let err = load_benchmark(&path).unwrap_err();
        assert!(matches!(err, Error::GoldUnparseable { ref query_id, .. } if query_id == "q1"));
    }
}
