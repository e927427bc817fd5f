//! Result assembly: strategy matrices over train-test combinations,
//! majority voting across runs, combination ranking, and report rendering.
//!
//! Everything here compares scores exactly — pass@1 values are kept as
//! `correct/total` and compared as rationals, never as rounded floats — so
//! rankings and vote outcomes cannot flip on formatting.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grader::{answers_equal, AnswerMode, CanonicalAnswer, GradeRecord, PassAt1, Rational};
use crate::inference::EvalRun;
use crate::persona::Strategy;

// ---------------------------------------------------------------------------
// Grade files
// ---------------------------------------------------------------------------

/// Headline of a graded run: enough to place it in a matrix without
/// re-reading the per-question records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradeSummary {
    pub run_id: String,
    pub benchmark: String,
    pub mode: AnswerMode,
    pub train_strategy: Strategy,
    pub test_strategy: Strategy,
    pub correct: u32,
    pub total: u32,
    /// Two-decimal percent, e.g. "76.67" — display form of correct/total.
    pub pass_at_1: String,
    pub config_hash: String,
    pub seed: u64,
}

impl GradeSummary {
    pub fn pass(&self) -> PassAt1 {
        PassAt1 {
            correct: self.correct,
            total: self.total,
        }
    }
}

/// Build the summary for a graded run.
pub fn summarize(run: &EvalRun, mode: AnswerMode, records: &[GradeRecord]) -> GradeSummary {
    let pass = PassAt1 {
        correct: records.iter().filter(|r| r.correct).count() as u32,
        total: records.len() as u32,
    };
    GradeSummary {
        run_id: run.run_id.clone(),
        benchmark: run.benchmark.clone(),
        mode,
        train_strategy: run.train_strategy,
        test_strategy: run.test_strategy,
        correct: pass.correct,
        total: pass.total,
        pass_at_1: pass.percent_string(),
        config_hash: run.config_hash.clone(),
        seed: run.seed,
    }
}

#[derive(Serialize, Deserialize)]
struct GradeHeader {
    summary: GradeSummary,
}

/// A grade file is its summary line followed by one record per question.
pub fn write_grade_file(
    path: &Path,
    summary: &GradeSummary,
    records: &[GradeRecord],
) -> Result<()> {
    let mut out = Vec::new();
    serde_json::to_writer(
        &mut out,
        &GradeHeader {
            summary: summary.clone(),
        },
    )
    .expect("summary serializes");
    out.push(b'\n');
    for record in records {
        serde_json::to_writer(&mut out, record).expect("grade record serializes");
        out.push(b'\n');
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}

pub fn read_grade_file(path: &Path) -> Result<(GradeSummary, Vec<GradeRecord>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let (_, first) = lines.next().ok_or_else(|| Error::Malformed {
        path: path.to_path_buf(),
        line: 1,
        detail: "empty grade file (missing summary)".to_string(),
    })?;
    let first = first.map_err(|e| Error::io(path, e))?;
    let header: GradeHeader = serde_json::from_str(&first).map_err(|e| Error::Malformed {
        path: path.to_path_buf(),
        line: 1,
        detail: format!("bad summary: {e}"),
    })?;

    let mut records = Vec::new();
    for (idx, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: GradeRecord = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            line: idx + 1,
            detail: e.to_string(),
        })?;
        records.push(record);
    }
    if records.len() as u32 != header.summary.total {
        return Err(Error::Malformed {
            path: path.to_path_buf(),
            line: 1,
            detail: format!(
                "summary declares {} question(s) but the file holds {}",
                header.summary.total,
                records.len()
            ),
        });
    }
    Ok((header.summary, records))
}

// ---------------------------------------------------------------------------
// Strategy matrix
// ---------------------------------------------------------------------------

/// One measured train-test combination on one benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub train: Strategy,
    pub test: Strategy,
    pub benchmark: String,
    pub correct: u32,
    pub total: u32,
    pub pass_at_1: String,
    pub run_id: String,
}

impl Cell {
    pub fn pass(&self) -> PassAt1 {
        PassAt1 {
            correct: self.correct,
            total: self.total,
        }
    }

    fn key(&self) -> (Strategy, Strategy, String) {
        (self.train, self.test, self.benchmark.clone())
    }
}

fn key_label(train: Strategy, test: Strategy, benchmark: &str) -> String {
    format!("{train}-{test} on {benchmark}")
}

/// All graded cells for one base dataset, keyed by
/// (train strategy, test strategy, benchmark).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr", into = "MatrixRepr")]
pub struct StrategyMatrix {
    label: String,
    cells: BTreeMap<(Strategy, Strategy, String), Cell>,
}

#[derive(Serialize, Deserialize, Clone)]
struct MatrixRepr {
    label: String,
    cells: Vec<Cell>,
}

impl TryFrom<MatrixRepr> for StrategyMatrix {
    type Error = Error;
    fn try_from(repr: MatrixRepr) -> Result<StrategyMatrix> {
        let mut matrix = StrategyMatrix::new(&repr.label);
        for cell in repr.cells {
            matrix.insert(cell)?;
        }
        Ok(matrix)
    }
}

impl From<StrategyMatrix> for MatrixRepr {
    fn from(matrix: StrategyMatrix) -> MatrixRepr {
        MatrixRepr {
            label: matrix.label.clone(),
            cells: matrix.cells.into_values().collect(),
        }
    }
}

impl StrategyMatrix {
    pub fn new(label: &str) -> StrategyMatrix {
        StrategyMatrix {
            label: label.to_string(),
            cells: BTreeMap::new(),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Insert one cell; a second cell for the same combination is an error
    /// that names both contributing runs.
    pub fn insert(&mut self, cell: Cell) -> Result<()> {
        let key = cell.key();
        if let Some(existing) = self.cells.get(&key) {
            return Err(Error::DuplicateCell {
                key: key_label(cell.train, cell.test, &cell.benchmark),
                first: existing.run_id.clone(),
                second: cell.run_id.clone(),
            });
        }
        self.cells.insert(key, cell);
        Ok(())
    }

    pub fn get(&self, train: Strategy, test: Strategy, benchmark: &str) -> Option<&Cell> {
        self.cells
            .get(&(train, test, benchmark.to_string()))
    }

    /// Cells in canonical order: train-major over N, R, S, D, then
    /// benchmark name.
    pub fn cells(&self) -> impl Iterator<Item = &Cell> {
        self.cells.values()
    }

    /// Benchmarks with at least one cell, sorted by name.
    pub fn benchmarks(&self) -> Vec<String> {
        self.cells
            .keys()
            .map(|(_, _, b)| b.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Train-test combinations with at least one cell, canonical order.
    pub fn combinations(&self) -> Vec<(Strategy, Strategy)> {
        self.cells
            .keys()
            .map(|(train, test, _)| (*train, *test))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Missing (combination, benchmark) pairs over the full 4×4 grid and the
    /// given benchmarks.
    pub fn holes(&self, benchmarks: &[&str]) -> Vec<String> {
        let mut missing = Vec::new();
        for train in Strategy::ALL {
            for test in Strategy::ALL {
                for benchmark in benchmarks {
                    if self.get(train, test, benchmark).is_none() {
                        missing.push(key_label(train, test, benchmark));
                    }
                }
            }
        }
        missing
    }
}

/// Assemble a matrix from grade summaries.
pub fn assemble_matrix(label: &str, summaries: &[GradeSummary]) -> Result<StrategyMatrix> {
    let mut matrix = StrategyMatrix::new(label);
    for summary in summaries {
        matrix.insert(Cell {
            train: summary.train_strategy,
            test: summary.test_strategy,
            benchmark: summary.benchmark.clone(),
            correct: summary.correct,
            total: summary.total,
            pass_at_1: summary.pass_at_1.clone(),
            run_id: summary.run_id.clone(),
        })?;
    }
    Ok(matrix)
}

// ---------------------------------------------------------------------------
// Combination ranking
// ---------------------------------------------------------------------------

/// A train-test combination ranked by [`best_cells`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComboRank {
    pub train: Strategy,
    pub test: Strategy,
    /// Worst score across the ranked benchmarks, two-decimal percent.
    pub floor: String,
}

/// Rank every train-test combination by its scores on the given benchmarks:
/// highest minimum first, total across the benchmarks as the tie-breaker,
/// and canonical strategy order (train-major N, R, S, D) on full ties.
/// Maximizing the floor rewards combinations that are strong *everywhere*,
/// which is what makes co-designed train-test pairs stand out.
///
/// Every combination must be measured on every ranked benchmark; holes are
/// an error listing exactly what is missing.
pub fn best_cells(matrix: &StrategyMatrix, benchmarks: &[&str]) -> Result<Vec<ComboRank>> {
    if benchmarks.is_empty() {
        return Err(Error::Invalid(
            "ranking needs at least one benchmark".to_string(),
        ));
    }
    let mut missing = Vec::new();
    let mut scored: Vec<(Rational, Rational, Strategy, Strategy)> = Vec::new();
    for train in Strategy::ALL {
        for test in Strategy::ALL {
            let mut min: Option<Rational> = None;
            let mut sum = Rational::integer(0);
            for benchmark in benchmarks {
                match matrix.get(train, test, benchmark) {
                    Some(cell) => {
                        let score = cell.pass().as_rational();
                        min = Some(match min {
                            Some(m) if m <= score => m,
                            _ => score,
                        });
                        sum = sum.checked_add(score).expect("scores stay small");
                    }
                    None => missing.push(key_label(train, test, benchmark)),
                }
            }
            if let Some(min) = min {
                scored.push((min, sum, train, test));
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::MatrixIncomplete(missing.join(", ")));
    }

    // Stable sort over the canonical enumeration order, so full ties keep
    // train-major N, R, S, D order.
    scored.sort_by(|a, b| (b.0, b.1).cmp(&(a.0, a.1)));
    Ok(scored
        .into_iter()
        .map(|(min, _, train, test)| ComboRank {
            train,
            test,
            floor: percent_of(min),
        })
        .collect())
}

fn percent_of(score: Rational) -> String {
    // score is correct/total in [0, 1]; reuse the exact display rule.
    match (u32::try_from(score.num()), u32::try_from(score.den())) {
        (Ok(correct), Ok(total)) => PassAt1 { correct, total }.percent_string(),
        _ => format!("{score}"),
    }
}

// ---------------------------------------------------------------------------
// Majority voting
// ---------------------------------------------------------------------------

/// How a three-way disagreement is resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Take the first member's answer, in spec order.
    First,
}

impl fmt::Display for TieBreak {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TieBreak::First => write!(f, "first"),
        }
    }
}

impl FromStr for TieBreak {
    type Err = Error;
    fn from_str(s: &str) -> Result<TieBreak> {
        match s {
            "first" => Ok(TieBreak::First),
            other => Err(Error::VoteSpec(format!(
                "unknown tie-break rule {other:?} (expected \"first\")"
            ))),
        }
    }
}

impl Default for TieBreak {
    fn default() -> TieBreak {
        TieBreak::First
    }
}

/// Which runs vote together and how ties resolve. Members must be three
/// *distinct* runs: voting one run against itself under greedy decoding is
/// a disguised single run, so it is rejected rather than silently averaged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteSpec {
    pub members: Vec<String>,
    #[serde(default)]
    pub tie_break: TieBreak,
}

impl VoteSpec {
    pub fn validate(&self) -> Result<()> {
        if self.members.len() != 3 {
            return Err(Error::VoteSpec(format!(
                "exactly 3 members required, got {}",
                self.members.len()
            )));
        }
        for (i, a) in self.members.iter().enumerate() {
            for b in &self.members[i + 1..] {
                if a == b {
                    return Err(Error::VoteSpec(format!(
                        "members must be distinct runs, but \"{a}\" appears twice"
                    )));
                }
            }
        }
        Ok(())
    }
}

pub fn load_vote_spec(path: &Path) -> Result<VoteSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let spec: VoteSpec = serde_json::from_str(&text).map_err(|e| Error::Malformed {
        path: path.to_path_buf(),
        line: e.line(),
        detail: e.to_string(),
    })?;
    spec.validate()?;
    Ok(spec)
}

/// What settled one question's vote.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteBasis {
    Unanimous,
    Majority,
    TieBreak,
}

/// One question's vote: every member's answer, the chosen one, and why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteQuestion {
    pub query_id: String,
    pub member_answers: Vec<Option<CanonicalAnswer>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub chosen: Option<CanonicalAnswer>,
    pub basis: VoteBasis,
    pub correct: bool,
}

/// A full vote over one benchmark. `tie_break` names the rule applied, so
/// no outcome is ambiguous about how disagreements were settled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteOutcome {
    pub benchmark: String,
    pub members: Vec<String>,
    /// Train-test combinations of the members, e.g. "S-D D-S R-R".
    pub member_label: String,
    pub tie_break: String,
    pub correct: u32,
    pub total: u32,
    /// Three-decimal fraction, e.g. "0.800".
    pub score: String,
    pub questions: Vec<VoteQuestion>,
}

impl VoteOutcome {
    pub fn pass(&self) -> PassAt1 {
        PassAt1 {
            correct: self.correct,
            total: self.total,
        }
    }
}

/// Majority-vote three graded runs question by question.
///
/// Any two members whose canonical answers are equivalent decide the
/// question (answers are compared with the same equivalence the grader
/// uses, so "1/2" and "0.5" vote together). Members that produced no
/// parseable answer never agree with anything. With no agreeing pair at
/// all, the tie-break rule picks — under "first", the first member's
/// answer, parseable or not.
pub fn majority_vote(
    spec: &VoteSpec,
    grades: &[(GradeSummary, Vec<GradeRecord>)],
) -> Result<VoteOutcome> {
    spec.validate()?;
    if grades.len() != spec.members.len() {
        return Err(Error::VoteSpec(format!(
            "spec names {} member(s) but {} grade file(s) were supplied",
            spec.members.len(),
            grades.len()
        )));
    }

    // Reorder the supplied grades to spec order.
    let mut by_run: HashMap<&str, &(GradeSummary, Vec<GradeRecord>)> = HashMap::new();
    for grade in grades {
        if by_run.insert(grade.0.run_id.as_str(), grade).is_some() {
            return Err(Error::VoteSpec(format!(
                "run \"{}\" was supplied twice",
                grade.0.run_id
            )));
        }
    }
    let members: Vec<&(GradeSummary, Vec<GradeRecord>)> = spec
        .members
        .iter()
        .map(|run_id| {
            by_run.get(run_id.as_str()).copied().ok_or_else(|| {
                Error::VoteSpec(format!("no grade file supplied for member \"{run_id}\""))
            })
        })
        .collect::<Result<_>>()?;

    let benchmark = &members[0].0.benchmark;
    for (summary, _) in members.iter().skip(1) {
        if &summary.benchmark != benchmark {
            return Err(Error::VoteSpec(format!(
                "members grade different benchmarks: \"{benchmark}\" vs \"{}\"",
                summary.benchmark
            )));
        }
    }

    check_question_alignment(&members)?;

    // Index members 2 and 3 by query id; iterate in member 1's order.
    let lookup: Vec<HashMap<&str, &GradeRecord>> = members[1..]
        .iter()
        .map(|(_, records)| {
            records
                .iter()
                .map(|r| (r.query_id.as_str(), r))
                .collect()
        })
        .collect();

    let mut questions = Vec::with_capacity(members[0].1.len());
    let mut correct = 0u32;
    for first in &members[0].1 {
        let row: [&GradeRecord; 3] = [
            first,
            lookup[0][first.query_id.as_str()],
            lookup[1][first.query_id.as_str()],
        ];
        let gold = &row[0].gold_canonical;
        for record in &row[1..] {
            if !answers_equal(&record.gold_canonical, gold) {
                return Err(Error::VoteSpec(format!(
                    "members disagree on the gold answer for \"{}\"",
                    first.query_id
                )));
            }
        }

        let answers: Vec<Option<CanonicalAnswer>> =
            row.iter().map(|r| r.canonical.clone()).collect();
        let agree = |i: usize, j: usize| -> bool {
            match (&answers[i], &answers[j]) {
                (Some(a), Some(b)) => answers_equal(a, b),
                _ => false,
            }
        };
        let (chosen, basis) = if agree(0, 1) && agree(0, 2) {
            (answers[0].clone(), VoteBasis::Unanimous)
        } else if agree(0, 1) || agree(0, 2) {
            (answers[0].clone(), VoteBasis::Majority)
        } else if agree(1, 2) {
            (answers[1].clone(), VoteBasis::Majority)
        } else {
            match spec.tie_break {
                TieBreak::First => (answers[0].clone(), VoteBasis::TieBreak),
            }
        };
        let is_correct = chosen
            .as_ref()
            .is_some_and(|c| answers_equal(c, gold));
        if is_correct {
            correct += 1;
        }
        questions.push(VoteQuestion {
            query_id: first.query_id.clone(),
            member_answers: answers,
            chosen,
            basis,
            correct: is_correct,
        });
    }

    let pass = PassAt1 {
        correct,
        total: questions.len() as u32,
    };
    let member_label = members
        .iter()
        .map(|(s, _)| format!("{}-{}", s.train_strategy, s.test_strategy))
        .collect::<Vec<_>>()
        .join(" ");
    Ok(VoteOutcome {
        benchmark: benchmark.clone(),
        members: spec.members.clone(),
        member_label,
        tie_break: spec.tie_break.to_string(),
        correct,
        total: pass.total,
        score: pass.fraction_string(),
        questions,
    })
}

fn check_question_alignment(members: &[&(GradeSummary, Vec<GradeRecord>)]) -> Result<()> {
    let sets: Vec<BTreeSet<&str>> = members
        .iter()
        .map(|(_, records)| records.iter().map(|r| r.query_id.as_str()).collect())
        .collect();
    for (i, other) in sets.iter().enumerate().skip(1) {
        if other != &sets[0] {
            let only_first: Vec<&str> = sets[0].difference(other).copied().collect();
            let only_other: Vec<&str> = other.difference(&sets[0]).copied().collect();
            let mut parts = Vec::new();
            if !only_first.is_empty() {
                parts.push(format!(
                    "only in \"{}\": {}",
                    members[0].0.run_id,
                    only_first.join(", ")
                ));
            }
            if !only_other.is_empty() {
                parts.push(format!(
                    "only in \"{}\": {}",
                    members[i].0.run_id,
                    only_other.join(", ")
                ));
            }
            return Err(Error::VoteMisaligned(parts.join("; ")));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// A row supplied verbatim for the comparison table — external baselines
/// this toolchain did not measure and therefore does not recompute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub setup: Option<String>,
    pub scores: BTreeMap<String, String>,
}

/// Everything a report renders.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub matrix: Vec<StrategyMatrix>,
    pub votes: Vec<VoteOutcome>,
    pub comparisons: Vec<ComparisonRow>,
}

impl Report {
    /// Benchmark column order: every benchmark that appears anywhere,
    /// sorted by name, unless an explicit order is given.
    fn benchmark_columns(&self, explicit: Option<&[String]>) -> Vec<String> {
        if let Some(order) = explicit {
            return order.to_vec();
        }
        let mut all = BTreeSet::new();
        for matrix in &self.matrix {
            all.extend(matrix.benchmarks());
        }
        for vote in &self.votes {
            all.insert(vote.benchmark.clone());
        }
        for row in &self.comparisons {
            all.extend(row.scores.keys().cloned());
        }
        all.into_iter().collect()
    }
}

/// Render the markdown report: one strategy-matrix table per base dataset,
/// a vote table, and a comparison table, in that order. Sections without
/// content are omitted, except the matrix section, which states explicitly
/// when there is nothing to show.
pub fn render_markdown(report: &Report, benchmark_order: Option<&[String]>) -> String {
    let columns = report.benchmark_columns(benchmark_order);
    let mut out = String::new();
    out.push_str("# Evaluation report\n");

    if report.matrix.is_empty() {
        out.push_str("\n## Strategy matrix\n\n(no cells)\n");
    }
    for matrix in &report.matrix {
        out.push_str(&format!("\n## Strategy matrix — {}\n\n", matrix.label()));
        if matrix.is_empty() {
            out.push_str("(no cells)\n");
            continue;
        }
        let matrix_columns: Vec<String> = columns
            .iter()
            .filter(|c| matrix.benchmarks().contains(*c))
            .cloned()
            .collect();
        out.push_str(&format!("| Train | Test | {} |\n", matrix_columns.join(" | ")));
        out.push_str(&format!("| --- | --- |{}\n", " --- |".repeat(matrix_columns.len())));
        for (train, test) in matrix.combinations() {
            let scores: Vec<String> = matrix_columns
                .iter()
                .map(|benchmark| {
                    matrix
                        .get(train, test, benchmark)
                        .map(|cell| cell.pass_at_1.clone())
                        .unwrap_or_else(|| "-".to_string())
                })
                .collect();
            out.push_str(&format!("| {train} | {test} | {} |\n", scores.join(" | ")));
        }
    }

    if !report.votes.is_empty() {
        out.push_str("\n## Majority vote\n\n");
        // One row per member combination, preserving input order.
        let mut rows: Vec<(String, String, BTreeMap<String, String>)> = Vec::new();
        for vote in &report.votes {
            match rows
                .iter_mut()
                .find(|(label, tie, _)| label == &vote.member_label && tie == &vote.tie_break)
            {
                Some((_, _, scores)) => {
                    scores.insert(vote.benchmark.clone(), vote.score.clone());
                }
                None => {
                    let mut scores = BTreeMap::new();
                    scores.insert(vote.benchmark.clone(), vote.score.clone());
                    rows.push((vote.member_label.clone(), vote.tie_break.clone(), scores));
                }
            }
        }
        let vote_columns: Vec<String> = columns
            .iter()
            .filter(|c| report.votes.iter().any(|v| &v.benchmark == *c))
            .cloned()
            .collect();
        out.push_str(&format!(
            "| Members | Tie-break | {} |\n",
            vote_columns.join(" | ")
        ));
        out.push_str(&format!(
            "| --- | --- |{}\n",
            " --- |".repeat(vote_columns.len())
        ));
        for (label, tie, scores) in rows {
            let cells: Vec<String> = vote_columns
                .iter()
                .map(|benchmark| scores.get(benchmark).cloned().unwrap_or_else(|| "-".to_string()))
                .collect();
            out.push_str(&format!("| {label} | {tie} | {} |\n", cells.join(" | ")));
        }
    }

    if !report.comparisons.is_empty() {
        out.push_str("\n## Comparison\n\n");
        let cmp_columns: Vec<String> = columns
            .iter()
            .filter(|c| report.comparisons.iter().any(|r| r.scores.contains_key(*c)))
            .cloned()
            .collect();
        out.push_str(&format!("| Model | Setup | {} |\n", cmp_columns.join(" | ")));
        out.push_str(&format!(
            "| --- | --- |{}\n",
            " --- |".repeat(cmp_columns.len())
        ));
        for row in &report.comparisons {
            let cells: Vec<String> = cmp_columns
                .iter()
                .map(|benchmark| row.scores.get(benchmark).cloned().unwrap_or_else(|| "-".to_string()))
                .collect();
            out.push_str(&format!(
                "| {} | {} | {} |\n",
                row.model,
                row.setup.as_deref().unwrap_or("-"),
                cells.join(" | ")
            ));
        }
    }
    out
}

/// The machine-readable mirror of the markdown report; parsing it back
/// reconstructs the matrices, votes, and comparison rows exactly.
pub fn render_json(report: &Report) -> String {
    let mut text = serde_json::to_string_pretty(report).expect("report serializes");
    text.push('\n');
    text
}

pub fn parse_report_json(text: &str) -> Result<Report> {
    serde_json::from_str(text).map_err(|e| Error::Invalid(format!("report JSON: {e}")))
}
