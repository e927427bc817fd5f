//! Corpus ingestion: load raw reasoning records, keep the ones that commit
//! to a final answer, and sample deterministically.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// One reasoning record: a query plus the full reasoning trace ending in a
/// final answer. `gold_answer` is present on benchmark-style records and
/// usually absent on training records. Fields this tool does not interpret
/// ride along in `extra` and survive passthrough (re-serialized in
/// alphabetical order after the named fields).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SourceRecord {
    pub id: String,
    pub query: String,
    pub output: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gold_answer: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(flatten, skip_serializing_if = "serde_json::Map::is_empty")]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

/// The on-disk shape: `id` is optional in input files and assigned from the
/// file position when missing.
#[derive(Debug, Deserialize)]
struct RecordLine {
    #[serde(default)]
    id: Option<String>,
    query: String,
    output: String,
    #[serde(default)]
    gold_answer: Option<String>,
    #[serde(default)]
    source: Option<String>,
    #[serde(flatten)]
    extra: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordFormat {
    /// Newline-delimited JSON, one record per line.
    Ndjson,
    /// A single JSON array of record objects.
    Json,
}

impl FromStr for RecordFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ndjson" | "jsonl" => Ok(RecordFormat::Ndjson),
            "json" => Ok(RecordFormat::Json),
            other => Err(Error::Config(format!(
                "unknown record format {other:?} (expected ndjson or json)"
            ))),
        }
    }
}

/// Keep only records whose `output` contains every required substring.
/// Matching is case-sensitive and literal — these are exact textual markers,
/// not patterns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusFilter {
    pub required_substrings: Vec<String>,
}

impl Default for CorpusFilter {
    fn default() -> Self {
        CorpusFilter {
            required_substrings: vec!["final answer".to_string(), "boxed{".to_string()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterStats {
    pub examined: usize,
    pub kept: usize,
    pub dropped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    UniformWithoutReplacement,
    Prefix,
}

impl FromStr for SampleMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" | "uniform_without_replacement" => Ok(SampleMode::UniformWithoutReplacement),
            "prefix" => Ok(SampleMode::Prefix),
            other => Err(Error::Config(format!(
                "unknown sample mode {other:?} (expected uniform or prefix)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub seed: u64,
    pub count: usize,
    pub mode: SampleMode,
}

/// Load a record file. Every record is validated (non-empty query and
/// output, unique ids); records without an `id` get
/// `"<filename>:<line-number>"` so downstream artifacts can always refer
/// back. Files that are not valid UTF-8 are rejected outright — repairing
/// training text silently would be worse than failing.
fn is_meta_header(line: &str) -> bool {
    matches!(
        serde_json::from_str::<serde_json::Value>(line),
        Ok(serde_json::Value::Object(map)) if map.len() == 1 && map.contains_key("meta")
    )
}

pub fn load_records(path: &Path, format: RecordFormat) -> Result<Vec<SourceRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let filename = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());

    let lines: Vec<(usize, RecordLine)> = match format {
        RecordFormat::Ndjson => {
            let mut parsed = Vec::new();
            let mut first_content_line = true;
            for (idx, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                // Tools in this workspace emit NDJSON artifacts with a leading
                // {"meta": …} provenance header; tolerate one so their outputs
                // can be fed back in as corpora.
                if first_content_line {
                    first_content_line = false;
                    if is_meta_header(line) {
                        continue;
                    }
                }
                let record: RecordLine =
                    serde_json::from_str(line).map_err(|e| Error::Malformed {
                        path: path.to_path_buf(),
                        line: idx + 1,
                        detail: e.to_string(),
                    })?;
                parsed.push((idx + 1, record));
            }
            parsed
        }
        RecordFormat::Json => {
            let records: Vec<RecordLine> =
                serde_json::from_str(&text).map_err(|e| Error::Malformed {
                    path: path.to_path_buf(),
                    line: e.line(),
                    detail: e.to_string(),
                })?;
            records
                .into_iter()
                .enumerate()
                .map(|(idx, r)| (idx + 1, r))
                .collect()
        }
    };

    let mut records = Vec::with_capacity(lines.len());
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (lineno, line) in lines {
        if line.query.trim().is_empty() {
            return Err(Error::Malformed {
                path: path.to_path_buf(),
                line: lineno,
                detail: "query is empty after trimming".to_string(),
            });
        }
        if line.output.trim().is_empty() {
            return Err(Error::Malformed {
                path: path.to_path_buf(),
                line: lineno,
                detail: "output is empty after trimming".to_string(),
            });
        }
        let id = line.id.unwrap_or_else(|| format!("{filename}:{lineno}"));
        if let Some(first) = seen.insert(id.clone(), lineno) {
            return Err(Error::DuplicateId {
                path: path.to_path_buf(),
                id,
                first,
                second: lineno,
            });
        }
        records.push(SourceRecord {
            id,
            query: line.query,
            output: line.output,
            gold_answer: line.gold_answer,
            source: line.source,
            extra: line.extra,
        });
    }
    Ok(records)
}

/// Write records as newline-delimited JSON (ids always materialized, so a
/// round trip is stable).
pub fn save_records(path: &Path, records: &[SourceRecord]) -> Result<()> {
    let mut out = Vec::new();
    for record in records {
        serde_json::to_writer(&mut out, record).expect("record serializes");
        out.push(b'\n');
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}

/// Keep exactly the records whose output contains every marker, in their
/// original order. Idempotent by construction.
pub fn filter_records(
    records: &[SourceRecord],
    filter: &CorpusFilter,
) -> (Vec<SourceRecord>, FilterStats) {
    let kept: Vec<SourceRecord> = records
        .iter()
        .filter(|r| {
            filter
                .required_substrings
                .iter()
                .all(|marker| r.output.contains(marker))
        })
        .cloned()
        .collect();
    let stats = FilterStats {
        examined: records.len(),
        kept: kept.len(),
        dropped: records.len() - kept.len(),
    };
    (kept, stats)
}

/// Deterministic selection: a pure function of (records, spec).
///
/// Uniform mode draws without replacement in draw order, which gives the
/// useful prefix property — the first k records of a count-n selection equal
/// the count-k selection under the same seed, so a small dataset can be an
/// exact prefix of a larger one. Prefix mode takes the first `count`
/// records as-is.
pub fn sample_records(records: &[SourceRecord], spec: &SampleSpec) -> Result<Vec<SourceRecord>> {
    if spec.count > records.len() {
        return Err(Error::SampleTooLarge {
            requested: spec.count,
            pool: records.len(),
        });
    }
    match spec.mode {
        SampleMode::Prefix => Ok(records[..spec.count].to_vec()),
        SampleMode::UniformWithoutReplacement => {
            let mut rng = rng::seeded(spec.seed);
            let indices = rng::sample_indices(&mut rng, records.len(), spec.count);
            Ok(indices.into_iter().map(|i| records[i].clone()).collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn record(id: &str, output: &str) -> SourceRecord {
        SourceRecord {
            id: id.to_string(),
            query: format!("query for {id}"),
            output: output.to_string(),
            gold_answer: None,
            source: None,
            extra: serde_json::Map::new(),
        }
    }

    fn write_lines(dir: &tempfile::TempDir, name: &str, lines: &[&str]) -> std::path::PathBuf {
        let path = dir.path().join(name);
        std::fs::write(&path, lines.join("\n")).unwrap();
        path
    }

    #[test]
    fn loads_records_in_file_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_lines(
            &dir,
            "data.jsonl",
            &[
                r#"{"id":"a","query":"q1","output":"o1"}"#,
                r#"{"id":"b","query":"q2","output":"o2","gold_answer":"7"}"#,
                r#"{"id":"c","query":"q3","output":"o3","source":"tag"}"#,
            ],
        );
        let records = load_records(&path, RecordFormat::Ndjson).unwrap();
        assert_eq!(
            records.iter().map(|r| r.id.as_str()).collect::<Vec<_>>(),
            ["a", "b", "c"]
        );
        assert_eq!(records[1].gold_answer.as_deref(), Some("7"));
        assert_eq!(records[2].source.as_deref(), Some("tag"));
    }

    #[test]
    fn a_leading_meta_header_line_is_tolerated() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_lines(
            &dir,
            "data.jsonl",
            &[
                r#"{"meta":{"config_hash":"abc","seed":7}}"#,
                r#"{"id":"a","query":"q1","output":"o1"}"#,
                r#"{"id":"b","query":"q2","output":"o2"}"#,
            ],
        );
        let records = load_records(&path, RecordFormat::Ndjson).unwrap();
        assert_eq!(
            records.iter().map(|r| r.id.as_str()).collect::<Vec<_>>(),
            ["a", "b"]
        );
        // Only the first line gets header treatment; a mid-file {"meta":…}
        // line is an ordinary (malformed) record.
        let path = write_lines(
            &dir,
            "mid.jsonl",
            &[
                r#"{"id":"a","query":"q1","output":"o1"}"#,
                r#"{"meta":{"config_hash":"abc"}}"#,
            ],
        );
        assert!(load_records(&path, RecordFormat::Ndjson).is_err());
    }

    #[test]
    fn missing_ids_fall_back_to_file_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_lines(
            &dir,
            "data.jsonl",
            &[
                r#"{"query":"q1","output":"o1"}"#,
                "",
                r#"{"query":"q3","output":"o3"}"#,
            ],
        );
        let records = load_records(&path, RecordFormat::Ndjson).unwrap();
        assert_eq!(records[0].id, "data.jsonl:1");
        // Blank lines are skipped but still count toward line numbers.
        assert_eq!(records[1].id, "data.jsonl:3");
    }

    #[test]
    fn malformed_line_errors_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_lines(
            &dir,
            "data.jsonl",
            &[
                r#"{"id":"a","query":"q1","output":"o1"}"#,
                r#"{"id":"b","output":"missing query"}"#,
            ],
        );
        let err = load_records(&path, RecordFormat::Ndjson).unwrap_err();
        assert!(matches!(err, Error::Malformed { line: 2, .. }), "got {err}");
        assert!(err.to_string().contains("query"));
    }

    #[test]
    fn duplicate_ids_are_rejected_by_name() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_lines(
            &dir,
            "data.jsonl",
            &[
                r#"{"id":"q7","query":"a","output":"x"}"#,
                r#"{"id":"q8","query":"b","output":"y"}"#,
                r#"{"id":"q7","query":"c","output":"z"}"#,
            ],
        );
        let err = load_records(&path, RecordFormat::Ndjson).unwrap_err();
        assert!(
            matches!(err, Error::DuplicateId { ref id, first: 1, second: 3, .. } if id == "q7"),
            "got {err}"
        );
    }

    #[test]
    fn empty_query_or_output_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_lines(&dir, "data.jsonl", &[r#"{"query":"  ","output":"o"}"#]);
        let err = load_records(&path, RecordFormat::Ndjson).unwrap_err();
        assert!(err.to_string().contains("query is empty"));
        let path = write_lines(&dir, "data2.jsonl", &[r#"{"query":"q","output":"\t"}"#]);
        let err = load_records(&path, RecordFormat::Ndjson).unwrap_err();
        assert!(err.to_string().contains("output is empty"));
    }

    #[test]
    fn json_array_format_loads_with_positions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.json");
        std::fs::write(
            &path,
            r#"[{"query":"q1","output":"o1"},{"query":"q2","output":"o2"}]"#,
        )
        .unwrap();
        let records = load_records(&path, RecordFormat::Json).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].id, "data.json:1");
        assert_eq!(records[1].id, "data.json:2");
    }

    #[test]
    fn non_utf8_input_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        std::fs::write(&path, [0xff, 0xfe, b'{', b'}']).unwrap();
        let err = load_records(&path, RecordFormat::Ndjson).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn unknown_fields_survive_a_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_lines(
            &dir,
            "data.jsonl",
            &[r#"{"id":"a","query":"q","output":"o","difficulty":3,"tags":["x"]}"#],
        );
        let records = load_records(&path, RecordFormat::Ndjson).unwrap();
        assert_eq!(records[0].extra["difficulty"], 3);
        let out = dir.path().join("out.jsonl");
        save_records(&out, &records).unwrap();
        let text = std::fs::read_to_string(&out).unwrap();
        assert!(text.contains("\"difficulty\":3"));
        assert!(text.contains("\"tags\":[\"x\"]"));
        let reloaded = load_records(&out, RecordFormat::Ndjson).unwrap();
        assert_eq!(records, reloaded);
    }

    #[test]
    fn filter_requires_every_marker() {
        let kept_output = "reasoning… final answer is \\boxed{4}";
        let records = vec![
            record("a", kept_output),
            record("b", "the answer is 4"),
            record("c", "final answer only, no box"),
            record("d", "boxed{9} but no phrase"),
            record("e", "Final Answer is \\boxed{1}"), // wrong case on the phrase
        ];
        let (kept, stats) = filter_records(&records, &CorpusFilter::default());
        assert_eq!(kept.iter().map(|r| r.id.as_str()).collect::<Vec<_>>(), ["a"]);
        assert_eq!(
            stats,
            FilterStats {
                examined: 5,
                kept: 1,
                dropped: 4
            }
        );
    }

    #[test]
    fn filter_preserves_order_and_is_idempotent() {
        let good = "the final answer is \\boxed{1}";
        let records: Vec<SourceRecord> = (0..10)
            .map(|i| {
                record(
                    &format!("r{i}"),
                    if i % 5 < 3 { good } else { "nothing here" },
                )
            })
            .collect();
        let (kept, stats) = filter_records(&records, &CorpusFilter::default());
        assert_eq!(stats.kept, 6);
        assert_eq!(
            kept.iter().map(|r| r.id.as_str()).collect::<Vec<_>>(),
            ["r0", "r1", "r2", "r5", "r6", "r7"]
        );
        let (again, _) = filter_records(&kept, &CorpusFilter::default());
        assert_eq!(kept, again);
    }

    #[test]
    fn prefix_sampling_takes_the_head() {
        let records = vec![record("a", "x"), record("b", "y"), record("c", "z")];
        let spec = SampleSpec {
            seed: 0,
            count: 2,
            mode: SampleMode::Prefix,
        };
        let sampled = sample_records(&records, &spec).unwrap();
        assert_eq!(sampled.iter().map(|r| r.id.as_str()).collect::<Vec<_>>(), ["a", "b"]);
    }

    #[test]
    fn uniform_sampling_is_deterministic_and_distinct() {
        let records: Vec<SourceRecord> =
            (0..10).map(|i| record(&format!("r{i}"), "x")).collect();
        let spec = SampleSpec {
            seed: 42,
            count: 3,
            mode: SampleMode::UniformWithoutReplacement,
        };
        let first = sample_records(&records, &spec).unwrap();
        let second = sample_records(&records, &spec).unwrap();
        assert_eq!(first, second);
        let ids: HashSet<&str> = first.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids.len(), 3);
        for id in &ids {
            assert!(records.iter().any(|r| r.id == *id));
        }
    }

    #[test]
    fn uniform_sampling_draws_subsets_across_many_specs() {
        let mut check_rng = rng::seeded(7);
        for case in 0..200u64 {
            let pool_size = 1 + (rng::uniform(&mut check_rng, 40)) as usize;
            let records: Vec<SourceRecord> = (0..pool_size)
                .map(|i| record(&format!("p{case}-{i}"), "x"))
                .collect();
            let count = rng::uniform(&mut check_rng, pool_size as u64 + 1) as usize;
            let spec = SampleSpec {
                seed: case,
                count,
                mode: SampleMode::UniformWithoutReplacement,
            };
            let sampled = sample_records(&records, &spec).unwrap();
            assert_eq!(sampled.len(), count);
            let ids: HashSet<&str> = sampled.iter().map(|r| r.id.as_str()).collect();
            assert_eq!(ids.len(), count, "duplicate draw in case {case}");
            let pool_ids: HashSet<&str> = records.iter().map(|r| r.id.as_str()).collect();
            assert!(ids.is_subset(&pool_ids), "non-member draw in case {case}");
        }
    }

    #[test]
    fn distinct_seeds_give_distinct_selections() {
        let records: Vec<SourceRecord> =
            (0..100).map(|i| record(&format!("r{i}"), "x")).collect();
        let mut selections = HashSet::new();
        for seed in 0..100u64 {
            let spec = SampleSpec {
                seed,
                count: 10,
                mode: SampleMode::UniformWithoutReplacement,
            };
            let ids: Vec<String> = sample_records(&records, &spec)
                .unwrap()
                .into_iter()
                .map(|r| r.id)
                .collect();
            selections.insert(ids);
        }
        assert!(selections.len() >= 95, "only {} distinct", selections.len());
    }

    #[test]
    fn small_selection_is_a_prefix_of_a_larger_one() {
        let records: Vec<SourceRecord> =
            (0..150).map(|i| record(&format!("r{i}"), "x")).collect();
        let large = sample_records(
            &records,
            &SampleSpec {
                seed: 9,
                count: 30,
                mode: SampleMode::UniformWithoutReplacement,
            },
        )
        .unwrap();
        let small = sample_records(
            &records,
            &SampleSpec {
                seed: 9,
                count: 10,
                mode: SampleMode::UniformWithoutReplacement,
            },
        )
        .unwrap();
        assert_eq!(&large[..10], &small[..]);
    }

    #[test]
    fn oversized_sample_reports_the_pool() {
        let records = vec![record("a", "x")];
        let spec = SampleSpec {
            seed: 1,
            count: 5,
            mode: SampleMode::UniformWithoutReplacement,
        };
        let err = sample_records(&records, &spec).unwrap_err();
        assert!(
            matches!(err, Error::SampleTooLarge { requested: 5, pool: 1 }),
            "got {err}"
        );
    }
}
