//! Evaluation runs: greedy decoding over a test variant, resumable through
//! the request ledger.
//!
//! A run sends every rendered query of a test variant to a model endpoint at
//! temperature 0 and writes one completions file. The file is produced
//! atomically at the end of the run and carries no wall-clock state, so an
//! interrupted run that is restarted over the same ledger converges on a
//! byte-identical file: finished questions replay from the ledger, only the
//! remainder touches the network.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::client::{ChatMessage, ChatRequest, EndpointConfig, LlmClient};
use crate::error::{Error, Result};
use crate::persona::Strategy;
use crate::variant::{Split, Variant};

/// Decoding parameters for evaluation. Greedy on purpose: pass@1 under
/// temperature 0 is the headline metric, so sampling is not an option here.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for DecodeParams {
    fn default() -> DecodeParams {
        DecodeParams {
            temperature: 0.0,
            max_tokens: 32768,
        }
    }
}

/// Full provenance of one evaluation run; written as the completions file
/// header so every downstream artifact can name exactly what produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRun {
    /// Encodes model, train strategy, test strategy, benchmark, and seed.
    pub run_id: String,
    pub base_url: String,
    pub model_name: String,
    pub variant_path: String,
    pub variant_meta_hash: String,
    pub benchmark: String,
    /// Strategy the evaluated model was fine-tuned with; the train side of
    /// the train-test combination this run measures.
    pub train_strategy: Strategy,
    pub test_strategy: Strategy,
    pub seed: u64,
    pub decode: DecodeParams,
    pub config_hash: String,
}

impl EvalRun {
    /// Describe a run over `variant` (which must be a test split) against
    /// `endpoint`. The test strategy, benchmark name, and seed come from the
    /// variant itself; the train strategy is an assertion about the model
    /// behind the endpoint and must be supplied by the caller.
    pub fn new(
        endpoint: &EndpointConfig,
        variant: &Variant,
        variant_path: &str,
        train_strategy: Strategy,
        config_hash: &str,
    ) -> Result<EvalRun> {
        if variant.meta.split != Split::Test {
            return Err(Error::Invalid(format!(
                "evaluation needs a test variant, but \"{}\" is a {} split",
                variant.meta.base_name, variant.meta.split
            )));
        }
        let run_id = make_run_id(
            &endpoint.model_name,
            train_strategy,
            variant.meta.strategy,
            &variant.meta.base_name,
            variant.meta.seed,
        );
        Ok(EvalRun {
            run_id,
            base_url: endpoint.base_url.clone(),
            model_name: endpoint.model_name.clone(),
            variant_path: variant_path.to_string(),
            variant_meta_hash: crate::variant::variant_meta_hash(&variant.meta),
            benchmark: variant.meta.base_name.clone(),
            train_strategy,
            test_strategy: variant.meta.strategy,
            seed: variant.meta.seed,
            decode: DecodeParams::default(),
            config_hash: config_hash.to_string(),
        })
    }

    /// The train-test combination this run measures, e.g. "S-D".
    pub fn combination(&self) -> String {
        format!("{}-{}", self.train_strategy, self.test_strategy)
    }
}

/// `{model}_{train}-{test}_{benchmark}_s{seed}`, restricted to
/// filesystem-safe characters.
pub fn make_run_id(
    model: &str,
    train: Strategy,
    test: Strategy,
    benchmark: &str,
    seed: u64,
) -> String {
    let raw = format!("{model}_{train}-{test}_{benchmark}_s{seed}");
    raw.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '-'
            }
        })
        .collect()
}

/// One model completion for one benchmark question. Endpoint failures are
/// embedded as records with `error` set (and grade as incorrect) rather than
/// silently shrinking the denominator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRecord {
    pub query_id: String,
    pub completion: String,
    pub finish_reason: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

/// In-memory view of one completion, richer than the persisted record.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub query_id: String,
    pub rendered_query: String,
    pub text: String,
    pub finish_reason: String,
    /// Crude length proxy (bytes / 4), for spotting truncation in logs.
    pub token_estimate: usize,
    pub error: Option<String>,
}

impl Completion {
    fn to_record(&self) -> CompletionRecord {
        CompletionRecord {
            query_id: self.query_id.clone(),
            completion: self.text.clone(),
            finish_reason: self.finish_reason.clone(),
            error: self.error.clone(),
        }
    }
}

/// Outcome of [`run_eval`]: the completions in variant order, plus whether
/// the output file actually changed on disk.
#[derive(Debug)]
pub struct EvalOutcome {
    pub completions: Vec<Completion>,
    pub failed: usize,
    pub wrote_file: bool,
}

/// Execute an evaluation run and write its completions file.
///
/// Every question is attempted; per-question failures become error records.
/// Only when *all* questions fail is the run aborted (nothing useful was
/// measured and the endpoint is presumed down), and no file is written.
pub fn run_eval(
    client: &LlmClient,
    run: &EvalRun,
    variant: &Variant,
    out_path: &Path,
) -> Result<EvalOutcome> {
    if variant.meta.split != Split::Test {
        return Err(Error::Invalid(format!(
            "evaluation needs a test variant, but \"{}\" is a {} split",
            variant.meta.base_name, variant.meta.split
        )));
    }
    if run.decode.temperature != 0.0 {
        return Err(Error::Config(format!(
            "evaluation decoding must be greedy (temperature 0), got {}",
            run.decode.temperature
        )));
    }

    let requests: Vec<ChatRequest> = variant
        .records
        .iter()
        .map(|r| ChatRequest {
            messages: vec![ChatMessage::user(r.rendered_query.clone())],
            temperature: run.decode.temperature,
            max_tokens: run.decode.max_tokens,
        })
        .collect();

    let results = client.complete_batch(&requests);
    let mut completions = Vec::with_capacity(results.len());
    let mut failed = 0usize;
    for (result, record) in results.into_iter().zip(&variant.records) {
        let completion = match result {
            Ok(done) => Completion {
                query_id: record.query_id.clone(),
                rendered_query: record.rendered_query.clone(),
                token_estimate: done.text.len().div_ceil(4),
                text: done.text,
                finish_reason: done.finish_reason,
                error: None,
            },
            Err(e) => {
                failed += 1;
                Completion {
                    query_id: record.query_id.clone(),
                    rendered_query: record.rendered_query.clone(),
                    text: String::new(),
                    finish_reason: "error".to_string(),
                    token_estimate: 0,
                    error: Some(e.to_string()),
                }
            }
        };
        completions.push(completion);
    }

    if failed == completions.len() && !completions.is_empty() {
        return Err(Error::EndpointUnreachable(failed));
    }

    let records: Vec<CompletionRecord> = completions.iter().map(|c| c.to_record()).collect();
    let wrote_file = write_completions(out_path, run, &records)?;
    Ok(EvalOutcome {
        completions,
        failed,
        wrote_file,
    })
}

#[derive(Serialize, Deserialize)]
struct CompletionsHeader {
    run: EvalRun,
}

fn completions_bytes(run: &EvalRun, records: &[CompletionRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    serde_json::to_writer(&mut out, &CompletionsHeader { run: run.clone() })
        .expect("run serializes");
    out.push(b'\n');
    for record in records {
        serde_json::to_writer(&mut out, record).expect("completion serializes");
        out.push(b'\n');
    }
    out
}

/// Write a completions file atomically. Returns false (leaving the existing
/// file untouched) when it already holds exactly these bytes, so re-running
/// a finished eval is a no-op on disk as well as on the network.
pub fn write_completions(
    path: &Path,
    run: &EvalRun,
    records: &[CompletionRecord],
) -> Result<bool> {
    let bytes = completions_bytes(run, records);
    if let Ok(existing) = std::fs::read(path) {
        if existing == bytes {
            return Ok(false);
        }
    }
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(parent) = parent {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut tmp = tempfile::NamedTempFile::new_in(parent.unwrap_or(Path::new(".")))
        .map_err(|e| Error::io(path, e))?;
    tmp.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(true)
}

/// Read a completions file: the run descriptor header plus one record per
/// question, in the order the variant listed them.
pub fn read_completions(path: &Path) -> Result<(EvalRun, Vec<CompletionRecord>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();

    let (_, first) = lines.next().ok_or_else(|| Error::Malformed {
        path: path.to_path_buf(),
        line: 1,
        detail: "empty completions file (missing run header)".to_string(),
    })?;
    let first = first.map_err(|e| Error::io(path, e))?;
    let header: CompletionsHeader =
        serde_json::from_str(&first).map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            line: 1,
            detail: format!("bad header: {e}"),
        })?;

    let mut records = Vec::new();
    for (idx, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CompletionRecord =
            serde_json::from_str(&line).map_err(|e| Error::Malformed {
                path: path.to_path_buf(),
                line: idx + 1,
                detail: e.to_string(),
            })?;
        records.push(record);
    }
    Ok((header.run, records))
}
