//! Dataset variants: the result of applying one strategy to one base — a
//! training corpus or a benchmark's question list — plus the training
//! manifest that tells a fine-tuning job how to consume a train variant.
//!
//! A variant file is self-describing: a `{"meta": …}` header capturing the
//! base, strategy, split, seed, template hashes, and config hash, followed
//! by one JSON line per record. Builds are atomic (temp file + rename) and
//! all-or-nothing: if any persona fails to generate, no file appears and
//! the error lists every failing query.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::SourceRecord;
use crate::error::{Error, Result};
use crate::grader::BenchmarkSet;
use crate::persona::{augment_query, PersonaEngine, QueryRef, Strategy, TemplateSet};

/// Which side of the pipeline a variant feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    /// Fine-tuning data: records keep their supervision `output`.
    Train,
    /// Evaluation prompts: records keep their `gold_answer`.
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Test => write!(f, "test"),
        }
    }
}

/// What a variant is built from.
pub enum VariantSource<'a> {
    Train(&'a [SourceRecord]),
    Test(&'a BenchmarkSet),
}

/// Variant file header: full provenance for the dataset below it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantMeta {
    pub base_name: String,
    pub strategy: Strategy,
    pub split: Split,
    pub seed: u64,
    pub size: usize,
    /// Hashes of the templates that shaped these records (empty for N).
    pub template_hashes: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator_model: Option<String>,
    pub created_at_unix: u64,
    pub config_hash: String,
}

/// One dataset row. Train rows carry `output`, test rows `gold_answer`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantRecord {
    pub query_id: String,
    pub rendered_query: String,
    pub original_query: String,
    pub strategy: Strategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub persona_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_answer: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub meta: VariantMeta,
    pub records: Vec<VariantRecord>,
}

#[derive(Serialize, Deserialize)]
struct VariantHeader {
    meta: VariantMeta,
}

/// Hash of a variant's meta with the creation timestamp zeroed, so manifests
/// can pin the dataset they were written for across byte-identical rebuilds.
pub fn variant_meta_hash(meta: &VariantMeta) -> String {
    let mut stamped = meta.clone();
    stamped.created_at_unix = 0;
    let json = serde_json::to_string(&stamped).expect("meta serializes");
    hex::encode(Sha256::digest(json.as_bytes()))
}

/// Everything fixed about a build except the source and persona engine.
pub struct VariantBuilder<'a> {
    pub base_name: &'a str,
    pub strategy: Strategy,
    pub seed: u64,
    pub config_hash: &'a str,
    pub generator_model: Option<&'a str>,
    pub templates: &'a TemplateSet,
}

impl VariantBuilder<'_> {
    /// Build every record or fail with the complete list of per-query
    /// persona failures. The source's order is preserved, so variants of
    /// the same base are always aligned with each other.
    pub fn build(&self, source: &VariantSource<'_>, engine: &dyn PersonaEngine) -> Result<Variant> {
        let queries: Vec<QueryRef<'_>> = match source {
            VariantSource::Train(records) => records
                .iter()
                .map(|r| QueryRef {
                    id: &r.id,
                    query: &r.query,
                })
                .collect(),
            VariantSource::Test(benchmark) => benchmark
                .questions
                .iter()
                .map(|q| QueryRef {
                    id: &q.query_id,
                    query: &q.query,
                })
                .collect(),
        };

        let personas = if self.strategy == Strategy::N {
            queries.iter().map(|_| None).collect::<Vec<_>>()
        } else {
            let results = engine.personas_for(&queries, self.strategy);
            let failures: Vec<(String, String)> = results
                .iter()
                .zip(&queries)
                .filter_map(|(r, q)| {
                    r.as_ref()
                        .err()
                        .map(|e| (q.id.to_string(), e.to_string()))
                })
                .collect();
            if !failures.is_empty() {
                let summary = failures
                    .iter()
                    .map(|(id, _)| id.as_str())
                    .collect::<Vec<_>>()
                    .join(", ");
                return Err(Error::VariantBuild {
                    count: failures.len(),
                    summary,
                    failures,
                });
            }
            results.into_iter().map(|r| Some(r.expect("no failures"))).collect()
        };

        let mut records = Vec::with_capacity(queries.len());
        for (i, query) in queries.iter().enumerate() {
            let persona = personas[i].as_ref();
            let augmented =
                augment_query(*query, persona, self.strategy, &self.templates.concat)?;
            let (output, gold_answer) = match source {
                VariantSource::Train(base) => (Some(base[i].output.clone()), None),
                VariantSource::Test(benchmark) => {
                    (None, Some(benchmark.questions[i].gold_answer.clone()))
                }
            };
            records.push(VariantRecord {
                query_id: augmented.query_id,
                rendered_query: augmented.rendered,
                original_query: augmented.original,
                strategy: self.strategy,
                persona_text: persona.map(|p| p.text.clone()),
                domain: persona.and_then(|p| p.domain.clone()),
                output,
                gold_answer,
            });
        }

        let split = match source {
            VariantSource::Train(_) => Split::Train,
            VariantSource::Test(_) => Split::Test,
        };
        let template_hashes = match self.strategy {
            Strategy::N => BTreeMap::new(),
            Strategy::S => hashes_of(&[&self.templates.concat, &self.templates.similar]),
            Strategy::D => hashes_of(&[&self.templates.concat, &self.templates.dissimilar]),
            Strategy::R => hashes_of(&[&self.templates.concat, &self.templates.random_persona]),
        };
        Ok(Variant {
            meta: VariantMeta {
                base_name: self.base_name.to_string(),
                strategy: self.strategy,
                split,
                seed: self.seed,
                size: records.len(),
                template_hashes,
                generator_model: self.generator_model.map(str::to_string),
                created_at_unix: SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .expect("clock after epoch")
                    .as_secs(),
                config_hash: self.config_hash.to_string(),
            },
            records,
        })
    }
}

fn hashes_of(templates: &[&crate::persona::Template]) -> BTreeMap<String, String> {
    templates
        .iter()
        .map(|t| (t.name.clone(), t.hash.clone()))
        .collect()
}

fn render_bytes(variant: &Variant) -> Vec<u8> {
    let mut out = Vec::new();
    serde_json::to_writer(
        &mut out,
        &VariantHeader {
            meta: variant.meta.clone(),
        },
    )
    .expect("meta serializes");
    out.push(b'\n');
    for record in &variant.records {
        serde_json::to_writer(&mut out, record).expect("record serializes");
        out.push(b'\n');
    }
    out
}

fn content_fingerprint(variant: &Variant) -> String {
    let mut stamped = variant.clone();
    stamped.meta.created_at_unix = 0;
    hex::encode(Sha256::digest(render_bytes(&stamped)))
}

/// Write a variant file atomically (temp file in the same directory, then
/// rename). If the path already holds a variant whose content — timestamp
/// aside — matches, the existing file is left byte-for-byte untouched and
/// `Ok(false)` is returned, so re-running a build never churns artifacts.
pub fn write_variant(path: &Path, variant: &Variant) -> Result<bool> {
    if path.exists() {
        if let Ok(existing) = read_variant(path) {
            if content_fingerprint(&existing) == content_fingerprint(variant) {
                return Ok(false);
            }
        }
    }
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(parent) = parent {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut tmp = tempfile::NamedTempFile::new_in(parent.unwrap_or(Path::new(".")))
        .map_err(|e| Error::io(path, e))?;
    tmp.write_all(&render_bytes(variant))
        .map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(true)
}

/// Read a variant file back, checking every invariant the builder promises:
/// header size matches, ids are unique, each row's strategy matches the
/// header, N rows are untouched queries, and persona rows embed the original
/// query verbatim inside the rendered one.
pub fn read_variant(path: &Path) -> Result<Variant> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();

    let (_, first) = lines.next().ok_or_else(|| Error::Malformed {
        path: path.to_path_buf(),
        line: 1,
        detail: "empty variant file (missing header)".to_string(),
    })?;
    let first = first.map_err(|e| Error::io(path, e))?;
    let header: VariantHeader = serde_json::from_str(&first).map_err(|e| Error::Malformed {
        path: path.to_path_buf(),
        line: 1,
        detail: format!("bad header: {e}"),
    })?;
    let meta = header.meta;

    let malformed = |line: usize, detail: String| Error::Malformed {
        path: path.to_path_buf(),
        line,
        detail,
    };

    let mut records = Vec::with_capacity(meta.size);
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: VariantRecord =
            serde_json::from_str(&line).map_err(|e| malformed(lineno, e.to_string()))?;
        if record.strategy != meta.strategy {
            return Err(malformed(
                lineno,
                format!(
                    "record strategy {} disagrees with variant strategy {}",
                    record.strategy, meta.strategy
                ),
            ));
        }
        match record.strategy {
            Strategy::N => {
                if record.rendered_query != record.original_query {
                    return Err(malformed(
                        lineno,
                        format!(
                            "strategy N must leave the query untouched, but \"{}\" was altered",
                            record.query_id
                        ),
                    ));
                }
                if record.persona_text.is_some() {
                    return Err(malformed(
                        lineno,
                        format!("strategy N record \"{}\" carries a persona", record.query_id),
                    ));
                }
            }
            _ => {
                let persona = record.persona_text.as_deref().unwrap_or("");
                if persona.is_empty() {
                    return Err(malformed(
                        lineno,
                        format!(
                            "strategy {} record \"{}\" is missing its persona",
                            record.strategy, record.query_id
                        ),
                    ));
                }
                if !record.rendered_query.contains(&record.original_query) {
                    return Err(malformed(
                        lineno,
                        format!(
                            "record \"{}\" does not embed its original query verbatim",
                            record.query_id
                        ),
                    ));
                }
                if !record.rendered_query.contains(persona) {
                    return Err(malformed(
                        lineno,
                        format!(
                            "record \"{}\" does not embed its persona text",
                            record.query_id
                        ),
                    ));
                }
            }
        }
        match meta.split {
            Split::Train => {
                if record.output.is_none() {
                    return Err(malformed(
                        lineno,
                        format!("train record \"{}\" has no output", record.query_id),
                    ));
                }
            }
            Split::Test => {
                if record.gold_answer.is_none() {
                    return Err(malformed(
                        lineno,
                        format!("test record \"{}\" has no gold answer", record.query_id),
                    ));
                }
            }
        }
        if let Some(first) = seen.insert(record.query_id.clone(), lineno) {
            return Err(Error::DuplicateId {
                path: path.to_path_buf(),
                id: record.query_id,
                first,
                second: lineno,
            });
        }
        records.push(record);
    }

    if records.len() != meta.size {
        return Err(malformed(
            1,
            format!(
                "header declares {} records but the file holds {}",
                meta.size,
                records.len()
            ),
        ));
    }
    Ok(Variant { meta, records })
}

/// Check that two variants cover the same query ids in the same order —
/// the precondition for comparing anything computed from them.
pub fn check_aligned(a: &Variant, b: &Variant) -> Result<()> {
    if a.records.len() != b.records.len() {
        return Err(Error::Invalid(format!(
            "variants are misaligned: {} ({}) has {} records, {} ({}) has {}",
            a.meta.base_name,
            a.meta.strategy,
            a.records.len(),
            b.meta.base_name,
            b.meta.strategy,
            b.records.len()
        )));
    }
    for (i, (ra, rb)) in a.records.iter().zip(&b.records).enumerate() {
        if ra.query_id != rb.query_id {
            return Err(Error::Invalid(format!(
                "variants diverge at position {}: \"{}\" vs \"{}\"",
                i + 1,
                ra.query_id,
                rb.query_id
            )));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Training manifests
// ---------------------------------------------------------------------------

/// Fine-tuning hyperparameters. The defaults are the recipe every reported
/// training run used; a manifest records explicitly whenever a run departs
/// from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub update_steps: u32,
    pub batch_size: u32,
    pub learning_rate: f64,
    pub schedule: String,
    pub max_token_length: u32,
    pub packing: bool,
}

impl Default for Hyperparameters {
    fn default() -> Hyperparameters {
        Hyperparameters {
            update_steps: 240,
            batch_size: 120,
            learning_rate: 5e-6,
            schedule: "cosine".to_string(),
            max_token_length: 32768,
            packing: false,
        }
    }
}

/// Optional departures from the default recipe.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ManifestOverrides {
    pub update_steps: Option<u32>,
    pub batch_size: Option<u32>,
    pub learning_rate: Option<f64>,
    pub schedule: Option<String>,
    pub max_token_length: Option<u32>,
    pub packing: Option<bool>,
}

impl ManifestOverrides {
    fn apply(&self, hp: &mut Hyperparameters) -> Vec<String> {
        let mut applied = Vec::new();
        macro_rules! set {
            ($field:ident) => {
                if let Some(value) = &self.$field {
                    applied.push(format!(
                        concat!(stringify!($field), ": {} -> {}"),
                        hp.$field, value
                    ));
                    hp.$field = value.clone();
                }
            };
        }
        set!(update_steps);
        set!(batch_size);
        set!(learning_rate);
        set!(schedule);
        set!(max_token_length);
        set!(packing);
        applied
    }
}

/// Everything a fine-tuning job needs, with nothing left implicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainManifest {
    pub base_model: String,
    pub dataset_path: String,
    /// Pins the exact dataset content this manifest was written for.
    pub variant_meta_hash: String,
    #[serde(flatten)]
    pub hyperparameters: Hyperparameters,
    /// Human-readable log of every departure from the default recipe.
    pub overrides_applied: Vec<String>,
    pub config_hash: String,
    pub seed: u64,
}

/// Build a manifest for a train variant. Test variants are refused: there
/// is nothing to fine-tune on in a gold file.
pub fn emit_manifest(
    meta: &VariantMeta,
    dataset_path: &str,
    base_model: &str,
    overrides: &ManifestOverrides,
) -> Result<TrainManifest> {
    if meta.split != Split::Train {
        return Err(Error::Invalid(format!(
            "refusing to emit a training manifest for the test split of \"{}\"",
            meta.base_name
        )));
    }
    let mut hyperparameters = Hyperparameters::default();
    let overrides_applied = overrides.apply(&mut hyperparameters);
    Ok(TrainManifest {
        base_model: base_model.to_string(),
        dataset_path: dataset_path.to_string(),
        variant_meta_hash: variant_meta_hash(meta),
        hyperparameters,
        overrides_applied,
        config_hash: meta.config_hash.clone(),
        seed: meta.seed,
    })
}

pub fn write_manifest(path: &Path, manifest: &TrainManifest) -> Result<()> {
    let text = toml::to_string_pretty(manifest)
        .map_err(|e| Error::Invalid(format!("manifest serialization: {e}")))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<TrainManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Malformed {
        path: path.to_path_buf(),
        line: 0,
        detail: e.to_string(),
    })
}
