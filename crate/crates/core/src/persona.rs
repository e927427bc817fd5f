//! Persona strategies: generate short persona descriptions for queries via
//! meta-cognition prompting of a generator model, and splice them into
//! prompts by concatenation.
//!
//! Four strategies exist. `N` is the identity (no persona). `S` asks the
//! generator for a persona similar to the query's field, `D` for one
//! dissimilar to it, and `R` draws a domain from a pre-generated pool
//! (seeded per query id, so draws reproduce) and asks for a persona in that
//! domain. Similarity is enforced purely by instruction to the generator —
//! there is no post-hoc similarity filter, and no persona quality filter.
//!
//! All generation flows through the [`crate::client`] ledger, so rebuilding
//! any artifact with an intact ledger is deterministic and network-free.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::client::{ChatMessage, ChatRequest, LlmClient};
use crate::corpus::SourceRecord;
use crate::error::{Error, Result};
use crate::rng;

/// The four augmentation strategies. Declaration order is the canonical
/// tie-break order used everywhere combinations are ranked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Strategy {
    /// No persona; queries pass through untouched.
    N,
    /// Persona from a randomly drawn domain.
    R,
    /// Persona similar to the query's field.
    S,
    /// Persona dissimilar to the query's field.
    D,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::N, Strategy::R, Strategy::S, Strategy::D];

    pub fn letter(&self) -> char {
        match self {
            Strategy::N => 'N',
            Strategy::R => 'R',
            Strategy::S => 'S',
            Strategy::D => 'D',
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "N" | "n" => Ok(Strategy::N),
            "R" | "r" => Ok(Strategy::R),
            "S" | "s" => Ok(Strategy::S),
            "D" | "d" => Ok(Strategy::D),
            other => Err(Error::Config(format!(
                "unknown strategy {other:?} (expected one of N, S, D, R)"
            ))),
        }
    }
}

/// A generated persona. `domain` is populated only for strategy R.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Persona {
    pub text: String,
    pub strategy: Strategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
    pub source_query_id: String,
}

impl Persona {
    /// Validates and normalizes: strategy N carries no persona, and the
    /// text is collapsed to a single paragraph (whitespace runs, including
    /// newlines, become single spaces).
    pub fn new(
        text: &str,
        strategy: Strategy,
        domain: Option<String>,
        source_query_id: &str,
    ) -> Result<Persona> {
        if strategy == Strategy::N {
            return Err(Error::UnexpectedPersona);
        }
        let text = normalize_paragraph(text);
        if text.is_empty() {
            return Err(Error::EmptyPersona {
                query_id: source_query_id.to_string(),
            });
        }
        Ok(Persona {
            text,
            strategy,
            domain,
            source_query_id: source_query_id.to_string(),
        })
    }
}

fn normalize_paragraph(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

// ---------------------------------------------------------------------------
// Templates
// ---------------------------------------------------------------------------

/// A prompt template with provenance hash. Placeholders are `{name}` tokens
/// that must each appear exactly once; rendering splices values in a single
/// left-to-right pass, so placeholder-like text inside a value is never
/// re-expanded.
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub name: String,
    pub text: String,
    /// SHA-256 of the template text, embedded in artifacts so datasets are
    /// traceable to the exact prompt wording that produced them.
    pub hash: String,
}

impl Template {
    pub fn new(name: &str, text: &str) -> Template {
        Template {
            name: name.to_string(),
            text: text.to_string(),
            hash: hex::encode(Sha256::digest(text.as_bytes())),
        }
    }

    fn require_placeholders(&self, names: &[&str]) -> Result<()> {
        for name in names {
            let token = format!("{{{name}}}");
            match self.text.matches(&token).count() {
                1 => {}
                0 => {
                    return Err(Error::Template {
                        name: self.name.clone(),
                        detail: format!("missing required placeholder {token}"),
                    })
                }
                n => {
                    return Err(Error::Template {
                        name: self.name.clone(),
                        detail: format!("placeholder {token} appears {n} times (expected once)"),
                    })
                }
            }
        }
        Ok(())
    }

    /// Replace each `{name}` with its value in one pass over the template.
    pub fn render(&self, values: &[(&str, &str)]) -> String {
        let mut out = String::with_capacity(self.text.len());
        let mut rest = self.text.as_str();
        loop {
            // Find the earliest placeholder still ahead of the cursor.
            let next = values
                .iter()
                .filter_map(|(name, value)| {
                    let token = format!("{{{name}}}");
                    rest.find(&token).map(|pos| (pos, token.len(), *value))
                })
                .min_by_key(|(pos, _, _)| *pos);
            match next {
                Some((pos, token_len, value)) => {
                    out.push_str(&rest[..pos]);
                    out.push_str(value);
                    rest = &rest[pos + token_len..];
                }
                None => {
                    out.push_str(rest);
                    return out;
                }
            }
        }
    }
}

/// The five prompt templates, loaded from a directory of plain-text files.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateSet {
    /// `similar.txt`: persona similar to the query's field; `{query}`.
    pub similar: Template,
    /// `dissimilar.txt`: persona dissimilar to the query's field; `{query}`.
    pub dissimilar: Template,
    /// `random_domain.txt`: ask for a list of domains; `{count}`.
    pub random_domain: Template,
    /// `random_persona.txt`: persona within a domain; `{domain}`.
    pub random_persona: Template,
    /// `concat.txt`: how a persona is spliced into a query; `{persona}`
    /// and `{query}`.
    pub concat: Template,
}

impl TemplateSet {
    pub fn load(dir: &Path) -> Result<TemplateSet> {
        let read = |file: &str, placeholders: &[&str]| -> Result<Template> {
            let name = file.trim_end_matches(".txt");
            let path = dir.join(file);
            let text = std::fs::read_to_string(&path).map_err(|e| Error::Template {
                name: name.to_string(),
                detail: format!("{}: {e}", path.display()),
            })?;
            let template = Template::new(name, &text);
            template.require_placeholders(placeholders)?;
            Ok(template)
        };
        Ok(TemplateSet {
            similar: read("similar.txt", &["query"])?,
            dissimilar: read("dissimilar.txt", &["query"])?,
            random_domain: read("random_domain.txt", &["count"])?,
            random_persona: read("random_persona.txt", &["domain"])?,
            concat: read("concat.txt", &["persona", "query"])?,
        })
    }

    /// The template that generates personas for a strategy.
    pub fn generator_for(&self, strategy: Strategy) -> Result<&Template> {
        match strategy {
            Strategy::S => Ok(&self.similar),
            Strategy::D => Ok(&self.dissimilar),
            Strategy::R => Ok(&self.random_persona),
            Strategy::N => Err(Error::Invalid(
                "strategy N does not generate personas".to_string(),
            )),
        }
    }

    /// Hashes of every template, keyed by name, for artifact metadata.
    pub fn hashes(&self) -> std::collections::BTreeMap<String, String> {
        [
            &self.similar,
            &self.dissimilar,
            &self.random_domain,
            &self.random_persona,
            &self.concat,
        ]
        .into_iter()
        .map(|t| (t.name.clone(), t.hash.clone()))
        .collect()
    }
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

/// A query after strategy application: what is actually sent to (or trained
/// into) the model, alongside full provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedQuery {
    pub query_id: String,
    pub original: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub persona: Option<Persona>,
    pub rendered: String,
    pub strategy: Strategy,
}

/// Apply a strategy to one query. N is the identity; every other strategy
/// splices the persona and the *untouched* original query into the concat
/// template — augmentation never edits the problem statement.
pub fn augment_query(
    query: QueryRef<'_>,
    persona: Option<&Persona>,
    strategy: Strategy,
    concat: &Template,
) -> Result<AugmentedQuery> {
    let rendered = match (strategy, persona) {
        (Strategy::N, None) => query.query.to_string(),
        (Strategy::N, Some(_)) => return Err(Error::UnexpectedPersona),
        (_, None) => {
            return Err(Error::MissingPersona {
                strategy: strategy.to_string(),
            })
        }
        (_, Some(persona)) => {
            if persona.strategy != strategy {
                return Err(Error::Invalid(format!(
                    "persona for query \"{}\" was generated under strategy {} but is being applied as {strategy}",
                    query.id, persona.strategy
                )));
            }
            concat.render(&[("persona", &persona.text), ("query", query.query)])
        }
    };
    Ok(AugmentedQuery {
        query_id: query.id.to_string(),
        original: query.query.to_string(),
        persona: persona.cloned(),
        rendered,
        strategy,
    })
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

/// Deterministic domain draw for strategy R: seeded by (run seed, query id),
/// so the same query always lands in the same domain under one seed, while
/// different queries spread across the pool.
pub fn draw_domain_index(seed: u64, query_id: &str, pool_len: usize) -> usize {
    let mut rng = rng::seeded(rng::derive_seed(seed, query_id));
    rng::uniform(&mut rng, pool_len as u64) as usize
}

/// A persisted domain pool: the seed it serves and the domains themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainPool {
    pub seed: u64,
    pub config_hash: String,
    pub domains: Vec<String>,
}

impl DomainPool {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("pool serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<DomainPool> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            line: e.line(),
            detail: e.to_string(),
        })
    }
}

/// Drives persona and domain generation against a generator endpoint.
///
/// Generation temperature defaults to 1.0 — persona diversity is the point —
/// while evaluation decoding elsewhere is pinned to 0.
pub struct PersonaGenerator<'a> {
    client: &'a LlmClient,
    templates: &'a TemplateSet,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl<'a> PersonaGenerator<'a> {
    pub fn new(client: &'a LlmClient, templates: &'a TemplateSet) -> PersonaGenerator<'a> {
        PersonaGenerator {
            client,
            templates,
            temperature: 1.0,
            max_tokens: 512,
        }
    }

    fn request(&self, prompt: String) -> ChatRequest {
        ChatRequest {
            messages: vec![ChatMessage::user(prompt)],
            temperature: self.temperature,
            max_tokens: self.max_tokens,
        }
    }

    /// Ask the generator for `count` distinct domain names. Responses are
    /// parsed line-by-line (bullets and numbering stripped) and deduplicated
    /// case-insensitively; on shortfall the model is re-asked up to three
    /// times for the remainder, with the already-collected names appended as
    /// an exclusion list (which also keeps the re-ask distinct from the
    /// original request, so the ledger cannot short-circuit it).
    pub fn generate_domain_pool(&self, count: usize) -> Result<Vec<String>> {
        if count == 0 {
            return Err(Error::Invalid(
                "domain pool size must be at least 1".to_string(),
            ));
        }
        let mut domains: Vec<String> = Vec::with_capacity(count);
        let mut seen: HashSet<String> = HashSet::new();
        let mut asks = 0u32;
        while asks < 4 {
            let remaining = count - domains.len();
            let base = self
                .templates
                .random_domain
                .render(&[("count", &remaining.to_string())]);
            let prompt = if domains.is_empty() {
                base
            } else {
                format!(
                    "{base}\n\nDo not repeat any of these already-collected domains: {}",
                    domains.join(", ")
                )
            };
            let result = self.client.complete(&self.request(prompt))?;
            asks += 1;
            for line in result.text.lines() {
                let cleaned = clean_domain_line(line);
                if cleaned.is_empty() {
                    continue;
                }
                if seen.insert(cleaned.to_lowercase()) {
                    domains.push(cleaned);
                    if domains.len() == count {
                        return Ok(domains);
                    }
                }
            }
        }
        Err(Error::DomainShortfall {
            requested: count,
            got: domains.len(),
            asks,
        })
    }

    /// Generate one persona. S and D embed the query in their template;
    /// R first draws a domain (seeded by query id) and prompts with it.
    pub fn generate_persona(
        &self,
        record: &SourceRecord,
        strategy: Strategy,
        domain_pool: &[String],
        seed: u64,
    ) -> Result<Persona> {
        let queries = [QueryRef {
            id: &record.id,
            query: &record.query,
        }];
        self.personas_for(&queries, strategy, domain_pool, seed)
            .pop()
            .expect("one result per query")
    }

    /// Generate personas for a batch of queries, delegating parallelism to
    /// the client. Results align with the input; failures are per-item.
    pub fn personas_for(
        &self,
        queries: &[QueryRef<'_>],
        strategy: Strategy,
        domain_pool: &[String],
        seed: u64,
    ) -> Vec<Result<Persona>> {
        if strategy == Strategy::N {
            return queries
                .iter()
                .map(|_| {
                    Err(Error::Invalid(
                        "strategy N does not generate personas".to_string(),
                    ))
                })
                .collect();
        }
        if strategy == Strategy::R && domain_pool.is_empty() {
            return queries
                .iter()
                .map(|_| {
                    Err(Error::Invalid(
                        "strategy R requires a non-empty domain pool".to_string(),
                    ))
                })
                .collect();
        }

        let domains: Vec<Option<&str>> = queries
            .iter()
            .map(|q| match strategy {
                Strategy::R => {
                    Some(domain_pool[draw_domain_index(seed, q.id, domain_pool.len())].as_str())
                }
                _ => None,
            })
            .collect();
        let requests: Vec<ChatRequest> = queries
            .iter()
            .zip(&domains)
            .map(|(q, domain)| {
                let prompt = match strategy {
                    Strategy::S => self.templates.similar.render(&[("query", q.query)]),
                    Strategy::D => self.templates.dissimilar.render(&[("query", q.query)]),
                    Strategy::R => self
                        .templates
                        .random_persona
                        .render(&[("domain", domain.expect("R draws a domain"))]),
                    Strategy::N => unreachable!("handled above"),
                };
                self.request(prompt)
            })
            .collect();

        self.client
            .complete_batch(&requests)
            .into_iter()
            .zip(queries)
            .zip(domains)
            .map(|((result, q), domain)| {
                let completion = result?;
                Persona::new(
                    &completion.text,
                    strategy,
                    domain.map(str::to_string),
                    q.id,
                )
            })
            .collect()
    }
}

fn clean_domain_line(line: &str) -> String {
    let mut s = line.trim();
    s = s.trim_start_matches(['-', '*', '•']).trim_start();
    // Strip "1." / "12)" style numbering.
    let digits = s.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let after = &s[digits..];
        if let Some(rest) = after.strip_prefix(['.', ')']) {
            s = rest.trim_start();
        }
    }
    s.trim().to_string()
}

// ---------------------------------------------------------------------------
// Persona files and engines
// ---------------------------------------------------------------------------

/// Header of an emitted personas file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonasFileMeta {
    pub base_name: String,
    pub strategy: Strategy,
    pub seed: u64,
    pub config_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator_model: Option<String>,
    pub template_hash: String,
}

/// One persona line in a personas file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaRecord {
    pub query_id: String,
    pub strategy: Strategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
    pub persona_text: String,
    pub template_hash: String,
}

#[derive(Serialize, Deserialize)]
struct PersonasHeader {
    meta: PersonasFileMeta,
}

pub fn save_personas(
    path: &Path,
    meta: &PersonasFileMeta,
    records: &[PersonaRecord],
) -> Result<()> {
    let mut out = Vec::new();
    serde_json::to_writer(
        &mut out,
        &PersonasHeader { meta: meta.clone() },
    )
    .expect("meta serializes");
    out.push(b'\n');
    for record in records {
        serde_json::to_writer(&mut out, record).expect("persona record serializes");
        out.push(b'\n');
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}

pub fn load_personas(path: &Path) -> Result<(PersonasFileMeta, Vec<PersonaRecord>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let (_, first) = lines.next().ok_or_else(|| Error::Malformed {
        path: path.to_path_buf(),
        line: 1,
        detail: "empty personas file (missing header)".to_string(),
    })?;
    let first = first.map_err(|e| Error::io(path, e))?;
    let header: PersonasHeader = serde_json::from_str(&first).map_err(|e| Error::Malformed {
        path: path.to_path_buf(),
        line: 1,
        detail: format!("bad header: {e}"),
    })?;

    let mut records = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PersonaRecord = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            line: lineno,
            detail: e.to_string(),
        })?;
        if record.strategy != header.meta.strategy {
            return Err(Error::Malformed {
                path: path.to_path_buf(),
                line: lineno,
                detail: format!(
                    "persona strategy {} disagrees with file strategy {}",
                    record.strategy, header.meta.strategy
                ),
            });
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
    Ok((header.meta, records))
}

/// A borrowed view of a query, the only thing persona engines need.
#[derive(Debug, Clone, Copy)]
pub struct QueryRef<'a> {
    pub id: &'a str,
    pub query: &'a str,
}

/// Where personas come from during a variant build: a live generator
/// endpoint, or a previously emitted personas file.
pub trait PersonaEngine {
    fn personas_for(&self, queries: &[QueryRef<'_>], strategy: Strategy) -> Vec<Result<Persona>>;
}

/// Live generation: delegates to [`PersonaGenerator::personas_for`].
pub struct LivePersonaEngine<'a> {
    pub generator: &'a PersonaGenerator<'a>,
    pub domain_pool: &'a [String],
    pub seed: u64,
}

impl PersonaEngine for LivePersonaEngine<'_> {
    fn personas_for(&self, queries: &[QueryRef<'_>], strategy: Strategy) -> Vec<Result<Persona>> {
        self.generator
            .personas_for(queries, strategy, self.domain_pool, self.seed)
    }
}

/// Personas served from an emitted personas file, for offline builds.
pub struct FilePersonaEngine {
    meta: PersonasFileMeta,
    by_query: HashMap<String, PersonaRecord>,
}

impl FilePersonaEngine {
    pub fn load(path: &Path) -> Result<FilePersonaEngine> {
        let (meta, records) = load_personas(path)?;
        let by_query = records
            .into_iter()
            .map(|r| (r.query_id.clone(), r))
            .collect();
        Ok(FilePersonaEngine { meta, by_query })
    }

    pub fn meta(&self) -> &PersonasFileMeta {
        &self.meta
    }
}

impl PersonaEngine for FilePersonaEngine {
    fn personas_for(&self, queries: &[QueryRef<'_>], strategy: Strategy) -> Vec<Result<Persona>> {
        queries
            .iter()
            .map(|q| {
                if strategy != self.meta.strategy {
                    return Err(Error::Invalid(format!(
                        "personas file holds strategy {} personas, not {strategy}",
                        self.meta.strategy
                    )));
                }
                let record = self.by_query.get(q.id).ok_or_else(|| {
                    Error::Invalid(format!("personas file has no persona for query \"{}\"", q.id))
                })?;
                Persona::new(
                    &record.persona_text,
                    record.strategy,
                    record.domain.clone(),
                    &record.query_id,
                )
            })
            .collect()
    }
}
