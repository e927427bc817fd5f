use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type. Variants carry enough structure for callers (and
/// tests) to assert on the offending line / id / status instead of scraping
/// message strings.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path} line {line}: {detail}")]
    Malformed {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    #[error("duplicate id \"{id}\" in {path} (lines {first} and {second})")]
    DuplicateId {
        path: PathBuf,
        id: String,
        first: usize,
        second: usize,
    },

    #[error("requested {requested} records but the pool holds only {pool}")]
    SampleTooLarge { requested: usize, pool: usize },

    #[error("request failed after {attempts} attempt(s), last failure: {last}")]
    RetriesExhausted { attempts: u32, last: String },

    #[error("endpoint returned status {status}: {excerpt}")]
    HttpStatus { status: u16, excerpt: String },

    #[error("malformed model response: {excerpt}")]
    BadResponse { excerpt: String },

    #[error("api key environment variable {name} is not set")]
    MissingApiKey { name: String },

    #[error("domain pool shortfall: requested {requested}, collected {got} after {asks} ask(s)")]
    DomainShortfall {
        requested: usize,
        got: usize,
        asks: u32,
    },

    #[error("model returned an empty persona for query \"{query_id}\"")]
    EmptyPersona { query_id: String },

    #[error("strategy N takes no persona, but one was supplied")]
    UnexpectedPersona,

    #[error("strategy {strategy} requires a persona, but none was supplied")]
    MissingPersona { strategy: String },

    #[error("variant build failed for {count} record(s): {summary}")]
    VariantBuild {
        count: usize,
        summary: String,
        failures: Vec<(String, String)>,
    },

    #[error("template {name}: {detail}")]
    Template { name: String, detail: String },

    #[error("gold set is missing query id \"{0}\"")]
    MissingGold(String),

    #[error("query id \"{0}\" is not present in the gold set")]
    UnknownQueryId(String),

    #[error("gold answer for \"{query_id}\" does not parse in {mode} mode: {detail}")]
    GoldUnparseable {
        query_id: String,
        mode: String,
        detail: String,
    },

    #[error("duplicate matrix cell {key}: runs \"{first}\" and \"{second}\"")]
    DuplicateCell {
        key: String,
        first: String,
        second: String,
    },

    #[error("matrix incomplete, missing cell(s): {0}")]
    MatrixIncomplete(String),

    #[error("vote members misaligned: {0}")]
    VoteMisaligned(String),

    #[error("vote spec invalid: {0}")]
    VoteSpec(String),

    #[error("all {0} request(s) in the run failed; endpoint appears unreachable")]
    EndpointUnreachable(usize),

    #[error("config error: {0}")]
    Config(String),

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors the user can fix before launching anything: bad flags,
    /// bad config, broken templates. The CLI maps these to exit code 1 and
    /// everything else (I/O, network, grading failures mid-run) to exit 2.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Template { .. } | Error::MissingApiKey { .. }
        )
    }
}
