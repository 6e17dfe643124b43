use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at {line}:{col}: expected {expected}")]
    Syntax {
        line: usize,
        col: usize,
        expected: String,
    },
    #[error("final predicate refers to undeclared observable `{0}`")]
    UndeclaredObservable(String),
    #[error("unknown mnemonic `{0}`")]
    UnknownMnemonic(String),
    #[error("bad operands in `{0}`")]
    BadOperands(String),
    #[error("branch to unresolved label `{0}`")]
    UnresolvedLabel(String),
    #[error("invalid test: {0}")]
    InvalidTest(String),
    #[error("unroll factor must be at least 1")]
    FactorZero,
    #[error("recursive calls are not supported")]
    RecursionUnsupported,
    #[error("candidate enumeration exceeded {0} executions")]
    CandidateExplosion(u64),
    #[error("simulation timed out after {0:.1}s")]
    Timeout(f64),
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("unknown base relation `{0}`")]
    UnknownBaseRelation(String),
    #[error("model `{model}` expects {expected} tests")]
    DialectMismatch { model: String, expected: String },
    #[error("ambiguous state mapping for `{0}`")]
    AmbiguousMapping(String),
    #[error("no binding for observable `{0}`")]
    MissingBinding(String),
    #[error("name collision on `{0}`")]
    NameCollision(String),
    #[error("unsupported shape `{0}`")]
    UnsupportedShape(String),
    #[error("unsupported construct: {0}")]
    UnsupportedConstruct(String),
    #[error("grid config: {0}")]
    Grid(String),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("tool not found: {0}")]
    ToolNotFound(String),
    #[error("compilation failed with exit code {code:?}: {stderr}")]
    CompileFailed { code: Option<i32>, stderr: String },
    #[error("disassembly failed: {0}")]
    DisassembleFailed(String),
    #[error("address {0} does not map to a symbol")]
    UnmappedAddress(String),
    #[error("{stage} exceeded its {secs}s time limit")]
    StageTimeout { stage: String, secs: u64 },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn syntax(line: usize, col: usize, expected: impl Into<String>) -> Self {
        Error::Syntax {
            line,
            col,
            expected: expected.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
