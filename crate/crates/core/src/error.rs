use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}:{line}: entry ({row}, {col}) outside declared {n_rows}x{n_cols} bounds")]
    IndexOutOfBounds {
        path: PathBuf,
        line: usize,
        row: usize,
        col: usize,
        n_rows: usize,
        n_cols: usize,
    },

    #[error("unsupported Matrix Market field `{0}` (only `real`/`integer` are accepted)")]
    UnsupportedField(String),

    #[error("unsupported Matrix Market layout: {0}")]
    UnsupportedFormat(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("matrix must be square, got {n_rows}x{n_cols}")]
    NotSquare { n_rows: usize, n_cols: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid CSR structure: {0}")]
    InvalidCsr(String),

    #[error("not a permutation: {0}")]
    InvalidPermutation(String),

    #[error("chunk count must be at least 1")]
    ZeroChunks,

    #[error("rank count must be at least 1")]
    ZeroRanks,

    #[error("invalid row layout: {0}")]
    InvalidLayout(String),

    #[error("chunk map mismatch: {0}")]
    ChunkMismatch(String),

    #[error("zero divisor at index {index}")]
    ZeroDivisor { index: usize },

    #[error("zero diagonal entry at global row {global_index}")]
    ZeroDiagonal { global_index: usize },

    #[error("collective timed out on rank {rank} waiting for rank {peer} ({what})")]
    CollectiveTimeout {
        rank: usize,
        peer: usize,
        what: &'static str,
    },

    #[error("collective mismatch on rank {rank}: expected {expected}, received {received} from rank {peer}")]
    CollectiveMismatch {
        rank: usize,
        peer: usize,
        expected: String,
        received: String,
    },

    #[error("peer rank {peer} disconnected")]
    Disconnected { peer: usize },

    #[error("scatter_end called without a matching scatter_begin")]
    ScatterNotStarted,

    #[error("scatter_begin called while a scatter is already in flight")]
    ScatterInFlight,

    #[error("owned data modified between scatter_begin and scatter_end")]
    OwnedMutatedDuringScatter,

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("ghost volume increased from {prev} to {next} when going from {prev_ranks} to {next_ranks} ranks")]
    SweepNotMonotone {
        prev_ranks: usize,
        prev: usize,
        next_ranks: usize,
        next: usize,
    },

    #[error("no (ranks, threads) factorization for core budget {0}")]
    BadCoreBudget(usize),

    #[error("invalid generator spec `{0}`")]
    BadGenerator(String),

    #[error("triad verification failed at index {index}: expected {expected}, got {got}")]
    TriadMismatch {
        index: usize,
        expected: f64,
        got: f64,
    },

    #[error("could not allocate {bytes} bytes")]
    Allocation { bytes: usize },

    #[error("performance log: {0}")]
    LogInvariant(String),

    #[error("csv output: {0}")]
    Csv(String),

    #[error("worker pool: {0}")]
    Pool(String),

    #[error("log serialization: {0}")]
    Json(#[from] serde_json::Error),
}
