//! Benchmark driver pieces: synthetic matrices, the solve pipeline with its
//! performance log, communication sweeps and the triad/overhead microbenchmarks.

pub mod gen;
pub mod log;
pub mod micro;
pub mod run;

pub use gen::{
    generate_convdiff2d, generate_poisson2d, generate_tridiag, shuffle_permutation, MatrixSource,
};
pub use log::{
    analytic_flops, CommRecord, Environment, PcKind, PerfLog, SolverRecord, SCHEMA_VERSION,
};
pub use micro::{
    run_overhead, run_triad, OverheadReport, TriadConfig, TriadReport, TRIAD_BYTES_PER_ELEMENT,
};
pub use run::{
    core_splits, run_comm_sweep, run_solve, LogFormat, RhsSource, RunConfig, RunOutput, SweepRow,
};
