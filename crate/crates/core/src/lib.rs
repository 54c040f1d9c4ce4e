//! Hybrid rank/thread sparse linear algebra.
//!
//! Matrices are split by rows across ranks; each rank keeps an on-diagonal and
//! an off-diagonal CSR block and runs its kernels over a fixed pool of worker
//! threads with one static chunk schedule shared by every object.

pub mod bench;
pub mod comm;
pub mod error;
pub mod exec;
pub mod kernels;
pub mod layout;
pub mod perf;
pub mod solvers;
pub mod sparse;

pub use error::{Error, Result};
