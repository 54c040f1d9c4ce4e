//! Sequential sparse matrices: CSR storage, Matrix Market I/O and reordering.

mod csr;
mod mtx;
mod reorder;

pub use csr::CsrMatrix;
pub use mtx::{
    load_matrix_market, load_vector, read_matrix_market, save_matrix_market, write_matrix_market,
};
pub use reorder::{bandwidth, permute, rcm_order, Permutation};
