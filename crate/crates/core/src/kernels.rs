//! Chunk-owned vector kernels and the sequential CSR multiply.
//!
//! Every kernel writes its destination one chunk per worker and never writes
//! outside that chunk. Inputs are shared read-only. Reductions sum each chunk
//! left to right and then combine the partials in ascending chunk order, so a
//! result depends only on the values and the chunk count, not on timing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::layout::ChunkMap;
use crate::sparse::CsrMatrix;

/// A vector paired with its static chunk map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChunkedVector {
    values: Vec<f64>,
    chunks: ChunkMap,
    /// Worker that zero-initialized each chunk.
    owner_tag: Vec<usize>,
}

impl ChunkedVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn chunks(&self) -> &ChunkMap {
        &self.chunks
    }

    pub fn owner_tag(&self) -> &[usize] {
        &self.owner_tag
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Direct mutable access, bypassing the chunked kernels. Intended for setup code.
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.values.clone()
    }

    /// Allocates through [`alloc_zeroed`] and copies `values` in chunk by chunk.
    pub fn from_slice(exec: &Exec, values: &[f64]) -> Self {
        let mut v = alloc_zeroed(exec, values.len());
        let chunks = v.chunks.clone();
        exec.par_chunks_mut("VecSetValues", &mut v.values, &chunks, |ctx, dst| {
            dst.copy_from_slice(&values[ctx.range.clone()]);
        });
        v
    }
}

fn check_pair(a: &ChunkedVector, b: &ChunkedVector) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "vector lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.chunks != b.chunks {
        return Err(Error::ChunkMismatch(format!(
            "chunk bounds {:?} and {:?}",
            a.chunks.bounds(),
            b.chunks.bounds()
        )));
    }
    Ok(())
}

/// Zero vector whose chunks are each written first by their owning worker.
pub fn alloc_zeroed(exec: &Exec, n: usize) -> ChunkedVector {
    let chunks = exec.chunk_map(n);
    let mut values = vec![0.0; n];
    let owner_tag = exec.par_chunks_mut("VecCreate", &mut values, &chunks, |ctx, dst| {
        dst.fill(0.0);
        ctx.worker
    });
    ChunkedVector {
        values,
        chunks,
        owner_tag,
    }
}

pub fn set(exec: &Exec, v: &mut ChunkedVector, alpha: f64) {
    let chunks = v.chunks.clone();
    exec.par_chunks_mut("VecSet", &mut v.values, &chunks, |_, dst| dst.fill(alpha));
}

pub fn copy(exec: &Exec, src: &ChunkedVector, dst: &mut ChunkedVector) -> Result<()> {
    check_pair(src, dst)?;
    let chunks = dst.chunks.clone();
    exec.par_chunks_mut("VecCopy", &mut dst.values, &chunks, |ctx, d| {
        d.copy_from_slice(&src.values[ctx.range.clone()]);
    });
    Ok(())
}

pub fn scale(exec: &Exec, v: &mut ChunkedVector, alpha: f64) {
    let chunks = v.chunks.clone();
    exec.par_chunks_mut("VecScale", &mut v.values, &chunks, |_, dst| {
        dst.iter_mut().for_each(|x| *x *= alpha);
    });
}

/// Complex conjugate; the identity for real scalars, still run as a parallel region.
pub fn conjugate(exec: &Exec, v: &mut ChunkedVector) {
    let chunks = v.chunks.clone();
    exec.par_chunks_mut("VecConjugate", &mut v.values, &chunks, |_, _| {});
}

/// `y <- alpha * x + y`
pub fn axpy(exec: &Exec, alpha: f64, x: &ChunkedVector, y: &mut ChunkedVector) -> Result<()> {
    check_pair(x, y)?;
    let chunks = y.chunks.clone();
    exec.par_chunks_mut("VecAXPY", &mut y.values, &chunks, |ctx, dst| {
        for (yi, xi) in dst.iter_mut().zip(&x.values[ctx.range.clone()]) {
            *yi += alpha * xi;
        }
    });
    Ok(())
}

/// `y <- x + alpha * y`
pub fn aypx(exec: &Exec, alpha: f64, x: &ChunkedVector, y: &mut ChunkedVector) -> Result<()> {
    check_pair(x, y)?;
    let chunks = y.chunks.clone();
    exec.par_chunks_mut("VecAYPX", &mut y.values, &chunks, |ctx, dst| {
        for (yi, xi) in dst.iter_mut().zip(&x.values[ctx.range.clone()]) {
            *yi = xi + alpha * *yi;
        }
    });
    Ok(())
}

/// `w <- alpha * x + y`
pub fn waxpy(
    exec: &Exec,
    w: &mut ChunkedVector,
    alpha: f64,
    x: &ChunkedVector,
    y: &ChunkedVector,
) -> Result<()> {
    check_pair(x, y)?;
    check_pair(x, w)?;
    let chunks = w.chunks.clone();
    exec.par_chunks_mut("VecWAXPY", &mut w.values, &chunks, |ctx, dst| {
        let r = ctx.range.clone();
        for ((wi, xi), yi) in dst.iter_mut().zip(&x.values[r.clone()]).zip(&y.values[r]) {
            *wi = alpha * xi + yi;
        }
    });
    Ok(())
}

pub fn dot(exec: &Exec, x: &ChunkedVector, y: &ChunkedVector) -> Result<f64> {
    check_pair(x, y)?;
    let partials = exec.par_chunks("VecDot", &x.chunks, |ctx| {
        let r = ctx.range;
        x.values[r.clone()]
            .iter()
            .zip(&y.values[r])
            .fold(0.0, |acc, (a, b)| acc + a * b)
    });
    Ok(partials.into_iter().fold(0.0, |acc, p| acc + p))
}

/// Sum of squares, the local part of a 2-norm.
pub fn sum_squares(exec: &Exec, x: &ChunkedVector) -> f64 {
    exec.par_chunks("VecNorm", &x.chunks, |ctx| {
        x.values[ctx.range].iter().fold(0.0, |acc, a| acc + a * a)
    })
    .into_iter()
    .fold(0.0, |acc, p| acc + p)
}

pub fn norm2(exec: &Exec, x: &ChunkedVector) -> f64 {
    sum_squares(exec, x).sqrt()
}

/// `w <- x .* y`
pub fn pointwise_mult(
    exec: &Exec,
    w: &mut ChunkedVector,
    x: &ChunkedVector,
    y: &ChunkedVector,
) -> Result<()> {
    check_pair(x, y)?;
    check_pair(x, w)?;
    let chunks = w.chunks.clone();
    exec.par_chunks_mut("VecPointwiseMult", &mut w.values, &chunks, |ctx, dst| {
        let r = ctx.range.clone();
        for ((wi, xi), yi) in dst.iter_mut().zip(&x.values[r.clone()]).zip(&y.values[r]) {
            *wi = xi * yi;
        }
    });
    Ok(())
}

/// `w <- x ./ y`. Fails without writing anything if `y` has a zero; the error
/// carries the lowest offending index.
pub fn pointwise_divide(
    exec: &Exec,
    w: &mut ChunkedVector,
    x: &ChunkedVector,
    y: &ChunkedVector,
) -> Result<()> {
    check_pair(x, y)?;
    check_pair(x, w)?;
    let zero = exec
        .par_chunks("VecPointwiseDivideCheck", &y.chunks, |ctx| {
            let start = ctx.range.start;
            y.values[ctx.range]
                .iter()
                .position(|&d| d == 0.0)
                .map(|k| start + k)
        })
        .into_iter()
        .flatten()
        .next();
    if let Some(index) = zero {
        return Err(Error::ZeroDivisor { index });
    }
    let chunks = w.chunks.clone();
    exec.par_chunks_mut("VecPointwiseDivide", &mut w.values, &chunks, |ctx, dst| {
        let r = ctx.range.clone();
        for ((wi, xi), yi) in dst.iter_mut().zip(&x.values[r.clone()]).zip(&y.values[r]) {
            *wi = xi / yi;
        }
    });
    Ok(())
}

/// Row-chunked `y <- m x` (or `y <- y + m x` when `accumulate`).
///
/// Each worker computes the rows of its own chunk of `y`; `x` may be read anywhere.
pub fn seq_spmv(
    exec: &Exec,
    m: &CsrMatrix,
    x: &[f64],
    y: &mut ChunkedVector,
    accumulate: bool,
) -> Result<()> {
    if m.n_cols() != x.len() || m.n_rows() != y.len() {
        return Err(Error::Dimension(format!(
            "{}x{} matrix times vector of length {} into length {}",
            m.n_rows(),
            m.n_cols(),
            x.len(),
            y.len()
        )));
    }
    let chunks = y.chunks.clone();
    let name = if accumulate { "MatMultAdd" } else { "MatMult" };
    exec.par_chunks_mut(name, &mut y.values, &chunks, |ctx, dst| {
        for (yi, i) in dst.iter_mut().zip(ctx.range.clone()) {
            let (cols, vals) = m.row(i);
            let init = if accumulate { *yi } else { 0.0 };
            *yi = cols
                .iter()
                .zip(vals)
                .fold(init, |acc, (&j, &a)| acc + a * x[j]);
        }
    });
    Ok(())
}

/// Main diagonal, with 0.0 where no entry is stored.
pub fn mat_get_diagonal(m: &CsrMatrix) -> Result<Vec<f64>> {
    if !m.is_square() {
        return Err(Error::NotSquare {
            n_rows: m.n_rows(),
            n_cols: m.n_cols(),
        });
    }
    Ok((0..m.n_rows())
        .map(|i| m.get(i, i).unwrap_or(0.0))
        .collect())
}
