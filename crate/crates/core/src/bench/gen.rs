use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sparse::{load_matrix_market, CsrMatrix, Permutation};

/// 5-point Laplacian on a `k x k` grid in natural (row-major) ordering.
pub fn generate_poisson2d(k: usize) -> Result<CsrMatrix> {
    generate_convdiff2d(k, 0.0)
}

/// Diffusion plus first-order upwind convection with positive velocity in
/// both grid directions, scaled so that `pe = 0` is the plain Laplacian.
pub fn generate_convdiff2d(k: usize, pe: f64) -> Result<CsrMatrix> {
    if k < 2 {
        return Err(Error::BadGenerator(format!("grid size {k} < 2")));
    }
    if !(pe >= 0.0 && pe.is_finite()) {
        return Err(Error::BadGenerator(format!(
            "peclet number {pe} must be finite and >= 0"
        )));
    }
    let n = k * k;
    let mut t = Vec::with_capacity(5 * n);
    for gy in 0..k {
        for gx in 0..k {
            let i = gy * k + gx;
            if gy > 0 {
                t.push((i, i - k, -1.0 - pe));
            }
            if gx > 0 {
                t.push((i, i - 1, -1.0 - pe));
            }
            t.push((i, i, 4.0 + 2.0 * pe));
            if gx + 1 < k {
                t.push((i, i + 1, -1.0));
            }
            if gy + 1 < k {
                t.push((i, i + k, -1.0));
            }
        }
    }
    CsrMatrix::from_triplets(n, n, t)
}

/// `tridiag(-1, 2, -1)` of order `n`.
pub fn generate_tridiag(n: usize) -> Result<CsrMatrix> {
    if n < 1 {
        return Err(Error::BadGenerator("tridiagonal order 0".into()));
    }
    let mut t = Vec::with_capacity(3 * n);
    for i in 0..n {
        if i > 0 {
            t.push((i, i - 1, -1.0));
        }
        t.push((i, i, 2.0));
        if i + 1 < n {
            t.push((i, i + 1, -1.0));
        }
    }
    CsrMatrix::from_triplets(n, n, t)
}

/// Uniformly random relabelling, fixed by `seed`.
pub fn shuffle_permutation(n: usize, seed: u64) -> Permutation {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Permutation::new(order).expect("shuffled identity is a permutation")
}

#[derive(Clone, Debug, PartialEq)]
pub enum MatrixSource {
    File(PathBuf),
    Poisson2d { k: usize },
    ConvDiff2d { k: usize, pe: f64 },
    Tridiag { n: usize },
}

impl MatrixSource {
    pub fn build(&self) -> Result<CsrMatrix> {
        match self {
            MatrixSource::File(p) => load_matrix_market(p, true),
            MatrixSource::Poisson2d { k } => generate_poisson2d(*k),
            MatrixSource::ConvDiff2d { k, pe } => generate_convdiff2d(*k, *pe),
            MatrixSource::Tridiag { n } => generate_tridiag(*n),
        }
    }
}

impl fmt::Display for MatrixSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatrixSource::File(p) => write!(f, "{}", p.display()),
            MatrixSource::Poisson2d { k } => write!(f, "poisson2d:{k}"),
            MatrixSource::ConvDiff2d { k, pe } => write!(f, "convdiff2d:{k}:{pe}"),
            MatrixSource::Tridiag { n } => write!(f, "tridiag:{n}"),
        }
    }
}

/// Parses a generator spec: `poisson2d:<k>`, `convdiff2d:<k>:<pe>` or `tridiag:<n>`.
impl FromStr for MatrixSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::BadGenerator(s.to_string());
        let parts: Vec<&str> = s.split(':').collect();
        let int = |t: &str| t.parse::<usize>().map_err(|_| bad());
        let src = match parts.as_slice() {
            ["poisson2d", k] => MatrixSource::Poisson2d { k: int(k)? },
            ["convdiff2d", k, pe] => MatrixSource::ConvDiff2d {
                k: int(k)?,
                pe: pe.parse().map_err(|_| bad())?,
            },
            ["tridiag", n] => MatrixSource::Tridiag { n: int(n)? },
            _ => return Err(bad()),
        };
        // Reject specs that cannot build so errors surface at parse time.
        src.build()?;
        Ok(src)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::bandwidth;

    #[test]
    fn poisson_k2() {
        let m = generate_poisson2d(2).unwrap();
        let dense = m.to_dense();
        let expect = [
            [4.0, -1.0, -1.0, 0.0],
            [-1.0, 4.0, 0.0, -1.0],
            [-1.0, 0.0, 4.0, -1.0],
            [0.0, -1.0, -1.0, 4.0],
        ];
        for (row, e) in dense.iter().zip(expect) {
            assert_eq!(row.as_slice(), e);
        }
    }

    #[test]
    fn poisson_counts_and_symmetry() {
        for k in 2..20 {
            let m = generate_poisson2d(k).unwrap();
            assert_eq!(m.n_rows(), k * k);
            assert_eq!(m.nnz(), 5 * k * k - 4 * k);
            assert_eq!(m, m.transpose());
            assert_eq!(bandwidth(&m).unwrap(), k);
        }
        assert_eq!(generate_poisson2d(16).unwrap().nnz(), 1216);
        assert!(generate_poisson2d(1).is_err());
    }

    #[test]
    fn convdiff_is_nonsymmetric_with_zero_row_sums_inside() {
        let m = generate_convdiff2d(4, 1.0).unwrap();
        assert_ne!(m, m.transpose());
        // Interior row: 6 - 2 - 2 - 1 - 1 = 0.
        let (_, v) = m.row(5);
        assert_eq!(v.iter().sum::<f64>(), 0.0);
        assert!(generate_convdiff2d(4, -1.0).is_err());
    }

    #[test]
    fn spec_parsing() {
        assert_eq!(
            "poisson2d:8".parse::<MatrixSource>().unwrap(),
            MatrixSource::Poisson2d { k: 8 }
        );
        assert_eq!(
            "convdiff2d:16:0.5".parse::<MatrixSource>().unwrap(),
            MatrixSource::ConvDiff2d { k: 16, pe: 0.5 }
        );
        assert_eq!(
            "tridiag:10".parse::<MatrixSource>().unwrap().to_string(),
            "tridiag:10"
        );
        for bad in [
            "poisson2d",
            "poisson2d:1",
            "poisson2d:x",
            "convdiff2d:4",
            "laplace:4",
            "tridiag:0",
        ] {
            assert!(bad.parse::<MatrixSource>().is_err(), "{bad}");
        }
    }

    #[test]
    fn shuffle_is_seeded() {
        assert_eq!(shuffle_permutation(50, 7), shuffle_permutation(50, 7));
        assert_ne!(shuffle_permutation(50, 7), shuffle_permutation(50, 8));
    }
}
