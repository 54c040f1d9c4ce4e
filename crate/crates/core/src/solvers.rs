//! Krylov solvers over distributed operators.
//!
//! Both solvers run collectively inside [`RankGroup::run`](crate::comm::RankGroup::run)
//! and touch vectors only through [`RankCtx`] operations, so they inherit the
//! rank/thread decomposition and the op log without knowing about either.
//! Every branch decision is made on allreduced scalars, which keeps all ranks
//! on the same iteration sequence.

use serde::{Deserialize, Serialize};

use crate::comm::{DistVector, LocalOperator, RankCtx};
use crate::error::{Error, Result};
use crate::kernels::mat_get_diagonal;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cg,
    Gmres,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormType {
    Preconditioned,
    Unpreconditioned,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: Method,
    pub rtol: f64,
    pub atol: f64,
    pub max_iters: usize,
    pub restart: usize,
    pub norm_type: NormType,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::Cg,
            rtol: 1e-5,
            atol: 1e-50,
            max_iters: 10_000,
            restart: 30,
            norm_type: NormType::Preconditioned,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.rtol >= 0.0 && self.atol >= 0.0) {
            return bad("tolerances must be non-negative");
        }
        if self.rtol == 0.0 && self.atol == 0.0 {
            return bad("rtol and atol cannot both be zero");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1");
        }
        if self.restart == 0 {
            return bad("restart must be at least 1");
        }
        Ok(())
    }

    fn test(&self, norm: f64, initial: f64) -> Option<Reason> {
        if norm <= self.atol {
            Some(Reason::Atol)
        } else if norm <= self.rtol * initial {
            Some(Reason::Rtol)
        } else {
            None
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    Rtol,
    Atol,
    MaxIters,
    Breakdown,
}

/// Rotation-maintained residual estimate at the end of a GMRES cycle next to
/// the residual recomputed from the updated iterate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleCheck {
    pub iteration: usize,
    pub estimate: f64,
    pub recomputed: f64,
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub x: DistVector,
    pub converged: bool,
    pub reason: Reason,
    pub iterations: usize,
    /// Monitored norm, one entry per iteration plus the initial one.
    pub residual_history: Vec<f64>,
    /// GMRES only: one entry per restart.
    pub cycle_checks: Vec<CycleCheck>,
}

/// Diagonal scaling `z = D^-1 r`.
#[derive(Clone, Debug)]
pub struct Jacobi {
    diag: DistVector,
}

impl Jacobi {
    /// Extracts this rank's diagonal. Fails on the first structurally or numerically zero entry.
    pub fn new(ctx: &RankCtx, op: &LocalOperator<'_>) -> Result<Self> {
        let d = mat_get_diagonal(&op.block.diag)?;
        if let Some(k) = d.iter().position(|&v| v == 0.0) {
            return Err(Error::ZeroDiagonal {
                global_index: op.block.rows.start + k,
            });
        }
        Self::from_diagonal(ctx, op, &d)
    }

    /// Uses `d` (this rank's rows) as the diagonal. Zero entries are reported at apply time.
    pub fn from_diagonal(ctx: &RankCtx, op: &LocalOperator<'_>, d: &[f64]) -> Result<Self> {
        if d.len() != op.n_local() {
            return Err(Error::Dimension(format!(
                "diagonal of length {} for {} local rows",
                d.len(),
                op.n_local()
            )));
        }
        let mut diag = ctx.create_vector(op);
        diag.owned = crate::kernels::ChunkedVector::from_slice(ctx.exec(), d);
        Ok(Self { diag })
    }

    pub fn diagonal(&self) -> &DistVector {
        &self.diag
    }
}

/// `z <- D^-1 r`
pub fn jacobi_apply(
    ctx: &mut RankCtx,
    pc: &Jacobi,
    r: &DistVector,
    z: &mut DistVector,
) -> Result<()> {
    ctx.pointwise_divide(z, r, &pc.diag)
}

fn precondition(
    ctx: &mut RankCtx,
    pc: Option<&Jacobi>,
    r: &DistVector,
    z: &mut DistVector,
) -> Result<()> {
    match pc {
        Some(pc) => jacobi_apply(ctx, pc, r, z),
        None => ctx.copy(r, z),
    }
}

/// Preconditioned conjugate gradients from `x0 = 0`.
///
/// The monitored norm is `sqrt(r . z)` for [`NormType::Preconditioned`] and
/// `||r||` otherwise. A non-positive curvature `p . Ap` stops with
/// [`Reason::Breakdown`].
pub fn cg_solve(
    ctx: &mut RankCtx,
    op: &LocalOperator<'_>,
    b: &DistVector,
    cfg: &SolverConfig,
    pc: Option<&Jacobi>,
) -> Result<SolveResult> {
    cfg.validate()?;
    let mut x = ctx.create_vector(op);
    let mut r = ctx.create_vector(op);
    let mut z = ctx.create_vector(op);
    let mut p = ctx.create_vector(op);
    let mut q = ctx.create_vector(op);

    ctx.copy(b, &mut r)?;
    precondition(ctx, pc, &r, &mut z)?;
    let mut rz = ctx.dot(&r, &z)?;

    let monitored = |ctx: &mut RankCtx, r: &DistVector, rz: f64| -> Result<f64> {
        match cfg.norm_type {
            NormType::Preconditioned => Ok(rz.max(0.0).sqrt()),
            NormType::Unpreconditioned => ctx.norm2(r),
        }
    };

    let finish = |x, converged, reason, iterations, residual_history| SolveResult {
        x,
        converged,
        reason,
        iterations,
        residual_history,
        cycle_checks: Vec::new(),
    };

    if rz < 0.0 || !rz.is_finite() {
        let h = vec![f64::NAN];
        return Ok(finish(x, false, Reason::Breakdown, 0, h));
    }
    let initial = monitored(ctx, &r, rz)?;
    let mut history = vec![initial];
    if let Some(reason) = cfg.test(initial, initial) {
        return Ok(finish(x, true, reason, 0, history));
    }

    ctx.copy(&z, &mut p)?;
    for k in 1..=cfg.max_iters {
        ctx.spmv(op, &mut p, &mut q)?;
        let pq = ctx.dot(&p, &q)?;
        if pq.is_nan() || pq <= 0.0 || pq.is_infinite() {
            return Ok(finish(x, false, Reason::Breakdown, k - 1, history));
        }
        let alpha = rz / pq;
        ctx.axpy(alpha, &p, &mut x)?;
        ctx.axpy(-alpha, &q, &mut r)?;
        precondition(ctx, pc, &r, &mut z)?;
        let rz_new = ctx.dot(&r, &z)?;
        if rz_new < 0.0 || !rz_new.is_finite() {
            history.push(f64::NAN);
            return Ok(finish(x, false, Reason::Breakdown, k, history));
        }
        let norm = monitored(ctx, &r, rz_new)?;
        history.push(norm);
        if let Some(reason) = cfg.test(norm, initial) {
            return Ok(finish(x, true, reason, k, history));
        }
        ctx.aypx(rz_new / rz, &z, &mut p)?;
        rz = rz_new;
    }
    Ok(finish(x, false, Reason::MaxIters, cfg.max_iters, history))
}

struct Givens {
    c: f64,
    s: f64,
}

impl Givens {
    fn apply(&self, a: &mut f64, b: &mut f64) {
        let (x, y) = (*a, *b);
        *a = self.c * x + self.s * y;
        *b = -self.s * x + self.c * y;
    }
}

/// Back substitution on the leading `k x k` upper triangle of `h` (column-major `h[j][i]`).
fn solve_upper(h: &[Vec<f64>], g: &[f64], k: usize) -> Vec<f64> {
    let mut y = vec![0.0; k];
    for i in (0..k).rev() {
        let mut acc = g[i];
        for j in i + 1..k {
            acc -= h[j][i] * y[j];
        }
        y[i] = acc / h[i][i];
    }
    y
}

/// Left-preconditioned restarted GMRES from `x0 = 0`.
///
/// Arnoldi uses modified Gram-Schmidt; the least-squares problem is kept
/// triangular by Givens rotations whose running product gives the monitored
/// residual estimate. The iterate is formed at the end of each cycle.
pub fn gmres_solve(
    ctx: &mut RankCtx,
    op: &LocalOperator<'_>,
    b: &DistVector,
    cfg: &SolverConfig,
    pc: Option<&Jacobi>,
) -> Result<SolveResult> {
    cfg.validate()?;
    if pc.is_some() && cfg.norm_type == NormType::Unpreconditioned {
        return Err(Error::InvalidConfig(
            "left-preconditioned GMRES monitors the preconditioned residual only".into(),
        ));
    }
    let m = cfg.restart;
    let mut x = ctx.create_vector(op);
    let mut r = ctx.create_vector(op);
    let mut t = ctx.create_vector(op);
    let mut w = ctx.create_vector(op);
    let mut basis: Vec<DistVector> = (0..=m).map(|_| ctx.create_vector(op)).collect();

    let mut history: Vec<f64> = Vec::new();
    let mut checks = Vec::new();
    let mut iterations = 0usize;
    let mut initial = 0.0;
    let mut last_estimate = 0.0;

    loop {
        // z = M^-1 (b - A x), stored in basis[0].
        if iterations == 0 {
            ctx.copy(b, &mut r)?;
        } else {
            ctx.spmv(op, &mut x, &mut t)?;
            ctx.waxpy(&mut r, -1.0, &t, b)?;
        }
        let (head, _) = basis.split_at_mut(1);
        precondition(ctx, pc, &r, &mut head[0])?;
        let beta = ctx.norm2(&basis[0])?;

        if iterations == 0 {
            initial = beta;
            history.push(beta);
            if let Some(reason) = cfg.test(beta, initial) {
                return Ok(SolveResult {
                    x,
                    converged: true,
                    reason,
                    iterations,
                    residual_history: history,
                    cycle_checks: checks,
                });
            }
        } else {
            checks.push(CycleCheck {
                iteration: iterations,
                estimate: last_estimate,
                recomputed: beta,
            });
            if let Some(reason) = cfg.test(beta, initial) {
                // Same iterate as the last estimate; report the recomputed value.
                *history.last_mut().unwrap() = beta;
                return Ok(SolveResult {
                    x,
                    converged: true,
                    reason,
                    iterations,
                    residual_history: history,
                    cycle_checks: checks,
                });
            }
        }
        if !beta.is_finite() {
            return Ok(SolveResult {
                x,
                converged: false,
                reason: Reason::Breakdown,
                iterations,
                residual_history: history,
                cycle_checks: checks,
            });
        }
        ctx.scale(&mut basis[0], 1.0 / beta);

        // h[j] is column j of the (m+1) x m Hessenberg matrix.
        let mut h: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut rotations: Vec<Givens> = Vec::with_capacity(m);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k = 0;
        let mut outcome: Option<Reason> = None;
        let mut happy = false;

        while k < m && iterations < cfg.max_iters {
            let j = k;
            let (done, rest) = basis.split_at_mut(j + 1);
            ctx.spmv(op, &mut done[j], &mut t)?;
            precondition(ctx, pc, &t, &mut w)?;
            let w_norm0 = ctx.norm2(&w)?;
            let mut col = vec![0.0; m + 1];
            for (i, v) in done.iter().enumerate() {
                let hij = ctx.dot(&w, v)?;
                ctx.axpy(-hij, v, &mut w)?;
                col[i] = hij;
            }
            let h_next = ctx.norm2(&w)?;
            col[j + 1] = h_next;

            for (i, rot) in rotations.iter().enumerate() {
                let (a, b) = col.split_at_mut(i + 1);
                rot.apply(&mut a[i], &mut b[0]);
            }
            let denom = col[j].hypot(col[j + 1]);
            if denom == 0.0 || !denom.is_finite() {
                outcome = Some(Reason::Breakdown);
                break;
            }
            let rot = Givens {
                c: col[j] / denom,
                s: col[j + 1] / denom,
            };
            col[j] = denom;
            col[j + 1] = 0.0;
            g[j + 1] = -rot.s * g[j];
            g[j] *= rot.c;
            rotations.push(rot);
            h.push(col);

            k += 1;
            iterations += 1;
            let estimate = g[j + 1].abs();
            history.push(estimate);
            last_estimate = estimate;

            if let Some(reason) = cfg.test(estimate, initial) {
                outcome = Some(reason);
                break;
            }
            // Invariant subspace reached: the update below is exact.
            if h_next <= f64::EPSILON * w_norm0 {
                happy = true;
                break;
            }
            ctx.copy(&w, &mut rest[0])?;
            ctx.scale(&mut rest[0], 1.0 / h_next);
        }

        if k > 0 {
            let y = solve_upper(&h, &g, k);
            for (yi, v) in y.iter().zip(&basis) {
                ctx.axpy(*yi, v, &mut x)?;
            }
        }

        let finished = |x, converged, reason, history, checks| SolveResult {
            x,
            converged,
            reason,
            iterations,
            residual_history: history,
            cycle_checks: checks,
        };
        match outcome {
            Some(Reason::Breakdown) => {
                return Ok(finished(x, false, Reason::Breakdown, history, checks))
            }
            Some(reason) => return Ok(finished(x, true, reason, history, checks)),
            None if iterations >= cfg.max_iters && !happy => {
                return Ok(finished(x, false, Reason::MaxIters, history, checks))
            }
            None => {}
        }
        if happy && iterations >= cfg.max_iters {
            return Ok(finished(x, false, Reason::MaxIters, history, checks));
        }
    }
}

/// Dispatches on `cfg.method`.
pub fn solve(
    ctx: &mut RankCtx,
    op: &LocalOperator<'_>,
    b: &DistVector,
    cfg: &SolverConfig,
    pc: Option<&Jacobi>,
) -> Result<SolveResult> {
    match cfg.method {
        Method::Cg => cg_solve(ctx, op, b, cfg, pc),
        Method::Gmres => gmres_solve(ctx, op, b, cfg, pc),
    }
}
