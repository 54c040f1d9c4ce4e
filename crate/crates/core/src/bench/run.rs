use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::gen::{shuffle_permutation, MatrixSource};
use super::log::{CommRecord, Environment, PcKind, PerfLog, SolverRecord, SCHEMA_VERSION};
use crate::comm::{gather_owned, LocalOperator, RankGroup};
use crate::error::{Error, Result};
use crate::exec::{Audit, Exec, ThreadingPolicy};
use crate::kernels::{alloc_zeroed, seq_spmv};
use crate::layout::{build_scatter_plan, ghost_volume, partition_rows, split_dist};
use crate::perf::{OpLog, Stopwatch};
use crate::solvers::{solve, Jacobi, SolverConfig};
use crate::sparse::{bandwidth, load_vector, permute, rcm_order, CsrMatrix, Permutation};

#[derive(Clone, Debug, PartialEq)]
pub enum RhsSource {
    /// `b = A * ones`
    Ones,
    File(PathBuf),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogFormat {
    Json,
    Csv,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub source: MatrixSource,
    pub ranks: usize,
    pub threads: usize,
    pub solver: SolverConfig,
    pub pc: PcKind,
    pub reorder: bool,
    /// Relabel rows and columns with a random permutation drawn from `seed` before anything else.
    pub shuffle: bool,
    pub rhs: RhsSource,
    pub log_path: Option<PathBuf>,
    pub log_format: LogFormat,
    pub seed: u64,
    /// Attaches write auditing to every rank's executor.
    pub audit: Option<Arc<Audit>>,
}

impl RunConfig {
    pub fn new(source: MatrixSource) -> Self {
        Self {
            source,
            ranks: 1,
            threads: 1,
            solver: SolverConfig::default(),
            pc: PcKind::Jacobi,
            reorder: false,
            shuffle: false,
            rhs: RhsSource::Ones,
            log_path: None,
            log_format: LogFormat::Json,
            seed: 0,
            audit: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ranks == 0 {
            return Err(Error::ZeroRanks);
        }
        if self.threads == 0 {
            return Err(Error::ZeroChunks);
        }
        self.solver.validate()
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub log: PerfLog,
    /// Solution in the input ordering.
    pub x: Vec<f64>,
}

impl RunOutput {
    pub fn converged(&self) -> bool {
        self.log.solver.converged
    }

    /// Writes the log to `cfg.log_path` in `cfg.log_format`, if a path is set.
    pub fn write_log(&self, cfg: &RunConfig) -> Result<()> {
        let Some(path) = &cfg.log_path else {
            return Ok(());
        };
        let text = match cfg.log_format {
            LogFormat::Json => self.log.to_json()?,
            LogFormat::Csv => self.log.to_csv()?,
        };
        std::fs::write(path, text).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })
    }
}

fn matvec(m: &CsrMatrix, x: &[f64]) -> Result<Vec<f64>> {
    let exec = Exec::sequential(ThreadingPolicy::default());
    let mut y = alloc_zeroed(&exec, m.n_rows());
    seq_spmv(&exec, m, x, &mut y, false)?;
    Ok(y.to_vec())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Load, optionally reorder, distribute, solve, and collect the performance log.
pub fn run_solve(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let mut a = cfg.source.build()?;
    if !a.is_square() {
        return Err(Error::NotSquare {
            n_rows: a.n_rows(),
            n_cols: a.n_cols(),
        });
    }
    let n = a.n_rows();
    let mut b = match &cfg.rhs {
        RhsSource::Ones => None,
        RhsSource::File(p) => {
            let b = load_vector(p)?;
            if b.len() != n {
                return Err(Error::Dimension(format!(
                    "{}: right-hand side of length {} for a {n}x{n} matrix",
                    p.display(),
                    b.len()
                )));
            }
            Some(b)
        }
    };

    // Composite relabelling old -> new, used to bring x back.
    let mut perm = Permutation::identity(n);
    let mut relabel = |a: &mut CsrMatrix, b: &mut Option<Vec<f64>>, p: Permutation| -> Result<()> {
        *a = permute(a, &p)?;
        if let Some(v) = b {
            *v = p.apply_to_vec(v)?;
        }
        let composed: Vec<usize> = perm
            .as_slice()
            .iter()
            .map(|&mid| p.as_slice()[mid])
            .collect();
        perm = Permutation::new(composed)?;
        Ok(())
    };
    if cfg.shuffle {
        relabel(&mut a, &mut b, shuffle_permutation(n, cfg.seed))?;
    }
    let input_bandwidth = bandwidth(&a)?;
    if cfg.reorder {
        let p = rcm_order(&a)?;
        relabel(&mut a, &mut b, p)?;
    }
    let b = match b {
        Some(b) => b,
        None => matvec(&a, &vec![1.0; n])?,
    };

    let layout = partition_rows(n, cfg.ranks)?;
    let dm = split_dist(&a, &layout, cfg.threads)?;
    let plan = build_scatter_plan(&dm);
    let gv = ghost_volume(&dm);

    let mut group = RankGroup::new(cfg.ranks, cfg.threads)?;
    if let Some(audit) = &cfg.audit {
        group = group.with_audit(audit.clone());
    }
    let parts = group.run(|ctx| {
        let op = LocalOperator::new(&dm, &plan, ctx.rank());
        let bv = ctx.vector_from_global(&op, &b)?;
        let pc = match cfg.pc {
            PcKind::Jacobi => Some(Jacobi::new(ctx, &op)?),
            PcKind::None => None,
        };
        ctx.reset_log();
        let sw = Stopwatch::start();
        let res = solve(ctx, &op, &bv, &cfg.solver, pc.as_ref())?;
        Ok((res, sw.seconds(), ctx.log().clone(), ctx.stats().clone()))
    })?;

    let xs: Vec<_> = parts.iter().map(|p| p.0.x.clone()).collect();
    let x_solved = gather_owned(&xs);
    let ax = matvec(&a, &x_solved)?;
    let diff: Vec<f64> = b.iter().zip(&ax).map(|(bi, yi)| bi - yi).collect();
    let b_norm = norm(&b);
    let true_relative_residual = if b_norm > 0.0 {
        norm(&diff) / b_norm
    } else {
        norm(&diff)
    };

    let res = &parts[0].0;
    let logs: Vec<OpLog> = parts.iter().map(|p| p.2.clone()).collect();
    let log = PerfLog {
        schema_version: SCHEMA_VERSION,
        environment: Environment {
            ranks: cfg.ranks,
            threads: cfg.threads,
            matrix: cfg.source.to_string(),
            n,
            nnz: a.nnz(),
            bandwidth: bandwidth(&a)?,
            input_bandwidth,
            reordered: cfg.reorder,
            seed: cfg.seed,
        },
        ops: OpLog::merge_ranks(&logs).ops,
        solver: SolverRecord {
            config: cfg.solver.clone(),
            pc: cfg.pc,
            converged: res.converged,
            reason: res.reason,
            iterations: res.iterations,
            final_residual: *res
                .residual_history
                .last()
                .expect("history has the initial norm"),
            residual_history: res.residual_history.clone(),
            true_relative_residual,
            seconds: parts.iter().map(|p| p.1).fold(0.0, f64::max),
        },
        comm: CommRecord {
            plan_messages: plan.n_messages(),
            ghost_volume: gv.total,
            ghost_per_rank: gv.per_rank,
            scatters: parts[0].3.scatters,
            reductions: parts[0].3.reductions,
            messages_sent: parts.iter().map(|p| p.3.messages_sent).sum(),
            values_sent: parts.iter().map(|p| p.3.values_sent).sum(),
        },
    };
    let x = perm.inverse().apply_to_vec(&x_solved)?;
    Ok(RunOutput { log, x })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepRow {
    pub ranks: usize,
    pub threads: usize,
    pub ghost_volume: usize,
    pub messages: usize,
    pub max_rows: usize,
    pub min_rows: usize,
}

/// Every `(R, T)` with `R * T = cores`, ordered by decreasing `R`.
pub fn core_splits(cores: usize) -> Result<Vec<(usize, usize)>> {
    if cores == 0 {
        return Err(Error::BadCoreBudget(cores));
    }
    Ok((1..=cores)
        .rev()
        .filter(|r| cores.is_multiple_of(*r))
        .map(|r| (r, cores / r))
        .collect())
}

/// Ghost volume and message counts for each rank/thread split of `cores`.
/// Fails if the ghost volume grows as the rank count shrinks.
pub fn run_comm_sweep(m: &CsrMatrix, cores: usize) -> Result<Vec<SweepRow>> {
    let mut rows: Vec<SweepRow> = Vec::new();
    for (r, t) in core_splits(cores)? {
        let layout = partition_rows(m.n_rows(), r)?;
        let dm = split_dist(m, &layout, t)?;
        let gv = ghost_volume(&dm);
        let sizes: Vec<usize> = layout.ranges().map(|rg| rg.len()).collect();
        let row = SweepRow {
            ranks: r,
            threads: t,
            ghost_volume: gv.total,
            messages: gv.messages,
            max_rows: sizes.iter().copied().max().unwrap_or(0),
            min_rows: sizes.iter().copied().min().unwrap_or(0),
        };
        if let Some(prev) = rows.last() {
            if row.ghost_volume > prev.ghost_volume {
                return Err(Error::SweepNotMonotone {
                    prev_ranks: prev.ranks,
                    prev: prev.ghost_volume,
                    next_ranks: row.ranks,
                    next: row.ghost_volume,
                });
            }
        }
        rows.push(row);
    }
    Ok(rows)
}
