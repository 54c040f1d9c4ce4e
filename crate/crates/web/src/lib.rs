//! Browser bindings. Every entry point takes plain values and returns a JSON
//! string for the page script to draw; the `*_json` functions hold the logic
//! so they can be tested natively.

use mixsparse::bench::{
    run_comm_sweep, run_solve, shuffle_permutation, MatrixSource, PcKind, RunConfig,
};
use mixsparse::layout::{ghost_volume, partition_rows, split_dist};
use mixsparse::solvers::Method;
use mixsparse::sparse::{bandwidth, permute, rcm_order, CsrMatrix};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Larger problems make the page sluggish without adding anything visible.
const MAX_N: usize = 4096;

#[derive(Serialize)]
struct Pattern {
    bandwidth: usize,
    /// `[row, col]` of every stored entry.
    entries: Vec<[usize; 2]>,
}

impl Pattern {
    fn of(m: &CsrMatrix) -> Result<Self, String> {
        Ok(Self {
            bandwidth: bandwidth(m).map_err(|e| e.to_string())?,
            entries: m.triplets().map(|(i, j, _)| [i, j]).collect(),
        })
    }
}

#[derive(Serialize)]
struct RcmView {
    n: usize,
    nnz: usize,
    shuffled: Pattern,
    reordered: Pattern,
}

#[derive(Serialize)]
struct RankView {
    start: usize,
    end: usize,
    ghosts: usize,
}

#[derive(Serialize)]
struct SplitView {
    ranks: usize,
    threads: usize,
    ghost_volume: usize,
    messages: usize,
    blocks: Vec<RankView>,
}

#[derive(Serialize)]
struct SolveView {
    converged: bool,
    reason: String,
    iterations: usize,
    residual_history: Vec<f64>,
    true_relative_residual: f64,
    flops: u64,
}

fn load(spec: &str) -> Result<CsrMatrix, String> {
    let src: MatrixSource = spec.parse().map_err(|e: mixsparse::Error| e.to_string())?;
    if matches!(src, MatrixSource::File(_)) {
        return Err("only generator specs are available here".into());
    }
    let m = src.build().map_err(|e| e.to_string())?;
    if m.n_rows() > MAX_N {
        return Err(format!(
            "n = {} exceeds the demo limit of {MAX_N}",
            m.n_rows()
        ));
    }
    Ok(m)
}

/// Shuffles the generated matrix with `seed`, then applies RCM; returns both patterns.
pub fn rcm_json(spec: &str, seed: u64) -> Result<String, String> {
    let m = load(spec)?;
    let shuffled =
        permute(&m, &shuffle_permutation(m.n_rows(), seed)).map_err(|e| e.to_string())?;
    let p = rcm_order(&shuffled).map_err(|e| e.to_string())?;
    let reordered = permute(&shuffled, &p).map_err(|e| e.to_string())?;
    let view = RcmView {
        n: m.n_rows(),
        nnz: m.nnz(),
        shuffled: Pattern::of(&shuffled)?,
        reordered: Pattern::of(&reordered)?,
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

/// Row blocks and ghost counts for every ranks x threads split of `cores`.
pub fn sweep_json(spec: &str, cores: usize) -> Result<String, String> {
    let m = load(spec)?;
    let rows = run_comm_sweep(&m, cores).map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        let layout = partition_rows(m.n_rows(), row.ranks).map_err(|e| e.to_string())?;
        let dm = split_dist(&m, &layout, row.threads).map_err(|e| e.to_string())?;
        let gv = ghost_volume(&dm);
        out.push(SplitView {
            ranks: row.ranks,
            threads: row.threads,
            ghost_volume: row.ghost_volume,
            messages: row.messages,
            blocks: layout
                .ranges()
                .zip(gv.per_rank)
                .map(|(r, ghosts)| RankView {
                    start: r.start,
                    end: r.end,
                    ghosts,
                })
                .collect(),
        });
    }
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

/// Solves `A x = A ones` on one rank and returns the residual history.
pub fn solve_json(
    spec: &str,
    method: &str,
    jacobi: bool,
    rtol: f64,
    restart: usize,
) -> Result<String, String> {
    load(spec)?;
    let mut cfg = RunConfig::new(spec.parse().map_err(|e: mixsparse::Error| e.to_string())?);
    cfg.solver.method = match method {
        "cg" => Method::Cg,
        "gmres" => Method::Gmres,
        other => return Err(format!("unknown solver `{other}`")),
    };
    cfg.solver.rtol = rtol;
    cfg.solver.restart = restart;
    cfg.solver.max_iters = 5000;
    cfg.pc = if jacobi { PcKind::Jacobi } else { PcKind::None };
    let out = run_solve(&cfg).map_err(|e| e.to_string())?;
    let s = out.log.solver;
    let view = SolveView {
        converged: s.converged,
        reason: format!("{:?}", s.reason),
        iterations: s.iterations,
        residual_history: s.residual_history,
        true_relative_residual: s.true_relative_residual,
        flops: out.log.ops.values().map(|r| r.flops).sum(),
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn rcm_view(spec: &str, seed: u32) -> Result<String, JsValue> {
    rcm_json(spec, seed as u64).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn sweep_view(spec: &str, cores: u32) -> Result<String, JsValue> {
    sweep_json(spec, cores as usize).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn solve_view(
    spec: &str,
    method: &str,
    jacobi: bool,
    rtol: f64,
    restart: u32,
) -> Result<String, JsValue> {
    solve_json(spec, method, jacobi, rtol, restart as usize).map_err(|e| JsValue::from_str(&e))
}
