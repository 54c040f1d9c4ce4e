use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{Exec, ThreadingPolicy};
use crate::perf::Stopwatch;

pub const TRIAD_BYTES_PER_ELEMENT: usize = 24;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriadConfig {
    pub n: usize,
    pub reps: usize,
    pub threads: usize,
    pub parallel_init: bool,
    pub scalar: f64,
    pub b_value: f64,
    pub c_value: f64,
}

impl Default for TriadConfig {
    fn default() -> Self {
        Self {
            n: 1_000_000,
            reps: 10,
            threads: 1,
            parallel_init: true,
            scalar: 3.0,
            b_value: 1.0,
            c_value: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriadReport {
    pub config: TriadConfig,
    pub bytes_per_pass: usize,
    pub best_seconds: f64,
    pub mean_seconds: f64,
    /// `None` when the clock reads zero (no host timer).
    pub best_gb_per_s: Option<f64>,
    /// `(index, expected, value)` for the checked entries.
    pub checked: Vec<(usize, f64, f64)>,
}

fn alloc(n: usize) -> Result<Vec<f64>> {
    let mut v = Vec::new();
    v.try_reserve_exact(n).map_err(|_| Error::Allocation {
        bytes: n.saturating_mul(std::mem::size_of::<f64>()),
    })?;
    // Zero pages are mapped lazily; the first real write decides placement.
    v.resize(n, 0.0);
    Ok(v)
}

fn make_exec(threads: usize) -> Result<Exec> {
    let policy = ThreadingPolicy::new(threads)?;
    if threads == 1 || cfg!(target_arch = "wasm32") {
        Ok(Exec::sequential(policy))
    } else {
        Exec::threaded(policy)
    }
}

/// `a[i] = b[i] + s * c[i]`, each chunk handled by its owning worker.
pub fn run_triad(cfg: &TriadConfig) -> Result<TriadReport> {
    if cfg.n == 0 {
        return Err(Error::InvalidConfig(
            "triad length must be at least 1".into(),
        ));
    }
    if cfg.reps == 0 {
        return Err(Error::InvalidConfig(
            "triad needs at least one repetition".into(),
        ));
    }
    let exec = make_exec(cfg.threads)?;
    let chunks = exec.chunk_map(cfg.n);
    let mut a = alloc(cfg.n)?;
    let mut b = alloc(cfg.n)?;
    let mut c = alloc(cfg.n)?;
    if cfg.parallel_init {
        exec.par_chunks_mut("triad_init", &mut a, &chunks, |_, s| s.fill(0.0));
        exec.par_chunks_mut("triad_init", &mut b, &chunks, |_, s| s.fill(cfg.b_value));
        exec.par_chunks_mut("triad_init", &mut c, &chunks, |_, s| s.fill(cfg.c_value));
    } else {
        a.fill(0.0);
        b.fill(cfg.b_value);
        c.fill(cfg.c_value);
    }

    let mut best = f64::INFINITY;
    let mut total = 0.0;
    for _ in 0..cfg.reps {
        let sw = Stopwatch::start();
        exec.par_chunks_mut("triad", &mut a, &chunks, |ctx, out| {
            let (b, c) = (&b[ctx.range.clone()], &c[ctx.range.clone()]);
            for ((ai, bi), ci) in out.iter_mut().zip(b).zip(c) {
                *ai = bi + cfg.scalar * ci;
            }
        });
        let t = sw.seconds();
        best = best.min(t);
        total += t;
    }

    let expected = cfg.b_value + cfg.scalar * cfg.c_value;
    let mut checked = Vec::new();
    for index in [0, cfg.n - 1] {
        if checked.iter().any(|&(i, _, _)| i == index) {
            continue;
        }
        let got = a[index];
        if got != expected {
            return Err(Error::TriadMismatch {
                index,
                expected,
                got,
            });
        }
        checked.push((index, expected, got));
    }
    let bytes_per_pass = TRIAD_BYTES_PER_ELEMENT * cfg.n;
    Ok(TriadReport {
        config: cfg.clone(),
        bytes_per_pass,
        best_seconds: best,
        mean_seconds: total / cfg.reps as f64,
        best_gb_per_s: (best > 0.0).then(|| bytes_per_pass as f64 / best / 1e9),
        checked,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverheadReport {
    pub threads: usize,
    pub samples_us: Vec<f64>,
    pub median_us: f64,
    pub min_us: f64,
    pub max_us: f64,
}

/// Times `trials` empty parallel regions, one chunk per worker.
pub fn run_overhead(threads: usize, trials: usize) -> Result<OverheadReport> {
    if trials == 0 {
        return Err(Error::InvalidConfig(
            "overhead needs at least one trial".into(),
        ));
    }
    let exec = make_exec(threads)?;
    let chunks = exec.chunk_map(threads);
    // One untimed region so pool start-up is not sampled.
    exec.par_chunks("empty", &chunks, |_| ());
    let samples_us: Vec<f64> = (0..trials)
        .map(|_| {
            let sw = Stopwatch::start();
            exec.par_chunks("empty", &chunks, |_| ());
            sw.seconds() * 1e6
        })
        .collect();
    let mut sorted = samples_us.clone();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median_us = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    };
    Ok(OverheadReport {
        threads,
        median_us,
        min_us: sorted[0],
        max_us: sorted[sorted.len() - 1],
        samples_us,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triad_values() {
        let cfg = TriadConfig {
            n: 1000,
            reps: 2,
            threads: 3,
            scalar: 2.0,
            b_value: 1.0,
            c_value: 3.0,
            ..Default::default()
        };
        let r = run_triad(&cfg).unwrap();
        assert_eq!(r.checked, vec![(0, 7.0, 7.0), (999, 7.0, 7.0)]);
        assert_eq!(r.bytes_per_pass, 24_000);

        let zero = TriadConfig {
            scalar: 0.0,
            b_value: 1.0,
            c_value: 123.0,
            parallel_init: false,
            ..cfg
        };
        let r = run_triad(&zero).unwrap();
        assert!(r.checked.iter().all(|&(_, _, v)| v == 1.0));
    }

    #[test]
    fn triad_rejects_empty() {
        assert!(run_triad(&TriadConfig {
            n: 0,
            ..Default::default()
        })
        .is_err());
        let one = run_triad(&TriadConfig {
            n: 1,
            reps: 1,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(one.checked.len(), 1);
    }

    #[test]
    fn overhead_order_statistics() {
        for threads in [1, 2] {
            let r = run_overhead(threads, 9).unwrap();
            assert_eq!(r.samples_us.len(), 9);
            assert!(r.min_us >= 0.0 && r.min_us <= r.median_us && r.median_us <= r.max_us);
            assert!(r.max_us.is_finite());
        }
        assert!(run_overhead(1, 0).is_err());
    }
}
