use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mixsparse::bench::{
    run_comm_sweep, run_overhead, run_solve, run_triad, LogFormat, MatrixSource, PcKind, RhsSource,
    RunConfig, TriadConfig,
};
use mixsparse::solvers::{Method, NormType, SolverConfig};
use mixsparse::sparse::{permute, rcm_order};

/// Exit status when the solver stops without meeting its tolerance.
const NOT_CONVERGED: u8 = 2;

#[derive(Parser)]
#[command(
    name = "mixsparse",
    version,
    about = "Hybrid rank/thread sparse solver benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve A x = b and log per-operation timings and flop counts.
    Solve(SolveArgs),
    /// STREAM-style triad a = b + s*c over chunk-owned arrays.
    Triad(TriadArgs),
    /// Cost of an empty fork/join region.
    Overhead(OverheadArgs),
    /// Ghost volume for every ranks x threads split of a core budget.
    CommSweep(SweepArgs),
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Matrix Market file (symmetric files are expanded).
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// Generator: poisson2d:<k>, convdiff2d:<k>:<pe> or tridiag:<n>.
    #[arg(long)]
    gen: Option<String>,
}

impl Source {
    fn resolve(&self) -> mixsparse::Result<MatrixSource> {
        match (&self.matrix, &self.gen) {
            (Some(p), _) => Ok(MatrixSource::File(p.clone())),
            (None, Some(g)) => g.parse(),
            (None, None) => unreachable!("clap enforces one source"),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Cg,
    Gmres,
}

#[derive(Clone, Copy, ValueEnum)]
enum PcArg {
    None,
    Jacobi,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    Preconditioned,
    Unpreconditioned,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, default_value_t = 1)]
    ranks: usize,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long, value_enum, default_value = "cg")]
    solver: SolverArg,
    #[arg(long, value_enum, default_value = "jacobi")]
    pc: PcArg,
    #[arg(long, default_value_t = 1e-5)]
    rtol: f64,
    #[arg(long, default_value_t = 1e-50)]
    atol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iters: usize,
    #[arg(long, default_value_t = 30)]
    restart: usize,
    #[arg(long, value_enum, default_value = "preconditioned")]
    norm_type: NormArg,
    /// Reorder with reverse Cuthill-McKee before partitioning.
    #[arg(long)]
    rcm: bool,
    /// Randomly relabel the matrix first (seeded by --seed).
    #[arg(long)]
    shuffle: bool,
    /// `ones` for b = A*ones, or a Matrix Market vector file.
    #[arg(long, default_value = "ones")]
    rhs: String,
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    log_format: FormatArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TriadArgs {
    #[arg(long, default_value_t = 10_000_000)]
    n: usize,
    #[arg(long, default_value_t = 10)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Initialize arrays on the calling thread instead of the owning workers.
    #[arg(long)]
    serial_init: bool,
    #[arg(long, default_value_t = 3.0)]
    scalar: f64,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct OverheadArgs {
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    source: Source,
    /// Core budget C; every (R, T) with R*T = C is evaluated.
    #[arg(long)]
    cores: usize,
    #[arg(long)]
    rcm: bool,
    #[arg(long)]
    json: bool,
}

fn solve(a: SolveArgs) -> mixsparse::Result<bool> {
    let mut cfg = RunConfig::new(a.source.resolve()?);
    cfg.ranks = a.ranks;
    cfg.threads = a.threads;
    cfg.solver = SolverConfig {
        method: match a.solver {
            SolverArg::Cg => Method::Cg,
            SolverArg::Gmres => Method::Gmres,
        },
        rtol: a.rtol,
        atol: a.atol,
        max_iters: a.max_iters,
        restart: a.restart,
        norm_type: match a.norm_type {
            NormArg::Preconditioned => NormType::Preconditioned,
            NormArg::Unpreconditioned => NormType::Unpreconditioned,
        },
    };
    cfg.pc = match a.pc {
        PcArg::None => PcKind::None,
        PcArg::Jacobi => PcKind::Jacobi,
    };
    cfg.reorder = a.rcm;
    cfg.shuffle = a.shuffle;
    cfg.rhs = if a.rhs == "ones" {
        RhsSource::Ones
    } else {
        RhsSource::File(a.rhs.into())
    };
    cfg.log_path = a.log;
    cfg.log_format = match a.log_format {
        FormatArg::Json => LogFormat::Json,
        FormatArg::Csv => LogFormat::Csv,
    };
    cfg.seed = a.seed;

    let out = run_solve(&cfg)?;
    out.write_log(&cfg)?;
    let env = &out.log.environment;
    let s = &out.log.solver;
    println!(
        "matrix {}  n={} nnz={} bandwidth={} (input {})",
        env.matrix, env.n, env.nnz, env.bandwidth, env.input_bandwidth
    );
    println!(
        "ranks={} threads={}  ghost volume={} messages/scatter={}",
        env.ranks, env.threads, out.log.comm.ghost_volume, out.log.comm.plan_messages
    );
    println!(
        "{:?}: {} after {} iterations, residual {:e}, true relative residual {:e}, {:.3} ms",
        s.config.method,
        if s.converged {
            "converged"
        } else {
            "NOT converged"
        },
        s.iterations,
        s.final_residual,
        s.true_relative_residual,
        s.seconds * 1e3
    );
    println!("reason: {:?}", s.reason);
    println!(
        "{:<20} {:>8} {:>12} {:>14}",
        "op", "calls", "time (ms)", "flops"
    );
    for (name, rec) in &out.log.ops {
        println!(
            "{:<20} {:>8} {:>12.3} {:>14}",
            name,
            rec.calls,
            rec.seconds * 1e3,
            rec.flops
        );
    }
    Ok(out.converged())
}

fn triad(a: TriadArgs) -> mixsparse::Result<()> {
    let r = run_triad(&TriadConfig {
        n: a.n,
        reps: a.reps,
        threads: a.threads,
        parallel_init: !a.serial_init,
        scalar: a.scalar,
        ..Default::default()
    })?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&r)?);
        return Ok(());
    }
    println!(
        "triad n={} reps={} threads={} init={}",
        a.n,
        a.reps,
        a.threads,
        if a.serial_init { "serial" } else { "owner" }
    );
    println!("bytes per pass: {}", r.bytes_per_pass);
    match r.best_gb_per_s {
        Some(gb) => println!("best {:.6} s  ({gb:.2} GB/s)", r.best_seconds),
        None => println!("best {:.6} s  (no clock)", r.best_seconds),
    }
    for (i, expect, got) in &r.checked {
        println!("a[{i}] = {got} (expected {expect})");
    }
    Ok(())
}

fn overhead(a: OverheadArgs) -> mixsparse::Result<()> {
    let r = run_overhead(a.threads, a.trials)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&r)?);
    } else {
        println!(
            "threads={} trials={}  median {:.3} us  min {:.3} us  max {:.3} us",
            r.threads,
            r.samples_us.len(),
            r.median_us,
            r.min_us,
            r.max_us
        );
    }
    Ok(())
}

fn sweep(a: SweepArgs) -> mixsparse::Result<()> {
    let src = a.source.resolve()?;
    let mut m = src.build()?;
    if a.rcm {
        m = permute(&m, &rcm_order(&m)?)?;
    }
    let rows = run_comm_sweep(&m, a.cores)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&rows)?);
        return Ok(());
    }
    println!(
        "matrix {src}  n={} nnz={}  cores={}",
        m.n_rows(),
        m.nnz(),
        a.cores
    );
    println!(
        "{:>6} {:>8} {:>8} {:>9} {:>9} {:>9}",
        "ranks", "threads", "ghost", "messages", "max rows", "min rows"
    );
    for r in rows {
        println!(
            "{:>6} {:>8} {:>8} {:>9} {:>9} {:>9}",
            r.ranks, r.threads, r.ghost_volume, r.messages, r.max_rows, r.min_rows
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Solve(a) => solve(a).map(|ok| {
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(NOT_CONVERGED)
            }
        }),
        Cmd::Triad(a) => triad(a).map(|_| ExitCode::SUCCESS),
        Cmd::Overhead(a) => overhead(a).map(|_| ExitCode::SUCCESS),
        Cmd::CommSweep(a) => sweep(a).map(|_| ExitCode::SUCCESS),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::FAILURE
    })
}
