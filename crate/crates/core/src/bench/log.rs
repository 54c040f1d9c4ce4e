use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perf::OpRecord;
use crate::solvers::{Reason, SolverConfig};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PcKind {
    None,
    Jacobi,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub ranks: usize,
    pub threads: usize,
    pub matrix: String,
    pub n: usize,
    pub nnz: usize,
    /// Bandwidth of the matrix actually solved, after any reordering.
    pub bandwidth: usize,
    /// Bandwidth before RCM (after the optional shuffle).
    pub input_bandwidth: usize,
    pub reordered: bool,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverRecord {
    pub config: SolverConfig,
    pub pc: PcKind,
    pub converged: bool,
    pub reason: Reason,
    pub iterations: usize,
    #[serde(with = "nan_as_null")]
    pub final_residual: f64,
    #[serde(with = "nan_as_null::vec")]
    pub residual_history: Vec<f64>,
    /// `||b - A x|| / ||b||` evaluated on the assembled matrix after the solve.
    #[serde(with = "nan_as_null")]
    pub true_relative_residual: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommRecord {
    /// Point-to-point messages per scatter (scatter plan size).
    pub plan_messages: usize,
    pub ghost_volume: usize,
    pub ghost_per_rank: Vec<usize>,
    /// Collective calls, as seen by every rank.
    pub scatters: u64,
    pub reductions: u64,
    /// Totals over all ranks.
    pub messages_sent: u64,
    pub values_sent: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerfLog {
    pub schema_version: u32,
    pub environment: Environment,
    pub ops: BTreeMap<String, OpRecord>,
    pub solver: SolverRecord,
    pub comm: CommRecord,
}

/// Flops of one global call of `op` on an `n`-row matrix with `nnz` entries.
pub fn analytic_flops(op: &str, n: usize, nnz: usize) -> Option<u64> {
    let (n, nnz) = (n as u64, nnz as u64);
    Some(match op {
        "MatMult" => 2 * nnz,
        "VecDot" | "VecNorm" | "VecAXPY" | "VecAYPX" | "VecWAXPY" => 2 * n,
        "VecScale" | "VecPointwiseDivide" | "VecPointwiseMult" => n,
        "VecCopy" | "VecSet" | "VecScatterBegin" | "VecScatterEnd" => 0,
        _ => return None,
    })
}

impl PerfLog {
    /// Checks the flop and communication counters against their closed forms.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::LogInvariant(m));
        if self.schema_version != SCHEMA_VERSION {
            return fail(format!("schema version {}", self.schema_version));
        }
        let env = &self.environment;
        for (name, rec) in &self.ops {
            let Some(per_call) = analytic_flops(name, env.n, env.nnz) else {
                return fail(format!("unknown operation `{name}`"));
            };
            if rec.flops != rec.calls * per_call {
                return fail(format!(
                    "{name}: {} flops for {} calls, expected {}",
                    rec.flops,
                    rec.calls,
                    rec.calls * per_call
                ));
            }
        }
        let c = &self.comm;
        if c.ghost_per_rank.len() != env.ranks
            || c.ghost_per_rank.iter().sum::<usize>() != c.ghost_volume
        {
            return fail(format!(
                "ghost_per_rank {:?} vs total {}",
                c.ghost_per_rank, c.ghost_volume
            ));
        }
        let calls = |name: &str| self.ops.get(name).map_or(0, |r| r.calls);
        if calls("VecScatterBegin") != c.scatters || calls("VecScatterEnd") != c.scatters {
            return fail(format!(
                "{} scatters but scatter ops logged differently",
                c.scatters
            ));
        }
        let r = env.ranks as u64;
        let per_reduction = r * (r - 1);
        let values = c.scatters * c.ghost_volume as u64 + c.reductions * per_reduction;
        if c.values_sent != values {
            return fail(format!("values_sent {} expected {values}", c.values_sent));
        }
        let messages = c.scatters * c.plan_messages as u64 + c.reductions * per_reduction;
        if c.messages_sent != messages {
            return fail(format!(
                "messages_sent {} expected {messages}",
                c.messages_sent
            ));
        }
        let s = &self.solver;
        if s.residual_history.len() != s.iterations + 1 {
            return fail(format!(
                "{} history entries for {} iterations",
                s.residual_history.len(),
                s.iterations
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Flat `section,key,value` rows.
    pub fn to_csv(&self) -> Result<String> {
        let mut rows: Vec<(String, String, String)> = Vec::new();
        let mut push = |s: &str, k: &str, v: String| rows.push((s.to_string(), k.to_string(), v));
        push("log", "schema_version", self.schema_version.to_string());
        let e = &self.environment;
        push("environment", "ranks", e.ranks.to_string());
        push("environment", "threads", e.threads.to_string());
        push("environment", "matrix", e.matrix.clone());
        push("environment", "n", e.n.to_string());
        push("environment", "nnz", e.nnz.to_string());
        push("environment", "bandwidth", e.bandwidth.to_string());
        push(
            "environment",
            "input_bandwidth",
            e.input_bandwidth.to_string(),
        );
        push("environment", "reordered", e.reordered.to_string());
        push("environment", "seed", e.seed.to_string());
        for (name, rec) in &self.ops {
            let sec = format!("op.{name}");
            push(&sec, "calls", rec.calls.to_string());
            push(&sec, "seconds", rec.seconds.to_string());
            push(&sec, "flops", rec.flops.to_string());
        }
        let s = &self.solver;
        push(
            "solver",
            "method",
            format!("{:?}", s.config.method).to_lowercase(),
        );
        push("solver", "pc", format!("{:?}", s.pc).to_lowercase());
        push("solver", "converged", s.converged.to_string());
        push("solver", "reason", format!("{:?}", s.reason).to_lowercase());
        push("solver", "iterations", s.iterations.to_string());
        push("solver", "final_residual", s.final_residual.to_string());
        push(
            "solver",
            "true_relative_residual",
            s.true_relative_residual.to_string(),
        );
        push("solver", "seconds", s.seconds.to_string());
        let c = &self.comm;
        push("comm", "plan_messages", c.plan_messages.to_string());
        push("comm", "ghost_volume", c.ghost_volume.to_string());
        push("comm", "scatters", c.scatters.to_string());
        push("comm", "reductions", c.reductions.to_string());
        push("comm", "messages_sent", c.messages_sent.to_string());
        push("comm", "values_sent", c.values_sent.to_string());

        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Csv(e.to_string());
        w.write_record(["section", "key", "value"])
            .map_err(csv_err)?;
        for (s, k, v) in &rows {
            w.write_record([s, k, v]).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Csv(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv of utf-8 fields"))
    }
}

/// JSON has no NaN; breakdown residuals are written as `null`.
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }

    pub mod vec {
        use serde::ser::SerializeSeq;
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(v.len()))?;
            for x in v {
                seq.serialize_element(&x.is_finite().then_some(*x))?;
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            let v = Vec::<Option<f64>>::deserialize(d)?;
            Ok(v.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect())
        }
    }
}
