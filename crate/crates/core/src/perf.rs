//! Per-rank operation timing and flop accounting.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Wall-clock stopwatch. On `wasm32` without a host clock it always reads zero.
#[derive(Clone, Copy, Debug)]
pub struct Stopwatch {
    #[cfg(not(target_arch = "wasm32"))]
    start: std::time::Instant,
}

impl Stopwatch {
    pub fn start() -> Self {
        Self {
            #[cfg(not(target_arch = "wasm32"))]
            start: std::time::Instant::now(),
        }
    }

    pub fn seconds(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        {
            self.start.elapsed().as_secs_f64()
        }
        #[cfg(target_arch = "wasm32")]
        {
            0.0
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OpRecord {
    pub calls: u64,
    pub seconds: f64,
    pub flops: u64,
}

/// Operation records of one rank, keyed by operation name.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OpLog {
    pub ops: BTreeMap<String, OpRecord>,
}

impl OpLog {
    pub fn record(&mut self, name: &str, seconds: f64, flops: u64) {
        let rec = self.ops.entry(name.to_string()).or_default();
        rec.calls += 1;
        rec.seconds += seconds;
        rec.flops += flops;
    }

    /// Combines rank logs: calls from rank 0, time as the max over ranks, flops summed.
    pub fn merge_ranks(logs: &[OpLog]) -> OpLog {
        let mut out = OpLog::default();
        for (r, log) in logs.iter().enumerate() {
            for (name, rec) in &log.ops {
                let e = out.ops.entry(name.clone()).or_default();
                if r == 0 {
                    e.calls = rec.calls;
                }
                e.seconds = e.seconds.max(rec.seconds);
                e.flops += rec.flops;
            }
        }
        out
    }
}
