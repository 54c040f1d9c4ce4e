//! In-process rank group.
//!
//! [`RankGroup::run`] starts one execution context per rank, each with its own
//! worker pool, and connects every ordered pair of ranks by a FIFO channel.
//! Code inside `run` is written SPMD-style against a [`RankCtx`]: collectives
//! (reductions and ghost scatters) must be entered by all ranks in the same
//! order. Every message carries the collective's sequence number, so a rank
//! that diverges gets a [`Error::CollectiveMismatch`] instead of silently
//! consuming the wrong data, and a rank that never arrives produces
//! [`Error::CollectiveTimeout`].

use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{Audit, Exec, ThreadingPolicy};
use crate::kernels::{self, ChunkedVector};
use crate::layout::{DistMatrix, RankBlock, RowLayout, ScatterPlan};
use crate::perf::{OpLog, Stopwatch};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum MsgKind {
    Reduce,
    Scatter,
}

#[derive(Debug)]
struct Msg {
    kind: MsgKind,
    seq: u64,
    data: Vec<f64>,
}

/// Message and reduction counters of one rank.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommStats {
    pub messages_sent: u64,
    pub values_sent: u64,
    pub reductions: u64,
    pub scatters: u64,
}

/// Launch configuration for a group of simulated ranks.
#[derive(Clone, Debug)]
pub struct RankGroup {
    n_ranks: usize,
    policy: ThreadingPolicy,
    threaded: bool,
    timeout: Duration,
    audit: Option<Arc<Audit>>,
}

impl RankGroup {
    pub fn new(n_ranks: usize, threads_per_rank: usize) -> Result<Self> {
        if n_ranks == 0 {
            return Err(Error::ZeroRanks);
        }
        Ok(Self {
            n_ranks,
            policy: ThreadingPolicy::new(threads_per_rank)?,
            threaded: true,
            timeout: DEFAULT_TIMEOUT,
            audit: None,
        })
    }

    /// Run every rank's chunks on that rank's own thread instead of a worker pool.
    pub fn sequential_kernels(mut self) -> Self {
        self.threaded = false;
        self
    }

    pub fn with_size_threshold(mut self, threshold: usize) -> Self {
        self.policy = self.policy.with_threshold(threshold);
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    /// Attach an audit shared by all ranks' executors.
    pub fn with_audit(mut self, audit: Arc<Audit>) -> Self {
        self.audit = Some(audit);
        self
    }

    pub fn n_ranks(&self) -> usize {
        self.n_ranks
    }

    pub fn threads_per_rank(&self) -> usize {
        self.policy.n_threads
    }

    /// Runs `f` on every rank and returns the per-rank results in rank order.
    ///
    /// A single rank runs on the calling thread. If any rank fails, the error
    /// of the lowest failing rank is returned.
    pub fn run<T, F>(&self, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&mut RankCtx) -> Result<T> + Sync,
    {
        let r = self.n_ranks;
        // inbox[dst][src]
        let mut senders: Vec<Vec<Sender<Msg>>> = (0..r).map(|_| Vec::with_capacity(r)).collect();
        let mut inboxes: Vec<Vec<Receiver<Msg>>> = Vec::with_capacity(r);
        for _dst in 0..r {
            let mut row = Vec::with_capacity(r);
            for outgoing in senders.iter_mut() {
                let (tx, rx) = channel();
                outgoing.push(tx);
                row.push(rx);
            }
            inboxes.push(row);
        }

        let make_ctx = |rank: usize,
                        senders: Vec<Sender<Msg>>,
                        inbox: Vec<Receiver<Msg>>|
         -> Result<RankCtx> {
            let exec = if self.threaded && self.policy.n_threads > 1 {
                Exec::threaded(self.policy)?
            } else {
                Exec::sequential(self.policy)
            };
            let exec = match &self.audit {
                Some(a) => exec.with_audit(a.clone()),
                None => exec,
            };
            Ok(RankCtx {
                rank,
                n_ranks: r,
                exec,
                senders,
                inbox,
                timeout: self.timeout,
                seq: 0,
                log: OpLog::default(),
                stats: CommStats::default(),
            })
        };

        if r == 1 {
            let mut ctx = make_ctx(0, senders.pop().unwrap(), inboxes.pop().unwrap())?;
            return Ok(vec![f(&mut ctx)?]);
        }

        let results: Vec<Result<T>> = std::thread::scope(|scope| {
            let handles: Vec<_> = senders
                .into_iter()
                .zip(inboxes)
                .enumerate()
                .map(|(rank, (tx, rx))| {
                    let f = &f;
                    let make_ctx = &make_ctx;
                    std::thread::Builder::new()
                        .name(format!("mixsparse-rank-{rank}"))
                        .spawn_scoped(scope, move || {
                            let mut ctx = make_ctx(rank, tx, rx)?;
                            f(&mut ctx)
                        })
                        .expect("spawn rank thread")
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|p| std::panic::resume_unwind(p)))
                .collect()
        });
        // Report the root cause: peers of a failed rank usually fail with Disconnected.
        if results.iter().any(Result::is_err) {
            let mut errs: Vec<Error> = results.into_iter().filter_map(Result::err).collect();
            let idx = errs
                .iter()
                .position(|e| !matches!(e, Error::Disconnected { .. }))
                .unwrap_or(0);
            return Err(errs.swap_remove(idx));
        }
        Ok(results.into_iter().map(|r| r.ok().unwrap()).collect())
    }
}

/// One rank's slice of a distributed vector plus its ghost buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct DistVector {
    layout: RowLayout,
    rank: usize,
    pub owned: ChunkedVector,
    pub ghost: ChunkedVector,
    pending: Option<(u64, Option<u64>)>,
}

impl DistVector {
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn layout(&self) -> &RowLayout {
        &self.layout
    }

    /// Global index of the first owned row.
    pub fn global_start(&self) -> usize {
        self.layout.range(self.rank).start
    }

    pub fn owned_slice(&self) -> &[f64] {
        self.owned.as_slice()
    }

    pub fn scatter_in_flight(&self) -> bool {
        self.pending.is_some()
    }
}

/// The rank-local view of a distributed operator.
#[derive(Clone, Copy, Debug)]
pub struct LocalOperator<'a> {
    pub layout: &'a RowLayout,
    pub block: &'a RankBlock,
    pub plan: &'a ScatterPlan,
}

impl<'a> LocalOperator<'a> {
    pub fn new(dm: &'a DistMatrix, plan: &'a ScatterPlan, rank: usize) -> Self {
        Self {
            layout: &dm.layout,
            block: &dm.blocks[rank],
            plan,
        }
    }

    pub fn n_local(&self) -> usize {
        self.block.n_local()
    }
}

/// How [`RankCtx::spmv_with`] orders the ghost exchange against the diagonal multiply.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpmvSchedule {
    /// Post the scatter, multiply the diagonal block, then wait for ghosts.
    Overlapped,
    /// Complete the scatter before any multiply.
    ScatterFirst,
}

fn owned_fingerprint(v: &ChunkedVector) -> u64 {
    v.as_slice().iter().fold(0xcbf2_9ce4_8422_2325u64, |h, x| {
        (h ^ x.to_bits()).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Execution context of one rank inside [`RankGroup::run`].
pub struct RankCtx {
    rank: usize,
    n_ranks: usize,
    exec: Exec,
    senders: Vec<Sender<Msg>>,
    inbox: Vec<Receiver<Msg>>,
    timeout: Duration,
    seq: u64,
    log: OpLog,
    stats: CommStats,
}

impl RankCtx {
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn n_ranks(&self) -> usize {
        self.n_ranks
    }

    pub fn exec(&self) -> &Exec {
        &self.exec
    }

    pub fn log(&self) -> &OpLog {
        &self.log
    }

    pub fn stats(&self) -> &CommStats {
        &self.stats
    }

    /// Clears op records and counters, e.g. after setup and before a timed solve.
    pub fn reset_log(&mut self) {
        self.log = OpLog::default();
        self.stats = CommStats::default();
    }

    fn send(&mut self, dst: usize, kind: MsgKind, data: Vec<f64>) -> Result<()> {
        self.stats.messages_sent += 1;
        self.stats.values_sent += data.len() as u64;
        self.senders[dst]
            .send(Msg {
                kind,
                seq: self.seq,
                data,
            })
            .map_err(|_| Error::Disconnected { peer: dst })
    }

    fn recv(&self, src: usize, kind: MsgKind, what: &'static str) -> Result<Vec<f64>> {
        let msg = match self.inbox[src].recv_timeout(self.timeout) {
            Ok(m) => m,
            Err(RecvTimeoutError::Timeout) => {
                return Err(Error::CollectiveTimeout {
                    rank: self.rank,
                    peer: src,
                    what,
                })
            }
            Err(RecvTimeoutError::Disconnected) => return Err(Error::Disconnected { peer: src }),
        };
        if msg.kind != kind || msg.seq != self.seq {
            return Err(Error::CollectiveMismatch {
                rank: self.rank,
                peer: src,
                expected: format!("{kind:?}#{}", self.seq),
                received: format!("{:?}#{}", msg.kind, msg.seq),
            });
        }
        Ok(msg.data)
    }

    /// Sum of one value per rank, added in ascending rank order on every rank.
    pub fn allreduce_sum(&mut self, value: f64) -> Result<f64> {
        self.seq += 1;
        self.stats.reductions += 1;
        let me = self.rank;
        for dst in (0..self.n_ranks).filter(|&d| d != me) {
            self.send(dst, MsgKind::Reduce, vec![value])?;
        }
        let mut acc = 0.0;
        for src in 0..self.n_ranks {
            acc += if src == self.rank {
                value
            } else {
                let data = self.recv(src, MsgKind::Reduce, "allreduce")?;
                data[0]
            };
        }
        Ok(acc)
    }

    pub fn create_vector(&self, op: &LocalOperator<'_>) -> DistVector {
        DistVector {
            layout: op.layout.clone(),
            rank: self.rank,
            owned: kernels::alloc_zeroed(&self.exec, op.n_local()),
            ghost: kernels::alloc_zeroed(&self.exec, op.block.ghost_cols.len()),
            pending: None,
        }
    }

    /// A vector holding this rank's rows of `global`.
    pub fn vector_from_global(&self, op: &LocalOperator<'_>, global: &[f64]) -> Result<DistVector> {
        if global.len() != op.layout.n_global() {
            return Err(Error::Dimension(format!(
                "global vector of length {} for layout of {}",
                global.len(),
                op.layout.n_global()
            )));
        }
        let mut v = self.create_vector(op);
        v.owned = ChunkedVector::from_slice(&self.exec, &global[op.block.rows.clone()]);
        Ok(v)
    }

    /// Posts all sends of this rank's owned values and returns without waiting.
    pub fn scatter_begin(&mut self, x: &mut DistVector, plan: &ScatterPlan) -> Result<()> {
        if x.pending.is_some() {
            return Err(Error::ScatterInFlight);
        }
        let sw = Stopwatch::start();
        self.seq += 1;
        self.stats.scatters += 1;
        let sends: Vec<(usize, Vec<f64>)> = plan
            .sends_from(self.rank)
            .map(|e| {
                (
                    e.dst,
                    e.src_local.iter().map(|&i| x.owned.as_slice()[i]).collect(),
                )
            })
            .collect();
        for (dst, data) in sends {
            self.send(dst, MsgKind::Scatter, data)?;
        }
        let fingerprint = self.exec.audit().map(|_| owned_fingerprint(&x.owned));
        x.pending = Some((self.seq, fingerprint));
        self.log.record("VecScatterBegin", sw.seconds(), 0);
        Ok(())
    }

    /// Blocks until every ghost slot of this rank has been received.
    pub fn scatter_end(&mut self, x: &mut DistVector, plan: &ScatterPlan) -> Result<()> {
        let (seq, fingerprint) = x.pending.take().ok_or(Error::ScatterNotStarted)?;
        debug_assert_eq!(seq, self.seq);
        let sw = Stopwatch::start();
        if x.ghost.len() != plan.ghost_len[self.rank] {
            return Err(Error::Dimension(format!(
                "ghost buffer of length {} for plan expecting {}",
                x.ghost.len(),
                plan.ghost_len[self.rank]
            )));
        }
        for entry in plan.recvs_to(self.rank) {
            let data = self.recv(entry.src, MsgKind::Scatter, "scatter")?;
            if data.len() != entry.ghost_slots.len() {
                return Err(Error::Dimension(format!(
                    "scatter from rank {} carried {} values, expected {}",
                    entry.src,
                    data.len(),
                    entry.ghost_slots.len()
                )));
            }
            let ghost = x.ghost.as_mut_slice();
            for (&slot, v) in entry.ghost_slots.iter().zip(data) {
                ghost[slot] = v;
            }
        }
        if let Some(before) = fingerprint {
            if owned_fingerprint(&x.owned) != before {
                return Err(Error::OwnedMutatedDuringScatter);
            }
        }
        self.log.record("VecScatterEnd", sw.seconds(), 0);
        Ok(())
    }

    fn check_operands(op: &LocalOperator<'_>, x: &DistVector, y: &DistVector) -> Result<()> {
        let n = op.n_local();
        if x.owned.len() != n || y.owned.len() != n || x.ghost.len() != op.block.ghost_cols.len() {
            return Err(Error::Dimension(format!(
                "operator with {n} local rows and {} ghosts applied to vectors of {}+{} / {}",
                op.block.ghost_cols.len(),
                x.owned.len(),
                x.ghost.len(),
                y.owned.len()
            )));
        }
        Ok(())
    }

    /// `y <- A x` with the scatter overlapped with the diagonal-block multiply.
    pub fn spmv(
        &mut self,
        op: &LocalOperator<'_>,
        x: &mut DistVector,
        y: &mut DistVector,
    ) -> Result<()> {
        self.spmv_with(op, x, y, SpmvSchedule::Overlapped)
    }

    pub fn spmv_with(
        &mut self,
        op: &LocalOperator<'_>,
        x: &mut DistVector,
        y: &mut DistVector,
        schedule: SpmvSchedule,
    ) -> Result<()> {
        Self::check_operands(op, x, y)?;
        let sw = Stopwatch::start();
        self.scatter_begin(x, op.plan)?;
        if schedule == SpmvSchedule::ScatterFirst {
            self.scatter_end(x, op.plan)?;
        }
        kernels::seq_spmv(
            &self.exec,
            &op.block.diag,
            x.owned.as_slice(),
            &mut y.owned,
            false,
        )?;
        if schedule == SpmvSchedule::Overlapped {
            self.scatter_end(x, op.plan)?;
        }
        kernels::seq_spmv(
            &self.exec,
            &op.block.offdiag,
            x.ghost.as_slice(),
            &mut y.owned,
            true,
        )?;
        self.log
            .record("MatMult", sw.seconds(), 2 * op.block.nnz() as u64);
        Ok(())
    }

    pub fn dot(&mut self, x: &DistVector, y: &DistVector) -> Result<f64> {
        let sw = Stopwatch::start();
        let local = kernels::dot(&self.exec, &x.owned, &y.owned)?;
        let global = self.allreduce_sum(local)?;
        self.log
            .record("VecDot", sw.seconds(), 2 * x.owned.len() as u64);
        Ok(global)
    }

    pub fn norm2(&mut self, x: &DistVector) -> Result<f64> {
        let sw = Stopwatch::start();
        let local = kernels::sum_squares(&self.exec, &x.owned);
        let global = self.allreduce_sum(local)?.sqrt();
        self.log
            .record("VecNorm", sw.seconds(), 2 * x.owned.len() as u64);
        Ok(global)
    }

    /// `y <- alpha x + y`
    pub fn axpy(&mut self, alpha: f64, x: &DistVector, y: &mut DistVector) -> Result<()> {
        let sw = Stopwatch::start();
        kernels::axpy(&self.exec, alpha, &x.owned, &mut y.owned)?;
        self.log
            .record("VecAXPY", sw.seconds(), 2 * x.owned.len() as u64);
        Ok(())
    }

    /// `y <- x + alpha y`
    pub fn aypx(&mut self, alpha: f64, x: &DistVector, y: &mut DistVector) -> Result<()> {
        let sw = Stopwatch::start();
        kernels::aypx(&self.exec, alpha, &x.owned, &mut y.owned)?;
        self.log
            .record("VecAYPX", sw.seconds(), 2 * x.owned.len() as u64);
        Ok(())
    }

    /// `w <- alpha x + y`
    pub fn waxpy(
        &mut self,
        w: &mut DistVector,
        alpha: f64,
        x: &DistVector,
        y: &DistVector,
    ) -> Result<()> {
        let sw = Stopwatch::start();
        kernels::waxpy(&self.exec, &mut w.owned, alpha, &x.owned, &y.owned)?;
        self.log
            .record("VecWAXPY", sw.seconds(), 2 * x.owned.len() as u64);
        Ok(())
    }

    pub fn copy(&mut self, src: &DistVector, dst: &mut DistVector) -> Result<()> {
        let sw = Stopwatch::start();
        kernels::copy(&self.exec, &src.owned, &mut dst.owned)?;
        self.log.record("VecCopy", sw.seconds(), 0);
        Ok(())
    }

    pub fn set(&mut self, v: &mut DistVector, alpha: f64) {
        let sw = Stopwatch::start();
        kernels::set(&self.exec, &mut v.owned, alpha);
        self.log.record("VecSet", sw.seconds(), 0);
    }

    pub fn scale(&mut self, v: &mut DistVector, alpha: f64) {
        let sw = Stopwatch::start();
        kernels::scale(&self.exec, &mut v.owned, alpha);
        self.log
            .record("VecScale", sw.seconds(), v.owned.len() as u64);
    }

    /// `w <- x ./ y`; a zero divisor is reported by global row index.
    pub fn pointwise_divide(
        &mut self,
        w: &mut DistVector,
        x: &DistVector,
        y: &DistVector,
    ) -> Result<()> {
        let sw = Stopwatch::start();
        kernels::pointwise_divide(&self.exec, &mut w.owned, &x.owned, &y.owned).map_err(
            |e| match e {
                Error::ZeroDivisor { index } => Error::ZeroDiagonal {
                    global_index: y.global_start() + index,
                },
                other => other,
            },
        )?;
        self.log
            .record("VecPointwiseDivide", sw.seconds(), x.owned.len() as u64);
        Ok(())
    }

    /// `w <- x .* y`
    pub fn pointwise_mult(
        &mut self,
        w: &mut DistVector,
        x: &DistVector,
        y: &DistVector,
    ) -> Result<()> {
        let sw = Stopwatch::start();
        kernels::pointwise_mult(&self.exec, &mut w.owned, &x.owned, &y.owned)?;
        self.log
            .record("VecPointwiseMult", sw.seconds(), x.owned.len() as u64);
        Ok(())
    }
}

/// Concatenates per-rank owned slices back into one global vector.
pub fn gather_owned(parts: &[DistVector]) -> Vec<f64> {
    parts
        .iter()
        .flat_map(|p| p.owned_slice().iter().copied())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{build_scatter_plan, partition_rows, split_dist};
    use crate::sparse::CsrMatrix;

    fn example4() -> CsrMatrix {
        CsrMatrix::from_triplets(
            4,
            4,
            [
                (0, 0, 2.0),
                (0, 2, 1.0),
                (1, 1, 3.0),
                (2, 0, 4.0),
                (2, 3, 5.0),
                (3, 3, 6.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn allreduce_examples() {
        let g = RankGroup::new(2, 1).unwrap();
        let out = g
            .run(|ctx| ctx.allreduce_sum([1.5, 2.5][ctx.rank()]))
            .unwrap();
        assert_eq!(out, vec![4.0, 4.0]);

        let g = RankGroup::new(1, 1).unwrap();
        assert_eq!(g.run(|ctx| ctx.allreduce_sum(7.25)).unwrap(), vec![7.25]);

        let g = RankGroup::new(3, 1).unwrap();
        let out = g
            .run(|ctx| ctx.allreduce_sum([1e16, 1.0, -1e16][ctx.rank()]))
            .unwrap();
        assert_eq!(out, vec![0.0; 3]);
    }

    #[test]
    fn scatter_fills_ghosts_with_owner_values() {
        let m = example4();
        let dm = split_dist(&m, &partition_rows(4, 2).unwrap(), 2).unwrap();
        let plan = build_scatter_plan(&dm);
        let ghosts = RankGroup::new(2, 2)
            .unwrap()
            .run(|ctx| {
                let op = LocalOperator::new(&dm, &plan, ctx.rank());
                let global: Vec<f64> = (0..4).map(|i| i as f64).collect();
                let mut x = ctx.vector_from_global(&op, &global)?;
                ctx.scatter_begin(&mut x, &plan)?;
                ctx.scatter_end(&mut x, &plan)?;
                let first = x.ghost.to_vec();
                ctx.scatter_begin(&mut x, &plan)?;
                ctx.scatter_end(&mut x, &plan)?;
                assert_eq!(first, x.ghost.to_vec());
                Ok(first)
            })
            .unwrap();
        assert_eq!(ghosts, vec![vec![2.0], vec![0.0]]);
    }

    #[test]
    fn empty_plan_scatter_is_noop() {
        let m = CsrMatrix::identity(4);
        let dm = split_dist(&m, &partition_rows(4, 2).unwrap(), 1).unwrap();
        let plan = build_scatter_plan(&dm);
        let sent = RankGroup::new(2, 1)
            .unwrap()
            .run(|ctx| {
                let op = LocalOperator::new(&dm, &plan, ctx.rank());
                let mut x = ctx.vector_from_global(&op, &[1.0; 4])?;
                ctx.scatter_begin(&mut x, &plan)?;
                ctx.scatter_end(&mut x, &plan)?;
                Ok(ctx.stats().messages_sent)
            })
            .unwrap();
        assert_eq!(sent, vec![0, 0]);
    }

    #[test]
    fn scatter_misuse_errors() {
        let m = example4();
        let dm = split_dist(&m, &partition_rows(4, 1).unwrap(), 1).unwrap();
        let plan = build_scatter_plan(&dm);
        RankGroup::new(1, 1)
            .unwrap()
            .run(|ctx| {
                let op = LocalOperator::new(&dm, &plan, 0);
                let mut x = ctx.create_vector(&op);
                assert!(matches!(
                    ctx.scatter_end(&mut x, &plan),
                    Err(Error::ScatterNotStarted)
                ));
                ctx.scatter_begin(&mut x, &plan)?;
                assert!(matches!(
                    ctx.scatter_begin(&mut x, &plan),
                    Err(Error::ScatterInFlight)
                ));
                ctx.scatter_end(&mut x, &plan)?;
                Ok(())
            })
            .unwrap();
    }

    #[test]
    fn mutation_during_scatter_detected_when_audited() {
        let m = example4();
        let dm = split_dist(&m, &partition_rows(4, 2).unwrap(), 1).unwrap();
        let plan = build_scatter_plan(&dm);
        let err = RankGroup::new(2, 1)
            .unwrap()
            .with_audit(Audit::new())
            .run(|ctx| {
                let op = LocalOperator::new(&dm, &plan, ctx.rank());
                let mut x = ctx.vector_from_global(&op, &[1.0; 4])?;
                ctx.scatter_begin(&mut x, &plan)?;
                x.owned.as_mut_slice()[0] = 5.0;
                ctx.scatter_end(&mut x, &plan)
            })
            .unwrap_err();
        assert!(matches!(err, Error::OwnedMutatedDuringScatter), "{err}");
    }

    #[test]
    fn divergent_collectives_are_detected() {
        let dm = split_dist(&example4(), &partition_rows(4, 2).unwrap(), 1).unwrap();
        let plan = build_scatter_plan(&dm);
        let err = RankGroup::new(2, 1)
            .unwrap()
            .with_timeout(Duration::from_secs(5))
            .run(|ctx| {
                if ctx.rank() == 0 {
                    let op = LocalOperator::new(&dm, &plan, 0);
                    let mut x = ctx.create_vector(&op);
                    ctx.scatter_begin(&mut x, &plan)?;
                }
                ctx.allreduce_sum(2.0)
            })
            .unwrap_err();
        assert!(matches!(err, Error::CollectiveMismatch { .. }), "{err}");
    }

    #[test]
    fn missing_peer_times_out() {
        let err = RankGroup::new(2, 1)
            .unwrap()
            .with_timeout(Duration::from_millis(50))
            .run(|ctx| {
                if ctx.rank() == 0 {
                    ctx.allreduce_sum(1.0)?;
                } else {
                    std::thread::sleep(Duration::from_millis(300));
                }
                Ok(())
            })
            .unwrap_err();
        assert!(
            matches!(
                err,
                Error::CollectiveTimeout {
                    rank: 0,
                    peer: 1,
                    ..
                }
            ),
            "{err}"
        );
    }

    #[test]
    fn dist_spmv_worked_example() {
        let m = example4();
        for t in [1, 2] {
            let dm = split_dist(&m, &partition_rows(4, 2).unwrap(), t).unwrap();
            let plan = build_scatter_plan(&dm);
            let parts = RankGroup::new(2, t)
                .unwrap()
                .run(|ctx| {
                    let op = LocalOperator::new(&dm, &plan, ctx.rank());
                    let mut x = ctx.vector_from_global(&op, &[1.0; 4])?;
                    let mut y = ctx.create_vector(&op);
                    ctx.spmv(&op, &mut x, &mut y)?;
                    Ok(y)
                })
                .unwrap();
            assert_eq!(gather_owned(&parts), vec![3.0, 3.0, 9.0, 6.0]);
        }
    }

    #[test]
    fn dist_dot_and_norm() {
        let m = CsrMatrix::identity(10);
        for (r, t) in [(1, 1), (2, 2), (4, 1), (3, 4)] {
            let dm = split_dist(&m, &partition_rows(10, r).unwrap(), t).unwrap();
            let plan = build_scatter_plan(&dm);
            let out = RankGroup::new(r, t)
                .unwrap()
                .run(|ctx| {
                    let op = LocalOperator::new(&dm, &plan, ctx.rank());
                    let ones = ctx.vector_from_global(&op, &[1.0; 10])?;
                    let zero = ctx.create_vector(&op);
                    Ok((
                        ctx.dot(&ones, &ones)?,
                        ctx.dot(&ones, &zero)?,
                        ctx.norm2(&ones)?,
                    ))
                })
                .unwrap();
            for (d, z, nrm) in out {
                assert_eq!(d, 10.0);
                assert_eq!(z, 0.0);
                assert_eq!(nrm, 10f64.sqrt());
            }
        }
    }

    #[test]
    fn zero_divisor_reports_global_row() {
        let m = CsrMatrix::identity(6);
        let dm = split_dist(&m, &partition_rows(6, 2).unwrap(), 1).unwrap();
        let plan = build_scatter_plan(&dm);
        let err = RankGroup::new(2, 1)
            .unwrap()
            .run(|ctx| {
                let op = LocalOperator::new(&dm, &plan, ctx.rank());
                let d = ctx.vector_from_global(&op, &[1.0, 1.0, 1.0, 1.0, 0.0, 1.0])?;
                let r = ctx.vector_from_global(&op, &[1.0; 6])?;
                let mut z = ctx.create_vector(&op);
                ctx.pointwise_divide(&mut z, &r, &d)
            })
            .unwrap_err();
        assert!(
            matches!(err, Error::ZeroDiagonal { global_index: 4 }),
            "{err}"
        );
    }
}
