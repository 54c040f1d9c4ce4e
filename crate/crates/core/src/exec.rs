//! Fork/join execution of chunked kernels.
//!
//! An [`Exec`] owns the worker pool of one rank. Every parallel region hands
//! chunk `c` to worker `c mod n_threads`, so with the usual one-chunk-per-thread
//! maps each worker touches the same index range in every kernel. The
//! sequential backend walks the chunks in order on the calling thread and
//! produces bitwise-identical results.

use std::collections::BTreeMap;
use std::ops::Range;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::layout::{chunk_ranges, ChunkMap};

/// How many workers a rank uses and below which length it stops threading.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ThreadingPolicy {
    pub n_threads: usize,
    /// Objects shorter than this run as a single chunk. 0 means always threaded.
    pub size_threshold: usize,
}

impl ThreadingPolicy {
    pub fn new(n_threads: usize) -> Result<Self> {
        if n_threads == 0 {
            return Err(Error::ZeroChunks);
        }
        Ok(Self {
            n_threads,
            size_threshold: 0,
        })
    }

    pub fn with_threshold(mut self, size_threshold: usize) -> Self {
        self.size_threshold = size_threshold;
        self
    }

    pub fn effective_chunks(&self, len: usize) -> usize {
        if len < self.size_threshold {
            1
        } else {
            self.n_threads
        }
    }
}

impl Default for ThreadingPolicy {
    fn default() -> Self {
        Self {
            n_threads: 1,
            size_threshold: 0,
        }
    }
}

/// Counters filled by audited runs.
#[derive(Debug, Default)]
pub struct Audit {
    chunk_writes: AtomicU64,
    cross_chunk_writes: AtomicU64,
    foreign_owner_writes: AtomicU64,
    regions: Mutex<BTreeMap<&'static str, u64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AuditReport {
    /// Destination chunks handed to workers.
    pub chunk_writes: u64,
    /// Destination slices that did not coincide with their chunk's range.
    pub cross_chunk_writes: u64,
    /// Destination chunks executed by a worker other than their owner.
    pub foreign_owner_writes: u64,
    /// Parallel regions entered, by kernel name.
    pub regions: BTreeMap<&'static str, u64>,
}

impl Audit {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn report(&self) -> AuditReport {
        AuditReport {
            chunk_writes: self.chunk_writes.load(Ordering::Relaxed),
            cross_chunk_writes: self.cross_chunk_writes.load(Ordering::Relaxed),
            foreign_owner_writes: self.foreign_owner_writes.load(Ordering::Relaxed),
            regions: self.regions.lock().unwrap().clone(),
        }
    }

    fn region(&self, name: &'static str) {
        *self.regions.lock().unwrap().entry(name).or_default() += 1;
    }
}

/// Identity of one unit of work inside a parallel region.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChunkCtx {
    pub chunk: usize,
    pub worker: usize,
    pub range: Range<usize>,
}

enum Backend {
    Sequential,
    Pool(rayon::ThreadPool),
}

pub struct Exec {
    policy: ThreadingPolicy,
    backend: Backend,
    audit: Option<Arc<Audit>>,
}

impl std::fmt::Debug for Exec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Exec")
            .field("policy", &self.policy)
            .field("threaded", &self.is_threaded())
            .field("audited", &self.audit.is_some())
            .finish()
    }
}

impl Exec {
    /// Runs every chunk on the calling thread, in chunk order.
    pub fn sequential(policy: ThreadingPolicy) -> Self {
        Self {
            policy,
            backend: Backend::Sequential,
            audit: None,
        }
    }

    /// Spawns `policy.n_threads` persistent workers.
    pub fn threaded(policy: ThreadingPolicy) -> Result<Self> {
        if policy.n_threads == 0 {
            return Err(Error::ZeroChunks);
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(policy.n_threads)
            .thread_name(|i| format!("mixsparse-worker-{i}"))
            .build()
            .map_err(|e| Error::Pool(e.to_string()))?;
        Ok(Self {
            policy,
            backend: Backend::Pool(pool),
            audit: None,
        })
    }

    pub fn with_audit(mut self, audit: Arc<Audit>) -> Self {
        self.audit = Some(audit);
        self
    }

    pub fn policy(&self) -> ThreadingPolicy {
        self.policy
    }

    pub fn n_threads(&self) -> usize {
        self.policy.n_threads
    }

    pub fn is_threaded(&self) -> bool {
        matches!(self.backend, Backend::Pool(_))
    }

    pub fn audit(&self) -> Option<&Arc<Audit>> {
        self.audit.as_ref()
    }

    /// The static chunk map this executor uses for objects of length `n`.
    pub fn chunk_map(&self, n: usize) -> ChunkMap {
        chunk_ranges(n, self.policy.effective_chunks(n)).expect("policy has at least one thread")
    }

    fn owner_of(&self, chunk: usize) -> usize {
        chunk % self.policy.n_threads
    }

    /// Runs `f` once per chunk and returns the results in chunk order.
    pub fn par_chunks<R, F>(&self, name: &'static str, chunks: &ChunkMap, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(ChunkCtx) -> R + Sync,
    {
        if let Some(a) = &self.audit {
            a.region(name);
        }
        let k = chunks.n_chunks();
        match &self.backend {
            Backend::Pool(pool) if k > 1 => {
                let t = self.policy.n_threads;
                let per_worker = pool.broadcast(|ctx| {
                    let w = ctx.index();
                    (w..k)
                        .step_by(t)
                        .map(|c| {
                            f(ChunkCtx {
                                chunk: c,
                                worker: w,
                                range: chunks.range(c),
                            })
                        })
                        .collect::<Vec<R>>()
                });
                // Interleave back into chunk order: chunk c sits at per_worker[c % t][c / t].
                let mut iters: Vec<_> = per_worker.into_iter().map(Vec::into_iter).collect();
                (0..k).map(|c| iters[c % t].next().unwrap()).collect()
            }
            _ => (0..k)
                .map(|c| {
                    f(ChunkCtx {
                        chunk: c,
                        worker: self.owner_of(c),
                        range: chunks.range(c),
                    })
                })
                .collect(),
        }
    }

    /// Like [`par_chunks`](Self::par_chunks) but also hands each worker the
    /// exclusive slice of `dst` belonging to its chunk.
    pub fn par_chunks_mut<R, F>(
        &self,
        name: &'static str,
        dst: &mut [f64],
        chunks: &ChunkMap,
        f: F,
    ) -> Vec<R>
    where
        R: Send,
        F: Fn(&ChunkCtx, &mut [f64]) -> R + Sync,
    {
        assert_eq!(
            dst.len(),
            chunks.len(),
            "destination does not match chunk map"
        );
        let base = dst.as_ptr() as usize;
        let mut slices = Vec::with_capacity(chunks.n_chunks());
        let mut rest = dst;
        for r in chunks.ranges() {
            let (head, tail) = std::mem::take(&mut rest).split_at_mut(r.len());
            slices.push(Mutex::new(Some(head)));
            rest = tail;
        }
        let audit = self.audit.clone();
        self.par_chunks(name, chunks, |ctx| {
            let slice = slices[ctx.chunk]
                .lock()
                .unwrap()
                .take()
                .expect("chunk handed out twice");
            if let Some(a) = &audit {
                a.chunk_writes.fetch_add(1, Ordering::Relaxed);
                let offset = (slice.as_ptr() as usize - base) / std::mem::size_of::<f64>();
                if offset != ctx.range.start || slice.len() != ctx.range.len() {
                    a.cross_chunk_writes.fetch_add(1, Ordering::Relaxed);
                }
                if ctx.worker != self.owner_of(ctx.chunk) {
                    a.foreign_owner_writes.fetch_add(1, Ordering::Relaxed);
                }
            }
            f(&ctx, slice)
        })
    }
}
