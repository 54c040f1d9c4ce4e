//! Row distribution across ranks, the per-rank on-/off-diagonal split and
//! the ghost scatter plan.
//!
//! All index ranges produced here follow one static split rule: the first
//! `n mod k` pieces get `ceil(n / k)` items and the rest `floor(n / k)`. Every
//! object of the same length therefore shares the same chunk boundaries, which
//! is what lets a worker that zeroed a chunk keep ownership of it in every
//! later kernel.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

fn split_bounds(n: usize, k: usize) -> Vec<usize> {
    let (base, extra) = (n / k, n % k);
    let mut bounds = Vec::with_capacity(k + 1);
    bounds.push(0);
    let mut at = 0;
    for c in 0..k {
        at += base + usize::from(c < extra);
        bounds.push(at);
    }
    bounds
}

/// Static partition of a local index range among worker threads.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChunkMap {
    bounds: Vec<usize>,
}

impl ChunkMap {
    pub fn len(&self) -> usize {
        *self.bounds.last().unwrap()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_chunks(&self) -> usize {
        self.bounds.len() - 1
    }

    pub fn range(&self, chunk: usize) -> Range<usize> {
        self.bounds[chunk]..self.bounds[chunk + 1]
    }

    pub fn ranges(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        self.bounds.windows(2).map(|w| w[0]..w[1])
    }

    pub fn bounds(&self) -> &[usize] {
        &self.bounds
    }
}

pub fn chunk_ranges(n: usize, k: usize) -> Result<ChunkMap> {
    if k == 0 {
        return Err(Error::ZeroChunks);
    }
    Ok(ChunkMap {
        bounds: split_bounds(n, k),
    })
}

/// Contiguous ownership of global rows by ranks, in rank order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowLayout {
    bounds: Vec<usize>,
}

impl RowLayout {
    /// Arbitrary contiguous layout from rank boundaries `0 = b0 <= b1 <= ... <= bR = n`.
    ///
    /// Unlike [`partition_rows`] this does not require balanced sizes.
    pub fn from_bounds(bounds: Vec<usize>) -> Result<Self> {
        if bounds.len() < 2 {
            return Err(Error::ZeroRanks);
        }
        if bounds[0] != 0 {
            return Err(Error::InvalidLayout("first boundary must be 0".into()));
        }
        if bounds.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidLayout(
                "boundaries must be non-decreasing".into(),
            ));
        }
        Ok(Self { bounds })
    }

    pub fn n_global(&self) -> usize {
        *self.bounds.last().unwrap()
    }

    pub fn n_ranks(&self) -> usize {
        self.bounds.len() - 1
    }

    pub fn range(&self, rank: usize) -> Range<usize> {
        self.bounds[rank]..self.bounds[rank + 1]
    }

    pub fn ranges(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        self.bounds.windows(2).map(|w| w[0]..w[1])
    }

    pub fn bounds(&self) -> &[usize] {
        &self.bounds
    }

    /// Rank owning global row `global`.
    pub fn owner(&self, global: usize) -> usize {
        debug_assert!(global < self.n_global());
        // Last boundary <= global among the leading R entries; empty ranks are skipped.
        self.bounds[..self.n_ranks()].partition_point(|&b| b <= global) - 1
    }
}

pub fn partition_rows(n_global: usize, n_ranks: usize) -> Result<RowLayout> {
    if n_ranks == 0 {
        return Err(Error::ZeroRanks);
    }
    Ok(RowLayout {
        bounds: split_bounds(n_global, n_ranks),
    })
}

/// One rank's share of a distributed matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankBlock {
    pub rank: usize,
    pub rows: Range<usize>,
    /// Entries whose columns this rank owns, in local column numbering.
    pub diag: CsrMatrix,
    /// Remaining entries, columns renumbered into positions of `ghost_cols`.
    pub offdiag: CsrMatrix,
    /// Sorted global indices of the columns referenced by `offdiag`.
    pub ghost_cols: Vec<usize>,
    pub chunks: ChunkMap,
}

impl RankBlock {
    pub fn n_local(&self) -> usize {
        self.rows.len()
    }

    /// Stored entries across both parts.
    pub fn nnz(&self) -> usize {
        self.diag.nnz() + self.offdiag.nnz()
    }

    /// Entries of this block in global coordinates, row-major, diag part first per row.
    pub fn global_triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let row0 = self.rows.start;
        let diag = self
            .diag
            .triplets()
            .map(move |(i, j, v)| (row0 + i, row0 + j, v));
        let off = self
            .offdiag
            .triplets()
            .map(move |(i, g, v)| (row0 + i, self.ghost_cols[g], v));
        diag.chain(off)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistMatrix {
    pub layout: RowLayout,
    pub threads_per_rank: usize,
    pub blocks: Vec<RankBlock>,
}

impl DistMatrix {
    pub fn n_global(&self) -> usize {
        self.layout.n_global()
    }

    pub fn nnz(&self) -> usize {
        self.blocks.iter().map(RankBlock::nnz).sum()
    }

    /// Re-expands every rank's parts into one global matrix.
    pub fn reconstruct(&self) -> Result<CsrMatrix> {
        let n = self.n_global();
        CsrMatrix::from_triplets(
            n,
            n,
            self.blocks.iter().flat_map(RankBlock::global_triplets),
        )
    }
}

/// Splits each rank's rows into the on-diagonal part (owned columns) and the
/// off-diagonal part (ghost columns, compacted to `0..ghost_cols.len()`).
pub fn split_dist(
    m: &CsrMatrix,
    layout: &RowLayout,
    threads_per_rank: usize,
) -> Result<DistMatrix> {
    if !m.is_square() {
        return Err(Error::NotSquare {
            n_rows: m.n_rows(),
            n_cols: m.n_cols(),
        });
    }
    if layout.n_global() != m.n_rows() {
        return Err(Error::Dimension(format!(
            "layout covers {} rows, matrix has {}",
            layout.n_global(),
            m.n_rows()
        )));
    }
    let mut blocks = Vec::with_capacity(layout.n_ranks());
    for (rank, rows) in layout.ranges().enumerate() {
        let owned = rows.clone();
        let mut ghost_cols: Vec<usize> = rows
            .clone()
            .flat_map(|i| m.row(i).0.iter().copied())
            .filter(|j| !owned.contains(j))
            .collect();
        ghost_cols.sort_unstable();
        ghost_cols.dedup();

        let n_local = rows.len();
        let mut d_ptr = Vec::with_capacity(n_local + 1);
        let mut o_ptr = Vec::with_capacity(n_local + 1);
        let (mut d_col, mut d_val, mut o_col, mut o_val) = (vec![], vec![], vec![], vec![]);
        d_ptr.push(0);
        o_ptr.push(0);
        for i in rows.clone() {
            let (cols, vals) = m.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if owned.contains(&j) {
                    d_col.push(j - owned.start);
                    d_val.push(v);
                } else {
                    // Ghost positions are monotone in j, so rows stay sorted.
                    o_col.push(ghost_cols.binary_search(&j).unwrap());
                    o_val.push(v);
                }
            }
            d_ptr.push(d_col.len());
            o_ptr.push(o_col.len());
        }
        blocks.push(RankBlock {
            rank,
            rows: rows.clone(),
            diag: CsrMatrix::new(n_local, n_local, d_ptr, d_col, d_val)?,
            offdiag: CsrMatrix::new(n_local, ghost_cols.len(), o_ptr, o_col, o_val)?,
            ghost_cols,
            chunks: chunk_ranges(n_local, threads_per_rank)?,
        });
    }
    Ok(DistMatrix {
        layout: layout.clone(),
        threads_per_rank,
        blocks,
    })
}

/// Elements one rank sends to another: `src_local[k]` fills `dst` ghost slot `ghost_slots[k]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub src: usize,
    pub dst: usize,
    pub src_local: Vec<usize>,
    pub ghost_slots: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScatterPlan {
    pub n_ranks: usize,
    /// Nonempty entries ordered by `(src, dst)`.
    pub entries: Vec<PlanEntry>,
    /// Ghost buffer length per rank.
    pub ghost_len: Vec<usize>,
}

impl ScatterPlan {
    pub fn sends_from(&self, rank: usize) -> impl Iterator<Item = &PlanEntry> {
        self.entries.iter().filter(move |e| e.src == rank)
    }

    /// Incoming entries for `rank`, ordered by source rank.
    pub fn recvs_to(&self, rank: usize) -> impl Iterator<Item = &PlanEntry> {
        self.entries.iter().filter(move |e| e.dst == rank)
    }

    pub fn n_messages(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn build_scatter_plan(dm: &DistMatrix) -> ScatterPlan {
    let n_ranks = dm.layout.n_ranks();
    let mut entries = Vec::new();
    for block in &dm.blocks {
        let mut by_src: Vec<Option<PlanEntry>> = vec![None; n_ranks];
        for (slot, &g) in block.ghost_cols.iter().enumerate() {
            let owner = dm.layout.owner(g);
            let entry = by_src[owner].get_or_insert_with(|| PlanEntry {
                src: owner,
                dst: block.rank,
                src_local: Vec::new(),
                ghost_slots: Vec::new(),
            });
            entry.src_local.push(g - dm.layout.range(owner).start);
            entry.ghost_slots.push(slot);
        }
        entries.extend(by_src.into_iter().flatten());
    }
    entries.sort_by_key(|e| (e.src, e.dst));
    ScatterPlan {
        n_ranks,
        entries,
        ghost_len: dm.blocks.iter().map(|b| b.ghost_cols.len()).collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GhostVolume {
    pub per_rank: Vec<usize>,
    pub total: usize,
    pub messages: usize,
}

pub fn ghost_volume(dm: &DistMatrix) -> GhostVolume {
    let per_rank: Vec<usize> = dm.blocks.iter().map(|b| b.ghost_cols.len()).collect();
    GhostVolume {
        total: per_rank.iter().sum(),
        per_rank,
        messages: build_scatter_plan(dm).n_messages(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ranges(c: &ChunkMap) -> Vec<(usize, usize)> {
        c.ranges().map(|r| (r.start, r.end)).collect()
    }

    /// The 4x4 worked example used throughout the docs and tests.
    pub(crate) fn example4() -> CsrMatrix {
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
    fn chunk_examples() {
        assert_eq!(
            ranges(&chunk_ranges(10, 4).unwrap()),
            [(0, 3), (3, 6), (6, 8), (8, 10)]
        );
        assert_eq!(ranges(&chunk_ranges(5, 1).unwrap()), [(0, 5)]);
        assert_eq!(
            ranges(&chunk_ranges(3, 5).unwrap()),
            [(0, 1), (1, 2), (2, 3), (3, 3), (3, 3)]
        );
        assert!(matches!(chunk_ranges(3, 0), Err(Error::ZeroChunks)));
    }

    #[test]
    fn partition_examples() {
        let l = partition_rows(10, 3).unwrap();
        assert_eq!(l.ranges().collect::<Vec<_>>(), [0..4, 4..7, 7..10]);
        assert_eq!(
            partition_rows(4, 1).unwrap().ranges().collect::<Vec<_>>(),
            vec![0..4]
        );
        assert_eq!(
            partition_rows(4, 2).unwrap().ranges().collect::<Vec<_>>(),
            [0..2, 2..4]
        );
        assert!(matches!(partition_rows(4, 0), Err(Error::ZeroRanks)));
    }

    #[test]
    fn owner_skips_empty_ranks() {
        let l = RowLayout::from_bounds(vec![0, 2, 2, 5]).unwrap();
        assert_eq!(
            (0..5).map(|g| l.owner(g)).collect::<Vec<_>>(),
            [0, 0, 2, 2, 2]
        );
        let l = partition_rows(3, 5).unwrap();
        assert_eq!((0..3).map(|g| l.owner(g)).collect::<Vec<_>>(), [0, 1, 2]);
        assert!(RowLayout::from_bounds(vec![1, 2]).is_err());
        assert!(RowLayout::from_bounds(vec![0, 3, 2]).is_err());
    }

    #[test]
    fn split_worked_example() {
        let dm = split_dist(&example4(), &partition_rows(4, 2).unwrap(), 1).unwrap();
        let r0 = &dm.blocks[0];
        assert_eq!(
            r0.diag.triplets().collect::<Vec<_>>(),
            [(0, 0, 2.0), (1, 1, 3.0)]
        );
        assert_eq!(r0.offdiag.triplets().collect::<Vec<_>>(), [(0, 0, 1.0)]);
        assert_eq!(r0.ghost_cols, [2]);
        let r1 = &dm.blocks[1];
        assert_eq!(
            r1.diag.triplets().collect::<Vec<_>>(),
            [(0, 1, 5.0), (1, 1, 6.0)]
        );
        assert_eq!(r1.offdiag.triplets().collect::<Vec<_>>(), [(0, 0, 4.0)]);
        assert_eq!(r1.ghost_cols, [0]);
        assert_eq!(dm.reconstruct().unwrap(), example4());
    }

    #[test]
    fn single_rank_owns_everything() {
        let m = example4();
        let dm = split_dist(&m, &partition_rows(4, 1).unwrap(), 3).unwrap();
        assert_eq!(dm.blocks[0].diag, m);
        assert_eq!(dm.blocks[0].offdiag.nnz(), 0);
        assert!(dm.blocks[0].ghost_cols.is_empty());
        assert_eq!(dm.blocks[0].chunks, chunk_ranges(4, 3).unwrap());
        assert!(build_scatter_plan(&dm).is_empty());
        assert_eq!(
            ghost_volume(&dm),
            GhostVolume {
                per_rank: vec![0],
                total: 0,
                messages: 0
            }
        );
    }

    #[test]
    fn block_diagonal_has_no_ghosts() {
        let m = CsrMatrix::from_triplets(
            6,
            6,
            [
                (0, 0, 1.0),
                (0, 1, 1.0),
                (1, 0, 1.0),
                (2, 3, 1.0),
                (3, 2, 1.0),
                (4, 5, 1.0),
                (5, 5, 1.0),
            ],
        )
        .unwrap();
        let dm = split_dist(&m, &partition_rows(6, 3).unwrap(), 2).unwrap();
        assert!(dm.blocks.iter().all(|b| b.offdiag.nnz() == 0));
        assert!(build_scatter_plan(&dm).is_empty());
    }

    #[test]
    fn plan_worked_example() {
        let dm = split_dist(&example4(), &partition_rows(4, 2).unwrap(), 2).unwrap();
        let plan = build_scatter_plan(&dm);
        assert_eq!(
            plan.entries,
            [
                PlanEntry {
                    src: 0,
                    dst: 1,
                    src_local: vec![0],
                    ghost_slots: vec![0]
                },
                PlanEntry {
                    src: 1,
                    dst: 0,
                    src_local: vec![0],
                    ghost_slots: vec![0]
                },
            ]
        );
        let gv = ghost_volume(&dm);
        assert_eq!((gv.total, gv.messages), (2, 2));
    }

    #[test]
    fn tridiagonal_ghost_volume() {
        let n = 8;
        let t: Vec<_> = (0..n)
            .flat_map(|i| {
                let mut v = vec![(i, i, 2.0)];
                if i > 0 {
                    v.push((i, i - 1, -1.0));
                }
                if i + 1 < n {
                    v.push((i, i + 1, -1.0));
                }
                v
            })
            .collect();
        let m = CsrMatrix::from_triplets(n, n, t).unwrap();
        let gv = ghost_volume(&split_dist(&m, &partition_rows(n, 4).unwrap(), 1).unwrap());
        assert_eq!(gv.per_rank, [1, 2, 2, 1]);
        assert_eq!((gv.total, gv.messages), (6, 6));
    }

    #[test]
    fn split_dimension_errors() {
        let m = example4();
        assert!(matches!(
            split_dist(&m, &partition_rows(5, 2).unwrap(), 1),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            split_dist(&CsrMatrix::empty(2, 3), &partition_rows(2, 1).unwrap(), 1),
            Err(Error::NotSquare { .. })
        ));
        assert!(matches!(
            split_dist(&m, &partition_rows(4, 2).unwrap(), 0),
            Err(Error::ZeroChunks)
        ));
    }
}
