//! Symmetric permutations, bandwidth and Reverse Cuthill-McKee ordering.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::CsrMatrix;
use crate::error::{Error, Result};

/// A bijection on `0..n`, stored as `new_of_old[old] = new`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Permutation {
    new_of_old: Vec<usize>,
}

impl Permutation {
    pub fn new(new_of_old: Vec<usize>) -> Result<Self> {
        let n = new_of_old.len();
        let mut seen = vec![false; n];
        for (old, &new) in new_of_old.iter().enumerate() {
            if new >= n {
                return Err(Error::InvalidPermutation(format!(
                    "entry {old} maps to {new}, outside 0..{n}"
                )));
            }
            if std::mem::replace(&mut seen[new], true) {
                return Err(Error::InvalidPermutation(format!(
                    "target {new} used twice"
                )));
            }
        }
        Ok(Self { new_of_old })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            new_of_old: (0..n).collect(),
        }
    }

    /// Builds the permutation that places `order[k]` at position `k`.
    pub fn from_order(order: &[usize]) -> Result<Self> {
        let n = order.len();
        let mut new_of_old = vec![usize::MAX; n];
        for (new, &old) in order.iter().enumerate() {
            if old >= n || new_of_old[old] != usize::MAX {
                return Err(Error::InvalidPermutation(format!(
                    "order entry {old} out of range or repeated"
                )));
            }
            new_of_old[old] = new;
        }
        Ok(Self { new_of_old })
    }

    pub fn len(&self) -> usize {
        self.new_of_old.len()
    }

    pub fn is_empty(&self) -> bool {
        self.new_of_old.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.new_of_old
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.len()];
        for (old, &new) in self.new_of_old.iter().enumerate() {
            inv[new] = old;
        }
        Self { new_of_old: inv }
    }

    /// Moves `v[old]` to position `new`.
    pub fn apply_to_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.len() {
            return Err(Error::Dimension(format!(
                "vector of length {} vs permutation of length {}",
                v.len(),
                self.len()
            )));
        }
        let mut out = vec![0.0; v.len()];
        for (old, &new) in self.new_of_old.iter().enumerate() {
            out[new] = v[old];
        }
        Ok(out)
    }
}

/// Maximum `|i - j|` over stored entries; 0 for an empty or diagonal matrix.
pub fn bandwidth(m: &CsrMatrix) -> Result<usize> {
    if !m.is_square() {
        return Err(Error::NotSquare {
            n_rows: m.n_rows(),
            n_cols: m.n_cols(),
        });
    }
    Ok(m.triplets()
        .map(|(i, j, _)| i.abs_diff(j))
        .max()
        .unwrap_or(0))
}

/// Symmetric permutation `P M P^T`: entry `(i, j)` moves to `(p[i], p[j])`.
pub fn permute(m: &CsrMatrix, p: &Permutation) -> Result<CsrMatrix> {
    if !m.is_square() {
        return Err(Error::NotSquare {
            n_rows: m.n_rows(),
            n_cols: m.n_cols(),
        });
    }
    if p.len() != m.n_rows() {
        return Err(Error::Dimension(format!(
            "permutation of length {} for {}x{} matrix",
            p.len(),
            m.n_rows(),
            m.n_cols()
        )));
    }
    let map = p.as_slice();
    CsrMatrix::from_triplets(
        m.n_rows(),
        m.n_cols(),
        m.triplets().map(|(i, j, v)| (map[i], map[j], v)),
    )
}

/// Symmetrized, diagonal-free adjacency lists, each sorted ascending.
fn adjacency(m: &CsrMatrix) -> Vec<Vec<usize>> {
    let n = m.n_rows();
    let mut adj = vec![Vec::new(); n];
    for (i, j, _) in m.triplets() {
        if i != j {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    adj
}

/// BFS level structure from `root`; nodes are marked with `stamp` as they are reached.
fn level_structure(
    adj: &[Vec<usize>],
    root: usize,
    mark: &mut [usize],
    stamp: usize,
) -> Vec<Vec<usize>> {
    let mut levels = vec![vec![root]];
    mark[root] = stamp;
    loop {
        let mut next = Vec::new();
        for &u in levels.last().unwrap() {
            for &w in &adj[u] {
                if mark[w] != stamp {
                    mark[w] = stamp;
                    next.push(w);
                }
            }
        }
        if next.is_empty() {
            return levels;
        }
        levels.push(next);
    }
}

fn min_degree(adj: &[Vec<usize>], nodes: &[usize]) -> usize {
    *nodes
        .iter()
        .min_by_key(|&&u| (adj[u].len(), u))
        .expect("non-empty node set")
}

/// Repeated-BFS pseudo-peripheral node search inside one component.
fn pseudo_peripheral(
    adj: &[Vec<usize>],
    component: &[usize],
    mark: &mut [usize],
    stamp: &mut usize,
) -> usize {
    let mut root = min_degree(adj, component);
    *stamp += 1;
    let mut levels = level_structure(adj, root, mark, *stamp);
    loop {
        let candidate = min_degree(adj, levels.last().unwrap());
        *stamp += 1;
        let cand_levels = level_structure(adj, candidate, mark, *stamp);
        if cand_levels.len() > levels.len() {
            root = candidate;
            levels = cand_levels;
        } else {
            return root;
        }
    }
}

/// Reverse Cuthill-McKee ordering of the symmetrized pattern of `m`.
///
/// Components are taken in order of their lowest original index. Each one is
/// traversed breadth-first from a pseudo-peripheral node, unvisited neighbours
/// enqueued by ascending `(degree, index)`, and its ordering reversed.
pub fn rcm_order(m: &CsrMatrix) -> Result<Permutation> {
    if !m.is_square() {
        return Err(Error::NotSquare {
            n_rows: m.n_rows(),
            n_cols: m.n_cols(),
        });
    }
    let n = m.n_rows();
    let adj = adjacency(m);
    let mut visited = vec![false; n];
    let mut mark = vec![0usize; n];
    let mut stamp = 0usize;
    let mut order = Vec::with_capacity(n);

    for seed in 0..n {
        if visited[seed] {
            continue;
        }
        stamp += 1;
        let component: Vec<usize> = level_structure(&adj, seed, &mut mark, stamp)
            .into_iter()
            .flatten()
            .collect();
        let start = pseudo_peripheral(&adj, &component, &mut mark, &mut stamp);

        let begin = order.len();
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        let mut fresh = Vec::new();
        while let Some(u) = queue.pop_front() {
            order.push(u);
            fresh.clear();
            fresh.extend(adj[u].iter().copied().filter(|&w| !visited[w]));
            fresh.sort_unstable_by_key(|&w| (adj[w].len(), w));
            for &w in &fresh {
                visited[w] = true;
                queue.push_back(w);
            }
        }
        order[begin..].reverse();
    }
    Permutation::from_order(&order)
}
