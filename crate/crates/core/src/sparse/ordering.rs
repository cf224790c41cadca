use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::symmetric::SparsePattern;

/// Fill-reducing ordering applied before a sparse factorization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Ordering {
    /// Identity permutation; right for band matrices.
    Natural,
    /// Greedy minimum degree on the explicit elimination graph.
    #[default]
    MinimumDegree,
}

impl Ordering {
    /// Returns `perm` with `perm[k]` = original index eliminated at step `k`.
    pub fn permutation(self, pattern: &SparsePattern) -> Vec<usize> {
        match self {
            Ordering::Natural => (0..pattern.dim()).collect(),
            Ordering::MinimumDegree => minimum_degree(pattern),
        }
    }
}

/// Greedy minimum-degree ordering; ties go to the lowest index.
pub fn minimum_degree(pattern: &SparsePattern) -> Vec<usize> {
    let n = pattern.dim();
    let mut adj = pattern.adjacency();
    let mut eliminated = vec![false; n];
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> = (0..n).map(|i| Reverse((adj[i].len(), i))).collect();
    let mut perm = Vec::with_capacity(n);
    let mut merged = Vec::new();
    while let Some(Reverse((deg, v))) = heap.pop() {
        if eliminated[v] || deg != adj[v].len() {
            continue;
        }
        eliminated[v] = true;
        perm.push(v);
        let nbrs = std::mem::take(&mut adj[v]);
        for &u in &nbrs {
            merged.clear();
            let (a, b) = (&adj[u], &nbrs);
            let (mut p, mut q) = (0, 0);
            while p < a.len() || q < b.len() {
                let next = match (a.get(p), b.get(q)) {
                    (Some(&x), Some(&y)) if x == y => {
                        p += 1;
                        q += 1;
                        x
                    }
                    (Some(&x), Some(&y)) if x < y => {
                        p += 1;
                        x
                    }
                    (Some(_), Some(&y)) => {
                        q += 1;
                        y
                    }
                    (Some(&x), None) => {
                        p += 1;
                        x
                    }
                    (None, Some(&y)) => {
                        q += 1;
                        y
                    }
                    (None, None) => unreachable!(),
                };
                if next != u && !eliminated[next] {
                    merged.push(next);
                }
            }
            adj[u].clear();
            adj[u].extend_from_slice(&merged);
            heap.push(Reverse((adj[u].len(), u)));
        }
    }
    perm
}
