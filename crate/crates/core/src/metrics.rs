//! Per-round set statistics.
//!
//! For the summed sparse gradient `g^K = Σ_w g_w^K`:
//! `A` is its top-K support, `B` the rest of its support (active indices in
//! the false-alarm set) and `F` its zeros. `Â` is what the server recovered
//! and `B̂ = Â ∩ B`.

use std::collections::BTreeSet;

use crate::codec::SparseVector;
use crate::sim::top_k_sparse;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SetTaxonomy {
    pub a: BTreeSet<usize>,
    pub b: BTreeSet<usize>,
    pub recovered: BTreeSet<usize>,
}

impl SetTaxonomy {
    pub fn new(summed: &SparseVector, k: usize, recovered: impl IntoIterator<Item = usize>) -> Self {
        let a: BTreeSet<usize> = top_k_sparse(summed, k).indices().iter().copied().collect();
        let b = summed
            .indices()
            .iter()
            .copied()
            .filter(|i| !a.contains(i))
            .collect();
        Self {
            a,
            b,
            recovered: recovered.into_iter().collect(),
        }
    }

    /// `F` restricted to `[0, n)`.
    pub fn f(&self, n: usize) -> BTreeSet<usize> {
        (0..n)
            .filter(|i| !self.a.contains(i) && !self.b.contains(i))
            .collect()
    }

    pub fn b_hat(&self) -> BTreeSet<usize> {
        self.recovered.intersection(&self.b).copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundStats {
    /// `|Â ∩ A| / |A|`, zero when `A` is empty.
    pub pd: f64,
    /// `|Â \ A| / |Â|`, zero when nothing was recovered.
    pub pfa: f64,
    pub b_hat: usize,
    /// `|A ∪ B|`.
    pub active_count: usize,
    pub recovered: usize,
    pub hits: usize,
}

pub fn compute_round_stats(t: &SetTaxonomy) -> RoundStats {
    let hits = t.recovered.intersection(&t.a).count();
    let misses = t.recovered.len() - hits;
    RoundStats {
        pd: if t.a.is_empty() { 0.0 } else { hits as f64 / t.a.len() as f64 },
        pfa: if t.recovered.is_empty() {
            0.0
        } else {
            misses as f64 / t.recovered.len() as f64
        },
        b_hat: t.recovered.intersection(&t.b).count(),
        active_count: t.a.len() + t.b.len(),
        recovered: t.recovered.len(),
        hits,
    }
}
