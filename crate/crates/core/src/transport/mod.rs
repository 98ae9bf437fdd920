//! Patch matching: sliced pairwise costs, nearest-neighbor and
//! bidirectional-similarity searches, the low-memory Sinkhorn solver, greedy
//! near-permutation extraction, and a small-instance Hungarian oracle.
//!
//! Cost matrices are never materialized whole; every operation walks
//! row-blocks whose byte size respects a caller-supplied slice budget, and
//! every output is independent of how the budget slices the work.

mod features;
mod greedy;
mod hungarian;
mod nn;
mod sinkhorn;

pub use features::{cost_block, AugmentedFeatures};
pub use greedy::greedy_hc_match;
pub use hungarian::{assignment_cost, hungarian_oracle};
pub use nn::{bs_update_targets, nn_match, BsTargets};
pub use sinkhorn::{plan_argmax, sinkhorn, sinkhorn_traced, MarginalResidual, ScalingPair};

pub(crate) use features::{dot as dot_f64, pair_sq_dist};

use crate::error::{Error, Result};

/// Sentinel for a synthesis patch with no assigned exemplar patch.
pub const UNMATCHED: u32 = u32::MAX;

/// For each synthesis-patch row, the index of its matched exemplar-patch row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MatchMap {
    forward: Vec<u32>,
    n_exemplar: usize,
}

impl MatchMap {
    pub fn new_unmatched(n_synthesis: usize, n_exemplar: usize) -> Self {
        Self {
            forward: vec![UNMATCHED; n_synthesis],
            n_exemplar,
        }
    }

    pub fn from_forward(forward: Vec<u32>, n_exemplar: usize) -> Result<Self> {
        if forward
            .iter()
            .any(|&i| i != UNMATCHED && i as usize >= n_exemplar)
        {
            return Err(Error::config("match index out of range"));
        }
        Ok(Self {
            forward,
            n_exemplar,
        })
    }

    /// Number of synthesis rows.
    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub fn n_exemplar(&self) -> usize {
        self.n_exemplar
    }

    pub fn get(&self, j: usize) -> Option<usize> {
        match self.forward[j] {
            UNMATCHED => None,
            i => Some(i as usize),
        }
    }

    pub fn forward(&self) -> &[u32] {
        &self.forward
    }

    pub fn is_total(&self) -> bool {
        self.forward.iter().all(|&i| i != UNMATCHED)
    }

    /// True when total, square, and injective.
    pub fn is_bijection(&self) -> bool {
        if self.forward.len() != self.n_exemplar || !self.is_total() {
            return false;
        }
        let mut seen = vec![false; self.n_exemplar];
        for &i in &self.forward {
            if seen[i as usize] {
                return false;
            }
            seen[i as usize] = true;
        }
        true
    }
}

/// Fraction of exemplar rows used at least once by a total match.
pub fn match_cardinality(m: &MatchMap) -> Result<f64> {
    if !m.is_total() {
        return Err(Error::IncompleteMatch);
    }
    let mut used = vec![false; m.n_exemplar()];
    let mut distinct = 0usize;
    for &i in m.forward() {
        if !used[i as usize] {
            used[i as usize] = true;
            distinct += 1;
        }
    }
    Ok(distinct as f64 / m.n_exemplar() as f64)
}

/// Rows of one cost block under `budget` bytes of f64 entries against
/// `n_cols` columns. Errors when even a single row does not fit.
pub(crate) fn rows_per_block(budget_bytes: usize, n_cols: usize) -> Result<usize> {
    let row_bytes = n_cols * std::mem::size_of::<f64>();
    if row_bytes > budget_bytes {
        return Err(Error::SliceBudget {
            needed: row_bytes,
            budget: budget_bytes,
        });
    }
    Ok((budget_bytes / row_bytes).max(1))
}

/// Successive `[start, end)` row ranges of at most `rows_per_block` rows.
pub(crate) fn block_ranges(n_rows: usize, rows_per_block: usize) -> impl Iterator<Item = std::ops::Range<usize>> {
    (0..n_rows)
        .step_by(rows_per_block.max(1))
        .map(move |start| start..(start + rows_per_block).min(n_rows))
}
