//! Greedy high-cardinality match extraction from an implicit transport plan.
//!
//! Each round takes the column argmax over the remaining rows and columns,
//! resolves conflicting columns by a row argmax restricted to the argmax
//! support (yielding a partial permutation), commits the matched pairs, and
//! removes them from the active sets. The final round commits the column
//! argmax directly — possibly non-injective — so the result is always total.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::transport::features::pair_sq_dist;
use crate::transport::sinkhorn::ScalingPair;
use crate::transport::{block_ranges, rows_per_block, MatchMap, UNMATCHED};

/// Log-domain access to plan entries over gathered index subsets.
pub(crate) trait PlanLike: Sync {
    fn n_rows(&self) -> usize;
    fn n_cols(&self) -> usize;
    /// `log P[rows, cols]` as a `|rows| x |cols|` block.
    fn log_block(&self, rows: &[u32], cols: &[u32]) -> Array2<f64>;
}

impl PlanLike for ScalingPair<'_> {
    fn n_rows(&self) -> usize {
        self.n_x()
    }

    fn n_cols(&self) -> usize {
        self.n_y()
    }

    fn log_block(&self, rows: &[u32], cols: &[u32]) -> Array2<f64> {
        let (xf, yf) = self.features();
        let inv = 1.0 / (self.epsilon() * self.cost_scale());
        let mut out = Array2::<f64>::zeros((rows.len(), cols.len()));
        let log_a = self.log_a();
        let log_b = self.log_b();
        out.as_slice_mut()
            .expect("standard layout")
            .par_chunks_mut(cols.len())
            .zip(rows.par_iter())
            .for_each(|(out_row, &i)| {
                let la = log_a[i as usize];
                for (k, &j) in cols.iter().enumerate() {
                    let c = pair_sq_dist(xf, i as usize, yf, j as usize);
                    out_row[k] = la + log_b[j as usize] - c * inv;
                }
            });
        out
    }
}

/// Iteratively extract a high-cardinality match from the plan, stopping once
/// the committed cardinality reaches `target_mc` or `max_rounds` is
/// exhausted; either stop commits the remaining columns by plain column
/// argmax so the result is total.
pub fn greedy_hc_match(
    sp: &ScalingPair<'_>,
    max_rounds: usize,
    target_mc: f64,
    slice_bytes: usize,
) -> Result<MatchMap> {
    greedy_generic(sp, max_rounds, target_mc, slice_bytes)
}

pub(crate) fn greedy_generic<P: PlanLike>(
    plan: &P,
    max_rounds: usize,
    target_mc: f64,
    slice_bytes: usize,
) -> Result<MatchMap> {
    if max_rounds == 0 {
        return Err(Error::config("greedy match needs at least one round"));
    }
    if !(target_mc > 0.0 && target_mc <= 1.0) {
        return Err(Error::config(format!("target MC {target_mc} outside (0, 1]")));
    }
    let n_x = plan.n_rows();
    let n_y = plan.n_cols();
    let mut forward = vec![UNMATCHED; n_y];
    let mut active_rows: Vec<u32> = (0..n_x as u32).collect();
    let mut active_cols: Vec<u32> = (0..n_y as u32).collect();
    let all_rows: Vec<u32> = (0..n_x as u32).collect();
    let mut committed = 0usize;

    for round in 1..=max_rounds {
        if active_cols.is_empty() {
            break;
        }
        // Active rows can run dry before columns when N_y > N_x; the final
        // commit then selects over the full row set.
        let row_pool: &[u32] = if active_rows.is_empty() {
            &all_rows
        } else {
            &active_rows
        };
        let best = column_argmax(plan, row_pool, &active_cols, slice_bytes)?;

        if round == max_rounds || active_rows.is_empty() {
            for (pos, &j) in active_cols.iter().enumerate() {
                forward[j as usize] = best[pos];
            }
            active_cols.clear();
            break;
        }

        // Group conflicting columns by their chosen row; per row keep the
        // column with the largest plan entry (a partial permutation).
        let mut pairs: Vec<(u32, u32)> = best
            .iter()
            .zip(&active_cols)
            .map(|(&i, &j)| (i, j))
            .collect();
        pairs.sort_unstable();
        let mut commits: Vec<(u32, u32)> = Vec::new();
        let mut g = 0;
        while g < pairs.len() {
            let row = pairs[g].0;
            let mut end = g;
            while end < pairs.len() && pairs[end].0 == row {
                end += 1;
            }
            let cols: Vec<u32> = pairs[g..end].iter().map(|&(_, j)| j).collect();
            let scores = plan.log_block(&[row], &cols);
            let mut best_k = 0;
            let mut best_s = f64::NEG_INFINITY;
            for (k, &s) in scores.row(0).iter().enumerate() {
                if s > best_s {
                    best_s = s;
                    best_k = k;
                }
            }
            commits.push((row, cols[best_k]));
            g = end;
        }

        for &(i, j) in &commits {
            forward[j as usize] = i;
        }
        committed += commits.len();
        let rows_taken: Vec<u32> = commits.iter().map(|&(i, _)| i).collect();
        let cols_taken: Vec<u32> = {
            let mut v: Vec<u32> = commits.iter().map(|&(_, j)| j).collect();
            v.sort_unstable();
            v
        };
        active_rows.retain(|i| rows_taken.binary_search(i).is_err());
        active_cols.retain(|j| cols_taken.binary_search(j).is_err());

        if committed as f64 / n_x as f64 >= target_mc && !active_cols.is_empty() {
            let row_pool: &[u32] = if active_rows.is_empty() {
                &all_rows
            } else {
                &active_rows
            };
            let best = column_argmax(plan, row_pool, &active_cols, slice_bytes)?;
            for (pos, &j) in active_cols.iter().enumerate() {
                forward[j as usize] = best[pos];
            }
            active_cols.clear();
            break;
        }
    }

    debug_assert!(forward.iter().all(|&i| i != UNMATCHED));
    MatchMap::from_forward(forward, n_x)
}

/// Per active column, the active row with the largest plan entry, ties to
/// the lowest row index. Rows are scanned in ascending order block by block,
/// so the result does not depend on the slice budget.
fn column_argmax<P: PlanLike>(
    plan: &P,
    rows: &[u32],
    cols: &[u32],
    slice_bytes: usize,
) -> Result<Vec<u32>> {
    let rpb = rows_per_block(slice_bytes, cols.len())?;
    let mut best_score = vec![f64::NEG_INFINITY; cols.len()];
    let mut best_row = vec![0u32; cols.len()];
    for range in block_ranges(rows.len(), rpb) {
        let block_rows = &rows[range];
        let scores = plan.log_block(block_rows, cols);
        for (bi, &i) in block_rows.iter().enumerate() {
            let row = scores.row(bi);
            for (k, &s) in row.iter().enumerate() {
                if s > best_score[k] {
                    best_score[k] = s;
                    best_row[k] = i;
                }
            }
        }
    }
    Ok(best_row)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::features::AugmentedFeatures;
    use crate::transport::{match_cardinality, sinkhorn};
    use ndarray::{array, Array2};
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct DensePlan(Array2<f64>);

    impl PlanLike for DensePlan {
        fn n_rows(&self) -> usize {
            self.0.nrows()
        }
        fn n_cols(&self) -> usize {
            self.0.ncols()
        }
        fn log_block(&self, rows: &[u32], cols: &[u32]) -> Array2<f64> {
            Array2::from_shape_fn((rows.len(), cols.len()), |(a, b)| {
                self.0[(rows[a] as usize, cols[b] as usize)].ln()
            })
        }
    }

    #[test]
    fn permutation_plan_recovered_in_one_round() {
        let mut p = Array2::<f64>::zeros((5, 5));
        let perm = [3usize, 0, 4, 1, 2];
        for (j, &i) in perm.iter().enumerate() {
            p[(i, j)] = 1.0;
        }
        let m = greedy_generic(&DensePlan(p), 1, 1.0, usize::MAX).unwrap();
        for (j, &i) in perm.iter().enumerate() {
            assert_eq!(m.get(j).unwrap(), i);
        }
        assert_eq!(match_cardinality(&m).unwrap(), 1.0);
    }

    #[test]
    fn two_by_two_conflict_trace() {
        // Both columns prefer row 0; row 0 keeps column 0, and the second
        // round pairs the leftovers.
        let p = array![[0.6, 0.55], [0.4, 0.45]];
        let m = greedy_generic(&DensePlan(p), 10, 1.0, usize::MAX).unwrap();
        assert_eq!(m.get(0).unwrap(), 0);
        assert_eq!(m.get(1).unwrap(), 1);
        assert_eq!(match_cardinality(&m).unwrap(), 1.0);
    }

    #[test]
    fn strictly_positive_square_plans_reach_bijections() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for n in [2usize, 5, 17, 33] {
            let p = Array2::from_shape_fn((n, n), |_| rng.random::<f64>() + 1e-3);
            let m = greedy_generic(&DensePlan(p), n + 1, 1.0, usize::MAX).unwrap();
            assert!(m.is_bijection(), "n={n}");
        }
    }

    #[test]
    fn result_is_total_even_when_rounds_run_out() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let p = Array2::from_shape_fn((20, 20), |_| rng.random::<f64>() + 1e-3);
        let m = greedy_generic(&DensePlan(p), 1, 1.0, usize::MAX).unwrap();
        assert!(m.is_total());
    }

    #[test]
    fn rectangular_plans_stay_total() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        // More columns than rows: rows run dry, final commit reuses them.
        let p = Array2::from_shape_fn((6, 15), |_| rng.random::<f64>() + 1e-3);
        let m = greedy_generic(&DensePlan(p), 50, 1.0, usize::MAX).unwrap();
        assert!(m.is_total());
        assert_eq!(match_cardinality(&m).unwrap(), 1.0);
        // More rows than columns: every column matched, injectively.
        let p = Array2::from_shape_fn((15, 6), |_| rng.random::<f64>() + 1e-3);
        let m = greedy_generic(&DensePlan(p), 50, 1.0, usize::MAX).unwrap();
        assert!(m.is_total());
        let mut seen = std::collections::HashSet::new();
        assert!(m.forward().iter().all(|&i| seen.insert(i)));
    }

    #[test]
    fn scaling_pair_extraction_invariant_to_slicing() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let x = Array2::from_shape_fn((48, 9), |_| rng.random::<f64>());
        let y = Array2::from_shape_fn((48, 9), |_| rng.random::<f64>());
        let xf = AugmentedFeatures::from_rows(x);
        let yf = AugmentedFeatures::from_rows(y);
        let sp = sinkhorn(&xf, &yf, 0.001, 100, usize::MAX).unwrap();
        let full = greedy_hc_match(&sp, 64, 1.0, usize::MAX).unwrap();
        assert!(full.is_bijection());
        for budget in [48 * 8, 5 * 48 * 8, 13 * 48 * 8] {
            let sliced = greedy_hc_match(&sp, 64, 1.0, budget).unwrap();
            assert_eq!(full, sliced);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let p = DensePlan(array![[1.0]]);
        assert!(greedy_generic(&p, 0, 1.0, usize::MAX).is_err());
        assert!(greedy_generic(&p, 1, 0.0, usize::MAX).is_err());
        assert!(greedy_generic(&p, 1, 1.5, usize::MAX).is_err());
    }
}
