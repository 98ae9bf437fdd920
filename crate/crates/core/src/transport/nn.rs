//! Nearest-neighbor matching and the bidirectional-similarity update.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::transport::features::{cost_block_unchecked, AugmentedFeatures};
use crate::transport::{block_ranges, rows_per_block, MatchMap};

/// For every `yf` row, the index of the closest `xf` row (squared euclidean),
/// ties to the lowest index. The result is independent of the slice budget.
pub fn nn_match(
    xf: &AugmentedFeatures,
    yf: &AugmentedFeatures,
    slice_bytes: usize,
) -> Result<MatchMap> {
    let (forward, _) = argmin_over_rows(xf, yf, slice_bytes)?;
    MatchMap::from_forward(forward, xf.n_rows())
}

/// Shared scan: per `yf` column, the minimizing `xf` row and its cost.
/// Blocks walk `xf` rows in ascending order and update on strict improvement,
/// which both pins ties to the lowest index and makes the merge independent
/// of the block layout.
pub(crate) fn argmin_over_rows(
    xf: &AugmentedFeatures,
    yf: &AugmentedFeatures,
    slice_bytes: usize,
) -> Result<(Vec<u32>, Vec<f64>)> {
    let n_x = xf.n_rows();
    let n_y = yf.n_rows();
    if n_x == 0 || n_y == 0 {
        return Err(Error::config("empty feature matrix"));
    }
    let rpb = rows_per_block(slice_bytes, n_y)?;
    let mut best_cost = vec![f64::INFINITY; n_y];
    let mut best_row = vec![0u32; n_y];
    // Parallelism runs across column chunks; each chunk scans rows in order.
    let chunk = 1024usize;
    for range in block_ranges(n_x, rpb) {
        let block = cost_block_unchecked(xf, yf, range.clone());
        let block = block.as_slice().expect("standard layout");
        let start = range.start;
        let rows = range.len();
        best_cost
            .par_chunks_mut(chunk)
            .zip(best_row.par_chunks_mut(chunk))
            .enumerate()
            .for_each(|(ci, (costs, rows_out))| {
                let j0 = ci * chunk;
                for bi in 0..rows {
                    let row = &block[bi * n_y..(bi + 1) * n_y];
                    for (k, (bc, br)) in costs.iter_mut().zip(rows_out.iter_mut()).enumerate() {
                        let c = row[j0 + k];
                        if c < *bc {
                            *bc = c;
                            *br = (start + bi) as u32;
                        }
                    }
                }
            });
    }
    Ok((best_row, best_cost))
}

/// Per `xf` row, the index of its closest `yf` row.
fn argmin_over_cols(
    xf: &AugmentedFeatures,
    yf: &AugmentedFeatures,
    slice_bytes: usize,
) -> Result<Vec<u32>> {
    let n_x = xf.n_rows();
    let n_y = yf.n_rows();
    let rpb = rows_per_block(slice_bytes, n_y)?;
    let mut best = vec![0u32; n_x];
    for range in block_ranges(n_x, rpb) {
        let block = cost_block_unchecked(xf, yf, range.clone());
        let block = block.as_slice().expect("standard layout");
        best[range]
            .par_iter_mut()
            .enumerate()
            .for_each(|(bi, out)| {
                let row = &block[bi * n_y..(bi + 1) * n_y];
                let mut bc = f64::INFINITY;
                let mut bj = 0u32;
                for (j, &c) in row.iter().enumerate() {
                    if c < bc {
                        bc = c;
                        bj = j as u32;
                    }
                }
                *out = bj;
            });
    }
    Ok(best)
}

/// Bidirectional-similarity update targets.
#[derive(Debug)]
pub struct BsTargets {
    /// Per-`yf`-row update target, `alpha * forward + (1 - alpha) * backward`.
    pub targets: Array2<f64>,
    /// Forward nearest-neighbor map (synthesis row -> exemplar row).
    pub forward: MatchMap,
    /// How many exemplar rows selected each synthesis row as their neighbor.
    pub backward_hits: Vec<u32>,
}

/// Combine the forward term (each synthesis row's NN among exemplar rows)
/// with the backward term (the mean of the exemplar rows whose NN is this
/// synthesis row). Rows no exemplar row points at fall back to the forward
/// target alone.
pub fn bs_update_targets(
    xf: &AugmentedFeatures,
    yf: &AugmentedFeatures,
    alpha: f64,
    slice_bytes: usize,
) -> Result<BsTargets> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::config(format!("alpha {alpha} outside [0, 1]")));
    }
    let (fwd, _) = argmin_over_rows(xf, yf, slice_bytes)?;
    let back = argmin_over_cols(xf, yf, slice_bytes)?;

    let n_y = yf.n_rows();
    let d = xf.dim();
    let mut back_sum = Array2::<f64>::zeros((n_y, d));
    let mut hits = vec![0u32; n_y];
    for (i, &j) in back.iter().enumerate() {
        hits[j as usize] += 1;
        let src = xf.base();
        let mut dst = back_sum.row_mut(j as usize);
        for (t, v) in dst.iter_mut().enumerate() {
            *v += src[(i, t)];
        }
    }

    let mut targets = Array2::<f64>::zeros((n_y, d));
    for j in 0..n_y {
        let f_row = xf.base();
        let f_row = f_row.row(fwd[j] as usize);
        if hits[j] == 0 {
            targets.row_mut(j).assign(&f_row);
        } else {
            let n = hits[j] as f64;
            for t in 0..d {
                targets[(j, t)] = alpha * f_row[t] + (1.0 - alpha) * back_sum[(j, t)] / n;
            }
        }
    }

    Ok(BsTargets {
        targets,
        forward: MatchMap::from_forward(fwd, xf.n_rows())?,
        backward_hits: hits,
    })
}
