//! Augmented feature matrices: pairwise squared euclidean distances as one
//! matrix product of augmented blocks, computed row-block by row-block.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::patch::PatchMatrix;
use crate::transport::rows_per_block;

/// Patch features augmented with per-row squared norms and ones so that
/// `lhs(X) . rhs(Y)^T` yields `C_ij = |X_i - Y_j|^2` directly.
///
/// `lhs` rows are `[|r|^2, 1, -2 r]`, `rhs` rows are `[1, |r|^2, r]`; the dot
/// product of an `lhs` row with an `rhs` row is the squared distance between
/// the underlying patch rows.
#[derive(Clone, Debug)]
pub struct AugmentedFeatures {
    dim: usize,
    base: Array2<f64>,
    lhs: Array2<f64>,
    rhs: Array2<f64>,
}

impl AugmentedFeatures {
    pub fn from_patches(patches: &PatchMatrix) -> Self {
        let view = patches.data();
        let base = view.map(|&v| v as f64);
        Self::from_base(base)
    }

    /// Build from raw feature rows (used by tests and the tile-map search).
    pub fn from_rows(rows: Array2<f64>) -> Self {
        Self::from_base(rows)
    }

    fn from_base(base: Array2<f64>) -> Self {
        let (n, d) = base.dim();
        let mut lhs = Array2::<f64>::zeros((n, d + 2));
        let mut rhs = Array2::<f64>::zeros((n, d + 2));
        for i in 0..n {
            let row = base.row(i);
            let row = row.as_slice().expect("contiguous row");
            let sq = dot(row, row);
            let lr = lhs.row_mut(i).into_slice().expect("contiguous row");
            lr[0] = sq;
            lr[1] = 1.0;
            for (k, &v) in row.iter().enumerate() {
                lr[2 + k] = -2.0 * v;
            }
            let rr = rhs.row_mut(i).into_slice().expect("contiguous row");
            rr[0] = 1.0;
            rr[1] = sq;
            rr[2..].copy_from_slice(row);
        }
        Self {
            dim: d,
            base,
            lhs,
            rhs,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.base.nrows()
    }

    /// Feature dimension of the underlying rows (`3 b^2` for patches).
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn base(&self) -> ArrayView2<'_, f64> {
        self.base.view()
    }

    pub(crate) fn lhs_row(&self, i: usize) -> &[f64] {
        self.lhs.row(i).to_slice().expect("contiguous row")
    }

    pub(crate) fn rhs_row(&self, j: usize) -> &[f64] {
        self.rhs.row(j).to_slice().expect("contiguous row")
    }
}

/// Fixed-order dot product. Each cost entry must be a pure function of its
/// two feature rows — never of the block shape it was computed in — so block
/// slicing cannot perturb any value.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let chunks = a.len() / 4;
    let mut s = [0.0f64; 4];
    for t in 0..chunks {
        let o = 4 * t;
        s[0] += a[o] * b[o];
        s[1] += a[o + 1] * b[o + 1];
        s[2] += a[o + 2] * b[o + 2];
        s[3] += a[o + 3] * b[o + 3];
    }
    let mut acc = (s[0] + s[1]) + (s[2] + s[3]);
    for t in 4 * chunks..a.len() {
        acc += a[t] * b[t];
    }
    acc
}

/// Squared distance between row `i` of `a` and row `j` of `b`, clamped at 0.
#[inline]
pub(crate) fn pair_sq_dist(a: &AugmentedFeatures, i: usize, b: &AugmentedFeatures, j: usize) -> f64 {
    dot(a.lhs_row(i), b.rhs_row(j)).max(0.0)
}

/// Dense sub-block `C[rows, :]` of squared pairwise distances between `xf`
/// rows and every `yf` row. Entries sit within `1e-4` relative error of the
/// direct two-loop computation and are clamped to be non-negative. Errors if
/// the block would exceed `max_bytes`.
pub fn cost_block(
    xf: &AugmentedFeatures,
    yf: &AugmentedFeatures,
    rows: std::ops::Range<usize>,
    max_bytes: usize,
) -> Result<Array2<f64>> {
    if rows.end > xf.n_rows() || rows.start > rows.end {
        return Err(Error::config("cost block row range out of bounds"));
    }
    if xf.dim() != yf.dim() {
        return Err(Error::config("feature dimensions differ"));
    }
    let needed = rows.len() * yf.n_rows() * std::mem::size_of::<f64>();
    if needed > max_bytes {
        return Err(Error::SliceBudget {
            needed,
            budget: max_bytes,
        });
    }
    Ok(cost_block_unchecked(xf, yf, rows))
}

/// Same as [`cost_block`] without the budget check; internal callers derive
/// their row ranges from the budget instead.
pub(crate) fn cost_block_unchecked(
    xf: &AugmentedFeatures,
    yf: &AugmentedFeatures,
    rows: std::ops::Range<usize>,
) -> Array2<f64> {
    let n_cols = yf.n_rows();
    let mut out = Array2::<f64>::zeros((rows.len(), n_cols));
    let start = rows.start;
    out.as_slice_mut()
        .expect("standard layout")
        .par_chunks_mut(n_cols)
        .enumerate()
        .for_each(|(bi, out_row)| {
            let li = xf.lhs_row(start + bi);
            // Column tiles keep the rhs chunk hot while the lhs row stays in L1.
            const TILE: usize = 512;
            let mut j0 = 0;
            while j0 < n_cols {
                let j1 = (j0 + TILE).min(n_cols);
                for j in j0..j1 {
                    out_row[j] = dot(li, yf.rhs_row(j)).max(0.0);
                }
                j0 = j1;
            }
        });
    out
}

/// Exact global maximum cost, computed in budget-sized slices. Used to
/// normalize costs before exponentiation; being an order-independent max it
/// is identical under any slicing.
pub(crate) fn max_cost(
    xf: &AugmentedFeatures,
    yf: &AugmentedFeatures,
    slice_bytes: usize,
) -> Result<f64> {
    let rpb = rows_per_block(slice_bytes, yf.n_rows())?;
    let mut best = 0.0f64;
    for range in crate::transport::block_ranges(xf.n_rows(), rpb) {
        let block = cost_block_unchecked(xf, yf, range);
        let m = block
            .as_slice()
            .expect("standard layout")
            .par_chunks(yf.n_rows())
            .map(|row| row.iter().copied().fold(0.0f64, f64::max))
            .reduce(|| 0.0f64, f64::max);
        best = best.max(m);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_rows(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, d), |_| rng.random::<f64>())
    }

    fn brute_force(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
        let (n, m) = (a.nrows(), b.nrows());
        Array2::from_shape_fn((n, m), |(i, j)| {
            a.row(i)
                .iter()
                .zip(b.row(j).iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum()
        })
    }

    #[test]
    fn self_distance_is_zero() {
        let rows = random_rows(20, 27, 1);
        let f = AugmentedFeatures::from_rows(rows);
        let c = cost_block(&f, &f, 0..20, usize::MAX).unwrap();
        for i in 0..20 {
            assert!(c[(i, i)].abs() < 1e-5);
        }
    }

    #[test]
    fn unit_vectors_have_distance_two() {
        let mut a = Array2::zeros((1, 8));
        a[(0, 0)] = 1.0;
        let mut b = Array2::zeros((1, 8));
        b[(0, 1)] = 1.0;
        let fa = AugmentedFeatures::from_rows(a);
        let fb = AugmentedFeatures::from_rows(b);
        let c = cost_block(&fa, &fb, 0..1, usize::MAX).unwrap();
        assert!((c[(0, 0)] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn block_assembly_matches_double_loop() {
        let a = random_rows(50, 27, 2);
        let b = random_rows(40, 27, 3);
        let want = brute_force(&a, &b);
        let fa = AugmentedFeatures::from_rows(a);
        let fb = AugmentedFeatures::from_rows(b);
        // Assemble from several blocks and compare entrywise.
        for rows in [0..17, 17..34, 34..50] {
            let c = cost_block(&fa, &fb, rows.clone(), usize::MAX).unwrap();
            for (bi, i) in rows.clone().enumerate() {
                for j in 0..40 {
                    let w = want[(i, j)];
                    let rel = (c[(bi, j)] - w).abs() / w.max(1e-12);
                    assert!(rel < 1e-4, "({i},{j}): {} vs {w}", c[(bi, j)]);
                }
            }
        }
    }

    #[test]
    fn budget_violation_is_an_error() {
        let f = AugmentedFeatures::from_rows(random_rows(10, 4, 4));
        let err = cost_block(&f, &f, 0..10, 10 * 10 * 8 - 1);
        assert!(matches!(err, Err(Error::SliceBudget { .. })));
        assert!(cost_block(&f, &f, 0..10, 10 * 10 * 8).is_ok());
    }

    #[test]
    fn max_cost_matches_dense_max() {
        let a = random_rows(30, 9, 5);
        let b = random_rows(25, 9, 6);
        let dense_max = brute_force(&a, &b)
            .iter()
            .copied()
            .fold(0.0f64, f64::max);
        let fa = AugmentedFeatures::from_rows(a);
        let fb = AugmentedFeatures::from_rows(b);
        for budget in [25 * 8, 4 * 25 * 8, usize::MAX] {
            let got = max_cost(&fa, &fb, budget).unwrap();
            assert!((got - dense_max).abs() / dense_max < 1e-10);
        }
    }
}
