//! The patch operator: extract `b x b x 3` windows under periodic extension
//! into a row-stacked matrix, and re-average rows back into the image domain.

use ndarray::{Array2, ArrayView2};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{ImageTensor, CHANNELS};

/// Row-stacked patch matrix. Row `i` is the flattened `b x b x 3` window of
/// the source image at `origins[i]`, wrapping periodically; the flat layout
/// is `(dr, dc, ch)` row-major, matching the image layout.
#[derive(Clone, Debug)]
pub struct PatchMatrix {
    patch_side: usize,
    data: Array2<f32>,
    origins: Vec<(u32, u32)>,
}

impl PatchMatrix {
    pub fn n_rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn patch_side(&self) -> usize {
        self.patch_side
    }

    /// Row length, `3 * b^2`.
    pub fn row_len(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> ArrayView2<'_, f32> {
        self.data.view()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        self.data.row(i).to_slice().expect("contiguous row")
    }

    pub fn origins(&self) -> &[(u32, u32)] {
        &self.origins
    }

    /// Assemble from explicit rows and origins (used when a match heuristic
    /// produces new patch contents for existing origins).
    pub fn from_rows(patch_side: usize, data: Array2<f32>, origins: Vec<(u32, u32)>) -> Result<Self> {
        if data.nrows() != origins.len() {
            return Err(Error::config("row count does not match origin count"));
        }
        if data.ncols() != patch_side * patch_side * CHANNELS {
            return Err(Error::config("row length does not match patch side"));
        }
        Ok(Self {
            patch_side,
            data,
            origins,
        })
    }
}

/// Extract patches at every pixel origin (periodic extension). With
/// `subsample_fraction = 1` all `H*W` origins are used in row-major order;
/// otherwise a uniform subset without replacement of size
/// `round(fraction * H * W)` is drawn, deterministic in `seed`, and kept in
/// ascending origin order.
pub fn patchify(
    img: &ImageTensor,
    patch_side: usize,
    subsample_fraction: f64,
    seed: u64,
) -> Result<PatchMatrix> {
    if patch_side == 0 {
        return Err(Error::config("patch side must be at least 1"));
    }
    if !(subsample_fraction > 0.0 && subsample_fraction <= 1.0) {
        return Err(Error::config(format!(
            "subsample fraction {subsample_fraction} outside (0, 1]"
        )));
    }
    let (h, w) = img.dims();
    let total = h * w;
    let indices: Vec<u32> = if subsample_fraction >= 1.0 {
        (0..total as u32).collect()
    } else {
        let k = ((subsample_fraction * total as f64).round() as usize).clamp(1, total);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Partial Fisher-Yates, then sort so origins stay in scan order.
        let mut pool: Vec<u32> = (0..total as u32).collect();
        for i in 0..k {
            let j = rng.random_range(i..total);
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool.sort_unstable();
        pool
    };

    let b = patch_side;
    let row_len = b * b * CHANNELS;
    let mut data = Array2::<f32>::zeros((indices.len(), row_len));
    let origins: Vec<(u32, u32)> = indices
        .iter()
        .map(|&i| ((i as usize / w) as u32, (i as usize % w) as u32))
        .collect();
    data.as_slice_mut()
        .expect("standard layout")
        .par_chunks_mut(row_len)
        .zip(origins.par_iter())
        .for_each(|(row, &(or, oc))| {
            let mut k = 0;
            for dr in 0..b {
                let r = (or as usize + dr) % h;
                for dc in 0..b {
                    let c = (oc as usize + dc) % w;
                    let base = img.index(r, c, 0);
                    row[k] = img.data()[base];
                    row[k + 1] = img.data()[base + 1];
                    row[k + 2] = img.data()[base + 2];
                    k += 3;
                }
            }
        });

    Ok(PatchMatrix {
        patch_side,
        data,
        origins,
    })
}

/// Re-average patch rows into an image: each covered pixel becomes the mean
/// of every patch entry that lands on it (periodic wrapping); uncovered
/// pixels take the `fallback` value (or zero without one).
pub fn fold(
    patches: &PatchMatrix,
    target_h: usize,
    target_w: usize,
    fallback: Option<&ImageTensor>,
) -> Result<ImageTensor> {
    if target_h == 0 || target_w == 0 {
        return Err(Error::BadDimensions {
            height: target_h,
            width: target_w,
        });
    }
    if let Some(f) = fallback {
        if f.dims() != (target_h, target_w) {
            return Err(Error::config("fallback dimensions do not match target"));
        }
    }
    for &(r, c) in patches.origins() {
        if (r as usize) >= target_h || (c as usize) >= target_w {
            return Err(Error::config(format!(
                "patch origin ({r}, {c}) outside target {target_h}x{target_w}"
            )));
        }
    }

    let b = patches.patch_side();
    let mut sums = vec![0.0f64; target_h * target_w * CHANNELS];
    let mut counts = vec![0u32; target_h * target_w];
    for (i, &(or, oc)) in patches.origins().iter().enumerate() {
        let row = patches.row(i);
        let mut k = 0;
        for dr in 0..b {
            let r = (or as usize + dr) % target_h;
            for dc in 0..b {
                let c = (oc as usize + dc) % target_w;
                let p = r * target_w + c;
                counts[p] += 1;
                sums[p * CHANNELS] += row[k] as f64;
                sums[p * CHANNELS + 1] += row[k + 1] as f64;
                sums[p * CHANNELS + 2] += row[k + 2] as f64;
                k += 3;
            }
        }
    }

    let mut data = vec![0.0f32; target_h * target_w * CHANNELS];
    for p in 0..target_h * target_w {
        if counts[p] > 0 {
            let n = counts[p] as f64;
            for ch in 0..CHANNELS {
                data[p * CHANNELS + ch] = (sums[p * CHANNELS + ch] / n) as f32;
            }
        } else if let Some(f) = fallback {
            for ch in 0..CHANNELS {
                data[p * CHANNELS + ch] = f.data()[p * CHANNELS + ch];
            }
        }
    }
    ImageTensor::from_data(target_h, target_w, data)
}
