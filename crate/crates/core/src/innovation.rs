//! Tile maps and the multi-resolution innovation capacity.
//!
//! A tile map records, per synthesis pixel, the exemplar patch its
//! neighborhood was matched to. A neighborhood entry counts as *tiled* when
//! the neighbor's match sits at the same 2-D offset from the pixel's match
//! (under periodic index arithmetic); the innovation capacity is the
//! fraction of entries that break that adjacency, averaged over scales.
//! Comparing offsets in (row, col) space rather than raw linear indices
//! avoids false positives at row boundaries.

use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::patch::patchify;
use crate::pyramid::downsample;
use crate::transport::{nn_match, AugmentedFeatures};

/// Per-pixel exemplar patch indices for one synthesis image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TileMap {
    height: usize,
    width: usize,
    src_height: usize,
    src_width: usize,
    indices: Vec<u32>,
}

impl TileMap {
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn source_dims(&self) -> (usize, usize) {
        (self.src_height, self.src_width)
    }

    /// Linear exemplar index matched at synthesis pixel `(row, col)`.
    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.indices[row * self.width + col]
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }
}

/// Full nearest-neighbor field between all patches of `x` and all patches of
/// `y` (no subsampling, so the map is deterministic and reproducible).
pub fn tile_map(
    x: &ImageTensor,
    y: &ImageTensor,
    patch_side: usize,
    slice_bytes: usize,
) -> Result<TileMap> {
    let xp = patchify(x, patch_side, 1.0, 0)?;
    let yp = patchify(y, patch_side, 1.0, 0)?;
    let xf = AugmentedFeatures::from_patches(&xp);
    let yf = AugmentedFeatures::from_patches(&yp);
    let m = nn_match(&xf, &yf, slice_bytes)?;
    Ok(TileMap {
        height: y.height(),
        width: y.width(),
        src_height: x.height(),
        src_width: x.width(),
        indices: m.forward().to_vec(),
    })
}

/// One scale's innovation capacity and the report over all scales.
#[derive(Clone, Copy, Debug)]
pub struct IcLevel {
    pub scale: usize,
    pub value: f64,
}

#[derive(Clone, Debug)]
pub struct ICReport {
    /// Per-scale values, coarsest (`scale = max_scale`) first.
    pub levels: Vec<IcLevel>,
    /// Arithmetic mean of the `max_scale + 1` per-scale values.
    pub mean: f64,
    pub max_scale: usize,
    /// Patch side the tile maps were built with; the metric depends on it.
    pub patch_side: usize,
}

const NEIGHBOR_OFFSETS: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// Fraction of 8-neighborhood entries whose matches break exemplar
/// adjacency, at one scale.
fn tile_map_innovation(tm: &TileMap) -> f64 {
    let (h, w) = tm.dims();
    let (sh, sw) = tm.source_dims();
    let mut innovative = 0u64;
    for r in 0..h {
        for c in 0..w {
            let t = tm.get(r, c) as usize;
            let (tr, tc) = (t / sw, t % sw);
            for (dr, dc) in NEIGHBOR_OFFSETS {
                let nr = (r as isize + dr).rem_euclid(h as isize) as usize;
                let nc = (c as isize + dc).rem_euclid(w as isize) as usize;
                let n = tm.get(nr, nc) as usize;
                let er = (tr as isize + dr).rem_euclid(sh as isize) as usize;
                let ec = (tc as isize + dc).rem_euclid(sw as isize) as usize;
                if n != er * sw + ec {
                    innovative += 1;
                }
            }
        }
    }
    innovative as f64 / (8 * h * w) as f64
}

/// Multi-resolution innovation capacity over scales `max_scale ..= 0`.
pub fn innovation_capacity(
    x: &ImageTensor,
    y: &ImageTensor,
    max_scale: usize,
    patch_side: usize,
    slice_bytes: usize,
) -> Result<ICReport> {
    if patch_side == 0 {
        return Err(Error::config("patch side must be at least 1"));
    }
    let mut levels = Vec::with_capacity(max_scale + 1);
    for j in (0..=max_scale).rev() {
        let x_j = downsample(x, j)?;
        let y_j = downsample(y, j)?;
        let tm = tile_map(&x_j, &y_j, patch_side, slice_bytes)?;
        levels.push(IcLevel {
            scale: j,
            value: tile_map_innovation(&tm),
        });
    }
    let mean = levels.iter().map(|l| l.value).sum::<f64>() / levels.len() as f64;
    Ok(ICReport {
        levels,
        mean,
        max_scale,
        patch_side,
    })
}

/// Render a tile map as an image: exemplar position `(r, c)` becomes the
/// color `(r / H, c / W, 0.5)`, so coherent copies show as smooth ramps.
pub fn tile_map_render(tm: &TileMap) -> ImageTensor {
    let (h, w) = tm.dims();
    let (sh, sw) = tm.source_dims();
    let mut out = ImageTensor::zeros(h, w).expect("tile map dims are valid");
    for r in 0..h {
        for c in 0..w {
            let t = tm.get(r, c) as usize;
            let (tr, tc) = (t / sw, t % sw);
            out.set(r, c, 0, tr as f32 / sh as f32);
            out.set(r, c, 1, tc as f32 / sw as f32);
            out.set(r, c, 2, 0.5);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::init_noise;

    #[test]
    fn identical_images_give_identity_map_and_zero_ic() {
        let x = init_noise(16, 16, 1).unwrap();
        let tm = tile_map(&x, &x, 3, usize::MAX).unwrap();
        let want: Vec<u32> = (0..256).collect();
        assert_eq!(tm.indices(), want.as_slice());
        let report = innovation_capacity(&x, &x, 2, 3, usize::MAX).unwrap();
        assert_eq!(report.levels.len(), 3);
        for l in &report.levels {
            assert_eq!(l.value, 0.0, "scale {}", l.scale);
        }
        assert_eq!(report.mean, 0.0);
    }

    #[test]
    fn shifted_copy_gives_shifted_identity_map() {
        let x = init_noise(12, 10, 2).unwrap();
        let y = x.circular_shift(2, 3);
        let tm = tile_map(&x, &y, 3, usize::MAX).unwrap();
        for r in 0..12 {
            for c in 0..10 {
                let want = ((r + 2) % 12) * 10 + (c + 3) % 10;
                assert_eq!(tm.get(r, c), want as u32);
            }
        }
        // A pure translation is verbatim copying: nothing is innovative.
        assert_eq!(tile_map_innovation(&tm), 0.0);
    }

    #[test]
    fn ic_invariant_to_aligned_circular_shifts() {
        let x = init_noise(32, 32, 3).unwrap();
        let y = init_noise(32, 32, 4).unwrap();
        let base = innovation_capacity(&x, &y, 2, 3, usize::MAX).unwrap();
        // Shifts aligned to the coarsest block size keep every scale's
        // downsample a shifted copy.
        let shifted = innovation_capacity(&x, &y.circular_shift(8, 16), 2, 3, usize::MAX).unwrap();
        for (a, b) in base.levels.iter().zip(&shifted.levels) {
            assert_eq!(a.value, b.value, "scale {}", a.scale);
        }
        assert_eq!(base.mean, shifted.mean);
    }

    #[test]
    fn tile_map_matches_brute_force_field() {
        let x = init_noise(9, 8, 5).unwrap();
        let y = init_noise(9, 8, 6).unwrap();
        let b = 3;
        let tm = tile_map(&x, &y, b, usize::MAX).unwrap();
        // Double-loop oracle over raw patch vectors.
        let xp = patchify(&x, b, 1.0, 0).unwrap();
        let yp = patchify(&y, b, 1.0, 0).unwrap();
        for j in 0..yp.n_rows() {
            let mut best = (f64::INFINITY, 0u32);
            for i in 0..xp.n_rows() {
                let d: f64 = xp
                    .row(i)
                    .iter()
                    .zip(yp.row(j))
                    .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
                    .sum();
                if d < best.0 {
                    best = (d, i as u32);
                }
            }
            assert_eq!(tm.indices()[j], best.1, "pixel {j}");
        }
    }

    #[test]
    fn pixel_permutation_is_nearly_fully_innovative() {
        // b = 1: a random permutation of pixels preserves almost no
        // neighbor adjacency.
        let x = init_noise(16, 16, 7).unwrap();
        let mut perm: Vec<usize> = (0..256).collect();
        use rand::{RngExt, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for i in (1..256).rev() {
            let j = rng.random_range(0..=i);
            perm.swap(i, j);
        }
        let mut data = vec![0.0f32; 256 * 3];
        for (dst, &src) in perm.iter().enumerate() {
            for ch in 0..3 {
                data[dst * 3 + ch] = x.data()[src * 3 + ch];
            }
        }
        let y = ImageTensor::from_data(16, 16, data).unwrap();
        let tm = tile_map(&x, &y, 1, usize::MAX).unwrap();
        assert!(tile_map_innovation(&tm) > 0.95);
    }

    #[test]
    fn render_rules() {
        let x = init_noise(8, 8, 9).unwrap();
        let identity = tile_map(&x, &x, 2, usize::MAX).unwrap();
        let img = tile_map_render(&identity);
        // Smooth two-axis ramp: red grows down rows, green across columns.
        assert_eq!(img.get(0, 0, 0), 0.0);
        assert!(img.get(7, 0, 0) > img.get(3, 0, 0));
        assert!(img.get(0, 7, 1) > img.get(0, 3, 1));
        assert!(img.data().chunks(3).all(|p| p[2] == 0.5));

        let constant = TileMap {
            height: 4,
            width: 4,
            src_height: 8,
            src_width: 8,
            indices: vec![9; 16],
        };
        let img = tile_map_render(&constant);
        let first = img.pixel(0, 0);
        for r in 0..4 {
            for c in 0..4 {
                assert_eq!(img.pixel(r, c), first);
            }
        }

        let shifted = tile_map(&x, &x.circular_shift(3, 0), 2, usize::MAX).unwrap();
        let img = tile_map_render(&shifted);
        // Ramp shifted with a wraparound seam: row 4 maps to source row 7,
        // row 5 wraps to source row 0.
        assert!(img.get(4, 0, 0) > img.get(5, 0, 0));
    }
}
