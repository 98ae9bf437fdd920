//! Shared fixtures for the integration suites: a small corpus of procedural
//! textures with multi-scale structure, plus assorted helpers.

use otex_core::image::{init_noise, ImageTensor, CHANNELS};
use otex_core::pyramid::upsample;

/// Scalar multi-octave value noise in [0, 1], built from seeded uniform
/// noise upsampled bilinearly from several base resolutions.
pub fn smooth_noise(h: usize, w: usize, bases: &[usize], seed: u64) -> Vec<f64> {
    let mut acc = vec![0.0f64; h * w];
    let mut weight = 1.0f64;
    let mut total = 0.0f64;
    for (k, &side) in bases.iter().enumerate() {
        let coarse = init_noise(side, side, seed.wrapping_add(k as u64 * 7919)).unwrap();
        let up = upsample(&coarse, h, w).unwrap();
        for (i, a) in acc.iter_mut().enumerate() {
            *a += weight * up.data()[i * CHANNELS] as f64;
        }
        total += weight;
        weight *= 0.5;
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for a in &mut acc {
        *a /= total;
        lo = lo.min(*a);
        hi = hi.max(*a);
    }
    let span = (hi - lo).max(1e-9);
    acc.iter().map(|&v| (v - lo) / span).collect()
}

fn from_channels(h: usize, w: usize, f: impl Fn(usize, usize) -> [f64; 3]) -> ImageTensor {
    let mut data = Vec::with_capacity(h * w * CHANNELS);
    for r in 0..h {
        for c in 0..w {
            let px = f(r, c);
            for ch in 0..CHANNELS {
                data.push(px[ch].clamp(0.0, 1.0) as f32);
            }
        }
    }
    ImageTensor::from_data(h, w, data).unwrap()
}

/// Cloudy multi-octave color noise.
pub fn plasma(size: usize, seed: u64) -> ImageTensor {
    let base = smooth_noise(size, size, &[4, 8, 16, 32], seed);
    let detail_g = smooth_noise(size, size, &[8, 32], seed + 1);
    let detail_b = smooth_noise(size, size, &[16, 64.min(size)], seed + 2);
    from_channels(size, size, |r, c| {
        let i = r * size + c;
        [
            0.1 + 0.8 * base[i],
            0.1 + 0.8 * (0.6 * base[i] + 0.4 * detail_g[i]),
            0.1 + 0.8 * (0.5 * base[i] + 0.5 * detail_b[i]),
        ]
    })
}

/// Quasi-periodic waves with phase noise, different per channel.
pub fn waves(size: usize, seed: u64) -> ImageTensor {
    let phase = smooth_noise(size, size, &[8, 16], seed);
    let tau = std::f64::consts::TAU;
    from_channels(size, size, |r, c| {
        let i = r * size + c;
        let u = r as f64 / size as f64;
        let v = c as f64 / size as f64;
        let p = 3.0 * phase[i];
        [
            0.5 + 0.35 * (tau * (3.0 * v + 1.5 * u) + p).sin(),
            0.5 + 0.35 * (tau * (1.0 * v + 2.5 * u) + 1.3 * p).sin(),
            0.45 + 0.3 * (tau * (2.0 * v - 2.0 * u) + 0.7 * p).cos(),
        ]
    })
}

/// Soft cellular blobs from thresholded smooth noise.
pub fn blobs(size: usize, seed: u64) -> ImageTensor {
    let field = smooth_noise(size, size, &[8, 16, 32], seed);
    let grain = smooth_noise(size, size, &[32, 64.min(size)], seed + 5);
    let sigmoid = |t: f64| 1.0 / (1.0 + (-t).exp());
    from_channels(size, size, |r, c| {
        let i = r * size + c;
        [
            0.1 + 0.8 * sigmoid((field[i] - 0.45) * 10.0),
            0.1 + 0.8 * sigmoid((0.55 - field[i]) * 10.0),
            0.2 + 0.6 * (0.5 * field[i] + 0.5 * grain[i]),
        ]
    })
}

/// The three-exemplar desk corpus.
pub fn desk_corpus(size: usize) -> Vec<ImageTensor> {
    vec![plasma(size, 101), waves(size, 202), blobs(size, 303)]
}

/// Verbatim quadrant quilt: the four quadrants of `x` rearranged in a
/// 4-cycle (not a global translation), so each tile is coherent inside but
/// adjacency breaks along the seams — the classic tiling failure mode.
pub fn quadrant_tiling(x: &ImageTensor) -> ImageTensor {
    let (h, w) = x.dims();
    assert!(h % 2 == 0 && w % 2 == 0, "even dims expected");
    let (hh, hw) = (h / 2, w / 2);
    let mut data = vec![0.0f32; h * w * CHANNELS];
    for r in 0..h {
        for c in 0..w {
            let (sr, sc) = match (r < hh, c < hw) {
                (true, true) => (r, c + hw),        // TL <- TR
                (true, false) => (r + hh, c),       // TR <- BR
                (false, false) => (r, c - hw),      // BR <- BL
                (false, true) => (r - hh, c),       // BL <- TL
            };
            for ch in 0..CHANNELS {
                data[(r * w + c) * CHANNELS + ch] = x.get(sr, sc, ch);
            }
        }
    }
    ImageTensor::from_data(h, w, data).unwrap()
}

/// Seeded random permutation of the pixels of `x`.
pub fn pixel_permutation(x: &ImageTensor, seed: u64) -> ImageTensor {
    use rand::{RngExt, SeedableRng};
    let (h, w) = x.dims();
    let n = h * w;
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        perm.swap(i, j);
    }
    let mut data = vec![0.0f32; n * CHANNELS];
    for (dst, &src) in perm.iter().enumerate() {
        for ch in 0..CHANNELS {
            data[dst * CHANNELS + ch] = x.data()[src * CHANNELS + ch];
        }
    }
    ImageTensor::from_data(h, w, data).unwrap()
}

/// Copy the axis-aligned `side x side` block at `(r0, c0)` from `src` into
/// `dst` at the same position.
pub fn splice_block(dst: &ImageTensor, src: &ImageTensor, r0: usize, c0: usize, side: usize) -> ImageTensor {
    assert_eq!(dst.dims(), src.dims());
    let (h, w) = dst.dims();
    assert!(r0 + side <= h && c0 + side <= w);
    let mut data = dst.data().to_vec();
    for r in r0..r0 + side {
        for c in c0..c0 + side {
            for ch in 0..CHANNELS {
                data[(r * w + c) * CHANNELS + ch] = src.get(r, c, ch);
            }
        }
    }
    ImageTensor::from_data(h, w, data).unwrap()
}
