//! Multi-resolution pyramid: box downsampling, bilinear upsampling, and the
//! coarse-blend used to keep fine scales anchored to coarser syntheses.

use crate::error::{Error, Result};
use crate::image::{ImageTensor, CHANNELS};

/// Scale schedule: scale `j` has dimensions `floor(dim * 2^-j)`; scale 0 is
/// the original resolution.
#[derive(Clone, Copy, Debug)]
pub struct PyramidSpec {
    pub num_scales: usize,
}

impl PyramidSpec {
    pub fn new(num_scales: usize) -> Result<Self> {
        if num_scales == 0 {
            return Err(Error::config("num_scales must be at least 1"));
        }
        Ok(Self { num_scales })
    }

    /// Coarsest scale index, `num_scales - 1`.
    pub fn coarsest(&self) -> usize {
        self.num_scales - 1
    }

    /// Dimensions at scale `j`, checking for degeneration.
    pub fn dims_at(&self, height: usize, width: usize, j: usize) -> Result<(usize, usize)> {
        let (h, w) = (scaled_dim(height, j), scaled_dim(width, j));
        if h == 0 || w == 0 {
            return Err(Error::DegenerateScale {
                scale: j,
                height,
                width,
            });
        }
        Ok((h, w))
    }
}

/// `floor(dim * 2^-j)`.
pub fn scaled_dim(dim: usize, j: usize) -> usize {
    if j >= usize::BITS as usize {
        0
    } else {
        dim >> j
    }
}

/// Downsample by `j` octaves with an iterated 2x2 box filter. `j = 0` returns
/// a value-identical copy; output dimensions are `floor(dim * 2^-j)`.
pub fn downsample(img: &ImageTensor, j: usize) -> Result<ImageTensor> {
    let mut out = img.clone();
    for step in 1..=j {
        let (h, w) = (out.height() / 2, out.width() / 2);
        if h == 0 || w == 0 {
            return Err(Error::DegenerateScale {
                scale: step,
                height: img.height(),
                width: img.width(),
            });
        }
        let mut next = vec![0.0f32; h * w * CHANNELS];
        for r in 0..h {
            for c in 0..w {
                for ch in 0..CHANNELS {
                    let sum = out.get(2 * r, 2 * c, ch) as f64
                        + out.get(2 * r, 2 * c + 1, ch) as f64
                        + out.get(2 * r + 1, 2 * c, ch) as f64
                        + out.get(2 * r + 1, 2 * c + 1, ch) as f64;
                    next[(r * w + c) * CHANNELS + ch] = (sum * 0.25) as f32;
                }
            }
        }
        out = ImageTensor::from_data(h, w, next)?;
    }
    Ok(out)
}

/// Bilinear upsample to `target_h x target_w` (half-pixel center convention,
/// edge-clamped). The target must be at least as large as the source.
pub fn upsample(img: &ImageTensor, target_h: usize, target_w: usize) -> Result<ImageTensor> {
    let (sh, sw) = img.dims();
    if target_h < sh || target_w < sw {
        return Err(Error::InvalidUpsampleTarget {
            source_h: sh,
            source_w: sw,
            target_h,
            target_w,
        });
    }
    if (target_h, target_w) == (sh, sw) {
        return Ok(img.clone());
    }
    let scale_r = sh as f64 / target_h as f64;
    let scale_c = sw as f64 / target_w as f64;
    let mut data = vec![0.0f32; target_h * target_w * CHANNELS];
    for r in 0..target_h {
        let src_r = ((r as f64 + 0.5) * scale_r - 0.5).clamp(0.0, (sh - 1) as f64);
        let r0 = src_r.floor() as usize;
        let r1 = (r0 + 1).min(sh - 1);
        let fr = src_r - r0 as f64;
        for c in 0..target_w {
            let src_c = ((c as f64 + 0.5) * scale_c - 0.5).clamp(0.0, (sw - 1) as f64);
            let c0 = src_c.floor() as usize;
            let c1 = (c0 + 1).min(sw - 1);
            let fc = src_c - c0 as f64;
            for ch in 0..CHANNELS {
                let top = img.get(r0, c0, ch) as f64 * (1.0 - fc) + img.get(r0, c1, ch) as f64 * fc;
                let bot = img.get(r1, c0, ch) as f64 * (1.0 - fc) + img.get(r1, c1, ch) as f64 * fc;
                data[(r * target_w + c) * CHANNELS + ch] = (top * (1.0 - fr) + bot * fr) as f32;
            }
        }
    }
    ImageTensor::from_data(target_h, target_w, data)
}

/// `(1 - weight) * y_fine + weight * upsample(y_coarse)`. The coarse image
/// must sit exactly one scale below the fine one.
pub fn blend_with_coarse(
    y_fine: &ImageTensor,
    y_coarse: &ImageTensor,
    weight: f32,
) -> Result<ImageTensor> {
    if !(0.0..=1.0).contains(&weight) {
        return Err(Error::config(format!("blend weight {weight} outside [0, 1]")));
    }
    let (fh, fw) = y_fine.dims();
    if y_coarse.dims() != (fh / 2, fw / 2) {
        return Err(Error::config(format!(
            "coarse image {}x{} is not one scale below {}x{}",
            y_coarse.height(),
            y_coarse.width(),
            fh,
            fw
        )));
    }
    if weight == 0.0 {
        return Ok(y_fine.clone());
    }
    let up = upsample(y_coarse, fh, fw)?;
    let w = weight as f64;
    let data = y_fine
        .data()
        .iter()
        .zip(up.data())
        .map(|(&f, &c)| ((1.0 - w) * f as f64 + w * c as f64) as f32)
        .collect();
    ImageTensor::from_data(fh, fw, data)
}
