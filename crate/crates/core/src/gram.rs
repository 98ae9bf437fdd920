//! Statistical baseline: synthesis by matching gram matrices of rectified
//! random-filter responses.
//!
//! The feature extractor is a single periodic convolution with a seeded
//! Gaussian filter bank followed by a ReLU; the objective is the squared
//! Frobenius distance between the gram matrices of synthesis and exemplar
//! features. The layer is shallow enough that the gradient is the hand-derived
//! chain rule through the gram product, the ReLU mask, and the transposed
//! convolution, verified against finite differences. Feature matrices are
//! reduced into the gram matrix in pixel chunks so `K * H * W` never has to
//! fit in memory at once.

use std::io::Write;
use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{init_noise, ImageTensor, CHANNELS};
use crate::lbfgs::{self, LbfgsParams, Objective};
use crate::pyramid::{downsample, upsample, PyramidSpec};
use crate::seed::derive;

/// `K` filters of shape `b x b x 3`, drawn i.i.d. standard normal from the
/// seed; stored row-major as `K x 3b^2` in the patch layout.
#[derive(Clone, Debug)]
pub struct FilterBank {
    patch_side: usize,
    weights: Array2<f64>,
}

impl FilterBank {
    pub fn random(patch_side: usize, filters: usize, seed: u64) -> Result<Self> {
        if patch_side == 0 || filters == 0 {
            return Err(Error::config("filter bank needs b >= 1 and K >= 1"));
        }
        let d = patch_side * patch_side * CHANNELS;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = StandardNormal;
        let weights =
            Array2::from_shape_fn((filters, d), |_| normal.sample(&mut rng));
        Ok(Self {
            patch_side,
            weights,
        })
    }

    pub fn from_weights(patch_side: usize, weights: Array2<f64>) -> Result<Self> {
        if weights.ncols() != patch_side * patch_side * CHANNELS || weights.nrows() == 0 {
            return Err(Error::config("weight shape does not match patch side"));
        }
        Ok(Self {
            patch_side,
            weights,
        })
    }

    pub fn filters(&self) -> usize {
        self.weights.nrows()
    }

    pub fn patch_side(&self) -> usize {
        self.patch_side
    }

    /// `K x 3b^2` weight rows in the patch layout.
    pub fn weights(&self) -> ArrayView2<'_, f64> {
        self.weights.view()
    }

    fn filter_row(&self, k: usize) -> &[f64] {
        self.weights.row(k).to_slice().expect("contiguous row")
    }
}

/// Symmetric positive semidefinite `K x K` gram matrix of rectified filter
/// responses, normalized by spatial size so scales are commensurate.
#[derive(Clone, Debug)]
pub struct GramMatrix {
    m: Array2<f64>,
}

impl GramMatrix {
    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn as_array(&self) -> ArrayView2<'_, f64> {
        self.m.view()
    }
}

fn image_to_f64(img: &ImageTensor) -> Vec<f64> {
    img.data().iter().map(|&v| v as f64).collect()
}

/// Gather the periodic `b x b x 3` patch at linear pixel `p` into `out`.
#[inline]
fn gather_patch(data: &[f64], h: usize, w: usize, b: usize, p: usize, out: &mut [f64]) {
    let (or, oc) = (p / w, p % w);
    let mut k = 0;
    for dr in 0..b {
        let r = (or + dr) % h;
        for dc in 0..b {
            let c = (oc + dc) % w;
            let base = (r * w + c) * CHANNELS;
            out[k] = data[base];
            out[k + 1] = data[base + 1];
            out[k + 2] = data[base + 2];
            k += 3;
        }
    }
}

fn pixel_chunk(slice_bytes: usize, filters: usize) -> usize {
    (slice_bytes / (std::mem::size_of::<f64>() * filters)).max(1)
}

/// Rectified feature rows for a pixel chunk: `|chunk| x K`.
fn feature_chunk(
    data: &[f64],
    h: usize,
    w: usize,
    fb: &FilterBank,
    range: std::ops::Range<usize>,
) -> Array2<f64> {
    let b = fb.patch_side();
    let d = b * b * CHANNELS;
    let k = fb.filters();
    let mut z = Array2::<f64>::zeros((range.len(), k));
    let start = range.start;
    z.as_slice_mut()
        .expect("standard layout")
        .par_chunks_mut(k)
        .enumerate()
        .for_each(|(bi, row)| {
            let mut patch = vec![0.0f64; d];
            gather_patch(data, h, w, b, start + bi, &mut patch);
            for (kk, out) in row.iter_mut().enumerate() {
                let v = crate::transport::dot_f64(&patch, fb.filter_row(kk));
                *out = if v > 0.0 { v } else { 0.0 };
            }
        });
    z
}

fn gram_of_raw(data: &[f64], h: usize, w: usize, fb: &FilterBank, slice_bytes: usize) -> Array2<f64> {
    let k = fb.filters();
    let n_pix = h * w;
    let chunk = pixel_chunk(slice_bytes, k);
    let mut g = Array2::<f64>::zeros((k, k));
    let mut start = 0;
    while start < n_pix {
        let end = (start + chunk).min(n_pix);
        let z = feature_chunk(data, h, w, fb, start..end);
        let zs = z.as_slice().expect("standard layout");
        let rows = end - start;
        g.as_slice_mut()
            .expect("standard layout")
            .par_chunks_mut(k)
            .enumerate()
            .for_each(|(k1, g_row)| {
                for p in 0..rows {
                    let zp = &zs[p * k..(p + 1) * k];
                    let v = zp[k1];
                    if v != 0.0 {
                        for (gk, &zk) in g_row.iter_mut().zip(zp) {
                            *gk += v * zk;
                        }
                    }
                }
            });
        start = end;
    }
    g.mapv_inplace(|v| v / n_pix as f64);
    g
}

/// Gram matrix of the rectified random-filter responses of `img`.
pub fn gram_features(img: &ImageTensor, fb: &FilterBank, slice_bytes: usize) -> Result<GramMatrix> {
    let (h, w) = img.dims();
    if h < fb.patch_side() || w < fb.patch_side() {
        return Err(Error::config(format!(
            "image {h}x{w} smaller than filter side {}",
            fb.patch_side()
        )));
    }
    let data = image_to_f64(img);
    Ok(GramMatrix {
        m: gram_of_raw(&data, h, w, fb, slice_bytes),
    })
}

fn loss_only_raw(
    data: &[f64],
    h: usize,
    w: usize,
    gx: &Array2<f64>,
    fb: &FilterBank,
    slice_bytes: usize,
) -> f64 {
    let gy = gram_of_raw(data, h, w, fb, slice_bytes);
    gy.iter().zip(gx.iter()).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn loss_and_grad_raw(
    data: &[f64],
    h: usize,
    w: usize,
    gx: &Array2<f64>,
    fb: &FilterBank,
    slice_bytes: usize,
) -> (f64, Vec<f64>) {
    let k = fb.filters();
    let b = fb.patch_side();
    let d = b * b * CHANNELS;
    let n_pix = h * w;
    let gy = gram_of_raw(data, h, w, fb, slice_bytes);
    let diff = &gy - gx;
    let loss = diff.iter().map(|v| v * v).sum();

    // dL/dz_p = (4 / HW) * (Gy - Gx) z_p, masked by the ReLU support; then
    // one transposed convolution scatters row gradients back to pixels.
    let coef = 4.0 / n_pix as f64;
    let diff_s = diff.as_slice().expect("standard layout");
    let mut grad = vec![0.0f64; n_pix * CHANNELS];
    let chunk = pixel_chunk(slice_bytes, k);
    let mut start = 0;
    while start < n_pix {
        let end = (start + chunk).min(n_pix);
        let z = feature_chunk(data, h, w, fb, start..end);
        let zs = z.as_slice().expect("standard layout");
        let row_grads: Vec<Vec<f64>> = (0..end - start)
            .into_par_iter()
            .map(|p| {
                let zp = &zs[p * k..(p + 1) * k];
                let mut gz = vec![0.0f64; k];
                for k1 in 0..k {
                    if zp[k1] > 0.0 {
                        let row = &diff_s[k1 * k..(k1 + 1) * k];
                        gz[k1] = coef * crate::transport::dot_f64(row, zp);
                    }
                }
                let mut rg = vec![0.0f64; d];
                for (k1, &g) in gz.iter().enumerate() {
                    if g != 0.0 {
                        for (t, wv) in fb.filter_row(k1).iter().enumerate() {
                            rg[t] += g * wv;
                        }
                    }
                }
                rg
            })
            .collect();
        for (p, rg) in row_grads.iter().enumerate() {
            let pix = start + p;
            let (or, oc) = (pix / w, pix % w);
            let mut t = 0;
            for dr in 0..b {
                let r = (or + dr) % h;
                for dc in 0..b {
                    let c = (oc + dc) % w;
                    let base = (r * w + c) * CHANNELS;
                    grad[base] += rg[t];
                    grad[base + 1] += rg[t + 1];
                    grad[base + 2] += rg[t + 2];
                    t += 3;
                }
            }
        }
        start = end;
    }
    (loss, grad)
}

/// Loss alone at raw f64 image data — the optimizer's exact view of the
/// objective. Exposed so gradient verification can probe the surface at
/// points that are not representable as quantized images.
pub fn gram_loss_value(
    height: usize,
    width: usize,
    data: &[f64],
    gx: &GramMatrix,
    fb: &FilterBank,
    slice_bytes: usize,
) -> Result<f64> {
    if data.len() != height * width * CHANNELS {
        return Err(Error::config("data length does not match dimensions"));
    }
    if gx.dim() != fb.filters() {
        return Err(Error::config("gram dimension does not match filter count"));
    }
    Ok(loss_only_raw(data, height, width, &gx.m, fb, slice_bytes))
}

/// Gram loss `|G_y - G_x|_F^2` and its gradient with respect to the image,
/// laid out like the image data.
pub fn gram_loss_grad(
    y: &ImageTensor,
    gx: &GramMatrix,
    fb: &FilterBank,
    slice_bytes: usize,
) -> Result<(f64, Vec<f64>)> {
    let (h, w) = y.dims();
    if h < fb.patch_side() || w < fb.patch_side() {
        return Err(Error::config("image smaller than filter side"));
    }
    if gx.dim() != fb.filters() {
        return Err(Error::config("gram dimension does not match filter count"));
    }
    let data = image_to_f64(y);
    Ok(loss_and_grad_raw(&data, h, w, &gx.m, fb, slice_bytes))
}

/// Parameters for the multi-resolution gram-loss synthesis.
#[derive(Clone, Debug)]
pub struct GramConfig {
    pub patch_side: usize,
    pub filters: usize,
    pub steps_per_scale: usize,
    pub num_scales: usize,
    pub seed: u64,
    pub slice_bytes: usize,
    pub out_height: Option<usize>,
    pub out_width: Option<usize>,
}

impl Default for GramConfig {
    fn default() -> Self {
        Self {
            patch_side: 4,
            filters: 256,
            steps_per_scale: 500,
            num_scales: 4,
            seed: 0,
            slice_bytes: 64 << 20,
            out_height: None,
            out_width: None,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GramTraceRow {
    pub scale: usize,
    pub step: usize,
    pub loss: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default)]
pub struct GramTrace {
    pub rows: Vec<GramTraceRow>,
}

impl GramTrace {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "scale,step,loss,seconds")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{}", r.scale, r.step, r.loss, r.seconds)?;
        }
        Ok(())
    }
}

struct GramObjective<'a> {
    h: usize,
    w: usize,
    gx: &'a Array2<f64>,
    fb: &'a FilterBank,
    slice_bytes: usize,
}

impl Objective for GramObjective<'_> {
    fn value(&mut self, x: &[f64]) -> f64 {
        loss_only_raw(x, self.h, self.w, self.gx, self.fb, self.slice_bytes)
    }
    fn value_grad(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
        let (loss, g) = loss_and_grad_raw(x, self.h, self.w, self.gx, self.fb, self.slice_bytes);
        grad.copy_from_slice(&g);
        loss
    }
}

/// Multi-resolution gram-loss synthesis: per scale, a fresh quasi-Newton
/// optimization of the synthesis against the exemplar's gram matrix at that
/// scale, starting from noise at the coarsest scale and from the upsampled
/// previous result above it. Pixels stay unclamped during optimization and
/// are clamped on output.
pub fn gram_synthesize(
    exemplar: &ImageTensor,
    cfg: &GramConfig,
) -> Result<(ImageTensor, GramTrace)> {
    if cfg.filters == 0 || cfg.steps_per_scale == 0 {
        return Err(Error::config("filters and steps must be at least 1"));
    }
    let spec = PyramidSpec::new(cfg.num_scales)?;
    let coarsest = spec.coarsest();
    let out_h = cfg.out_height.unwrap_or(exemplar.height());
    let out_w = cfg.out_width.unwrap_or(exemplar.width());
    let (eh, ew) = spec.dims_at(exemplar.height(), exemplar.width(), coarsest)?;
    let (oh, ow) = spec.dims_at(out_h, out_w, coarsest)?;
    let b = cfg.patch_side;
    if eh < b || ew < b || oh < b || ow < b {
        return Err(Error::config(format!(
            "coarsest scale ({eh}x{ew} exemplar, {oh}x{ow} output) smaller than patch side {b}"
        )));
    }

    let fb = FilterBank::random(b, cfg.filters, derive(cfg.seed, &[2]))?;
    let mut trace = GramTrace::default();
    let mut y: Option<Vec<f64>> = None;
    let mut prev_dims = (0usize, 0usize);

    for j in (0..cfg.num_scales).rev() {
        let x_j = downsample(exemplar, j)?;
        let gx = gram_features(&x_j, &fb, cfg.slice_bytes)?;
        let (h_j, w_j) = spec.dims_at(out_h, out_w, j)?;
        let y0: Vec<f64> = match y.take() {
            None => image_to_f64(&init_noise(h_j, w_j, derive(cfg.seed, &[3, j as u64]))?),
            Some(prev) => {
                let clamped: Vec<f32> = prev.iter().map(|&v| v as f32).collect();
                let img = ImageTensor::from_data(prev_dims.0, prev_dims.1, clamped)?;
                image_to_f64(&upsample(&img, h_j, w_j)?)
            }
        };

        let mut obj = GramObjective {
            h: h_j,
            w: w_j,
            gx: &gx.m,
            fb: &fb,
            slice_bytes: cfg.slice_bytes,
        };
        let started = Instant::now();
        let out = lbfgs::minimize(
            &mut obj,
            y0,
            &LbfgsParams {
                max_steps: cfg.steps_per_scale,
                ..Default::default()
            },
        );
        // Row `step = 0` carries the loss of the scale's starting point;
        // row `step = k` the loss after the k-th accepted step.
        trace.rows.push(GramTraceRow {
            scale: j,
            step: 0,
            loss: out.losses[0],
            seconds: started.elapsed().as_secs_f64(),
        });
        for (step, (&loss, &secs)) in out
            .losses
            .iter()
            .skip(1)
            .zip(&out.step_seconds)
            .enumerate()
        {
            trace.rows.push(GramTraceRow {
                scale: j,
                step: step + 1,
                loss,
                seconds: secs,
            });
        }
        prev_dims = (h_j, w_j);
        y = Some(out.x);
    }

    let final_raw = y.expect("at least one scale");
    let data: Vec<f32> = final_raw.iter().map(|&v| v as f32).collect();
    Ok((ImageTensor::from_data(out_h, out_w, data)?, trace))
}
