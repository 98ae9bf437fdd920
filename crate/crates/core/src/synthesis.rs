//! Coarse-to-fine texture synthesis: at every scale, repeatedly re-match
//! synthesis patches to exemplar patches with the configured heuristic and
//! re-average them back into the image, blending each iterate with the
//! coarser result to keep subsampled fine scales from drifting.

use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::image::{init_noise, ImageTensor};
use crate::patch::{fold, patchify, PatchMatrix};
use crate::pyramid::{blend_with_coarse, downsample, upsample, PyramidSpec};
use crate::seed::derive;
use crate::transport::{
    bs_update_targets, greedy_hc_match, match_cardinality, nn_match, pair_sq_dist, sinkhorn,
    sinkhorn_traced, AugmentedFeatures, MarginalResidual, MatchMap,
};

/// Patch-match heuristic driving the synthesis update.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Heuristic {
    /// Plain nearest neighbor.
    Nn,
    /// Bidirectional similarity: convex combination of forward and backward
    /// nearest-neighbor updates.
    Bs,
    /// Entropic optimal transport with greedy near-permutation extraction.
    Ot,
}

impl FromStr for Heuristic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nn" => Ok(Heuristic::Nn),
            "bs" => Ok(Heuristic::Bs),
            "ot" => Ok(Heuristic::Ot),
            other => Err(Error::config(format!("unknown heuristic '{other}'"))),
        }
    }
}

/// Full parameter set for one synthesis run.
#[derive(Clone, Debug)]
pub struct SynthesisConfig {
    pub patch_side: usize,
    pub num_scales: usize,
    pub iters_per_scale: usize,
    pub heuristic: Heuristic,
    pub epsilon: f64,
    pub alpha: f64,
    pub subsample_fraction: f64,
    pub slice_bytes: usize,
    pub coarse_blend_weight: f32,
    pub sinkhorn_sweeps: usize,
    pub greedy_max_rounds: usize,
    pub greedy_target_mc: f64,
    pub seed: u64,
    /// Output dimensions; defaults to the exemplar's.
    pub out_height: Option<usize>,
    pub out_width: Option<usize>,
    /// Record per-sweep Sinkhorn marginal residuals into the trace (OT only;
    /// costs one extra block pass per sweep).
    pub trace_residuals: bool,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            patch_side: 4,
            num_scales: 4,
            iters_per_scale: 10,
            heuristic: Heuristic::Ot,
            epsilon: 0.001,
            alpha: 0.25,
            subsample_fraction: 0.35,
            slice_bytes: 64 << 20,
            coarse_blend_weight: 0.5,
            sinkhorn_sweeps: 10,
            greedy_max_rounds: 20,
            greedy_target_mc: 0.99,
            seed: 0,
            out_height: None,
            out_width: None,
            trace_residuals: false,
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self, exemplar: &ImageTensor) -> Result<()> {
        if self.patch_side == 0 {
            return Err(Error::config("patch side must be at least 1"));
        }
        if self.num_scales == 0 || self.iters_per_scale == 0 {
            return Err(Error::config("scales and iterations must be at least 1"));
        }
        if self.epsilon <= 0.0 || !self.epsilon.is_finite() {
            return Err(Error::config("epsilon must be positive"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config("alpha outside [0, 1]"));
        }
        if !(self.subsample_fraction > 0.0 && self.subsample_fraction <= 1.0) {
            return Err(Error::config("subsample fraction outside (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.coarse_blend_weight) {
            return Err(Error::config("blend weight outside [0, 1]"));
        }
        if self.sinkhorn_sweeps == 0 || self.greedy_max_rounds == 0 {
            return Err(Error::config("sweeps and rounds must be at least 1"));
        }
        if !(self.greedy_target_mc > 0.0 && self.greedy_target_mc <= 1.0) {
            return Err(Error::config("greedy target MC outside (0, 1]"));
        }
        let spec = PyramidSpec::new(self.num_scales)?;
        let j = spec.coarsest();
        let (eh, ew) = spec.dims_at(exemplar.height(), exemplar.width(), j)?;
        if eh < self.patch_side || ew < self.patch_side {
            return Err(Error::config(format!(
                "exemplar is {eh}x{ew} at the coarsest scale, smaller than patch side {}",
                self.patch_side
            )));
        }
        let out_h = self.out_height.unwrap_or(exemplar.height());
        let out_w = self.out_width.unwrap_or(exemplar.width());
        spec.dims_at(out_h, out_w, j)?;
        Ok(())
    }
}

/// One matching/re-averaging step's observability record.
#[derive(Clone, Copy, Debug)]
pub struct TraceRow {
    pub scale: usize,
    pub iteration: usize,
    pub match_cardinality: f64,
    pub mean_cost: f64,
    pub seconds: f64,
}

/// Per-scale, per-iteration synthesis trace.
#[derive(Clone, Debug, Default)]
pub struct SynthesisTrace {
    pub rows: Vec<TraceRow>,
    /// Sinkhorn marginal residuals, numbered cumulatively across calls;
    /// populated when [`SynthesisConfig::trace_residuals`] is set.
    pub residuals: Vec<MarginalResidual>,
}

impl SynthesisTrace {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "scale,iteration,mc,mean_cost,seconds")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.scale, r.iteration, r.match_cardinality, r.mean_cost, r.seconds
            )?;
        }
        Ok(())
    }

    pub fn write_residuals_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "iteration,max_row_residual,max_col_residual")?;
        for r in &self.residuals {
            writeln!(w, "{},{},{}", r.sweep, r.max_row, r.max_col)?;
        }
        Ok(())
    }

    /// Rows belonging to one scale, in iteration order.
    pub fn scale_rows(&self, scale: usize) -> Vec<TraceRow> {
        self.rows.iter().copied().filter(|r| r.scale == scale).collect()
    }
}

/// Replace each synthesis patch row with its matched exemplar row, keeping
/// the synthesis origins.
pub fn apply_match(
    y_patches: &PatchMatrix,
    x_patches: &PatchMatrix,
    m: &MatchMap,
) -> Result<PatchMatrix> {
    if !m.is_total() {
        return Err(Error::IncompleteMatch);
    }
    if m.len() != y_patches.n_rows() || m.n_exemplar() != x_patches.n_rows() {
        return Err(Error::config("match map does not fit the patch matrices"));
    }
    if x_patches.row_len() != y_patches.row_len() {
        return Err(Error::config("patch row lengths differ"));
    }
    let mut data = Array2::<f32>::zeros((y_patches.n_rows(), y_patches.row_len()));
    for j in 0..y_patches.n_rows() {
        let src = x_patches.row(m.get(j).expect("total map"));
        data.row_mut(j)
            .into_slice()
            .expect("contiguous row")
            .copy_from_slice(src);
    }
    PatchMatrix::from_rows(y_patches.patch_side(), data, y_patches.origins().to_vec())
}

/// Mean matched squared distance, `E / N_y` for the matching energy `E`.
fn matched_mean_cost(xf: &AugmentedFeatures, yf: &AugmentedFeatures, m: &MatchMap) -> f64 {
    let n = m.len();
    let total: f64 = (0..n)
        .map(|j| pair_sq_dist(xf, m.get(j).expect("total map"), yf, j))
        .sum();
    total / n as f64
}

/// Run the full multi-resolution synthesis. Deterministic in the seed; the
/// returned trace carries match cardinality, mean match cost, and wall time
/// per iteration.
pub fn synthesize(
    exemplar: &ImageTensor,
    cfg: &SynthesisConfig,
) -> Result<(ImageTensor, SynthesisTrace)> {
    cfg.validate(exemplar)?;
    let spec = PyramidSpec::new(cfg.num_scales)?;
    let coarsest = spec.coarsest();
    let out_h = cfg.out_height.unwrap_or(exemplar.height());
    let out_w = cfg.out_width.unwrap_or(exemplar.width());

    let mut trace = SynthesisTrace::default();
    let mut coarse_ref: Option<ImageTensor> = None;
    let mut y: Option<ImageTensor> = None;

    for j in (0..cfg.num_scales).rev() {
        let x_j = downsample(exemplar, j)?;
        let (h_j, w_j) = spec.dims_at(out_h, out_w, j)?;
        let mut y_j = match &y {
            None => init_noise(h_j, w_j, derive(cfg.seed, &[0, j as u64]))?,
            Some(prev) => upsample(prev, h_j, w_j)?,
        };

        for t in 0..cfg.iters_per_scale {
            let started = Instant::now();
            let xp = patchify(
                &x_j,
                cfg.patch_side,
                cfg.subsample_fraction,
                derive(cfg.seed, &[1, j as u64, t as u64, 0]),
            )?;
            let yp = patchify(
                &y_j,
                cfg.patch_side,
                cfg.subsample_fraction,
                derive(cfg.seed, &[1, j as u64, t as u64, 1]),
            )?;
            let xf = AugmentedFeatures::from_patches(&xp);
            let yf = AugmentedFeatures::from_patches(&yp);

            let (updated, mc, mean_cost) = match cfg.heuristic {
                Heuristic::Nn => {
                    let m = nn_match(&xf, &yf, cfg.slice_bytes)?;
                    let mean = matched_mean_cost(&xf, &yf, &m);
                    (apply_match(&yp, &xp, &m)?, match_cardinality(&m)?, mean)
                }
                Heuristic::Ot => {
                    let sp = if cfg.trace_residuals {
                        let (sp, res) = sinkhorn_traced(
                            &xf,
                            &yf,
                            cfg.epsilon,
                            cfg.sinkhorn_sweeps,
                            cfg.slice_bytes,
                        )?;
                        let offset = trace.residuals.len();
                        trace
                            .residuals
                            .extend(res.into_iter().map(|mut r| {
                                r.sweep += offset;
                                r
                            }));
                        sp
                    } else {
                        sinkhorn(&xf, &yf, cfg.epsilon, cfg.sinkhorn_sweeps, cfg.slice_bytes)?
                    };
                    let m = greedy_hc_match(
                        &sp,
                        cfg.greedy_max_rounds,
                        cfg.greedy_target_mc,
                        cfg.slice_bytes,
                    )?;
                    let mean = matched_mean_cost(&xf, &yf, &m);
                    (apply_match(&yp, &xp, &m)?, match_cardinality(&m)?, mean)
                }
                Heuristic::Bs => {
                    let bs = bs_update_targets(&xf, &yf, cfg.alpha, cfg.slice_bytes)?;
                    let mean = matched_mean_cost(&xf, &yf, &bs.forward);
                    let data = bs.targets.map(|&v| v as f32);
                    let updated =
                        PatchMatrix::from_rows(cfg.patch_side, data, yp.origins().to_vec())?;
                    (updated, match_cardinality(&bs.forward)?, mean)
                }
            };

            let mut next = fold(&updated, h_j, w_j, Some(&y_j))?;
            if j != coarsest && cfg.coarse_blend_weight > 0.0 {
                let coarse = coarse_ref.as_ref().expect("set after the coarsest scale");
                next = blend_with_coarse(&next, coarse, cfg.coarse_blend_weight)?;
            }
            y_j = next;

            trace.rows.push(TraceRow {
                scale: j,
                iteration: t,
                match_cardinality: mc,
                mean_cost,
                seconds: started.elapsed().as_secs_f64(),
            });
        }

        coarse_ref = Some(y_j.clone());
        y = Some(y_j);
    }

    Ok((y.expect("at least one scale"), trace))
}
