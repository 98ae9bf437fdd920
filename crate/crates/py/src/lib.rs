//! Python bindings: the image type plus the synthesis, innovation-capacity,
//! and tile-map entry points. Build with `cargo build -p otex-py --release`
//! and import the produced `libotex.so` as the module `otex` (see
//! `python/smoke_test.py`).

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use otex_core::error::Error;
use otex_core::gram::{gram_synthesize as gram_synthesize_rs, GramConfig};
use otex_core::image as img;
use otex_core::innovation;
use otex_core::synthesis::{synthesize as synthesize_rs, Heuristic, SynthesisConfig};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(_) | Error::Png(_) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// RGB image with values in [0, 1], row-major by (row, col, channel).
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct Image {
    inner: img::ImageTensor,
}

#[pymethods]
impl Image {
    #[new]
    #[pyo3(signature = (height, width, data=None))]
    fn new(height: usize, width: usize, data: Option<Vec<f32>>) -> PyResult<Self> {
        let inner = match data {
            Some(d) => img::ImageTensor::from_data(height, width, d).map_err(to_py)?,
            None => img::ImageTensor::zeros(height, width).map_err(to_py)?,
        };
        Ok(Self { inner })
    }

    /// Load an 8-bit RGB PNG.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: img::load_png(path).map_err(to_py)?,
        })
    }

    /// Seeded uniform noise.
    #[staticmethod]
    fn noise(height: usize, width: usize, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: img::init_noise(height, width, seed).map_err(to_py)?,
        })
    }

    /// Constant-valued image.
    #[staticmethod]
    fn constant(height: usize, width: usize, value: f32) -> PyResult<Self> {
        Ok(Self {
            inner: img::ImageTensor::constant(height, width, value).map_err(to_py)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        img::save_png(&self.inner, path).map_err(to_py)
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    /// Flat copy of the pixel data.
    fn data(&self) -> Vec<f32> {
        self.inner.data().to_vec()
    }

    fn pixel(&self, row: usize, col: usize) -> PyResult<(f32, f32, f32)> {
        if row >= self.inner.height() || col >= self.inner.width() {
            return Err(PyValueError::new_err("pixel out of range"));
        }
        let p = self.inner.pixel(row, col);
        Ok((p[0], p[1], p[2]))
    }

    /// Circular shift: out(r, c) = self((r + dr) % H, (c + dc) % W).
    fn shift(&self, dr: usize, dc: usize) -> Self {
        Self {
            inner: self.inner.circular_shift(dr, dc),
        }
    }

    fn __repr__(&self) -> String {
        format!("Image({}x{})", self.inner.height(), self.inner.width())
    }
}

/// Patch-matching texture synthesis. Returns the synthesized image and the
/// trace as (scale, iteration, match_cardinality, mean_cost, seconds) rows.
#[pyfunction]
#[
    pyo3(signature = (exemplar, method="ot", patch=4, scales=4, iters=10, eps=0.001,
    alpha=0.25, subsample=0.35, blend=0.5, sweeps=10, seed=0, height=None, width=None,
    slice_bytes=64 << 20))
]
#[allow(clippy::too_many_arguments)]
fn synthesize(
    exemplar: &Image,
    method: &str,
    patch: usize,
    scales: usize,
    iters: usize,
    eps: f64,
    alpha: f64,
    subsample: f64,
    blend: f32,
    sweeps: usize,
    seed: u64,
    height: Option<usize>,
    width: Option<usize>,
    slice_bytes: usize,
) -> PyResult<(Image, Vec<(usize, usize, f64, f64, f64)>)> {
    let heuristic: Heuristic = method.parse().map_err(to_py)?;
    let cfg = SynthesisConfig {
        patch_side: patch,
        num_scales: scales,
        iters_per_scale: iters,
        heuristic,
        epsilon: eps,
        alpha,
        subsample_fraction: subsample,
        slice_bytes,
        coarse_blend_weight: blend,
        sinkhorn_sweeps: sweeps,
        seed,
        out_height: height,
        out_width: width,
        ..Default::default()
    };
    let (out, trace) = synthesize_rs(&exemplar.inner, &cfg).map_err(to_py)?;
    let rows = trace
        .rows
        .iter()
        .map(|r| {
            (
                r.scale,
                r.iteration,
                r.match_cardinality,
                r.mean_cost,
                r.seconds,
            )
        })
        .collect();
    Ok((Image { inner: out }, rows))
}

/// Random-filter gram-loss synthesis.
#[pyfunction]
#[
    pyo3(signature = (exemplar, filters=256, steps=500, scales=4, patch=4, seed=0,
    height=None, width=None, slice_bytes=64 << 20))
]
#[allow(clippy::too_many_arguments)]
fn gram_synthesize(
    exemplar: &Image,
    filters: usize,
    steps: usize,
    scales: usize,
    patch: usize,
    seed: u64,
    height: Option<usize>,
    width: Option<usize>,
    slice_bytes: usize,
) -> PyResult<Image> {
    let cfg = GramConfig {
        patch_side: patch,
        filters,
        steps_per_scale: steps,
        num_scales: scales,
        seed,
        slice_bytes,
        out_height: height,
        out_width: width,
    };
    let (out, _) = gram_synthesize_rs(&exemplar.inner, &cfg).map_err(to_py)?;
    Ok(Image { inner: out })
}

/// Multi-resolution innovation capacity over scales `scales..0`. Returns the
/// per-scale values (coarsest first) and their mean.
#[pyfunction]
#[pyo3(signature = (exemplar, synthesis, scales=4, patch=4, slice_bytes=64 << 20))]
fn innovation_capacity(
    exemplar: &Image,
    synthesis: &Image,
    scales: usize,
    patch: usize,
    slice_bytes: usize,
) -> PyResult<(Vec<(usize, f64)>, f64)> {
    let report =
        innovation::innovation_capacity(&exemplar.inner, &synthesis.inner, scales, patch, slice_bytes)
            .map_err(to_py)?;
    let levels = report.levels.iter().map(|l| (l.scale, l.value)).collect();
    Ok((levels, report.mean))
}

/// Render the tile map of `synthesis` against `exemplar` as an image.
#[pyfunction]
#[pyo3(signature = (exemplar, synthesis, patch=4, slice_bytes=64 << 20))]
fn tile_map_render(
    exemplar: &Image,
    synthesis: &Image,
    patch: usize,
    slice_bytes: usize,
) -> PyResult<Image> {
    let tm = innovation::tile_map(&exemplar.inner, &synthesis.inner, patch, slice_bytes)
        .map_err(to_py)?;
    Ok(Image {
        inner: innovation::tile_map_render(&tm),
    })
}

#[pymodule]
fn otex(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Image>()?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(gram_synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(innovation_capacity, m)?)?;
    m.add_function(wrap_pyfunction!(tile_map_render, m)?)?;
    Ok(())
}
