//! RGB image tensor with values in `[0, 1]`, plus seeded noise and PNG I/O.

use std::path::Path;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const CHANNELS: usize = 3;

/// H x W x 3 image, row-major by `(row, col, channel)`, values in `[0, 1]`.
///
/// Values are clamped on every write-back, so a tensor obtained from any
/// public operation is always finite and inside the unit interval. Stored in
/// single precision; operations accumulate in double precision.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl ImageTensor {
    /// All-zero image.
    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        check_dims(height, width)?;
        Ok(Self {
            height,
            width,
            data: vec![0.0; height * width * CHANNELS],
        })
    }

    /// Constant-valued image; the value is clamped to `[0, 1]`.
    pub fn constant(height: usize, width: usize, value: f32) -> Result<Self> {
        check_dims(height, width)?;
        let v = value.clamp(0.0, 1.0);
        Ok(Self {
            height,
            width,
            data: vec![v; height * width * CHANNELS],
        })
    }

    /// Build from raw row-major `(row, col, channel)` data. Non-finite values
    /// are rejected; finite values are clamped into `[0, 1]`.
    pub fn from_data(height: usize, width: usize, mut data: Vec<f32>) -> Result<Self> {
        check_dims(height, width)?;
        if data.len() != height * width * CHANNELS {
            return Err(Error::config(format!(
                "data length {} does not match {}x{}x{}",
                data.len(),
                height,
                width,
                CHANNELS
            )));
        }
        for v in &mut data {
            if !v.is_finite() {
                return Err(Error::config("non-finite value in image data"));
            }
            *v = v.clamp(0.0, 1.0);
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub(crate) fn index(&self, row: usize, col: usize, ch: usize) -> usize {
        (row * self.width + col) * CHANNELS + ch
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f32 {
        self.data[self.index(row, col, ch)]
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> [f32; 3] {
        let i = self.index(row, col, 0);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub(crate) fn set(&mut self, row: usize, col: usize, ch: usize, value: f32) {
        let i = self.index(row, col, ch);
        self.data[i] = value.clamp(0.0, 1.0);
    }

    /// `out(r, c) = self((r + dr) % H, (c + dc) % W)`.
    pub fn circular_shift(&self, dr: usize, dc: usize) -> Self {
        let mut out = self.clone();
        for r in 0..self.height {
            let sr = (r + dr) % self.height;
            for c in 0..self.width {
                let sc = (c + dc) % self.width;
                for ch in 0..CHANNELS {
                    let v = self.get(sr, sc, ch);
                    let i = out.index(r, c, ch);
                    out.data[i] = v;
                }
            }
        }
        out
    }

    /// Largest absolute per-value difference; images must share dimensions.
    pub fn max_abs_diff(&self, other: &Self) -> f32 {
        assert_eq!(self.dims(), other.dims(), "dimension mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }
}

fn check_dims(height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::BadDimensions { height, width });
    }
    Ok(())
}

/// I.i.d. uniform `[0, 1)` noise; bit-reproducible for a fixed seed.
pub fn init_noise(height: usize, width: usize, seed: u64) -> Result<ImageTensor> {
    check_dims(height, width)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..height * width * CHANNELS)
        .map(|_| rng.random::<f32>())
        .collect();
    ImageTensor::from_data(height, width, data)
}

/// Read an 8-bit RGB PNG, mapping samples linearly onto `[0, 1]`.
pub fn load_png(path: impl AsRef<Path>) -> Result<ImageTensor> {
    let img = image::open(path.as_ref())?.into_rgb8();
    let (w, h) = img.dimensions();
    let data = img.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
    ImageTensor::from_data(h as usize, w as usize, data)
}

/// Write an 8-bit RGB PNG; `v -> round(v * 255)`.
pub fn save_png(img: &ImageTensor, path: impl AsRef<Path>) -> Result<()> {
    let bytes: Vec<u8> = img
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let buf = image::RgbImage::from_raw(img.width() as u32, img.height() as u32, bytes)
        .expect("buffer sized from image dims");
    buf.save_with_format(path.as_ref(), image::ImageFormat::Png)?;
    Ok(())
}
