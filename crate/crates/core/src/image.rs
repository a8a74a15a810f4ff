//! Pixel containers: RGB images with unit-range channels and metric depth maps.

use crate::error::{Error, Result};

/// An RGB image with `f64` channels, nominally in `[0, 1]`.
///
/// Observed and latent clear images keep channels inside the unit range;
/// intermediate dehazed values may leave it and are range-checked by the
/// consumer, so the container itself does not clamp.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    data: Vec<[f64; 3]>,
}

impl ImageBuffer {
    /// All-black image of the given size.
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![[0.0; 3]; width * height],
        }
    }

    /// Builds an image by evaluating `f` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                data.push(f(u, v));
            }
        }
        Self { width, height, data }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<[f64; 3]>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "pixel count {} does not match {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> [f64; 3] {
        self.data[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, px: [f64; 3]) {
        self.data[v * self.width + u] = px;
    }

    /// Row-major pixel slice.
    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.data
    }

    pub fn pixels_mut(&mut self) -> &mut [[f64; 3]] {
        &mut self.data
    }

    /// True when every channel of every pixel lies in `[0, 1]`.
    pub fn in_unit_range(&self) -> bool {
        self.data
            .iter()
            .all(|px| px.iter().all(|&c| (0.0..=1.0).contains(&c)))
    }

    /// Largest absolute per-channel difference to another image of equal size.
    pub fn max_abs_diff(&self, other: &ImageBuffer) -> f64 {
        assert_eq!(self.width, other.width);
        assert_eq!(self.height, other.height);
        self.data
            .iter()
            .zip(&other.data)
            .flat_map(|(a, b)| (0..3).map(move |c| (a[c] - b[c]).abs()))
            .fold(0.0, f64::max)
    }
}

/// A per-pixel metric depth map with a validity mask.
///
/// Valid pixels carry a finite positive depth in scene units; invalid pixels
/// keep an unspecified value and are skipped by every consumer.
#[derive(Debug, Clone)]
pub struct DepthMap {
    width: usize,
    height: usize,
    depths: Vec<f64>,
    valid: Vec<bool>,
}

/// Equality over the validity mask and the depths at valid pixels; the
/// stored values of invalid pixels are unspecified and do not participate.
impl PartialEq for DepthMap {
    fn eq(&self, other: &Self) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.valid == other.valid
            && self
                .depths
                .iter()
                .zip(&other.depths)
                .zip(&self.valid)
                .all(|((a, b), &ok)| !ok || a == b)
    }
}

impl DepthMap {
    /// Map of the given size with every pixel invalid.
    pub fn new_invalid(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            depths: vec![f64::NAN; width * height],
            valid: vec![false; width * height],
        }
    }

    /// Map with every pixel valid at a constant depth.
    pub fn constant(width: usize, height: usize, depth: f64) -> Self {
        Self {
            width,
            height,
            depths: vec![depth; width * height],
            valid: vec![true; width * height],
        }
    }

    /// Builds an all-valid map by evaluating `f` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut depths = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                depths.push(f(u, v));
            }
        }
        Self {
            width,
            height,
            depths,
            valid: vec![true; width * height],
        }
    }

    pub fn from_raw(width: usize, height: usize, depths: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        if depths.len() != width * height || valid.len() != width * height {
            return Err(Error::invalid("depth/validity length mismatch"));
        }
        Ok(Self {
            width,
            height,
            depths,
            valid,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn is_valid(&self, u: usize, v: usize) -> bool {
        self.valid[v * self.width + u]
    }

    /// Depth at a pixel; meaningful only when `is_valid`.
    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.depths[v * self.width + u]
    }

    /// Depth at a pixel, or `None` when the pixel is invalid.
    #[inline]
    pub fn get_valid(&self, u: usize, v: usize) -> Option<f64> {
        let idx = v * self.width + u;
        self.valid[idx].then(|| self.depths[idx])
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, depth: f64) {
        let idx = v * self.width + u;
        self.depths[idx] = depth;
        self.valid[idx] = true;
    }

    #[inline]
    pub fn invalidate(&mut self, u: usize, v: usize) {
        let idx = v * self.width + u;
        self.depths[idx] = f64::NAN;
        self.valid[idx] = false;
    }

    pub fn depths(&self) -> &[f64] {
        &self.depths
    }

    pub fn depths_mut(&mut self) -> &mut [f64] {
        &mut self.depths
    }

    pub fn validity(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&b| b).count()
    }

    /// Median over valid depths, or `None` when no pixel is valid.
    pub fn median(&self) -> Option<f64> {
        let mut vals: Vec<f64> = self
            .depths
            .iter()
            .zip(&self.valid)
            .filter_map(|(&z, &ok)| ok.then_some(z))
            .collect();
        if vals.is_empty() {
            return None;
        }
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Some(vals[vals.len() / 2])
    }

    /// Multiplies every valid depth by `k`.
    pub fn scale(&mut self, k: f64) {
        for (z, ok) in self.depths.iter_mut().zip(&self.valid) {
            if *ok {
                *z *= k;
            }
        }
    }
}
