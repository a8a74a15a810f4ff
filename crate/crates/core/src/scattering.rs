//! Atmospheric scattering model: `I = J e^{-βz} + A (1 - e^{-βz})` and its
//! depth-conditioned inverse. Shared by the cost-volume builders and the
//! synthetic data generator.
//!
//! All math runs in double precision regardless of how images were stored;
//! the division by `e^{-βz}` amplifies rounding for large optical depths.

use crate::error::{Error, Result};
use crate::image::{DepthMap, ImageBuffer};

/// Achromatic airlight and scattering coefficient of a homogeneous medium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatteringParams {
    /// Airlight intensity, broadcast to all three channels; in `[0, 1]`.
    pub airlight: f64,
    /// Scattering coefficient in inverse scene units; non-negative.
    pub beta: f64,
}

impl ScatteringParams {
    pub fn new(airlight: f64, beta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&airlight) {
            return Err(Error::invalid(format!("airlight {airlight} outside [0, 1]")));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::invalid(format!("beta {beta} must be finite and >= 0")));
        }
        Ok(Self { airlight, beta })
    }

    /// Clear medium: `beta = 0`, under which hazing is the identity.
    pub fn clear(airlight: f64) -> Result<Self> {
        Self::new(airlight, 0.0)
    }
}

/// Fraction `e^{-βz}` of scene radiance surviving a path of length `z`.
pub fn transmission(z: f64, params: &ScatteringParams) -> Result<f64> {
    if z < 0.0 {
        return Err(Error::invalid(format!("negative depth {z}")));
    }
    Ok((-params.beta * z).exp())
}

/// Scatters a single clear pixel at depth `z`.
#[inline]
pub fn haze_pixel(clear: [f64; 3], z: f64, params: &ScatteringParams) -> [f64; 3] {
    let t = (-params.beta * z).exp();
    let a = params.airlight;
    [
        clear[0] * t + a * (1.0 - t),
        clear[1] * t + a * (1.0 - t),
        clear[2] * t + a * (1.0 - t),
    ]
}

/// Inverts the scattering model at a single pixel given its depth:
/// `J = (I - A) / e^{-βz} + A`.
///
/// The result is deliberately unclamped; values outside `[0, 1]` signal an
/// inconsistent depth hypothesis and are range-gated by the caller.
#[inline]
pub fn dehaze_pixel(hazy: [f64; 3], z: f64, params: &ScatteringParams) -> [f64; 3] {
    let t = (-params.beta * z).exp();
    let a = params.airlight;
    [
        (hazy[0] - a) / t + a,
        (hazy[1] - a) / t + a,
        (hazy[2] - a) / t + a,
    ]
}

/// Applies the scattering model to a clear image with its depth map.
///
/// Per pixel and channel the output is the convex combination
/// `J e^{-βz} + A (1 - e^{-βz})`, so it stays inside `[min(J, A), max(J, A)]`.
pub fn apply_haze(clear: &ImageBuffer, depth: &DepthMap, params: &ScatteringParams) -> Result<ImageBuffer> {
    if clear.width() != depth.width() || clear.height() != depth.height() {
        return Err(Error::invalid("image and depth dimensions differ"));
    }
    let mut out = ImageBuffer::new(clear.width(), clear.height());
    for v in 0..clear.height() {
        for u in 0..clear.width() {
            let z = depth
                .get_valid(u, v)
                .ok_or_else(|| Error::invalid(format!("invalid depth at ({u}, {v})")))?;
            if z < 0.0 {
                return Err(Error::invalid(format!("negative depth at ({u}, {v})")));
            }
            out.set(u, v, haze_pixel(clear.get(u, v), z, params));
        }
    }
    Ok(out)
}

/// Inverts the scattering model over a whole image with a known depth map.
///
/// Output channels may leave `[0, 1]`; no clamping is applied here.
pub fn dehaze_with_depth(
    hazy: &ImageBuffer,
    depth: &DepthMap,
    params: &ScatteringParams,
) -> Result<ImageBuffer> {
    if hazy.width() != depth.width() || hazy.height() != depth.height() {
        return Err(Error::invalid("image and depth dimensions differ"));
    }
    let mut out = ImageBuffer::new(hazy.width(), hazy.height());
    for v in 0..hazy.height() {
        for u in 0..hazy.width() {
            let z = depth
                .get_valid(u, v)
                .ok_or_else(|| Error::invalid(format!("invalid depth at ({u}, {v})")))?;
            out.set(u, v, dehaze_pixel(hazy.get(u, v), z, params));
        }
    }
    Ok(out)
}
