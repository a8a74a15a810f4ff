//! Photometric cost volumes over a plane-sweep hypothesis set: the ordinary
//! volume (mean L1 between the reference and warped sources) and the dehazing
//! volume, whose operands are first inverted through the scattering model
//! using each hypothesis depth before the residual is taken.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{bilinear_sample, CameraModel, HypothesisSet, WarpPrecomp};
use crate::image::ImageBuffer;
use crate::scattering::ScatteringParams;

/// Default penalty constant: the maximum value of the ordinary cost volume
/// when every channel lies in `[0, 1]`.
pub const DEFAULT_GAMMA: f64 = 3.0;

/// A source image together with its camera (pose relative to the reference).
#[derive(Debug, Clone)]
pub struct SourceView {
    pub image: ImageBuffer,
    pub camera: CameraModel,
}

impl SourceView {
    pub fn new(image: ImageBuffer, camera: CameraModel) -> Result<Self> {
        if image.width() != camera.width || image.height() != camera.height {
            return Err(Error::invalid("source image does not match its camera dimensions"));
        }
        Ok(Self { image, camera })
    }
}

/// W×H×N photometric-cost tensor, plane-major so each hypothesis is an
/// independent W×H tile. Every entry lies in `[0, gamma]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVolume {
    width: usize,
    height: usize,
    n_hypotheses: usize,
    gamma: f64,
    costs: Vec<f64>,
}

impl CostVolume {
    pub(crate) fn from_parts(
        width: usize,
        height: usize,
        n_hypotheses: usize,
        gamma: f64,
        costs: Vec<f64>,
    ) -> Result<Self> {
        if costs.len() != width * height * n_hypotheses {
            return Err(Error::invalid("cost buffer length mismatch"));
        }
        Ok(Self {
            width,
            height,
            n_hypotheses,
            gamma,
            costs,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn n_hypotheses(&self) -> usize {
        self.n_hypotheses
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    #[inline]
    pub fn at(&self, u: usize, v: usize, i: usize) -> f64 {
        self.costs[i * self.width * self.height + v * self.width + u]
    }

    /// The W×H tile of hypothesis `i`.
    pub fn plane(&self, i: usize) -> &[f64] {
        let wh = self.width * self.height;
        &self.costs[i * wh..(i + 1) * wh]
    }

    /// Plane-major flat view of all entries.
    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    /// The slice through the volume at one pixel, paired with hypothesis
    /// depths. Powers per-pixel cost-curve plots.
    pub fn cost_profile(&self, hyps: &HypothesisSet, pixel: (usize, usize)) -> Result<Vec<(f64, f64)>> {
        if hyps.len() != self.n_hypotheses {
            return Err(Error::invalid("hypothesis count does not match the volume"));
        }
        let (u, v) = pixel;
        if u >= self.width || v >= self.height {
            return Err(Error::invalid(format!("pixel ({u}, {v}) out of range")));
        }
        Ok((0..self.n_hypotheses)
            .map(|i| (hyps.depth(i), self.at(u, v, i)))
            .collect())
    }
}

fn validate_inputs(reference: &ImageBuffer, sources: &[SourceView], gamma: f64) -> Result<()> {
    if sources.is_empty() {
        return Err(Error::invalid("need at least one source view"));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid("gamma must be positive and finite"));
    }
    if reference.is_empty() {
        return Err(Error::invalid("empty reference image"));
    }
    if !reference.in_unit_range() {
        return Err(Error::invalid("reference image has channels outside [0, 1]"));
    }
    for (s, view) in sources.iter().enumerate() {
        if !view.image.in_unit_range() {
            return Err(Error::invalid(format!("source {s} has channels outside [0, 1]")));
        }
    }
    Ok(())
}

#[inline]
fn l1_cost(a: [f64; 3], b: [f64; 3]) -> f64 {
    (a[0] - b[0]).abs() + (a[1] - b[1]).abs() + (a[2] - b[2]).abs()
}

#[inline]
fn in_unit_range(px: [f64; 3]) -> bool {
    px[0] >= 0.0 && px[0] <= 1.0 && px[1] >= 0.0 && px[1] <= 1.0 && px[2] >= 0.0 && px[2] <= 1.0
}

/// Ordinary plane-sweep cost volume: per pixel and hypothesis, the mean over
/// sources of the 3-channel L1 residual between the reference and the warped
/// source. Warps that land out of bounds or behind a camera contribute the
/// penalty `gamma`, which also caps every contribution.
pub fn build_ordinary(
    reference: &ImageBuffer,
    sources: &[SourceView],
    hyps: &HypothesisSet,
    gamma: f64,
) -> Result<CostVolume> {
    validate_inputs(reference, sources, gamma)?;
    let (w, h) = (reference.width(), reference.height());
    let wh = w * h;
    let precomps: Vec<WarpPrecomp> = sources.iter().map(|s| WarpPrecomp::new(&s.camera)).collect();
    let rays = precompute_rays(w, h, &precomps);
    let inv_s = 1.0 / sources.len() as f64;

    let mut costs = vec![0.0; wh * hyps.len()];
    costs
        .par_chunks_mut(wh)
        .enumerate()
        .for_each(|(i, tile)| {
            let z = hyps.depth(i);
            for v in 0..h {
                for u in 0..w {
                    let pix = v * w + u;
                    let ref_px = reference.get(u, v);
                    let mut sum = 0.0;
                    for (s, view) in sources.iter().enumerate() {
                        let contribution = match precomps[s]
                            .warp_ray(&rays[s][pix], z)
                            .and_then(|p| bilinear_sample(&view.image, (p.u, p.v)))
                        {
                            Ok(sample) => l1_cost(ref_px, sample).min(gamma),
                            Err(_) => gamma,
                        };
                        sum += contribution;
                    }
                    tile[pix] = sum * inv_s;
                }
            }
        });
    CostVolume::from_parts(w, h, hyps.len(), gamma, costs)
}

/// Dehazing cost volume: the reference is dehazed with each hypothesis depth
/// and the source with the swept plane's depth as seen from the source view,
/// then the residual is taken between the two latent estimates. Whenever a
/// dehazed operand leaves `[0, 1]` on any channel — or the warp itself fails —
/// that source contributes the penalty `gamma` instead.
///
/// With `beta = 0` dehazing is the identity and the volume equals the
/// ordinary one entry for entry.
pub fn build_dehazing(
    reference: &ImageBuffer,
    sources: &[SourceView],
    hyps: &HypothesisSet,
    params: &ScatteringParams,
    gamma: f64,
) -> Result<CostVolume> {
    if params.beta == 0.0 {
        // Exact degeneration: unit transmission everywhere, gates never fire
        // for unit-range inputs.
        return build_ordinary(reference, sources, hyps, gamma);
    }
    validate_inputs(reference, sources, gamma)?;
    let (w, h) = (reference.width(), reference.height());
    let wh = w * h;
    let precomps: Vec<WarpPrecomp> = sources.iter().map(|s| WarpPrecomp::new(&s.camera)).collect();
    let rays = precompute_rays(w, h, &precomps);
    let inv_s = 1.0 / sources.len() as f64;
    let a = params.airlight;
    let beta = params.beta;

    let mut costs = vec![0.0; wh * hyps.len()];
    costs
        .par_chunks_mut(wh)
        .enumerate()
        .for_each(|(i, tile)| {
            let z = hyps.depth(i);
            // 1 / e^{-beta z} for the plane, shared by every pixel.
            let ref_gain = (beta * z).exp();
            for v in 0..h {
                for u in 0..w {
                    let pix = v * w + u;
                    let ref_px = reference.get(u, v);
                    let dehazed_ref = [
                        (ref_px[0] - a) * ref_gain + a,
                        (ref_px[1] - a) * ref_gain + a,
                        (ref_px[2] - a) * ref_gain + a,
                    ];
                    if !in_unit_range(dehazed_ref) {
                        // The reference gate is source-independent: every
                        // source contributes gamma, so the mean is gamma.
                        tile[pix] = gamma;
                        continue;
                    }
                    let mut sum = 0.0;
                    for (s, view) in sources.iter().enumerate() {
                        sum += dehazed_source_cost(
                            &precomps[s],
                            &rays[s][pix],
                            z,
                            &view.image,
                            dehazed_ref,
                            a,
                            beta,
                            gamma,
                        );
                    }
                    tile[pix] = sum * inv_s;
                }
            }
        });
    CostVolume::from_parts(w, h, hyps.len(), gamma, costs)
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn dehazed_source_cost(
    pre: &WarpPrecomp,
    ray: &nalgebra::Vector3<f64>,
    z: f64,
    source: &ImageBuffer,
    dehazed_ref: [f64; 3],
    a: f64,
    beta: f64,
    gamma: f64,
) -> f64 {
    let warped = match pre.warp_ray(ray, z) {
        Ok(p) => p,
        Err(_) => return gamma,
    };
    let sample = match bilinear_sample(source, (warped.u, warped.v)) {
        Ok(s) => s,
        Err(_) => return gamma,
    };
    let zeta = match pre.plane_depth(z, (warped.u, warped.v)) {
        Ok(zeta) => zeta,
        Err(_) => return gamma,
    };
    let src_gain = (beta * zeta).exp();
    let dehazed_src = [
        (sample[0] - a) * src_gain + a,
        (sample[1] - a) * src_gain + a,
        (sample[2] - a) * src_gain + a,
    ];
    if !in_unit_range(dehazed_src) {
        return gamma;
    }
    l1_cost(dehazed_ref, dehazed_src).min(gamma)
}

fn precompute_rays(w: usize, h: usize, precomps: &[WarpPrecomp]) -> Vec<Vec<nalgebra::Vector3<f64>>> {
    precomps
        .iter()
        .map(|pre| {
            let mut rays = Vec::with_capacity(w * h);
            for v in 0..h {
                for u in 0..w {
                    rays.push(pre.ray(u as f64, v as f64));
                }
            }
            rays
        })
        .collect()
}
