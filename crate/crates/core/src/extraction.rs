//! Dense depth extraction from a cost volume: per-plane box aggregation,
//! winner-take-all, and sub-hypothesis parabola refinement in disparity.

use rayon::prelude::*;

use crate::costvolume::{build_dehazing, build_ordinary, CostVolume, SourceView};
use crate::error::{Error, Result};
use crate::geometry::HypothesisSet;
use crate::image::{DepthMap, ImageBuffer};
use crate::scattering::ScatteringParams;

/// Dense depth with per-pixel extraction diagnostics.
#[derive(Debug, Clone)]
pub struct DepthEstimate {
    pub depth: DepthMap,
    /// Second-best minus best aggregated cost; zero means ambiguous.
    pub confidence: Vec<f64>,
    /// Winning hypothesis index per pixel.
    pub argmin_index: Vec<usize>,
}

/// Box-filters every plane with a `(2 radius + 1)²` window; borders average
/// over the in-bounds intersection. Radius 0 is the identity.
pub fn aggregate(vol: &CostVolume, radius: usize) -> CostVolume {
    if radius == 0 {
        return vol.clone();
    }
    let (w, h) = (vol.width(), vol.height());
    let wh = w * h;
    let r = radius as isize;
    let mut out = vec![0.0; wh * vol.n_hypotheses()];
    out.par_chunks_mut(wh).enumerate().for_each(|(i, tile)| {
        let plane = vol.plane(i);
        // Summed-area table with a zero border row/column.
        let mut sat = vec![0.0; (w + 1) * (h + 1)];
        for v in 0..h {
            let mut row = 0.0;
            for u in 0..w {
                row += plane[v * w + u];
                sat[(v + 1) * (w + 1) + (u + 1)] = sat[v * (w + 1) + (u + 1)] + row;
            }
        }
        for v in 0..h {
            let v0 = (v as isize - r).max(0) as usize;
            let v1 = ((v as isize + r) as usize).min(h - 1);
            for u in 0..w {
                let u0 = (u as isize - r).max(0) as usize;
                let u1 = ((u as isize + r) as usize).min(w - 1);
                let sum = sat[(v1 + 1) * (w + 1) + (u1 + 1)]
                    - sat[v0 * (w + 1) + (u1 + 1)]
                    - sat[(v1 + 1) * (w + 1) + u0]
                    + sat[v0 * (w + 1) + u0];
                let count = ((v1 - v0 + 1) * (u1 - u0 + 1)) as f64;
                tile[v * w + u] = sum / count;
            }
        }
    });
    CostVolume::from_parts(w, h, vol.n_hypotheses(), vol.gamma(), out)
        .expect("dimensions preserved")
}

/// Per-pixel argmin over hypotheses; ties break toward the smaller index.
pub fn winner_take_all(vol: &CostVolume, hyps: &HypothesisSet) -> Result<DepthEstimate> {
    if hyps.len() != vol.n_hypotheses() {
        return Err(Error::invalid("hypothesis count does not match the volume"));
    }
    let (w, h) = (vol.width(), vol.height());
    let wh = w * h;
    let mut best = vec![f64::INFINITY; wh];
    let mut second = vec![f64::INFINITY; wh];
    let mut argmin = vec![0usize; wh];
    for i in 0..vol.n_hypotheses() {
        let plane = vol.plane(i);
        for pix in 0..wh {
            let c = plane[pix];
            if c < best[pix] {
                second[pix] = best[pix];
                best[pix] = c;
                argmin[pix] = i;
            } else if c < second[pix] {
                second[pix] = c;
            }
        }
    }
    let mut depth = DepthMap::new_invalid(w, h);
    for v in 0..h {
        for u in 0..w {
            depth.set(u, v, hyps.depth(argmin[v * w + u]));
        }
    }
    let confidence = best
        .iter()
        .zip(&second)
        .map(|(&b, &s)| if s.is_finite() { s - b } else { 0.0 })
        .collect();
    Ok(DepthEstimate {
        depth,
        confidence,
        argmin_index: argmin,
    })
}

/// Parabola refinement around the argmin, fitted in disparity coordinates
/// where hypotheses are uniform.
///
/// `neighbors` holds the costs at indices `index - 1`, `index`, `index + 1`.
/// Boundary indices, degenerate (flat or concave) fits, and non-finite costs
/// return the unrefined hypothesis depth; otherwise the vertex disparity is
/// clamped to the two neighboring samples.
pub fn subpixel_refine(neighbors: [f64; 3], hyps: &HypothesisSet, index: usize) -> f64 {
    let unrefined = hyps.depth(index);
    if index == 0 || index + 1 >= hyps.len() {
        return unrefined;
    }
    let [c_prev, c_mid, c_next] = neighbors;
    if !(c_prev.is_finite() && c_mid.is_finite() && c_next.is_finite()) {
        return unrefined;
    }
    let curvature = c_prev - 2.0 * c_mid + c_next;
    if curvature <= 0.0 {
        return unrefined;
    }
    let step = hyps.disparity_step();
    let offset = 0.5 * (c_prev - c_next) / curvature * step;
    let refined = (hyps.disparity(index) + offset)
        .clamp(hyps.disparity(index - 1), hyps.disparity(index + 1));
    1.0 / refined
}

/// Full classical pipeline: build the (dehazing or ordinary) volume,
/// aggregate, winner-take-all, and refine.
///
/// With `params` present the dehazing volume is used; otherwise the ordinary
/// one. The composition is deterministic for fixed inputs under any worker
/// count.
pub fn estimate_depth(
    reference: &ImageBuffer,
    sources: &[SourceView],
    hyps: &HypothesisSet,
    params: Option<&ScatteringParams>,
    gamma: f64,
    radius: usize,
) -> Result<DepthEstimate> {
    let vol = match params {
        Some(p) => build_dehazing(reference, sources, hyps, p, gamma)?,
        None => build_ordinary(reference, sources, hyps, gamma)?,
    };
    let agg = aggregate(&vol, radius);
    let mut estimate = winner_take_all(&agg, hyps)?;
    let (w, h) = (agg.width(), agg.height());
    let n = hyps.len();
    for v in 0..h {
        for u in 0..w {
            let i = estimate.argmin_index[v * w + u];
            let neighbors = [
                agg.at(u, v, i.saturating_sub(1)),
                agg.at(u, v, i),
                agg.at(u, v, (i + 1).min(n - 1)),
            ];
            estimate.depth.set(u, v, subpixel_refine(neighbors, hyps, i));
        }
    }
    Ok(estimate)
}
