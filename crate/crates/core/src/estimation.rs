//! Scattering-parameter estimation: airlight initialization from bright
//! pixels, the neighborhood-min depth residual, the sparse-depth objective,
//! and the two-stage grid search returning `(A*, beta*, z*)`.
//!
//! The depth pipeline is treated as a function of `(A, beta)`; candidates are
//! scored purely geometrically against sparse depth observations, never
//! against pixel intensities.

use crate::costvolume::SourceView;
use crate::error::{Error, Result};
use crate::extraction::{estimate_depth, DepthEstimate};
use crate::geometry::HypothesisSet;
use crate::image::{DepthMap, ImageBuffer};
use crate::scattering::ScatteringParams;

/// One sparse depth observation at an integer pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparseObservation {
    pub u: usize,
    pub v: usize,
    pub depth: f64,
}

/// Scattered metric depth observations with at most one per pixel,
/// typically a projected structure-from-motion point cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDepth {
    width: usize,
    height: usize,
    observations: Vec<SparseObservation>,
}

impl SparseDepth {
    pub fn new(width: usize, height: usize, observations: Vec<SparseObservation>) -> Result<Self> {
        let mut seen = vec![false; width * height];
        for obs in &observations {
            if obs.u >= width || obs.v >= height {
                return Err(Error::invalid(format!(
                    "observation ({}, {}) outside {}x{}",
                    obs.u, obs.v, width, height
                )));
            }
            if !(obs.depth.is_finite() && obs.depth > 0.0) {
                return Err(Error::invalid(format!(
                    "observation depth {} must be finite and positive",
                    obs.depth
                )));
            }
            let idx = obs.v * width + obs.u;
            if seen[idx] {
                return Err(Error::invalid(format!(
                    "duplicate observation at ({}, {})",
                    obs.u, obs.v
                )));
            }
            seen[idx] = true;
        }
        Ok(Self {
            width,
            height,
            observations,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn observations(&self) -> &[SparseObservation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

/// Grid-search configuration. Defaults follow the reference setup: 10
/// first-stage steps, half-widths 0.05, a 4x4 refinement, and 5-pixel
/// residual probes.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub beta_min: f64,
    pub beta_max: f64,
    pub beta_steps: usize,
    pub delta_airlight: f64,
    pub delta_beta: f64,
    pub refine_steps_airlight: usize,
    pub refine_steps_beta: usize,
    /// Probe offset delta (pixels) of the neighborhood-min residual.
    pub probe_offset_px: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            beta_min: 0.4,
            beta_max: 0.8,
            beta_steps: 10,
            delta_airlight: 0.05,
            delta_beta: 0.05,
            refine_steps_airlight: 4,
            refine_steps_beta: 4,
            probe_offset_px: 5,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta_min >= 0.0 && self.beta_min < self.beta_max && self.beta_max.is_finite()) {
            return Err(Error::invalid("beta range must satisfy 0 <= min < max"));
        }
        if self.beta_steps < 1 || self.refine_steps_airlight < 1 || self.refine_steps_beta < 1 {
            return Err(Error::invalid("step counts must be at least 1"));
        }
        if self.delta_airlight < 0.0 || self.delta_beta < 0.0 {
            return Err(Error::invalid("search half-widths must be non-negative"));
        }
        Ok(())
    }

    /// Closed-form number of depth-pipeline evaluations the search performs.
    pub fn evaluation_budget(&self) -> usize {
        self.beta_steps + self.refine_steps_airlight * self.refine_steps_beta
    }
}

/// Result of the two-stage search.
#[derive(Debug, Clone)]
pub struct EstimationResult {
    pub airlight: f64,
    pub beta: f64,
    pub depth: DepthEstimate,
    pub objective_value: f64,
    /// Number of full depth-pipeline runs performed.
    pub evaluations: usize,
}

/// Fraction of pixels (ranked by per-pixel channel minimum) averaged for the
/// airlight initial estimate.
const AIRLIGHT_QUANTILE: f64 = 0.001;

/// Initial airlight estimate: the mean over channels of the brightest 0.1%
/// of pixels, ranked by their per-pixel channel minimum, clamped to `[0, 1]`.
///
/// Ranking by the channel minimum follows the usual haze-line convention and
/// damps saturated non-airlight colors; the second search stage refines
/// around this value anyway.
pub fn estimate_airlight(hazy: &ImageBuffer) -> f64 {
    let n = hazy.pixels().len();
    assert!(n > 0, "airlight estimate needs a non-empty image");
    let take = ((n as f64 * AIRLIGHT_QUANTILE).ceil() as usize).clamp(1, n);
    let mut ranked: Vec<usize> = (0..n).collect();
    let key = |i: usize| {
        let px = hazy.pixels()[i];
        px[0].min(px[1]).min(px[2])
    };
    ranked.sort_by(|&a, &b| key(b).partial_cmp(&key(a)).unwrap().then(a.cmp(&b)));
    let mut sum = 0.0;
    for &i in &ranked[..take] {
        let px = hazy.pixels()[i];
        sum += px[0] + px[1] + px[2];
    }
    (sum / (3.0 * take as f64)).clamp(0.0, 1.0)
}

/// Neighborhood-min residual between one sparse observation and a dense map:
/// the minimum of `|z_sfm - z_dense|` over the center pixel and its four
/// axis-aligned probes at distance `delta_px`.
///
/// Probes outside the image or invalid in `dense` are skipped; `None` means
/// every probe was skipped and the observation contributes nothing.
pub fn robust_residual(
    sparse_z: f64,
    pixel: (usize, usize),
    dense: &DepthMap,
    delta_px: usize,
) -> Option<f64> {
    let (u, v) = pixel;
    if u >= dense.width() || v >= dense.height() {
        return None;
    }
    let d = delta_px as isize;
    let candidates = [
        (u as isize, v as isize),
        (u as isize + d, v as isize),
        (u as isize - d, v as isize),
        (u as isize, v as isize + d),
        (u as isize, v as isize - d),
    ];
    let mut best: Option<f64> = None;
    for (pu, pv) in candidates {
        if pu < 0 || pv < 0 || pu as usize >= dense.width() || pv as usize >= dense.height() {
            continue;
        }
        if let Some(z) = dense.get_valid(pu as usize, pv as usize) {
            let r = (sparse_z - z).abs();
            best = Some(best.map_or(r, |b: f64| b.min(r)));
        }
    }
    best
}

/// Sum of neighborhood-min residuals over all observations.
///
/// Returns `+inf` when no observation contributes (all probes invalid), and
/// an error for an empty sparse map. The sum is deliberately unnormalized;
/// the argmin is invariant to positive scaling.
pub fn objective(sparse: &SparseDepth, dense: &DepthMap, delta_px: usize) -> Result<f64> {
    if sparse.is_empty() {
        return Err(Error::NoObservations);
    }
    if sparse.width() != dense.width() || sparse.height() != dense.height() {
        return Err(Error::invalid("sparse and dense dimensions differ"));
    }
    let mut sum = 0.0;
    let mut contributed = false;
    for obs in sparse.observations() {
        if let Some(r) = robust_residual(obs.depth, (obs.u, obs.v), dense, delta_px) {
            sum += r;
            contributed = true;
        }
    }
    Ok(if contributed { sum } else { f64::INFINITY })
}

/// Inclusive uniform grid of `steps` values over `[lo, hi]`.
fn uniform_grid(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    if steps == 1 {
        return vec![0.5 * (lo + hi)];
    }
    let last = (steps - 1) as f64;
    (0..steps)
        .map(|i| {
            let t = i as f64 / last;
            (1.0 - t) * lo + t * hi
        })
        .collect()
}

/// Two-stage grid search for the scattering parameters.
///
/// Stage one sweeps `beta` over `[beta_min, beta_max]` (endpoints included)
/// with the airlight fixed to its bright-pixel estimate; stage two refines on
/// a `refine_steps_airlight x refine_steps_beta` grid centered on the stage-one
/// winner, with the airlight range clipped to `[0, 1]` and the beta range to
/// non-negative values. Ties break toward smaller beta, then smaller airlight.
///
/// Every candidate runs the full depth pipeline once; the returned depth is
/// the winning candidate's (the pipeline is deterministic, so recomputing it
/// would yield the same map).
pub fn grid_search(
    reference: &ImageBuffer,
    sources: &[SourceView],
    hyps: &HypothesisSet,
    sparse: &SparseDepth,
    cfg: &SearchConfig,
    gamma: f64,
    radius: usize,
) -> Result<EstimationResult> {
    cfg.validate()?;
    if sparse.is_empty() {
        return Err(Error::NoObservations);
    }
    let airlight_init = estimate_airlight(reference);
    let mut evaluations = 0usize;

    let mut evaluate = |airlight: f64, beta: f64| -> Result<(f64, DepthEstimate)> {
        let params = ScatteringParams::new(airlight, beta)?;
        let estimate = estimate_depth(reference, sources, hyps, Some(&params), gamma, radius)?;
        let score = objective(sparse, &estimate.depth, cfg.probe_offset_px)?;
        evaluations += 1;
        Ok((score, estimate))
    };

    // Stage 1: coarse beta sweep at the initial airlight.
    let mut stage1_best: Option<(f64, f64, DepthEstimate)> = None;
    for beta in uniform_grid(cfg.beta_min, cfg.beta_max, cfg.beta_steps) {
        let (score, estimate) = evaluate(airlight_init, beta)?;
        if stage1_best.as_ref().is_none_or(|(s, _, _)| score < *s) {
            stage1_best = Some((score, beta, estimate));
        }
    }
    let (mut best_score, beta_center, mut best_depth) = stage1_best.expect("beta_steps >= 1");
    let mut best_airlight = airlight_init;
    let mut best_beta = beta_center;

    // Stage 2: joint refinement around (A0, beta0) on clipped ranges.
    let a_lo = (airlight_init - cfg.delta_airlight).max(0.0);
    let a_hi = (airlight_init + cfg.delta_airlight).min(1.0);
    let b_lo = (beta_center - cfg.delta_beta).max(0.0);
    let b_hi = beta_center + cfg.delta_beta;
    for beta in uniform_grid(b_lo, b_hi, cfg.refine_steps_beta) {
        for airlight in uniform_grid(a_lo, a_hi, cfg.refine_steps_airlight) {
            let (score, estimate) = evaluate(airlight, beta)?;
            if score < best_score {
                best_score = score;
                best_airlight = airlight;
                best_beta = beta;
                best_depth = estimate;
            }
        }
    }

    debug_assert_eq!(evaluations, cfg.evaluation_budget());
    Ok(EstimationResult {
        airlight: best_airlight,
        beta: best_beta,
        depth: best_depth,
        objective_value: best_score,
        evaluations,
    })
}
