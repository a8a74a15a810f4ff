//! Depth-map error metrics: mean relative L1, mean inverse-depth L1, the
//! scale-invariant log error, and the percentage of pixels within 10%
//! relative error. All metrics evaluate only pixels valid in both maps.

use crate::error::{Error, Result};
use crate::image::DepthMap;

/// The four metrics over one prediction/ground-truth pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub l1_rel: f64,
    pub l1_inv: f64,
    pub sc_inv: f64,
    /// Percentage (0-100) of pixels with relative L1 error within 10%,
    /// boundary inclusive.
    pub correct_pct: f64,
    /// Number of pixels valid in both maps.
    pub n_pixels: usize,
}

fn overlap<'a>(pred: &'a DepthMap, gt: &'a DepthMap) -> Result<impl Iterator<Item = (f64, f64)> + 'a> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(Error::invalid("prediction and ground truth dimensions differ"));
    }
    Ok(pred
        .depths()
        .iter()
        .zip(pred.validity())
        .zip(gt.depths().iter().zip(gt.validity()))
        .filter(|((_, &pv), (_, &gv))| pv && gv)
        .map(|((&p, _), (&g, _))| (p, g)))
}

/// Mean of `|z_gt - z_pred| / z_gt` over jointly valid pixels.
pub fn l1_rel(pred: &DepthMap, gt: &DepthMap) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (p, g) in overlap(pred, gt)? {
        sum += (g - p).abs() / g;
        n += 1;
    }
    if n == 0 {
        return Err(Error::NoPixels);
    }
    Ok(sum / n as f64)
}

/// Mean of `|1/z_gt - 1/z_pred|` over jointly valid pixels.
pub fn l1_inv(pred: &DepthMap, gt: &DepthMap) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (p, g) in overlap(pred, gt)? {
        sum += (1.0 / g - 1.0 / p).abs();
        n += 1;
    }
    if n == 0 {
        return Err(Error::NoPixels);
    }
    Ok(sum / n as f64)
}

/// Scale-invariant log error: with `d = ln z_pred - ln z_gt`,
/// `sqrt(mean(d^2) - mean(d)^2)`. Non-positive depths are excluded.
pub fn sc_inv(pred: &DepthMap, gt: &DepthMap) -> Result<f64> {
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut n = 0usize;
    for (p, g) in overlap(pred, gt)? {
        if p <= 0.0 || g <= 0.0 {
            continue;
        }
        let d = p.ln() - g.ln();
        sum += d;
        sum_sq += d * d;
        n += 1;
    }
    if n == 0 {
        return Err(Error::NoPixels);
    }
    let nf = n as f64;
    Ok((sum_sq / nf - (sum / nf).powi(2)).max(0.0).sqrt())
}

/// Percentage of jointly valid pixels whose relative L1 error is within 10%,
/// boundary inclusive.
pub fn correct_pct(pred: &DepthMap, gt: &DepthMap) -> Result<f64> {
    let mut hits = 0usize;
    let mut n = 0usize;
    for (p, g) in overlap(pred, gt)? {
        if (g - p).abs() / g <= 0.10 {
            hits += 1;
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::NoPixels);
    }
    Ok(100.0 * hits as f64 / n as f64)
}

impl MetricsReport {
    /// Evaluates all four metrics over one pair.
    pub fn compute(pred: &DepthMap, gt: &DepthMap) -> Result<Self> {
        let n_pixels = overlap(pred, gt)?.count();
        Ok(Self {
            l1_rel: l1_rel(pred, gt)?,
            l1_inv: l1_inv(pred, gt)?,
            sc_inv: sc_inv(pred, gt)?,
            correct_pct: correct_pct(pred, gt)?,
            n_pixels,
        })
    }

    /// Flat key-value block, one metric per line.
    pub fn to_kv_block(&self) -> String {
        format!(
            "l1_rel: {:.6}\nl1_inv: {:.6}\nsc_inv: {:.6}\ncorrect_pct: {:.2}\nn_pixels: {}\n",
            self.l1_rel, self.l1_inv, self.sc_inv, self.correct_pct, self.n_pixels
        )
    }

    /// Comma-separated row `l1_rel,l1_inv,sc_inv,correct_pct,n_pixels`.
    pub fn to_csv_row(&self) -> String {
        format!(
            "{:.6},{:.6},{:.6},{:.2},{}",
            self.l1_rel, self.l1_inv, self.sc_inv, self.correct_pct, self.n_pixels
        )
    }
}
