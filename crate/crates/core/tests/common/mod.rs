//! Shared helpers for integration tests: an independent straight-line
//! re-implementation of both cost-volume formulas (kept deliberately naive
//! and separate from the library's optimized path) and standard synthetic
//! scenes.
#![allow(dead_code)] // each test binary uses its own subset

use nalgebra::{Matrix3, Vector3};

use hazesweep_core::costvolume::SourceView;
use hazesweep_core::geometry::{CameraModel, HypothesisSet};
use hazesweep_core::image::ImageBuffer;
use hazesweep_core::scattering::ScatteringParams;

/// Warp a reference pixel by the projection formula evaluated literally:
/// `z K (R (K^-1 p)) + K t`, returning the source pixel and its depth there.
fn oracle_warp(cam: &CameraModel, u: f64, v: f64, z: f64) -> Option<(f64, f64, f64)> {
    let k_inv = cam.intrinsics.try_inverse().unwrap();
    let p = Vector3::new(u, v, 1.0);
    let homog = z * (cam.intrinsics * (cam.rotation * (k_inv * p))) + cam.intrinsics * cam.translation;
    let depth = homog.z / cam.intrinsics[(2, 2)];
    if depth <= 0.0 {
        return None;
    }
    Some((homog.x / homog.z, homog.y / homog.z, depth))
}

/// Naive bilinear lookup over the domain `[0, W-1] x [0, H-1]`.
fn oracle_bilinear(img: &ImageBuffer, u: f64, v: f64) -> Option<[f64; 3]> {
    let (w, h) = (img.width(), img.height());
    if !(u >= 0.0 && v >= 0.0 && u <= (w - 1) as f64 && v <= (h - 1) as f64) {
        return None;
    }
    let u0 = (u.floor() as usize).min(w.saturating_sub(2));
    let v0 = (v.floor() as usize).min(h.saturating_sub(2));
    let (u1, v1) = ((u0 + 1).min(w - 1), (v0 + 1).min(h - 1));
    let (fu, fv) = (u - u0 as f64, v - v0 as f64);
    let mut out = [0.0; 3];
    for (c, slot) in out.iter_mut().enumerate() {
        *slot = img.get(u0, v0)[c] * (1.0 - fu) * (1.0 - fv)
            + img.get(u1, v0)[c] * fu * (1.0 - fv)
            + img.get(u0, v1)[c] * (1.0 - fu) * fv
            + img.get(u1, v1)[c] * fu * fv;
    }
    Some(out)
}

/// Depth of the swept plane from the source view, derived from scratch: walk
/// the source pixel's ray `X_s = tau K^-1 q`, express it in the reference
/// frame, and solve the linear equation `X_ref.z = z_i` for `tau`.
fn oracle_plane_depth(cam: &CameraModel, su: f64, sv: f64, z_i: f64) -> Option<f64> {
    let k_inv = cam.intrinsics.try_inverse().unwrap();
    let d = k_inv * Vector3::new(su, sv, 1.0);
    let rot_t = cam.rotation.transpose();
    // X_ref(tau) = R^T (tau d - t); its z-component is affine in tau.
    let at_zero = (rot_t * (-cam.translation)).z;
    let slope = (rot_t * d).z;
    if slope.abs() < 1e-12 {
        return None;
    }
    let tau = (z_i - at_zero) / slope;
    let zeta = tau * d.z;
    if zeta <= 0.0 {
        return None;
    }
    Some(zeta)
}

fn oracle_dehaze(value: [f64; 3], z: f64, params: &ScatteringParams) -> [f64; 3] {
    let t = (-params.beta * z).exp();
    [
        (value[0] - params.airlight) / t + params.airlight,
        (value[1] - params.airlight) / t + params.airlight,
        (value[2] - params.airlight) / t + params.airlight,
    ]
}

fn unit_range(v: [f64; 3]) -> bool {
    v.iter().all(|&c| (0.0..=1.0).contains(&c))
}

fn l1(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|c| (a[c] - b[c]).abs()).sum()
}

/// One entry of the ordinary volume, recomputed from first principles.
pub fn oracle_ordinary_entry(
    reference: &ImageBuffer,
    sources: &[SourceView],
    z: f64,
    u: usize,
    v: usize,
    gamma: f64,
) -> f64 {
    let mut sum = 0.0;
    for view in sources {
        let contribution = oracle_warp(&view.camera, u as f64, v as f64, z)
            .and_then(|(su, sv, _)| oracle_bilinear(&view.image, su, sv))
            .map_or(gamma, |sample| l1(reference.get(u, v), sample));
        sum += contribution;
    }
    sum / sources.len() as f64
}

/// One entry of the dehazing volume, recomputed from first principles.
pub fn oracle_dehazing_entry(
    reference: &ImageBuffer,
    sources: &[SourceView],
    z: f64,
    u: usize,
    v: usize,
    params: &ScatteringParams,
    gamma: f64,
) -> f64 {
    let dehazed_ref = oracle_dehaze(reference.get(u, v), z, params);
    let mut sum = 0.0;
    for view in sources {
        let contribution = (|| {
            if !unit_range(dehazed_ref) {
                return gamma;
            }
            let Some((su, sv, _)) = oracle_warp(&view.camera, u as f64, v as f64, z) else {
                return gamma;
            };
            let Some(sample) = oracle_bilinear(&view.image, su, sv) else {
                return gamma;
            };
            let Some(zeta) = oracle_plane_depth(&view.camera, su, sv, z) else {
                return gamma;
            };
            let dehazed_src = oracle_dehaze(sample, zeta, params);
            if !unit_range(dehazed_src) {
                return gamma;
            }
            l1(dehazed_ref, dehazed_src)
        })();
        sum += contribution;
    }
    sum / sources.len() as f64
}

/// Full plane-major oracle volume for the ordinary formula.
pub fn oracle_ordinary_volume(
    reference: &ImageBuffer,
    sources: &[SourceView],
    hyps: &HypothesisSet,
    gamma: f64,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(reference.width() * reference.height() * hyps.len());
    for i in 0..hyps.len() {
        for v in 0..reference.height() {
            for u in 0..reference.width() {
                out.push(oracle_ordinary_entry(reference, sources, hyps.depth(i), u, v, gamma));
            }
        }
    }
    out
}

/// Full plane-major oracle volume for the dehazing formula.
pub fn oracle_dehazing_volume(
    reference: &ImageBuffer,
    sources: &[SourceView],
    hyps: &HypothesisSet,
    params: &ScatteringParams,
    gamma: f64,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(reference.width() * reference.height() * hyps.len());
    for i in 0..hyps.len() {
        for v in 0..reference.height() {
            for u in 0..reference.width() {
                out.push(oracle_dehazing_entry(
                    reference,
                    sources,
                    hyps.depth(i),
                    u,
                    v,
                    params,
                    gamma,
                ));
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Scene helpers
// ---------------------------------------------------------------------------

/// Rectified-style stereo camera: shared intrinsics, identity rotation, and
/// a lateral baseline (the pose translation is `+baseline` along x).
pub fn stereo_camera(width: usize, height: usize, focal: f64, baseline: f64) -> CameraModel {
    CameraModel::new(
        CameraModel::simple_intrinsics(focal, width as f64 / 2.0 - 0.5, height as f64 / 2.0 - 0.5),
        Matrix3::identity(),
        Vector3::new(baseline, 0.0, 0.0),
        width,
        height,
    )
    .unwrap()
}

/// Camera with a small rotation and a translation including a z-component.
pub fn general_camera(width: usize, height: usize, focal: f64) -> CameraModel {
    CameraModel::new(
        CameraModel::simple_intrinsics(focal, width as f64 / 2.0 - 0.5, height as f64 / 2.0 - 0.5),
        *nalgebra::Rotation3::from_euler_angles(0.02, -0.03, 0.01).matrix(),
        Vector3::new(0.25, -0.04, 0.08),
        width,
        height,
    )
    .unwrap()
}

/// Pseudo-random unit-range image, deterministic in the seed.
pub fn random_image(width: usize, height: usize, seed: u64) -> ImageBuffer {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    ImageBuffer::from_fn(width, height, |_, _| {
        [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()]
    })
}
