//! Procedural multi-view scene synthesis: ray-cast renderings with exact
//! ground-truth depth, hazy-pair generation through the scattering model,
//! simulated sparse depth, and the depth/beta scale augmentation.
//!
//! Textures are a pure function of the 3D surface point, so two views of the
//! same scene are photo-consistent by construction and every oracle test can
//! attribute residuals to interpolation alone.

use nalgebra::Vector3;
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::estimation::{SparseDepth, SparseObservation};
use crate::geometry::{project_to_source, CameraModel};
use crate::image::{DepthMap, ImageBuffer};
use crate::scattering::{apply_haze, ScatteringParams};

/// Airlight sampling range used when generating data.
pub const DEFAULT_AIRLIGHT_RANGE: (f64, f64) = (0.7, 1.0);

/// Multi-octave value-noise parameters for surface textures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TextureParams {
    pub octaves: u32,
    /// Lattice frequency of the first octave, in cycles per scene unit.
    pub base_frequency: f64,
}

impl Default for TextureParams {
    fn default() -> Self {
        Self {
            octaves: 4,
            base_frequency: 3.0,
        }
    }
}

/// A textured surface placed in the reference-camera frame.
#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    /// Fronto-parallel rectangle at constant depth `z`.
    Slab {
        z: f64,
        x_range: (f64, f64),
        y_range: (f64, f64),
    },
    /// Plane through `anchor` with the given (non-degenerate) normal,
    /// clipped to the world x/y ranges.
    Slanted {
        anchor: [f64; 3],
        normal: [f64; 3],
        x_range: (f64, f64),
        y_range: (f64, f64),
    },
    Sphere { center: [f64; 3], radius: f64 },
}

/// Scene description: layered primitives over a full-frame background plane.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub primitives: Vec<Primitive>,
    /// Depth of the fronto-parallel background plane covering every ray.
    pub background_depth: f64,
    pub texture: TextureParams,
}

/// One generated benchmark sample: a hazy stereo pair with full ground truth.
#[derive(Debug, Clone)]
pub struct DatasetSample {
    pub reference: ImageBuffer,
    pub source: ImageBuffer,
    pub clear_reference: ImageBuffer,
    pub gt_depth: DepthMap,
    pub cams: CameraModel,
    pub params: ScatteringParams,
    pub sparse: SparseDepth,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn lattice_value(seed: u64, x: i64, y: i64, z: i64) -> f64 {
    let mut h = splitmix64(seed ^ (x as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    h = splitmix64(h ^ (y as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F));
    h = splitmix64(h ^ (z as u64).wrapping_mul(0x1656_67B1_9E37_79F9));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

fn value_noise(seed: u64, p: Vector3<f64>) -> f64 {
    let (xf, yf, zf) = (p.x.floor(), p.y.floor(), p.z.floor());
    let (x0, y0, z0) = (xf as i64, yf as i64, zf as i64);
    let (tx, ty, tz) = (smooth(p.x - xf), smooth(p.y - yf), smooth(p.z - zf));
    let mut acc = 0.0;
    for (dz, wz) in [(0, 1.0 - tz), (1, tz)] {
        for (dy, wy) in [(0, 1.0 - ty), (1, ty)] {
            for (dx, wx) in [(0, 1.0 - tx), (1, tx)] {
                acc += wx * wy * wz * lattice_value(seed, x0 + dx, y0 + dy, z0 + dz);
            }
        }
    }
    acc
}

/// Per-channel fractal value noise at a 3D surface point, mapped into
/// `[0.05, 0.95]` so dehazing at the true parameters keeps a safety margin
/// inside the unit range.
fn texture_color(seed: u64, params: &TextureParams, point: Vector3<f64>) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (c, slot) in out.iter_mut().enumerate() {
        let channel_seed = splitmix64(seed ^ (0xABCD_EF00 + c as u64));
        let mut freq = params.base_frequency;
        let mut amp = 1.0;
        let mut total = 0.0;
        let mut value = 0.0;
        for octave in 0..params.octaves {
            let octave_seed = splitmix64(channel_seed ^ octave as u64);
            value += amp * value_noise(octave_seed, point * freq);
            total += amp;
            freq *= 2.0;
            amp *= 0.5;
        }
        *slot = 0.05 + 0.9 * (value / total);
    }
    out
}

/// Nearest positive ray parameter where `origin + t * dir` meets the
/// primitive, if any.
fn intersect(primitive: &Primitive, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
    match primitive {
        Primitive::Slab { z, x_range, y_range } => {
            plane_hit(origin, dir, &Vector3::new(0.0, 0.0, *z), &Vector3::z(), Some((*x_range, *y_range)))
        }
        Primitive::Slanted { anchor, normal, x_range, y_range } => plane_hit(
            origin,
            dir,
            &Vector3::from_column_slice(anchor),
            &Vector3::from_column_slice(normal),
            Some((*x_range, *y_range)),
        ),
        Primitive::Sphere { center, radius } => {
            let c = Vector3::from_column_slice(center);
            let oc = origin - c;
            let a = dir.dot(dir);
            let b = 2.0 * dir.dot(&oc);
            let disc = b * b - 4.0 * a * (oc.dot(&oc) - radius * radius);
            if disc < 0.0 {
                return None;
            }
            let sq = disc.sqrt();
            let t0 = (-b - sq) / (2.0 * a);
            let t1 = (-b + sq) / (2.0 * a);
            [t0, t1].into_iter().find(|&t| t > 1e-9)
        }
    }
}

fn plane_hit(
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    anchor: &Vector3<f64>,
    normal: &Vector3<f64>,
    clip: Option<((f64, f64), (f64, f64))>,
) -> Option<f64> {
    let denom = normal.dot(dir);
    if denom.abs() < 1e-12 {
        return None;
    }
    let t = normal.dot(&(anchor - origin)) / denom;
    if t <= 1e-9 {
        return None;
    }
    if let Some((xr, yr)) = clip {
        let hit = origin + t * dir;
        if hit.x < xr.0 || hit.x > xr.1 || hit.y < yr.0 || hit.y > yr.1 {
            return None;
        }
    }
    Some(t)
}

/// Ray-casts one view of the scene, returning its image and exact per-pixel
/// depth (z-coordinate in the view's own frame).
///
/// The camera's pose maps scene coordinates into the view frame, so the
/// reference view renders through an identity-pose camera. Deterministic in
/// the seed; both views of one scene are photo-consistent because the
/// texture depends only on the 3D point.
pub fn render(spec: &SceneSpec, cam: &CameraModel, seed: u64) -> Result<(ImageBuffer, DepthMap)> {
    if spec.background_depth <= 0.0 {
        return Err(Error::InvalidScene("background depth must be positive".into()));
    }
    let k_inv = cam
        .intrinsics
        .try_inverse()
        .expect("validated intrinsics are invertible");
    let rot_t = cam.rotation.transpose();
    let origin = -(rot_t * cam.translation);
    let mut image = ImageBuffer::new(cam.width, cam.height);
    let mut depth = DepthMap::new_invalid(cam.width, cam.height);
    let background = Primitive::Slab {
        z: spec.background_depth,
        x_range: (f64::NEG_INFINITY, f64::INFINITY),
        y_range: (f64::NEG_INFINITY, f64::INFINITY),
    };
    for v in 0..cam.height {
        for u in 0..cam.width {
            let d_view = k_inv * Vector3::new(u as f64, v as f64, 1.0);
            let dir = rot_t * d_view;
            let mut nearest: Option<f64> = None;
            for primitive in spec.primitives.iter().chain(std::iter::once(&background)) {
                if let Some(t) = intersect(primitive, &origin, &dir) {
                    if nearest.is_none_or(|n| t < n) {
                        nearest = Some(t);
                    }
                }
            }
            let t = nearest.ok_or_else(|| {
                Error::InvalidScene(format!("ray through pixel ({u}, {v}) hits no surface"))
            })?;
            let hit = origin + t * dir;
            // View-frame depth of the hit point: z of R x + t.
            let z_view = (cam.rotation * hit + cam.translation).z;
            if z_view <= 0.0 {
                return Err(Error::InvalidScene(format!(
                    "surface behind the camera at pixel ({u}, {v})"
                )));
            }
            image.set(u, v, texture_color(seed, &spec.texture, hit));
            depth.set(u, v, z_view);
        }
    }
    Ok((image, depth))
}

/// Beta sampling range that pins the transmission at the median depth to
/// `[0.2, 0.4]`: `(-ln 0.4 / z_med, -ln 0.2 / z_med)`.
pub fn sample_beta_range_from_depth(z_med: f64) -> Result<(f64, f64)> {
    if !(z_med > 0.0 && z_med.is_finite()) {
        return Err(Error::invalid(format!("median depth {z_med} must be positive")));
    }
    Ok((-(0.4f64.ln()) / z_med, -(0.2f64.ln()) / z_med))
}

/// Renders both views, draws scattering parameters, hazes each view with its
/// own ground-truth depth, and samples a uniform sparse subset of the
/// reference depth.
pub fn make_sample(
    spec: &SceneSpec,
    cams: &CameraModel,
    airlight_range: (f64, f64),
    beta_range: (f64, f64),
    sparse_fraction: f64,
    seed: u64,
) -> Result<DatasetSample> {
    if !(sparse_fraction > 0.0 && sparse_fraction <= 1.0) {
        return Err(Error::invalid("sparse fraction must lie in (0, 1]"));
    }
    if airlight_range.0 > airlight_range.1 || beta_range.0 > beta_range.1 {
        return Err(Error::invalid("parameter ranges must be ordered"));
    }
    let ref_cam = CameraModel::identity_pose(cams.intrinsics, cams.width, cams.height)?;
    let (clear_reference, gt_depth) = render(spec, &ref_cam, seed)?;
    let (clear_source, gt_source) = render(spec, cams, seed)?;

    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x5A4D_504C_4531_3130));
    let airlight = if airlight_range.0 == airlight_range.1 {
        airlight_range.0
    } else {
        rng.gen_range(airlight_range.0..=airlight_range.1)
    };
    let beta = if beta_range.0 == beta_range.1 {
        beta_range.0
    } else {
        rng.gen_range(beta_range.0..=beta_range.1)
    };
    let params = ScatteringParams::new(airlight, beta)?;

    let reference = apply_haze(&clear_reference, &gt_depth, &params)?;
    let source = apply_haze(&clear_source, &gt_source, &params)?;

    let total = cams.width * cams.height;
    let count = ((sparse_fraction * total as f64).ceil() as usize).clamp(1, total);
    let observations = sample_indices(&mut rng, total, count)
        .into_iter()
        .map(|idx| {
            let (u, v) = (idx % cams.width, idx / cams.width);
            SparseObservation { u, v, depth: gt_depth.get(u, v) }
        })
        .collect();
    let sparse = SparseDepth::new(cams.width, cams.height, observations)?;

    Ok(DatasetSample {
        reference,
        source,
        clear_reference,
        gt_depth,
        cams: cams.clone(),
        params,
        sparse,
    })
}

/// Depth/beta scale augmentation: depth and camera translation scale by `k`,
/// beta by `1/k`, images stay untouched. Sparse observations scale with the
/// depth they subsample.
pub fn augment_scale(sample: &DatasetSample, k: f64) -> DatasetSample {
    assert!(k > 0.0 && k.is_finite(), "scale factor must be positive");
    let mut out = sample.clone();
    out.gt_depth.scale(k);
    out.cams.translation *= k;
    out.params.beta /= k;
    let observations = sample
        .sparse
        .observations()
        .iter()
        .map(|o| SparseObservation { u: o.u, v: o.v, depth: o.depth * k })
        .collect();
    out.sparse = SparseDepth::new(sample.sparse.width(), sample.sparse.height(), observations)
        .expect("scaling preserves validity");
    out
}

/// Displaces a fraction of sparse observations across a nearby depth edge:
/// the observation keeps its depth value but moves to a pixel at most
/// `delta_px` away whose ground truth differs by more than 30%. Models
/// feature points ambiguously assigned around discontinuities.
pub fn displace_across_edges(
    sparse: &SparseDepth,
    gt: &DepthMap,
    fraction: f64,
    delta_px: usize,
    seed: u64,
) -> SparseDepth {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut occupied = vec![false; sparse.width() * sparse.height()];
    for o in sparse.observations() {
        occupied[o.v * sparse.width() + o.u] = true;
    }
    let mut observations: Vec<SparseObservation> = sparse.observations().to_vec();
    let total = observations.len();
    let n_move = (fraction * total as f64).round() as usize;
    let chosen = sample_indices(&mut rng, total, n_move.min(total));
    for idx in chosen {
        let obs = observations[idx];
        let d = delta_px as isize;
        let candidates = [
            (obs.u as isize + d, obs.v as isize),
            (obs.u as isize - d, obs.v as isize),
            (obs.u as isize, obs.v as isize + d),
            (obs.u as isize, obs.v as isize - d),
        ];
        for (pu, pv) in candidates {
            if pu < 0 || pv < 0 || pu as usize >= gt.width() || pv as usize >= gt.height() {
                continue;
            }
            let (pu, pv) = (pu as usize, pv as usize);
            let slot = pv * sparse.width() + pu;
            if occupied[slot] {
                continue;
            }
            if let Some(z_there) = gt.get_valid(pu, pv) {
                if (z_there - obs.depth).abs() / obs.depth > 0.3 {
                    occupied[obs.v * sparse.width() + obs.u] = false;
                    occupied[slot] = true;
                    observations[idx] = SparseObservation { u: pu, v: pv, depth: obs.depth };
                    break;
                }
            }
        }
    }
    SparseDepth::new(sparse.width(), sparse.height(), observations)
        .expect("moves preserve bounds and uniqueness")
}

/// Marks reference pixels whose surface point is cleanly visible in the
/// source view: the projection lands in bounds and all four texels of its
/// bilinear footprint lie on the same surface (source ground truth within 2%
/// of the projected depth).
pub fn visibility_mask(gt_ref: &DepthMap, gt_src: &DepthMap, cams: &CameraModel) -> Vec<bool> {
    let (w, h) = (gt_ref.width(), gt_ref.height());
    let (sw, sh) = (gt_src.width(), gt_src.height());
    let mut mask = vec![false; w * h];
    for v in 0..h {
        for u in 0..w {
            let Some(z) = gt_ref.get_valid(u, v) else { continue };
            let Ok(p) = project_to_source((u as f64, v as f64), z, cams) else { continue };
            if !(p.u >= 0.0 && p.u <= (sw - 1) as f64 && p.v >= 0.0 && p.v <= (sh - 1) as f64) {
                continue;
            }
            let u0 = (p.u.floor() as usize).min(sw.saturating_sub(2));
            let v0 = (p.v.floor() as usize).min(sh.saturating_sub(2));
            let footprint_on_surface = [(0, 0), (1, 0), (0, 1), (1, 1)].iter().all(|&(du, dv)| {
                let (su, sv) = ((u0 + du).min(sw - 1), (v0 + dv).min(sh - 1));
                gt_src
                    .get_valid(su, sv)
                    .is_some_and(|z_src| (z_src - p.depth).abs() / p.depth < 0.02)
            });
            mask[v * w + u] = footprint_on_surface;
        }
    }
    mask
}

/// Draws a randomized scene for benchmark generation: a textured background
/// plus a few slabs, slanted planes, and spheres spread between `near` and
/// `far` depth.
pub fn procedural_scene(seed: u64, cams: &CameraModel, near: f64, far: f64) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x5343_454E_4553));
    let focal = cams.intrinsics[(0, 0)];
    let half_extent = |z: f64| {
        (
            z * cams.width as f64 / (2.0 * focal),
            z * cams.height as f64 / (2.0 * focal),
        )
    };
    let mut primitives = Vec::new();
    let count = rng.gen_range(4..=7);
    for _ in 0..count {
        let z = rng.gen_range(near..=0.8 * far);
        let (hx, hy) = half_extent(z);
        let cx = rng.gen_range(-0.6 * hx..=0.6 * hx);
        let cy = rng.gen_range(-0.6 * hy..=0.6 * hy);
        let sx = rng.gen_range(0.35 * hx..=0.75 * hx);
        let sy = rng.gen_range(0.35 * hy..=0.75 * hy);
        match rng.gen_range(0..3) {
            0 => primitives.push(Primitive::Slab {
                z,
                x_range: (cx - sx, cx + sx),
                y_range: (cy - sy, cy + sy),
            }),
            1 => {
                let normal = [rng.gen_range(-0.35..=0.35), rng.gen_range(-0.35..=0.35), 1.0];
                primitives.push(Primitive::Slanted {
                    anchor: [cx, cy, z],
                    normal,
                    x_range: (cx - sx, cx + sx),
                    y_range: (cy - sy, cy + sy),
                });
            }
            _ => primitives.push(Primitive::Sphere {
                center: [cx, cy, z],
                radius: rng.gen_range(0.3 * hx..=0.55 * hx.min(hy).max(0.3 * hx)),
            }),
        }
    }
    // Pin the finest octave's wavelength to ~5 pixels at the far plane,
    // where a pixel covers the most surface; finer detail would alias
    // through bilinear resampling.
    let octaves = 4u32;
    let finest_px = 5.0;
    let base_frequency = focal / (finest_px * f64::powi(2.0, octaves as i32 - 1) * far);
    SceneSpec {
        primitives,
        background_depth: far,
        texture: TextureParams { octaves, base_frequency },
    }
}
