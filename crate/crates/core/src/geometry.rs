//! Pinhole geometry for plane-sweep stereo: camera model, depth hypotheses
//! uniform in disparity, pixel projection between views, and the depth of a
//! reference swept plane as seen from a source camera.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::image::ImageBuffer;

/// Rotation orthonormality tolerance for camera validation.
const ROTATION_TOL: f64 = 1e-9;
/// Below this, a back-projected ray is treated as parallel to a swept plane.
const PLANE_PARALLEL_EPS: f64 = 1e-12;

/// Why a reference pixel could not be related to a source-view value.
///
/// All three cases are diagnosably distinct but map to the same penalty cost
/// downstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WarpFailure {
    /// The projected point has non-positive depth in the source frame.
    BehindCamera,
    /// The continuous coordinate left the image domain.
    OutOfBounds,
    /// The back-projected ray misses the swept plane (parallel, or the
    /// intersection lies behind the source camera).
    NoIntersection,
}

/// Pinhole camera with its pose relative to the reference camera.
///
/// `rotation` and `translation` map reference-frame points into this
/// camera's frame: `x_src = R x_ref + t`. The same intrinsics serve both
/// roles of the projection operator.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    pub intrinsics: Matrix3<f64>,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub width: usize,
    pub height: usize,
}

impl CameraModel {
    /// Validates and builds a camera. The rotation must be orthonormal with
    /// determinant +1 (to 1e-9); the intrinsics upper triangular with a
    /// positive diagonal.
    pub fn new(
        intrinsics: Matrix3<f64>,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if intrinsics[(1, 0)] != 0.0 || intrinsics[(2, 0)] != 0.0 || intrinsics[(2, 1)] != 0.0 {
            return Err(Error::invalid("intrinsics must be upper triangular"));
        }
        if intrinsics[(0, 0)] <= 0.0 || intrinsics[(1, 1)] <= 0.0 || intrinsics[(2, 2)] <= 0.0 {
            return Err(Error::invalid("intrinsics must have a positive diagonal"));
        }
        let gram = rotation.transpose() * rotation;
        let ortho_err = (gram - Matrix3::identity()).abs().max();
        if ortho_err > ROTATION_TOL {
            return Err(Error::invalid(format!(
                "rotation is not orthonormal (error {ortho_err:.3e})"
            )));
        }
        if (rotation.determinant() - 1.0).abs() > ROTATION_TOL {
            return Err(Error::invalid("rotation determinant must be +1"));
        }
        Ok(Self {
            intrinsics,
            rotation,
            translation,
            width,
            height,
        })
    }

    /// Camera paired with itself: identity rotation, zero translation.
    pub fn identity_pose(intrinsics: Matrix3<f64>, width: usize, height: usize) -> Result<Self> {
        Self::new(intrinsics, Matrix3::identity(), Vector3::zeros(), width, height)
    }

    /// The camera looking back: swaps the roles of reference and source.
    pub fn inverse_pose(&self) -> CameraModel {
        let rotation = self.rotation.transpose();
        let translation = -(rotation * self.translation);
        CameraModel {
            intrinsics: self.intrinsics,
            rotation,
            translation,
            width: self.width,
            height: self.height,
        }
    }

    /// Shorthand for `K = diag(f, f, 1)` with principal point `(cx, cy)`.
    pub fn simple_intrinsics(focal: f64, cx: f64, cy: f64) -> Matrix3<f64> {
        Matrix3::new(focal, 0.0, cx, 0.0, focal, cy, 0.0, 0.0, 1.0)
    }
}

/// Plane-sweep depth hypotheses, uniformly spaced in disparity (inverse
/// depth). Storage order follows ascending disparity, so depths decrease
/// with index.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisSet {
    depths: Vec<f64>,
    disparities: Vec<f64>,
    disparity_min: f64,
    disparity_max: f64,
}

impl HypothesisSet {
    /// `n` depths whose inverses are uniform over `[disparity_min, disparity_max]`,
    /// endpoints included.
    pub fn uniform_disparity(n: usize, disparity_min: f64, disparity_max: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("need at least 2 hypotheses"));
        }
        if !(disparity_min > 0.0 && disparity_max.is_finite() && disparity_min < disparity_max) {
            return Err(Error::invalid(format!(
                "disparity bounds must satisfy 0 < min < max, got [{disparity_min}, {disparity_max}]"
            )));
        }
        let last = (n - 1) as f64;
        let disparities: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / last;
                (1.0 - t) * disparity_min + t * disparity_max
            })
            .collect();
        let depths = disparities.iter().map(|d| 1.0 / d).collect();
        Ok(Self {
            depths,
            disparities,
            disparity_min,
            disparity_max,
        })
    }

    pub fn len(&self) -> usize {
        self.depths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depths.is_empty()
    }

    #[inline]
    pub fn depth(&self, i: usize) -> f64 {
        self.depths[i]
    }

    #[inline]
    pub fn disparity(&self, i: usize) -> f64 {
        self.disparities[i]
    }

    pub fn depths(&self) -> &[f64] {
        &self.depths
    }

    pub fn disparity_min(&self) -> f64 {
        self.disparity_min
    }

    pub fn disparity_max(&self) -> f64 {
        self.disparity_max
    }

    /// Spacing between adjacent disparity samples.
    pub fn disparity_step(&self) -> f64 {
        (self.disparity_max - self.disparity_min) / (self.depths.len() - 1) as f64
    }

    /// Index of the hypothesis nearest to `depth` in disparity.
    pub fn nearest_index(&self, depth: f64) -> usize {
        let d = 1.0 / depth;
        let step = self.disparity_step();
        let i = ((d - self.disparity_min) / step).round();
        (i.max(0.0) as usize).min(self.depths.len() - 1)
    }
}

/// A reference pixel warped into a source view, together with its depth in
/// the source frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceProjection {
    pub u: f64,
    pub v: f64,
    /// z-coordinate of the 3D point in the source camera frame.
    pub depth: f64,
}

/// Projects a reference pixel at hypothesis depth `z` into the source view:
/// the dehomogenized coordinates of `z K R K⁻¹ (u, v, 1)ᵀ + K t`.
///
/// No bounds clamping is applied; callers check visibility. A point with
/// non-positive source-frame depth yields [`WarpFailure::BehindCamera`].
pub fn project_to_source(
    pixel: (f64, f64),
    z: f64,
    cam: &CameraModel,
) -> std::result::Result<SourceProjection, WarpFailure> {
    let k = &cam.intrinsics;
    let k_inv = k
        .try_inverse()
        .expect("validated intrinsics are invertible");
    let homog = z * (k * cam.rotation * k_inv * Vector3::new(pixel.0, pixel.1, 1.0))
        + k * cam.translation;
    let source_depth = homog.z / k[(2, 2)];
    if source_depth <= 0.0 {
        return Err(WarpFailure::BehindCamera);
    }
    Ok(SourceProjection {
        u: homog.x / homog.z,
        v: homog.y / homog.z,
        depth: source_depth,
    })
}

/// Per-plane constants for warping many pixels at a fixed relative pose.
///
/// Encodes the projection as `z · (M p) + b` with `M = K R K⁻¹` and
/// `b = K t`, and the swept-plane depth seen from the source as
/// `ζ(q) = (z + r₃·t) / (w · q)` with `w = K⁻ᵀ r₃`, `q = (u, v, 1)` the
/// source pixel. Factoring these out keeps the inner cost-volume loops on
/// a handful of fused multiplies.
#[derive(Debug, Clone)]
pub struct WarpPrecomp {
    homography: Matrix3<f64>,
    offset: Vector3<f64>,
    k33: f64,
    plane_ray_coeff: Vector3<f64>,
    plane_offset: f64,
}

impl WarpPrecomp {
    pub fn new(cam: &CameraModel) -> Self {
        let k = &cam.intrinsics;
        let k_inv = k
            .try_inverse()
            .expect("validated intrinsics are invertible");
        let r3 = cam.rotation.column(2).into_owned();
        Self {
            homography: k * cam.rotation * k_inv,
            offset: k * cam.translation,
            k33: k[(2, 2)],
            plane_ray_coeff: k_inv.transpose() * r3,
            plane_offset: r3.dot(&cam.translation),
        }
    }

    /// Direction part `M (u, v, 1)ᵀ` of the warp, reusable across planes.
    #[inline]
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        self.homography * Vector3::new(u, v, 1.0)
    }

    /// Completes the warp of a precomputed ray at plane depth `z`.
    #[inline]
    pub fn warp_ray(&self, ray: &Vector3<f64>, z: f64) -> std::result::Result<SourceProjection, WarpFailure> {
        let hx = z * ray.x + self.offset.x;
        let hy = z * ray.y + self.offset.y;
        let hz = z * ray.z + self.offset.z;
        let source_depth = hz / self.k33;
        if source_depth <= 0.0 {
            return Err(WarpFailure::BehindCamera);
        }
        Ok(SourceProjection {
            u: hx / hz,
            v: hy / hz,
            depth: source_depth,
        })
    }

    /// Depth of the swept plane `z = z_i` (reference frame) along the source
    /// pixel's back-projected ray; see [`source_view_plane_depth`].
    #[inline]
    pub fn plane_depth(&self, z_i: f64, src_pixel: (f64, f64)) -> std::result::Result<f64, WarpFailure> {
        let denom = self.plane_ray_coeff.x * src_pixel.0
            + self.plane_ray_coeff.y * src_pixel.1
            + self.plane_ray_coeff.z;
        if denom.abs() < PLANE_PARALLEL_EPS {
            return Err(WarpFailure::NoIntersection);
        }
        let zeta = (z_i + self.plane_offset) / (denom * self.k33);
        if zeta <= 0.0 {
            return Err(WarpFailure::NoIntersection);
        }
        Ok(zeta)
    }
}

/// Depth, in the source camera frame, of the intersection between the source
/// pixel's back-projected ray and the reference-frame plane `{X : X_z = z_i}`.
///
/// Rays parallel to the plane or intersections behind the source camera give
/// [`WarpFailure::NoIntersection`]; the consuming cost entry is then assigned
/// the penalty constant.
pub fn source_view_plane_depth(
    plane_depth: f64,
    cam: &CameraModel,
    src_pixel: (f64, f64),
) -> std::result::Result<f64, WarpFailure> {
    WarpPrecomp::new(cam).plane_depth(plane_depth, src_pixel)
}

/// Bilinear interpolation of the four texels around a continuous coordinate.
///
/// Pixel centers sit at integer coordinates; the sampling domain is
/// `[0, W−1] × [0, H−1]` and anything outside (NaN included) is
/// [`WarpFailure::OutOfBounds`].
pub fn bilinear_sample(
    image: &ImageBuffer,
    pixel: (f64, f64),
) -> std::result::Result<[f64; 3], WarpFailure> {
    let (u, v) = pixel;
    let max_u = (image.width() - 1) as f64;
    let max_v = (image.height() - 1) as f64;
    if !(u >= 0.0 && u <= max_u && v >= 0.0 && v <= max_v) {
        return Err(WarpFailure::OutOfBounds);
    }
    let u0 = (u.floor() as usize).min(image.width().saturating_sub(2));
    let v0 = (v.floor() as usize).min(image.height().saturating_sub(2));
    let u1 = (u0 + 1).min(image.width() - 1);
    let v1 = (v0 + 1).min(image.height() - 1);
    let fu = u - u0 as f64;
    let fv = v - v0 as f64;
    let p00 = image.get(u0, v0);
    let p10 = image.get(u1, v0);
    let p01 = image.get(u0, v1);
    let p11 = image.get(u1, v1);
    let mut out = [0.0; 3];
    for c in 0..3 {
        let top = (1.0 - fu) * p00[c] + fu * p10[c];
        let bot = (1.0 - fu) * p01[c] + fu * p11[c];
        out[c] = (1.0 - fv) * top + fv * bot;
    }
    Ok(out)
}
