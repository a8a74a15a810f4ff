//! End-to-end behavior on synthetic scenes: winner-take-all accuracy at true
//! parameters, the dehazing volume's advantage under heavy haze, residual
//! prediction through the scattering model, airlight initialization, and
//! controlled grid-search recovery.

mod common;

use common::*;
use hazesweep_core::costvolume::{build_dehazing, build_ordinary, SourceView};
use hazesweep_core::estimation::{
    estimate_airlight, grid_search, objective, SearchConfig, SparseDepth, SparseObservation,
};
use hazesweep_core::evaluation::l1_rel;
use hazesweep_core::extraction::{estimate_depth, winner_take_all};
use hazesweep_core::geometry::{bilinear_sample, project_to_source, CameraModel, HypothesisSet};
use hazesweep_core::image::DepthMap;
use hazesweep_core::scattering::{apply_haze, haze_pixel, ScatteringParams};
use hazesweep_core::synthesis::{
    make_sample, render, visibility_mask, Primitive, SceneSpec, TextureParams,
};

const W: usize = 64;
const H: usize = 48;
const FOCAL: f64 = 102.4;

fn flat_scene(z: f64) -> SceneSpec {
    SceneSpec {
        primitives: vec![],
        background_depth: z,
        // Finest octave wavelength ~8 px at the plane.
        texture: TextureParams { octaves: 3, base_frequency: FOCAL / (8.0 * 4.0 * z) },
    }
}

fn render_pair(
    scene: &SceneSpec,
    cam: &CameraModel,
    seed: u64,
) -> (hazesweep_core::ImageBuffer, DepthMap, hazesweep_core::ImageBuffer, DepthMap) {
    let ref_cam = CameraModel::identity_pose(cam.intrinsics, cam.width, cam.height).unwrap();
    let (ref_img, ref_depth) = render(scene, &ref_cam, seed).unwrap();
    let (src_img, src_depth) = render(scene, cam, seed).unwrap();
    (ref_img, ref_depth, src_img, src_depth)
}

/// Ground-truth depth restricted to cleanly visible pixels, for masked metrics.
fn masked_gt(gt: &DepthMap, mask: &[bool]) -> DepthMap {
    let mut out = gt.clone();
    for v in 0..gt.height() {
        for u in 0..gt.width() {
            if !mask[v * gt.width() + u] {
                out.invalidate(u, v);
            }
        }
    }
    out
}

#[test]
fn true_depth_hypothesis_wins_on_fronto_parallel_plane() {
    let cam = stereo_camera(W, H, FOCAL, 0.3);
    let scene = flat_scene(4.0);
    let (ref_clear, ref_depth, src_clear, src_depth) = render_pair(&scene, &cam, 51);
    let params = ScatteringParams::new(0.85, -(0.35f64.ln()) / 4.0).unwrap();
    let hazy_ref = apply_haze(&ref_clear, &ref_depth, &params).unwrap();
    let hazy_src = apply_haze(&src_clear, &src_depth, &params).unwrap();
    // Planes spaced so adjacent hypotheses shift the warp by over a pixel,
    // keeping the comparison above interpolation noise even at texture
    // extrema.
    let hyps = HypothesisSet::uniform_disparity(9, 0.05, 0.45).unwrap();
    let nearest = hyps.nearest_index(4.0);
    assert_eq!(hyps.depth(nearest), 4.0);
    let sources = [SourceView::new(hazy_src, cam.clone()).unwrap()];
    let vol = build_dehazing(&hazy_ref, &sources, &hyps, &params, 3.0).unwrap();
    let visible = visibility_mask(&ref_depth, &src_depth, &cam);
    let mut wins = 0usize;
    let mut total = 0usize;
    for v in 0..H {
        for u in 0..W {
            if !visible[v * W + u] {
                continue;
            }
            total += 1;
            let at_true = vol.at(u, v, nearest);
            let beaten = (0..hyps.len()).all(|i| i == nearest || at_true < vol.at(u, v, i));
            if beaten {
                wins += 1;
            }
        }
    }
    assert!(total > 1000);
    assert!(
        wins as f64 >= 0.99 * total as f64,
        "true plane wins at {wins}/{total} pixels"
    );
}

#[test]
fn wta_matches_nearest_hypothesis_on_two_plane_scene() {
    let cam = stereo_camera(W, H, FOCAL, 0.3);
    let scene = SceneSpec {
        primitives: vec![Primitive::Slab { z: 3.0, x_range: (-0.45, 0.35), y_range: (-0.4, 0.3) }],
        background_depth: 5.0,
        texture: TextureParams { octaves: 3, base_frequency: FOCAL / (8.0 * 4.0 * 5.0) },
    };
    let (ref_clear, ref_depth, src_clear, src_depth) = render_pair(&scene, &cam, 67);
    let params = ScatteringParams::new(0.88, 0.25).unwrap();
    let hazy_ref = apply_haze(&ref_clear, &ref_depth, &params).unwrap();
    let hazy_src = apply_haze(&src_clear, &src_depth, &params).unwrap();
    let hyps = HypothesisSet::uniform_disparity(41, 0.1, 0.5).unwrap();
    let sources = [SourceView::new(hazy_src, cam.clone()).unwrap()];
    let vol = build_dehazing(&hazy_ref, &sources, &hyps, &params, 3.0).unwrap();
    let estimate = winner_take_all(&vol, &hyps).unwrap();
    let visible = visibility_mask(&ref_depth, &src_depth, &cam);
    let mut hits = 0usize;
    let mut total = 0usize;
    for v in 0..H {
        for u in 0..W {
            if !visible[v * W + u] {
                continue;
            }
            total += 1;
            if estimate.argmin_index[v * W + u] == hyps.nearest_index(ref_depth.get(u, v)) {
                hits += 1;
            }
        }
    }
    assert!(total > 1000);
    assert!(
        hits as f64 >= 0.95 * total as f64,
        "argmin hits nearest hypothesis at {hits}/{total} pixels"
    );
}

#[test]
fn refined_depth_beats_one_disparity_step_with_defaults() {
    // Reference hypothesis settings: 256 planes over [0.02, 2].
    let cam = stereo_camera(W, H, FOCAL, 0.3);
    let scene = flat_scene(4.0);
    let (ref_clear, ref_depth, src_clear, src_depth) = render_pair(&scene, &cam, 23);
    let params = ScatteringParams::new(0.85, -(0.35f64.ln()) / 4.0).unwrap();
    let hazy_ref = apply_haze(&ref_clear, &ref_depth, &params).unwrap();
    let hazy_src = apply_haze(&src_clear, &src_depth, &params).unwrap();
    let hyps = HypothesisSet::uniform_disparity(256, 0.02, 2.0).unwrap();
    let sources = [SourceView::new(hazy_src, cam.clone()).unwrap()];
    let estimate = estimate_depth(&hazy_ref, &sources, &hyps, Some(&params), 3.0, 2).unwrap();
    let visible = visibility_mask(&ref_depth, &src_depth, &cam);
    let mut rel_errors: Vec<f64> = Vec::new();
    for v in 0..H {
        for u in 0..W {
            if visible[v * W + u] {
                rel_errors.push((estimate.depth.get(u, v) - 4.0).abs() / 4.0);
            }
        }
    }
    rel_errors.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = rel_errors[rel_errors.len() / 2];
    // One hypothesis step in disparity at z = 4 is a relative depth change
    // of about z * step.
    let step_rel = 4.0 * hyps.disparity_step();
    assert!(median < step_rel, "median relative error {median} vs one step {step_rel}");
}

#[test]
fn dehazing_pipeline_beats_ordinary_under_heavy_haze() {
    let cam = stereo_camera(W, H, FOCAL, 0.3);
    let scene = flat_scene(4.0);
    let (ref_clear, ref_depth, src_clear, src_depth) = render_pair(&scene, &cam, 3);
    // Transmission 0.25 at the plane.
    let params = ScatteringParams::new(0.9, -(0.25f64.ln()) / 4.0).unwrap();
    let hazy_ref = apply_haze(&ref_clear, &ref_depth, &params).unwrap();
    let hazy_src = apply_haze(&src_clear, &src_depth, &params).unwrap();
    let hyps = HypothesisSet::uniform_disparity(96, 0.05, 0.5).unwrap();
    let sources = [SourceView::new(hazy_src, cam.clone()).unwrap()];
    let dehazed = estimate_depth(&hazy_ref, &sources, &hyps, Some(&params), 3.0, 2).unwrap();
    let ordinary = estimate_depth(&hazy_ref, &sources, &hyps, None, 3.0, 2).unwrap();
    let gt = masked_gt(&ref_depth, &visibility_mask(&ref_depth, &src_depth, &cam));
    let err_dehazed = l1_rel(&dehazed.depth, &gt).unwrap();
    let err_ordinary = l1_rel(&ordinary.depth, &gt).unwrap();
    assert!(
        err_dehazed < err_ordinary,
        "dehazing {err_dehazed} vs ordinary {err_ordinary}"
    );
}

#[test]
fn true_hypothesis_entry_is_interpolation_noise_and_ordinary_matches_model() {
    // Camera with a z-component so the plane sits at a different depth in
    // the source view and the hazy residual cannot vanish.
    let cam = CameraModel::new(
        CameraModel::simple_intrinsics(FOCAL, W as f64 / 2.0 - 0.5, H as f64 / 2.0 - 0.5),
        nalgebra::Matrix3::identity(),
        nalgebra::Vector3::new(0.25, 0.0, 0.35),
        W,
        H,
    )
    .unwrap();
    let scene = flat_scene(4.0);
    let (ref_clear, ref_depth, src_clear, src_depth) = render_pair(&scene, &cam, 29);
    let params = ScatteringParams::new(0.85, 0.3).unwrap();
    let hazy_ref = apply_haze(&ref_clear, &ref_depth, &params).unwrap();
    let hazy_src = apply_haze(&src_clear, &src_depth, &params).unwrap();
    // Disparity grid hits 1/4 exactly at index 2.
    let hyps = HypothesisSet::uniform_disparity(5, 0.15, 0.35).unwrap();
    assert_eq!(hyps.depth(2), 4.0);
    let sources = [SourceView::new(hazy_src.clone(), cam.clone()).unwrap()];
    let dehazing = build_dehazing(&hazy_ref, &sources, &hyps, &params, 3.0).unwrap();
    let ordinary = build_ordinary(&hazy_ref, &sources, &hyps, 3.0).unwrap();
    let visible = visibility_mask(&ref_depth, &src_depth, &cam);
    let zeta = 4.0 + 0.35; // plane depth from the source view
    let mut checked = 0usize;
    for v in 0..H {
        for u in 0..W {
            if !visible[v * W + u] {
                continue;
            }
            checked += 1;
            assert!(
                dehazing.at(u, v, 2) < 0.02,
                "dehazed residual {} at ({u},{v})",
                dehazing.at(u, v, 2)
            );
            // The ordinary entry must equal the residual predicted by pushing
            // both clear operands through the scattering model.
            let p = project_to_source((u as f64, v as f64), 4.0, &cam).unwrap();
            let sampled_clear = bilinear_sample(&src_clear, (p.u, p.v)).unwrap();
            let lhs = haze_pixel(ref_clear.get(u, v), 4.0, &params);
            let rhs = haze_pixel(sampled_clear, zeta, &params);
            let predicted: f64 = (0..3).map(|c| (lhs[c] - rhs[c]).abs()).sum();
            assert!(
                (ordinary.at(u, v, 2) - predicted).abs() < 1e-9,
                "ordinary {} vs predicted {predicted}",
                ordinary.at(u, v, 2)
            );
        }
    }
    assert!(checked > 1000);
}

#[test]
fn airlight_estimate_from_deep_background() {
    let cam = stereo_camera(W, H, FOCAL, 0.3);
    let scene = SceneSpec {
        primitives: vec![Primitive::Slab { z: 2.5, x_range: (-0.5, 0.5), y_range: (-0.4, 0.1) }],
        background_depth: 8.0,
        texture: TextureParams { octaves: 3, base_frequency: FOCAL / (8.0 * 4.0 * 8.0) },
    };
    let ref_cam = CameraModel::identity_pose(cam.intrinsics, W, H).unwrap();
    let (clear, depth) = render(&scene, &ref_cam, 101).unwrap();
    // Transmission at the background is about 0.027, well under 0.05.
    let params = ScatteringParams::new(0.85, 0.45).unwrap();
    let hazy = apply_haze(&clear, &depth, &params).unwrap();
    let estimate = estimate_airlight(&hazy);
    assert!((estimate - 0.85).abs() <= 0.05, "estimate {estimate}");

    // A one-pixel specular white patch (under 0.1% of the frame) must not
    // drag the estimate away by more than the allowed margin.
    let mut speckled = hazy.clone();
    speckled.set(10, 40, [1.0, 1.0, 1.0]);
    let estimate = estimate_airlight(&speckled);
    assert!((estimate - 0.85).abs() <= 0.05, "speckled estimate {estimate}");
}

#[test]
fn epipolar_soundness_on_piecewise_flat_scene() {
    let cam = stereo_camera(W, H, FOCAL, 0.3);
    let scene = SceneSpec {
        primitives: vec![
            Primitive::Slab { z: 3.0, x_range: (-0.6, -0.1), y_range: (-0.5, 0.4) },
            Primitive::Slab { z: 4.5, x_range: (0.1, 0.8), y_range: (-0.3, 0.5) },
        ],
        background_depth: 7.0,
        texture: TextureParams::default(),
    };
    let (_, ref_depth, _, src_depth) = render_pair(&scene, &cam, 77);
    let visible = visibility_mask(&ref_depth, &src_depth, &cam);
    let mut checked = 0usize;
    for v in 0..H {
        for u in 0..W {
            if !visible[v * W + u] {
                continue;
            }
            let p = project_to_source((u as f64, v as f64), ref_depth.get(u, v), &cam).unwrap();
            // Bilinear depth in the source view; footprint is on one surface.
            let (u0, v0) = (p.u.floor() as usize, p.v.floor() as usize);
            let (fu, fv) = (p.u - u0 as f64, p.v - v0 as f64);
            let (u1, v1) = ((u0 + 1).min(W - 1), (v0 + 1).min(H - 1));
            let z_interp = src_depth.get(u0, v0) * (1.0 - fu) * (1.0 - fv)
                + src_depth.get(u1, v0) * fu * (1.0 - fv)
                + src_depth.get(u0, v1) * (1.0 - fu) * fv
                + src_depth.get(u1, v1) * fu * fv;
            assert!(
                (z_interp - p.depth).abs() < 1e-6,
                "pixel ({u},{v}): projected {} vs source depth {z_interp}",
                p.depth
            );
            checked += 1;
        }
    }
    assert!(checked > 1000);
}

#[test]
fn objective_has_global_minimum_at_true_beta() {
    let cam = stereo_camera(48, 36, 76.8, 0.3);
    let scene = SceneSpec {
        primitives: vec![Primitive::Slab { z: 3.0, x_range: (-0.5, 0.2), y_range: (-0.4, 0.3) }],
        background_depth: 6.0,
        texture: TextureParams { octaves: 3, base_frequency: 76.8 / (8.0 * 4.0 * 6.0) },
    };
    let sample = make_sample(&scene, &cam, (0.85, 0.85), (0.6, 0.6), 0.1, 13).unwrap();
    let hyps = HypothesisSet::uniform_disparity(64, 0.1, 0.6).unwrap();
    let sources = [SourceView::new(sample.source.clone(), cam.clone()).unwrap()];
    let betas: Vec<f64> = (0..10).map(|i| 0.4 + i as f64 * (0.4 / 9.0)).collect();
    let scores: Vec<f64> = betas
        .iter()
        .map(|&beta| {
            let params = ScatteringParams::new(0.85, beta).unwrap();
            let est = estimate_depth(&sample.reference, &sources, &hyps, Some(&params), 3.0, 2).unwrap();
            objective(&sample.sparse, &est.depth, 5).unwrap()
        })
        .collect();
    let true_idx = betas
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - 0.6).abs().partial_cmp(&(b.1 - 0.6).abs()).unwrap())
        .unwrap()
        .0;
    for (i, &score) in scores.iter().enumerate() {
        if (i as isize - true_idx as isize).unsigned_abs() >= 2 {
            assert!(
                scores[true_idx] <= score,
                "objective at true beta {} vs beta {}: {} vs {score}",
                betas[true_idx],
                betas[i],
                scores[true_idx]
            );
        }
    }
}

#[test]
fn grid_search_recovers_exact_on_grid_parameters() {
    // Controlled construction: a strip so deeply hazed that the observed
    // value equals the airlight bit-for-bit (making the initial estimate
    // exact), two informative depth layers, a pose with a z-component (the
    // swept-plane depths then differ between the views, which is what makes
    // beta observable), a true beta on the first-stage grid, and odd
    // refinement counts so both centers lie on the second-stage grid.
    let cam = CameraModel::new(
        CameraModel::simple_intrinsics(FOCAL, W as f64 / 2.0 - 0.5, H as f64 / 2.0 - 0.5),
        *nalgebra::Rotation3::from_euler_angles(0.01, -0.04, 0.0).matrix(),
        nalgebra::Vector3::new(0.3, 0.0, 0.25),
        W,
        H,
    )
    .unwrap();
    let scene = SceneSpec {
        primitives: vec![
            Primitive::Slab { z: 3.0, x_range: (-0.9, 0.3), y_range: (-0.75, 0.45) },
            Primitive::Slab { z: 6.0, x_range: (-2.0, 2.0), y_range: (-1.5, 0.95) },
        ],
        background_depth: 70.0,
        texture: TextureParams { octaves: 3, base_frequency: FOCAL / (8.0 * 4.0 * 5.0) },
    };
    let ref_cam = CameraModel::identity_pose(cam.intrinsics, W, H).unwrap();
    let (ref_clear, ref_depth) = render(&scene, &ref_cam, 5).unwrap();
    let (src_clear, src_depth) = render(&scene, &cam, 5).unwrap();
    let true_params = ScatteringParams::new(0.86, 0.6).unwrap();
    let hazy_ref = apply_haze(&ref_clear, &ref_depth, &true_params).unwrap();
    let hazy_src = apply_haze(&src_clear, &src_depth, &true_params).unwrap();
    let initial = estimate_airlight(&hazy_ref);
    assert_eq!(initial, 0.86, "deep background pins the airlight estimate");

    // Sparse observations on the two informative layers only.
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(8);
    let mut observations = Vec::new();
    for v in 0..H {
        for u in 0..W {
            let z = ref_depth.get(u, v);
            if z < 10.0 && rand::Rng::gen::<f64>(&mut rng) < 0.1 {
                observations.push(SparseObservation { u, v, depth: z });
            }
        }
    }
    let sparse = SparseDepth::new(W, H, observations).unwrap();

    let hyps = HypothesisSet::uniform_disparity(64, 0.1, 0.6).unwrap();
    let sources = [SourceView::new(hazy_src, cam.clone()).unwrap()];
    let cfg = SearchConfig {
        beta_min: 0.4,
        beta_max: 0.76, // 10 inclusive points step 0.04 put 0.6 on the grid
        refine_steps_airlight: 5,
        refine_steps_beta: 5,
        ..SearchConfig::default()
    };
    let result = grid_search(&hazy_ref, &sources, &hyps, &sparse, &cfg, 3.0, 2).unwrap();
    assert_eq!(result.evaluations, cfg.evaluation_budget());
    assert_eq!(result.evaluations, 35);
    assert!(
        (result.beta - 0.6).abs() < 1e-12,
        "beta lands on the true grid point, got {}",
        result.beta
    );
    assert!(
        (result.airlight - 0.86).abs() < 1e-9,
        "airlight stays at the exact estimate, got {}",
        result.airlight
    );
}
