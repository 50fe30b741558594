//! End-to-end acceptance checks. Runs without the libtest harness so each
//! check prints exactly one PASS/FAIL line; exits non-zero if any fail.

use canopy::aos::{background_region, integrate, ReferenceCamera, View, ViewSet, Weighting};
use canopy::camera::{centroid_reference, plane_homography, CameraArraySpec, Intrinsics, Pose, WorldPlane};
use canopy::cli::{cmd_pipeline, ExperimentConfig};
use canopy::deteval::{self, DetectionRecord, GroundTruthRecord};
use canopy::fusion::{dct_dictionary, energy, mst_sr_fuse, omp, omp_path, FusionConfig, Pyramid};
use canopy::imgcore::{BBoxPx, Channel, ImagePlane};
use canopy::scenegen::{
    export_ground_truth, generate_scene, render_view, Extent, SceneDescription, SceneParams, TargetPlacement,
    TargetTemplate,
};
use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

// ---------------------------------------------------------------- geometry oracle

/// Ground point seen through pixel `(u, v)`, by direct back-projection.
fn ground_point(intr: &Intrinsics, pose: &Pose, u: f64, v: f64) -> Vector3<f64> {
    let c = -pose.rotation().transpose() * pose.translation();
    let ray_cam = Vector3::new((u - intr.cx()) / intr.fx(), (v - intr.cy()) / intr.fy(), 1.0);
    let d = pose.rotation().transpose() * ray_cam;
    c + d * (-c.z / d.z)
}

fn pinhole(intr: &Intrinsics, pose: &Pose, x: &Vector3<f64>) -> Option<(f64, f64)> {
    let p = pose.rotation() * x + pose.translation();
    (p.z > 1e-9).then(|| (intr.fx() * p.x / p.z + intr.cx(), intr.fy() * p.y / p.z + intr.cy()))
}

/// Nearest leaf value on the segment from camera centre `c` down to ground point `x`.
fn leaf_on_segment(scene: &SceneDescription, c: &Vector3<f64>, x: &Vector3<f64>) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    for occ in &scene.occluders {
        // horizontal track of the segment across the crown band
        let at = |z: f64| {
            let s = (c.z - z) / (c.z - x.z);
            (c.x + s * (x.x - c.x), c.y + s * (x.y - c.y))
        };
        let (a, b) = (at(occ.height_band[0]), at(occ.height_band[1]));
        let (abx, aby) = (b.0 - a.0, b.1 - a.1);
        let len2 = abx * abx + aby * aby;
        let t = if len2 > 0.0 {
            (((occ.center[0] - a.0) * abx + (occ.center[1] - a.1) * aby) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let (qx, qy) = (a.0 + t * abx - occ.center[0], a.1 + t * aby - occ.center[1]);
        if (qx * qx + qy * qy).sqrt() > occ.canopy_radius + occ.leaf_radius + 1e-6 {
            continue;
        }
        for leaf in &occ.leaves {
            let s = (c.z - leaf[2]) / (c.z - x.z);
            if !(s > 0.0 && s < 1.0) {
                continue;
            }
            let px = c.x + s * (x.x - c.x) - leaf[0];
            let py = c.y + s * (x.y - c.y) - leaf[1];
            if px * px + py * py <= occ.leaf_radius * occ.leaf_radius && best.is_none_or(|(bs, _)| s < bs) {
                best = Some((s, occ.leaf_thermal));
            }
        }
    }
    best.map(|(_, v)| v)
}

fn unoccluded_thermal(scene: &SceneDescription, x: &Vector3<f64>) -> f64 {
    scene
        .targets
        .iter()
        .rev()
        .find(|t| (x.x - t.center[0]).abs() <= t.size[0] / 2.0 && (x.y - t.center[1]).abs() <= t.size[1] / 2.0)
        .map_or(scene.ambient_thermal, |t| t.thermal_intensity)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

// ---------------------------------------------------------------- occlusion suppression

fn occlusion_params() -> SceneParams {
    SceneParams {
        extent: Extent {
            x_min: -10.0,
            y_min: -10.0,
            x_max: 10.0,
            y_max: 10.0,
        },
        tree_count: 8,
        min_tree_separation: 5.0,
        canopy_radius: [2.5, 3.0],
        crown_base: [6.0, 8.0],
        crown_depth: [3.0, 5.0],
        leaf_count: 80,
        leaf_radius: 0.35,
        targets: vec![TargetTemplate::default()],
        target_placement: TargetPlacement::UnderCanopy,
        noise_sigma: 0.0,
        ..SceneParams::default()
    }
}

struct SceneOutcome {
    occluded_fraction: f64,
    integral_score: f64,
    median_single: f64,
    max_oracle_err: f64,
    checked_pixels: usize,
}

fn occlusion_scene(seed: u64, array: &CameraArraySpec) -> SceneOutcome {
    let scene = generate_scene(&occlusion_params(), seed).unwrap();
    let intr = array.intrinsics().unwrap();
    let poses = array.poses().unwrap();
    let (w, h) = (intr.width(), intr.height());
    let images: Vec<ImagePlane> = poses
        .iter()
        .map(|p| render_view(&scene, &intr, p, Channel::Thermal, 0).unwrap())
        .collect();

    // occluded share of target pixels, pooled over all single views
    let (mut on_target, mut hidden) = (0usize, 0usize);
    let mut single_scores = Vec::new();
    for (pose, img) in poses.iter().zip(&images) {
        let c = pose.center();
        let gts = export_ground_truth(&scene, &intr, pose, "v");
        let Some(gt) = gts.first() else { continue };
        let (xs, ys) = gt.bbox.pixel_range(w, h);
        for y in ys {
            for x in xs.clone() {
                let g = ground_point(&intr, pose, x as f64, y as f64);
                if scene.targets[0].contains(g.x, g.y) {
                    on_target += 1;
                    hidden += leaf_on_segment(&scene, &c, &g).is_some() as usize;
                }
            }
        }
        if let Some(bg) = background_region(&gt.bbox, &[gt.bbox], w, h, 2.0) {
            single_scores.push(canopy::aos::visibility_score(img, &gt.bbox, &bg).unwrap());
        }
    }

    let reference = ReferenceCamera {
        intrinsics: intr,
        pose: centroid_reference(&poses).unwrap(),
    };
    let views = ViewSet::new(
        poses
            .iter()
            .zip(images)
            .map(|(p, img)| View {
                intrinsics: intr,
                pose: *p,
                image: img,
            })
            .collect(),
    )
    .unwrap();
    let integral = integrate(&views, &WorldPlane::horizontal(0.0), &reference, &Weighting::Uniform).unwrap();

    let ref_gt = export_ground_truth(&scene, &intr, &reference.pose, "reference")[0].bbox;
    let bg = background_region(&ref_gt, &[ref_gt], w, h, 2.0).unwrap();
    let integral_score = integral.visibility_score(&ref_gt, &bg).unwrap();

    // per-pixel oracle over a window around the target
    let (cx, cy) = (
        (ref_gt.x_min() + ref_gt.x_max()) / 2.0,
        (ref_gt.y_min() + ref_gt.y_max()) / 2.0,
    );
    let (mut max_err, mut checked) = (0.0f64, 0usize);
    let lo = |c: f64| (c - 48.0).max(0.0) as usize;
    let hi = |c: f64, n: usize| ((c + 48.0) as usize).min(n - 1);
    for y in lo(cy)..=hi(cy, h) {
        for x in lo(cx)..=hi(cx, w) {
            let g = ground_point(&intr, &reference.pose, x as f64, y as f64);
            let (mut n, mut k, mut leaf) = (0usize, 0usize, 0.0);
            for pose in &poses {
                let Some((u, v)) = pinhole(&intr, pose, &g) else {
                    continue;
                };
                if u < 0.0 || v < 0.0 || u > (w - 1) as f64 || v > (h - 1) as f64 {
                    continue;
                }
                n += 1;
                if let Some(l) = leaf_on_segment(&scene, &pose.center(), &g) {
                    k += 1;
                    leaf = l;
                }
            }
            if n < poses.len() {
                continue;
            }
            let expect = (k as f64 * leaf + (n - k) as f64 * unoccluded_thermal(&scene, &g)) / n as f64;
            max_err = max_err.max((integral.image.get(x, y) - expect).abs());
            checked += 1;
        }
    }

    SceneOutcome {
        occluded_fraction: hidden as f64 / on_target.max(1) as f64,
        integral_score,
        median_single: median(single_scores),
        max_oracle_err: max_err,
        checked_pixels: checked,
    }
}

fn check_occlusion_suppression() -> Verdict {
    let start = Instant::now();
    let array = CameraArraySpec::default();
    let (mut used, mut skipped, mut wins) = (0, 0, 0);
    let (mut worst_err, mut pixels) = (0.0f64, 0usize);
    let mut min_occ = f64::INFINITY;
    let mut seed = 0u64;
    while used < 20 && seed < 200 {
        let o = occlusion_scene(seed, &array);
        seed += 1;
        if o.occluded_fraction < 0.3 {
            skipped += 1;
            continue;
        }
        used += 1;
        min_occ = min_occ.min(o.occluded_fraction);
        wins += (o.integral_score > o.median_single) as usize;
        worst_err = worst_err.max(o.max_oracle_err);
        pixels += o.checked_pixels;
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        used == 20 && wins >= 19 && worst_err <= 1e-6 && pixels > 0 && secs <= 60.0,
        format!(
            "integral beats median single view in {wins}/{used} scenes (min occlusion {:.0}%, {skipped} seeds below 30% skipped); \
             oracle max error {worst_err:.1e} over {pixels} px; {secs:.1} s",
            100.0 * min_occ
        ),
    )
}

// ---------------------------------------------------------------- noise averaging

fn check_noise_averaging() -> Verdict {
    let sigma = 0.05;
    let params = SceneParams {
        tree_count: 0,
        targets: vec![],
        noise_sigma: sigma,
        ..SceneParams::default()
    };
    let scene = generate_scene(&params, 99).unwrap();
    let array = CameraArraySpec::default();
    let intr = array.intrinsics().unwrap();
    let poses = array.poses().unwrap();
    let views = ViewSet::new(
        poses
            .iter()
            .enumerate()
            .map(|(i, p)| View {
                intrinsics: intr,
                pose: *p,
                image: render_view(&scene, &intr, p, Channel::Thermal, 1000 + i as u64).unwrap(),
            })
            .collect(),
    )
    .unwrap();
    let reference = ReferenceCamera {
        intrinsics: intr,
        pose: centroid_reference(&poses).unwrap(),
    };
    let out = integrate(&views, &WorldPlane::horizontal(0.0), &reference, &Weighting::Uniform).unwrap();
    let errs: Vec<f64> = out
        .image
        .data()
        .iter()
        .zip(out.coverage.data())
        .filter(|(_, &c)| c == 16.0)
        .map(|(&v, _)| v - scene.ambient_thermal)
        .collect();
    let mean = errs.iter().sum::<f64>() / errs.len() as f64;
    let std = (errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / errs.len() as f64).sqrt();
    let expected = sigma / 4.0;
    let rel = (std - expected).abs() / expected;
    verdict(
        errs.len() >= 1000 && rel <= 0.2,
        format!(
            "std {std:.5} vs sigma/4 = {expected:.5} ({:.1}% off) over {} px",
            100.0 * rel,
            errs.len()
        ),
    )
}

// ---------------------------------------------------------------- homography

fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
    let nadir = Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0);
    let tilt = Rotation3::from_scaled_axis(Vector3::new(
        rng.random_range(-0.3..0.3),
        rng.random_range(-0.3..0.3),
        rng.random_range(-3.1..3.1),
    ));
    // camera-to-world rotation tilted away from nadir
    let r = (tilt.matrix() * nadir.transpose()).transpose();
    let c = Vector3::new(
        rng.random_range(-5.0..5.0),
        rng.random_range(-5.0..5.0),
        rng.random_range(20.0..60.0),
    );
    Pose::new(r, -r * c).unwrap()
}

fn check_homography() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst, mut points) = (0.0f64, 0usize);
    for _ in 0..1000 {
        let intr_ref = Intrinsics::centered(rng.random_range(200.0..800.0), 320, 240).unwrap();
        let intr_src = Intrinsics::centered(rng.random_range(200.0..800.0), 400, 300).unwrap();
        let (ref_pose, src_pose) = (random_pose(&mut rng), random_pose(&mut rng));
        let n = Rotation3::from_scaled_axis(Vector3::new(
            rng.random_range(-0.3..0.3),
            rng.random_range(-0.3..0.3),
            0.0,
        )) * Vector3::z();
        let plane = WorldPlane::new(n, rng.random_range(-2.0..2.0)).unwrap();
        let hom = plane_homography(&intr_src, &src_pose, &plane, &intr_ref, &ref_pose).unwrap();
        for _ in 0..10 {
            let (u, v) = (rng.random_range(0.0..320.0), rng.random_range(0.0..240.0));
            // back-project onto the plane independently of the library
            let c = ref_pose.center();
            let d = ref_pose.rotation().transpose()
                * Vector3::new(
                    (u - intr_ref.cx()) / intr_ref.fx(),
                    (v - intr_ref.cy()) / intr_ref.fy(),
                    1.0,
                );
            let s = (plane.offset() - n.dot(&c)) / n.dot(&d);
            let x = c + d * s;
            let Some(direct) = pinhole(&intr_src, &src_pose, &x) else {
                continue;
            };
            let (hu, hv) = hom.map(u, v).unwrap();
            worst = worst.max((hu - direct.0).hypot(hv - direct.1));
            points += 1;
        }
    }
    verdict(
        worst <= 1e-6,
        format!("max warp vs projection discrepancy {worst:.2e} px over 1000 pairs, {points} points"),
    )
}

// ---------------------------------------------------------------- pyramid

fn check_pyramid() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let (w, h) = (rng.random_range(64..=160), rng.random_range(64..=160));
        let img = ImagePlane::from_fn(w, h, Channel::Visible, |_, _| rng.random::<f64>()).unwrap();
        let depth = 1 + i % 4;
        let p = Pyramid::decompose(&img, depth).unwrap();
        worst = worst.max(p.reconstruct().max_abs_diff(&img));
    }
    verdict(
        worst <= 1e-5,
        format!("max reconstruction error {worst:.2e} over 100 images, depths 1-4"),
    )
}

// ---------------------------------------------------------------- sparse coding

fn check_omp() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let full = dct_dictionary(8, 16).unwrap();
    let even: Vec<usize> = (0..16)
        .step_by(2)
        .flat_map(|ky| (0..16).step_by(2).map(move |kx| ky * 16 + kx))
        .collect();

    let (mut recovered, mut worst_res) = (0, 0.0f64);
    for trial in 0..1000 {
        let k = 1 + trial % 4;
        let mut pool = even.clone();
        let keep = rng.random_range(16..=64);
        for i in 0..keep {
            let j = rng.random_range(i..pool.len());
            pool.swap(i, j);
        }
        pool.truncate(keep);
        let bank = full.select(&pool).unwrap();
        let mut support: Vec<usize> = Vec::new();
        while support.len() < k {
            let j = rng.random_range(0..bank.len());
            if !support.contains(&j) {
                support.push(j);
            }
        }
        let coefs: Vec<f64> = (0..k)
            .map(|_| rng.random_range(0.5..2.0) * if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        let mut signal = vec![0.0; 64];
        for (&j, &c) in support.iter().zip(&coefs) {
            for (s, a) in signal.iter_mut().zip(bank.atom(j).iter()) {
                *s += c * a;
            }
        }
        let code = omp(&signal, &bank, 8, 1e-12).unwrap();
        let mut got: Vec<(usize, f64)> = code
            .support
            .iter()
            .copied()
            .zip(code.coefficients.iter().copied())
            .collect();
        got.sort_by_key(|g| g.0);
        let mut want: Vec<(usize, f64)> = support.iter().copied().zip(coefs.iter().copied()).collect();
        want.sort_by_key(|g| g.0);
        let same = got.len() == want.len()
            && got
                .iter()
                .zip(&want)
                .all(|(a, b)| a.0 == b.0 && (a.1 - b.1).abs() <= 1e-9);
        worst_res = worst_res.max(code.residual_norm);
        recovered += (same && code.residual_norm <= 1e-9) as usize;
    }

    let (mut monotone, mut worst_orth) = (0, 0.0f64);
    for _ in 0..1000 {
        let signal: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
        let path = omp_path(&signal, &full, 16, 0.0).unwrap();
        monotone += path
            .windows(2)
            .all(|p| p[1].residual_norm <= p[0].residual_norm + 1e-12) as usize;
        for code in &path {
            let mut r = nalgebra::DVector::from_column_slice(&signal);
            r -= code.reconstruct(&full);
            for &j in &code.support {
                worst_orth = worst_orth.max(full.atom(j).dot(&r).abs());
            }
        }
    }
    verdict(
        recovered == 1000 && monotone == 1000 && worst_orth <= 1e-8,
        format!(
            "exact recovery {recovered}/1000 (k <= 4, max residual {worst_res:.1e}); monotone residual {monotone}/1000; \
             max residual-support correlation {worst_orth:.1e}"
        ),
    )
}

// ---------------------------------------------------------------- fusion

fn region_mean(img: &ImagePlane, b: &BBoxPx) -> f64 {
    let (xs, ys) = b.pixel_range(img.width(), img.height());
    let vals: Vec<f64> = ys
        .flat_map(|y| xs.clone().map(move |x| (x, y)))
        .map(|(x, y)| img.get(x, y))
        .collect();
    vals.iter().sum::<f64>() / vals.len() as f64
}

/// Detail energy per level, skipping pixels within `margin` (full-resolution
/// pixels) of `exclude`.
fn detail_energy_outside(p: &Pyramid, exclude: &BBoxPx, margin: f64) -> f64 {
    p.levels()
        .iter()
        .enumerate()
        .map(|(k, l)| {
            let s = (1u32 << k) as f64;
            let (x0, y0) = ((exclude.x_min() - margin) / s, (exclude.y_min() - margin) / s);
            let (x1, y1) = ((exclude.x_max() + margin) / s, (exclude.y_max() + margin) / s);
            let mut e = 0.0;
            for y in 0..l.height() {
                for x in 0..l.width() {
                    let (fx, fy) = (x as f64, y as f64);
                    if !(fx >= x0 && fx <= x1 && fy >= y0 && fy <= y1) {
                        e += l.get(x, y).powi(2);
                    }
                }
            }
            e
        })
        .sum()
}

fn check_fusion() -> Verdict {
    let cfg = FusionConfig::default();
    let array = CameraArraySpec::default();
    let intr = array.intrinsics().unwrap();
    let pose = array.reference_pose();

    // identical inputs
    let mut worst_idem = 0.0f64;
    for seed in 0..3u64 {
        let scene = generate_scene(
            &SceneParams {
                noise_sigma: 0.02,
                ..SceneParams::default()
            },
            seed,
        )
        .unwrap();
        for ch in [Channel::Visible, Channel::Thermal] {
            let img = render_view(&scene, &intr, &pose, ch, seed).unwrap();
            worst_idem = worst_idem.max(mst_sr_fuse(&img, &img, &cfg).unwrap().max_abs_diff(&img));
        }
    }

    // hot target on cold flat ground, textured visible
    let params = SceneParams {
        tree_count: 0,
        targets: vec![TargetTemplate {
            class_label: "vehicle".into(),
            count: 1,
            size: [4.5, 2.0],
            visible_albedo: 0.8,
            thermal_intensity: 0.9,
        }],
        target_placement: TargetPlacement::Uniform,
        ..SceneParams::default()
    };
    let mut scene = generate_scene(&params, 21).unwrap();
    scene.targets[0].center = [1.3, -0.7];
    let vis = render_view(&scene, &intr, &pose, Channel::Visible, 0).unwrap();
    let thm = render_view(&scene, &intr, &pose, Channel::Thermal, 0).unwrap();
    let fused = mst_sr_fuse(&vis, &thm, &cfg).unwrap();
    let target = export_ground_truth(&scene, &intr, &pose, "ref")[0].bbox;
    let hot = scene.targets[0].thermal_intensity;
    let fused_mean = region_mean(&fused, &target);
    let mean_rel = (fused_mean - hot).abs() / hot;

    let pv = Pyramid::decompose(&vis, cfg.depth).unwrap();
    let pf = Pyramid::decompose(&fused, cfg.depth).unwrap();
    let margin = 16.0;
    let retention = detail_energy_outside(&pf, &target, margin) / detail_energy_outside(&pv, &target, margin);
    let total: f64 = pf.levels().iter().map(energy).sum::<f64>() / pv.levels().iter().map(energy).sum::<f64>();

    verdict(
        worst_idem <= 1e-4 && mean_rel <= 0.1 && retention >= 0.9,
        format!(
            "fuse(I, I) max error {worst_idem:.1e}; target mean {fused_mean:.3} vs thermal {hot} ({:.1}% off); \
             visible detail energy retained {:.1}% away from target ({:.1}% whole image)",
            100.0 * mean_rel,
            100.0 * retention,
            100.0 * total
        ),
    )
}

// ---------------------------------------------------------------- detection metrics

fn brute_iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    if inter == 0.0 {
        return 0.0;
    }
    inter / ((a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter)
}

/// Per-class AP (None without ground truth) and mAP (None if no class has AP).
fn brute_evaluate(
    dets: &[DetectionRecord],
    gts: &[GroundTruthRecord],
    thr: f64,
) -> (Vec<(String, Option<f64>)>, Option<f64>) {
    // selection order: repeatedly take the best remaining detection
    let mut left: Vec<usize> = (0..dets.len()).collect();
    let mut order = Vec::new();
    while !left.is_empty() {
        let mut best = 0;
        for c in 1..left.len() {
            let (a, b) = (&dets[left[c]], &dets[left[best]]);
            let better = a.score > b.score || (a.score == b.score && a.image_id < b.image_id);
            if better {
                best = c;
            }
        }
        order.push(left.remove(best));
    }
    let mut used = vec![false; gts.len()];
    let mut tp = vec![false; dets.len()];
    for &d in &order {
        let mut pick: Option<usize> = None;
        let mut pick_iou = -1.0;
        for (g, gt) in gts.iter().enumerate() {
            if used[g] || gt.image_id != dets[d].image_id || gt.class_label != dets[d].class_label {
                continue;
            }
            let o = brute_iou(dets[d].bbox.as_array(), gt.bbox.as_array());
            if o >= thr && o > pick_iou {
                pick = Some(g);
                pick_iou = o;
            }
        }
        if let Some(g) = pick {
            used[g] = true;
            tp[d] = true;
        }
    }
    let mut classes: Vec<String> = dets
        .iter()
        .map(|d| d.class_label.clone())
        .chain(gts.iter().map(|g| g.class_label.clone()))
        .collect();
    classes.sort();
    classes.dedup();
    let mut per_class = Vec::new();
    for class in classes {
        let n_gt = gts.iter().filter(|g| g.class_label == class).count();
        if n_gt == 0 {
            per_class.push((class, None));
            continue;
        }
        let labels: Vec<bool> = order
            .iter()
            .filter(|&&d| dets[d].class_label == class)
            .map(|&d| tp[d])
            .collect();
        // AP = mean over the j-th recall step of the best precision at any
        // cut-off that reaches j true positives
        let mut ap = 0.0;
        for j in 1..=n_gt {
            let mut best = 0.0f64;
            for cut in 1..=labels.len() {
                let hits = labels[..cut].iter().filter(|&&l| l).count();
                if hits >= j {
                    best = best.max(hits as f64 / cut as f64);
                }
            }
            ap += best;
        }
        per_class.push((class, Some(ap / n_gt as f64)));
    }
    let defined: Vec<f64> = per_class.iter().filter_map(|c| c.1).collect();
    let map = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    (per_class, map)
}

fn check_metrics() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let classes = ["a", "b", "c"];
    let images = ["i0", "i1"];
    let rand_box = |rng: &mut ChaCha8Rng| {
        let (x0, y0) = (rng.random_range(0..6) as f64, rng.random_range(0..6) as f64);
        let (x1, y1) = (x0 + rng.random_range(1..5) as f64, y0 + rng.random_range(1..5) as f64);
        BBoxPx::new(x0, y0, x1, y1).unwrap()
    };
    let mut mismatches = 0;
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let n_cls = rng.random_range(1..=3);
        let dets: Vec<DetectionRecord> = (0..rng.random_range(0..=6))
            .map(|_| DetectionRecord {
                image_id: images[rng.random_range(0..2)].into(),
                class_label: classes[rng.random_range(0..n_cls)].into(),
                bbox: rand_box(&mut rng),
                score: rng.random_range(1..=5) as f64 / 5.0,
            })
            .collect();
        let gts: Vec<GroundTruthRecord> = (0..rng.random_range(0..=4))
            .map(|_| GroundTruthRecord {
                image_id: images[rng.random_range(0..2)].into(),
                class_label: classes[rng.random_range(0..n_cls)].into(),
                bbox: rand_box(&mut rng),
            })
            .collect();
        let thr = [0.1, 0.3, 0.5, 0.7][rng.random_range(0..4)];
        let (want_classes, want_map) = brute_evaluate(&dets, &gts, thr);
        let ok = match deteval::evaluate(&dets, &gts, thr, None) {
            Ok(rep) => {
                let close = |a: Option<f64>, b: Option<f64>, worst: &mut f64| match (a, b) {
                    (Some(x), Some(y)) => {
                        *worst = worst.max((x - y).abs());
                        (x - y).abs() <= 1e-12
                    }
                    (None, None) => true,
                    _ => false,
                };
                rep.classes.len() == want_classes.len()
                    && rep
                        .classes
                        .iter()
                        .zip(&want_classes)
                        .all(|(c, w)| c.class == w.0 && close(c.ap, w.1, &mut worst))
                    && close(Some(rep.map), want_map, &mut worst)
            }
            Err(deteval::EvalError::NoDefinedAp) => want_map.is_none(),
            Err(_) => false,
        };
        mismatches += (!ok) as usize;
    }

    // TP, FP, TP over two ground truths
    let curve = deteval::pr_curve(&[true, false, true], 2);
    let fixture = deteval::average_precision(&curve).unwrap();
    let fixture_ok = (fixture - 5.0 / 6.0).abs() <= 1e-12;
    verdict(
        mismatches == 0 && fixture_ok,
        format!(
            "{mismatches} mismatches vs brute force over 10000 instances (max diff {worst:.1e}); hand fixture AP {fixture:.6}"
        ),
    )
}

// ---------------------------------------------------------------- determinism

fn check_determinism() -> Verdict {
    let cfg = ExperimentConfig {
        seed: 2024,
        ..ExperimentConfig::default()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = cmd_pipeline(&cfg, a.path()).unwrap();
    let mb = cmd_pipeline(&cfg, b.path()).unwrap();
    let (fa, fb) = (
        std::fs::read(a.path().join("manifest.json")).unwrap(),
        std::fs::read(b.path().join("manifest.json")).unwrap(),
    );
    verdict(
        fa == fb && ma == mb,
        format!(
            "{} artifacts; manifests {}",
            ma.artifacts.len(),
            if fa == fb { "byte-identical" } else { "differ" }
        ),
    )
}

type Check = (&'static str, fn() -> Verdict);

fn main() {
    let checks: [Check; 8] = [
        ("aos occlusion suppression", check_occlusion_suppression),
        ("noise averaging", check_noise_averaging),
        ("homography correctness", check_homography),
        ("pyramid reconstruction", check_pyramid),
        ("omp correctness", check_omp),
        ("fusion sanity", check_fusion),
        ("metric oracle equivalence", check_metrics),
        ("pipeline determinism", check_determinism),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let v = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        failed += (!v.pass) as usize;
        println!("[{}] {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    if failed > 0 {
        println!("{failed} acceptance check(s) failed");
        std::process::exit(1);
    }
}
