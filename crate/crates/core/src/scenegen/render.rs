use super::{ground_texture, SceneDescription, SceneError};
use crate::camera::{project, Intrinsics, Pose};
use crate::deteval::GroundTruthRecord;
use crate::imgcore::{BBoxPx, Channel, ImagePlane};
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

// Rays that never reach the ground (above the horizon) see this value.
const SKY: f64 = 0.0;

fn ground_value(scene: &SceneDescription, channel: Channel, x: f64, y: f64) -> f64 {
    // Later targets are painted over earlier ones.
    let hit = scene.targets.iter().rev().find(|t| t.contains(x, y));
    match (channel, hit) {
        (Channel::Thermal, Some(t)) => t.thermal_intensity,
        (Channel::Thermal, None) => scene.ambient_thermal,
        (_, Some(t)) => t.visible_albedo,
        (_, None) => ground_texture(scene.ground_texture_seed, x, y),
    }
}

/// Render one noisy view of `scene`.
///
/// Each pixel centre casts a ray; the nearest surface along it (leaf disc,
/// else target or ground) sets the value. Additive Gaussian noise with
/// standard deviation `scene.noise_sigma` is drawn from `noise_seed` in
/// row-major order, and the result is clamped to `[0, 1]`.
pub fn render_view(
    scene: &SceneDescription,
    intr: &Intrinsics,
    pose: &Pose,
    channel: Channel,
    noise_seed: u64,
) -> Result<ImagePlane, SceneError> {
    if !matches!(channel, Channel::Visible | Channel::Thermal) {
        return Err(SceneError::UnsupportedChannel(channel));
    }
    let origin = pose.center();
    if origin.z <= 0.0 {
        return Err(SceneError::CameraBelowGround(origin.z));
    }
    let (w, h) = (intr.width(), intr.height());

    // Ray directions, nearest hit parameter and value per pixel.
    let rows: Vec<Vec<(Vector3<f64>, f64, f64)>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| {
                    let d = pose.ray_direction(intr, x as f64, y as f64);
                    if d.z >= 0.0 {
                        return (d, f64::INFINITY, SKY);
                    }
                    let t = -origin.z / d.z;
                    let p = origin + d * t;
                    (d, t, ground_value(scene, channel, p.x, p.y))
                })
                .collect()
        })
        .collect();
    let mut dirs = Vec::with_capacity(w * h);
    let mut depth = Vec::with_capacity(w * h);
    let mut data = Vec::with_capacity(w * h);
    for row in rows {
        for (d, t, v) in row {
            dirs.push(d);
            depth.push(t);
            data.push(v);
        }
    }

    for occ in &scene.occluders {
        let value = if channel == Channel::Thermal {
            occ.leaf_thermal
        } else {
            occ.leaf_albedo
        };
        let r = occ.leaf_radius;
        for leaf in &occ.leaves {
            let (xs, ys) = leaf_footprint(intr, pose, leaf, r);
            for y in ys {
                for x in xs.clone() {
                    let i = y * w + x;
                    let d = &dirs[i];
                    if d.z == 0.0 {
                        continue;
                    }
                    let t = (leaf[2] - origin.z) / d.z;
                    if !(t > 0.0 && t < depth[i]) {
                        continue;
                    }
                    let px = origin.x + t * d.x - leaf[0];
                    let py = origin.y + t * d.y - leaf[1];
                    if px * px + py * py <= r * r {
                        depth[i] = t;
                        data[i] = value;
                    }
                }
            }
        }
    }

    if scene.noise_sigma > 0.0 {
        let normal =
            Normal::new(0.0, scene.noise_sigma).map_err(|e| SceneError::Invalid(format!("noise_sigma: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        for v in &mut data {
            *v += normal.sample(&mut rng);
        }
    }
    for v in &mut data {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(ImagePlane::from_vec(w, h, channel, data)?)
}

/// Pixel window that can contain the projection of a horizontal disc: the
/// hull of its bounding square's projected corners, or the whole frame when
/// a corner does not project.
fn leaf_footprint(
    intr: &Intrinsics,
    pose: &Pose,
    c: &[f64; 3],
    r: f64,
) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
    let full = (0..intr.width(), 0..intr.height());
    let mut pts = [(0.0, 0.0); 4];
    for (k, (sx, sy)) in [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
        .into_iter()
        .enumerate()
    {
        match project(intr, pose, &Vector3::new(c[0] + sx * r, c[1] + sy * r, c[2])) {
            Some(p) => pts[k] = p,
            None => return full,
        }
    }
    let Some(hull) = BBoxPx::hull(&pts) else {
        return full;
    };
    // one pixel of slack for rounding at the hull boundary
    let grown = BBoxPx::new(
        hull.x_min() - 1.0,
        hull.y_min() - 1.0,
        hull.x_max() + 1.0,
        hull.y_max() + 1.0,
    )
    .expect("grown hull is valid");
    grown.pixel_range(intr.width(), intr.height())
}

/// Geometric ground truth for one view: the axis-aligned hull of each
/// target's projected ground corners, clipped to `[0, w-1] x [0, h-1]`.
/// Occlusion is ignored; targets with a corner behind the camera are skipped.
pub fn export_ground_truth(
    scene: &SceneDescription,
    intr: &Intrinsics,
    pose: &Pose,
    image_id: &str,
) -> Vec<GroundTruthRecord> {
    let (x_hi, y_hi) = ((intr.width() - 1) as f64, (intr.height() - 1) as f64);
    scene
        .targets
        .iter()
        .filter_map(|t| {
            let corners: Option<Vec<(f64, f64)>> = t
                .corners()
                .iter()
                .map(|c| project(intr, pose, &Vector3::new(c[0], c[1], 0.0)))
                .collect();
            let hull = BBoxPx::hull(&corners?)?;
            let bbox = hull.clip(0.0, 0.0, x_hi, y_hi)?;
            Some(GroundTruthRecord {
                image_id: image_id.to_string(),
                class_label: t.class_label.clone(),
                bbox,
            })
        })
        .collect()
}
