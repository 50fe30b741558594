use super::{Extent, OccluderSpec, SceneDescription, SceneError, TargetSpec, MAX_PLACEMENT_ATTEMPTS};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TargetPlacement {
    /// Anywhere inside the extent.
    #[default]
    Uniform,
    /// Near the trunk of a randomly chosen tree (uniform if there are none).
    UnderCanopy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetTemplate {
    pub class_label: String,
    pub count: usize,
    pub size: [f64; 2],
    pub visible_albedo: f64,
    pub thermal_intensity: f64,
}

impl Default for TargetTemplate {
    fn default() -> Self {
        TargetTemplate {
            class_label: "person".into(),
            count: 1,
            size: [1.8, 0.6],
            visible_albedo: 0.8,
            thermal_intensity: 0.9,
        }
    }
}

/// Knobs for [`generate_scene`]. Two-element arrays are `[lo, hi]` ranges
/// sampled uniformly per tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneParams {
    pub extent: Extent,
    pub tree_count: usize,
    pub min_tree_separation: f64,
    pub canopy_radius: [f64; 2],
    pub crown_base: [f64; 2],
    pub crown_depth: [f64; 2],
    pub leaf_count: usize,
    pub leaf_radius: f64,
    pub leaf_albedo: f64,
    pub leaf_thermal: f64,
    pub targets: Vec<TargetTemplate>,
    pub target_placement: TargetPlacement,
    pub ambient_thermal: f64,
    pub noise_sigma: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            extent: Extent::default(),
            tree_count: 40,
            min_tree_separation: 3.0,
            canopy_radius: [2.0, 3.0],
            crown_base: [6.0, 9.0],
            crown_depth: [4.0, 7.0],
            leaf_count: 45,
            leaf_radius: 0.3,
            leaf_albedo: 0.15,
            leaf_thermal: 0.25,
            targets: vec![TargetTemplate::default()],
            target_placement: TargetPlacement::UnderCanopy,
            ambient_thermal: 0.3,
            noise_sigma: 0.0,
        }
    }
}

fn in_range(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2], name: &str) -> Result<f64, SceneError> {
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(SceneError::Invalid(format!("{name}: range [{lo}, {hi}] is empty")));
    }
    Ok(if lo == hi { lo } else { rng.random_range(lo..hi) })
}

fn in_disc(rng: &mut ChaCha8Rng, radius: f64) -> (f64, f64) {
    let r = radius * rng.random::<f64>().sqrt();
    let theta = std::f64::consts::TAU * rng.random::<f64>();
    (r * theta.cos(), r * theta.sin())
}

/// Deterministic scene synthesis: identical `(params, seed)` give a
/// byte-identical serialized scene.
pub fn generate_scene(params: &SceneParams, seed: u64) -> Result<SceneDescription, SceneError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ground_texture_seed = rng.next_u64();
    let e = params.extent;
    if !(e.x_min < e.x_max && e.y_min < e.y_max) {
        return Err(SceneError::Invalid("extent must have positive area".into()));
    }

    let mut centers: Vec<[f64; 2]> = Vec::with_capacity(params.tree_count);
    let mut attempts = 0;
    let sep2 = params.min_tree_separation.max(0.0).powi(2);
    while centers.len() < params.tree_count {
        if attempts == MAX_PLACEMENT_ATTEMPTS {
            return Err(SceneError::CannotSatisfySeparation {
                placed: centers.len(),
                requested: params.tree_count,
                attempts,
            });
        }
        attempts += 1;
        let c = [rng.random_range(e.x_min..=e.x_max), rng.random_range(e.y_min..=e.y_max)];
        let clear = centers
            .iter()
            .all(|p| (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) >= sep2);
        if clear {
            centers.push(c);
        }
    }

    let mut occluders = Vec::with_capacity(centers.len());
    for center in centers {
        let canopy_radius = in_range(&mut rng, params.canopy_radius, "canopy_radius")?;
        let z_min = in_range(&mut rng, params.crown_base, "crown_base")?;
        let z_max = z_min + in_range(&mut rng, params.crown_depth, "crown_depth")?;
        let leaves = (0..params.leaf_count)
            .map(|_| {
                let (dx, dy) = in_disc(&mut rng, canopy_radius);
                let z = if z_max > z_min {
                    rng.random_range(z_min..=z_max)
                } else {
                    z_min
                };
                [center[0] + dx, center[1] + dy, z]
            })
            .collect();
        occluders.push(OccluderSpec {
            center,
            height_band: [z_min, z_max],
            canopy_radius,
            leaf_count: params.leaf_count,
            leaf_radius: params.leaf_radius,
            leaf_albedo: params.leaf_albedo,
            leaf_thermal: params.leaf_thermal,
            leaves,
        });
    }

    let mut targets = Vec::new();
    for tpl in &params.targets {
        let (hx, hy) = (tpl.size[0] / 2.0, tpl.size[1] / 2.0);
        let (x_lo, x_hi, y_lo, y_hi) = (e.x_min + hx, e.x_max - hx, e.y_min + hy, e.y_max - hy);
        if !(x_lo <= x_hi && y_lo <= y_hi) {
            return Err(SceneError::Invalid(format!(
                "target `{}` does not fit inside the extent",
                tpl.class_label
            )));
        }
        for _ in 0..tpl.count {
            let center = match params.target_placement {
                TargetPlacement::UnderCanopy if !occluders.is_empty() => {
                    let tree = &occluders[rng.random_range(0..occluders.len())];
                    let (dx, dy) = in_disc(&mut rng, 0.25 * tree.canopy_radius);
                    [
                        (tree.center[0] + dx).clamp(x_lo, x_hi),
                        (tree.center[1] + dy).clamp(y_lo, y_hi),
                    ]
                }
                _ => [rng.random_range(x_lo..=x_hi), rng.random_range(y_lo..=y_hi)],
            };
            targets.push(TargetSpec {
                class_label: tpl.class_label.clone(),
                center,
                size: tpl.size,
                visible_albedo: tpl.visible_albedo,
                thermal_intensity: tpl.thermal_intensity,
            });
        }
    }

    let scene = SceneDescription {
        extent: e,
        ground_texture_seed,
        targets,
        occluders,
        ambient_thermal: params.ambient_thermal,
        noise_sigma: params.noise_sigma,
    };
    scene.validate()?;
    Ok(scene)
}
