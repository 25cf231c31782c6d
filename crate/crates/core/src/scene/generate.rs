//! Procedural "packed" scenes: upright objects rejection-sampled onto the
//! table until they stand close together without overlapping.

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::collision::gjk_intersects;
use super::primitives::{Primitive, Shape};
use super::Scene;
use crate::error::{Error, Result};
use crate::geom::{Aabb, Pose};

/// Size ranges and sampling limits for packed-scene generation.
///
/// The defaults produce desk-scale clutter: thin plates and slim cylinders
/// that a 0.08 m gripper can take from the side, plus some chunkier solids
/// that only reveal a grasp after exploration.
#[derive(Debug, Clone, Copy)]
pub struct PackedSceneParams {
    pub box_half_xy: (f64, f64),
    pub box_half_z: (f64, f64),
    pub cylinder_radius: (f64, f64),
    pub cylinder_height: (f64, f64),
    pub sphere_radius: (f64, f64),
    /// Required gap between placed objects.
    pub clearance: f64,
    pub max_attempts_per_object: usize,
}

impl Default for PackedSceneParams {
    fn default() -> Self {
        PackedSceneParams {
            box_half_xy: (0.008, 0.028),
            box_half_z: (0.02, 0.05),
            cylinder_radius: (0.01, 0.025),
            cylinder_height: (0.05, 0.1),
            sphere_radius: (0.015, 0.03),
            clearance: 0.002,
            max_attempts_per_object: 200,
        }
    }
}

/// Generate a packed scene with default size ranges. Deterministic in `seed`.
pub fn generate_packed_scene(seed: u64, n_objects: usize, workspace: Aabb) -> Result<Scene> {
    generate_packed_scene_with(seed, n_objects, workspace, &PackedSceneParams::default())
}

pub fn generate_packed_scene_with(
    seed: u64,
    n_objects: usize,
    workspace: Aabb,
    params: &PackedSceneParams,
) -> Result<Scene> {
    assert!(n_objects >= 2, "packed scenes need at least two objects");
    let table_height = workspace.min.z;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut objects: Vec<Primitive> = Vec::with_capacity(n_objects);

    for id in 0..n_objects {
        let mut placed = false;
        for _ in 0..params.max_attempts_per_object {
            let candidate = sample_object(id as u32, &mut rng, workspace, table_height, params);
            let overlaps = objects
                .iter()
                .any(|o| gjk_intersects(o, &candidate, params.clearance));
            if !overlaps {
                objects.push(candidate);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::ScenePlacement {
                seed,
                object: id,
                attempts: params.max_attempts_per_object,
            });
        }
    }

    Ok(Scene {
        seed,
        table_height,
        workspace,
        objects,
        target_id: None,
    })
}

fn sample_range(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    rng.gen_range(lo..hi)
}

fn sample_object(
    id: u32,
    rng: &mut ChaCha8Rng,
    workspace: Aabb,
    table_height: f64,
    params: &PackedSceneParams,
) -> Primitive {
    let shape = match rng.gen_range(0u32..3) {
        0 => {
            // One thin horizontal axis keeps most boxes side-graspable.
            let hx = sample_range(rng, params.box_half_xy);
            let hy = sample_range(rng, params.box_half_xy);
            let hz = sample_range(rng, params.box_half_z);
            Shape::Box {
                half_extents: Vector3::new(hx, hy, hz),
            }
        }
        1 => Shape::Cylinder {
            radius: sample_range(rng, params.cylinder_radius),
            height: sample_range(rng, params.cylinder_height),
        },
        _ => Shape::Sphere {
            radius: sample_range(rng, params.sphere_radius),
        },
    };
    let yaw = rng.gen_range(0.0..std::f64::consts::TAU);
    let reach = shape.horizontal_reach() + params.clearance;
    let x = rng.gen_range(workspace.min.x + reach..workspace.max.x - reach);
    let y = rng.gen_range(workspace.min.y + reach..workspace.max.y - reach);
    let z = table_height - shape.min_z();
    Primitive::new(
        id,
        shape,
        Pose::new(
            UnitQuaternion::from_euler_angles(0.0, 0.0, yaw),
            Vector3::new(x, y, z),
        ),
    )
}
