//! Geometric grasp-outcome oracle: decides against the ground-truth scene
//! whether a parallel-jaw grasp would lift the target.
//!
//! Success requires, in order:
//!
//! 1. antipodal contact: the closing segment between the fingertip centers
//!    intersects the target and the target's local width along the closing
//!    line fits inside the maximum opening,
//! 2. friction: both contact normals lie within the friction cone around the
//!    closing axis,
//! 3. clearance: neither finger's swept volume (closing from the commanded
//!    opening to contact) touches a non-target object or the table.
//!
//! The first violated condition names the failure.

use nalgebra::Vector3;

use super::primitives::{Primitive, Shape};
use super::{collision::gjk_intersects, FailureReason, GraspOutcome, Scene};
use crate::geom::Pose;
use crate::grasp::{GraspCandidate, GripperModel};

/// Default friction-cone half-angle between a contact normal and the closing
/// axis, radians (30°).
pub const FRICTION_CONE_HALF_ANGLE: f64 = std::f64::consts::FRAC_PI_6;

pub fn execute_grasp(scene: &Scene, grasp: &GraspCandidate, gripper: &GripperModel) -> GraspOutcome {
    execute_grasp_with(scene, grasp, gripper, FRICTION_CONE_HALF_ANGLE)
}

pub fn execute_grasp_with(
    scene: &Scene,
    grasp: &GraspCandidate,
    gripper: &GripperModel,
    friction_cone_half_angle: f64,
) -> GraspOutcome {
    debug_assert!(grasp.pose.is_finite() && gripper.max_width > 0.0);
    let target = scene.target().expect("scene must have a target");
    let center = grasp.pose.translation();
    let axis = grasp.closing_axis();
    let half_span = grasp.width / 2.0;

    // Chord of the target along the closing line, as signed offsets from the
    // tool center. Primitives are convex, so the chord is one interval.
    let Some(hit) = target.line_hit(center, axis) else {
        return GraspOutcome::Failure(FailureReason::Slip);
    };
    if hit.t_in > half_span || hit.t_out < -half_span {
        // The fingers' span never reaches the target.
        return GraspOutcome::Failure(FailureReason::Slip);
    }
    let local_width = hit.t_out - hit.t_in;
    if local_width > gripper.max_width {
        return GraspOutcome::Failure(FailureReason::WidthExceeded);
    }

    // Friction-cone proxy: contact normals within the cone around the axis.
    let cos_min = friction_cone_half_angle.cos();
    if hit.normal_in.dot(&axis) > -cos_min || hit.normal_out.dot(&axis) < cos_min {
        return GraspOutcome::Failure(FailureReason::Slip);
    }

    // Finger swept volumes: each finger closes from its commanded opening to
    // the contact, sweeping a box past the fingertip.
    let f = gripper.finger_dims;
    for (contact_t, side) in [(hit.t_in, -1.0), (hit.t_out, 1.0)] {
        let open = side * half_span;
        // Inner face travels from the opening toward the contact (or stays
        // put if already touching); the body extends one thickness outward.
        let (y_lo, y_hi) = if side < 0.0 {
            (open - f.y, contact_t.max(open))
        } else {
            (contact_t.min(open), open + f.y)
        };
        let center_local = Vector3::new(0.0, (y_lo + y_hi) / 2.0, -f.z / 2.0);
        let half = Vector3::new(f.x / 2.0, (y_hi - y_lo) / 2.0, f.z / 2.0);
        let swept = Primitive::new(
            u32::MAX,
            Shape::Box { half_extents: half },
            grasp.pose.compose(&Pose::from_translation(center_local)),
        );
        if swept.lowest_z() < scene.table_height {
            return GraspOutcome::Failure(FailureReason::Collision);
        }
        for obj in &scene.objects {
            if obj.id == target.id {
                continue;
            }
            if gjk_intersects(obj, &swept, 0.0) {
                return GraspOutcome::Failure(FailureReason::Collision);
            }
        }
    }

    GraspOutcome::Success
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Aabb;
    use crate::scene::default_workspace;
    use nalgebra::UnitQuaternion;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gripper() -> GripperModel {
        GripperModel::default()
    }

    /// Box target standing free at `pos`, grasp centered on it closing along
    /// world y with the approach pointing down.
    fn scene_with_box(pos: Vector3<f64>, half: Vector3<f64>) -> Scene {
        Scene {
            seed: 0,
            table_height: 0.0,
            workspace: default_workspace(),
            objects: vec![Primitive::new(
                0,
                Shape::Box { half_extents: half },
                Pose::from_translation(pos),
            )],
            target_id: Some(0),
        }
    }

    fn grasp_at(pos: Vector3<f64>, width: f64) -> GraspCandidate {
        // Rotation about y by π: local y -> world y (closing), local z ->
        // world -z (approach straight down), right-handed.
        let rot = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), std::f64::consts::PI);
        GraspCandidate {
            pose: Pose::new(rot, pos),
            width,
            quality: 1.0,
            voxel: 0,
        }
    }

    #[test]
    fn ideal_antipodal_box_grasp_succeeds() {
        let pos = Vector3::new(0.15, 0.15, 0.08);
        let scene = scene_with_box(pos, Vector3::new(0.03, 0.02, 0.04));
        let grasp = grasp_at(pos, 0.05);
        assert_eq!(execute_grasp(&scene, &grasp, &gripper()), GraspOutcome::Success);
    }

    #[test]
    fn narrow_gripper_reports_width_exceeded() {
        let pos = Vector3::new(0.15, 0.15, 0.08);
        let scene = scene_with_box(pos, Vector3::new(0.03, 0.02, 0.04));
        let grasp = grasp_at(pos, 0.03);
        let tight = GripperModel {
            max_width: 0.03,
            ..gripper()
        };
        assert_eq!(
            execute_grasp(&scene, &grasp, &tight),
            GraspOutcome::Failure(FailureReason::WidthExceeded)
        );
    }

    #[test]
    fn missing_the_target_slips() {
        let pos = Vector3::new(0.15, 0.15, 0.08);
        let scene = scene_with_box(pos, Vector3::new(0.02, 0.02, 0.03));
        let grasp = grasp_at(pos + Vector3::new(0.1, 0.0, 0.0), 0.05);
        assert_eq!(
            execute_grasp(&scene, &grasp, &gripper()),
            GraspOutcome::Failure(FailureReason::Slip)
        );
    }

    #[test]
    fn skewed_contact_normals_slip() {
        // Grasping a sphere off-center: the contact normals tilt away from
        // the closing axis beyond the 30° cone.
        let pos = Vector3::new(0.15, 0.15, 0.1);
        let scene = Scene {
            seed: 0,
            table_height: 0.0,
            workspace: default_workspace(),
            objects: vec![Primitive::new(
                0,
                Shape::Sphere { radius: 0.03 },
                Pose::from_translation(pos),
            )],
            target_id: Some(0),
        };
        // Closing line offset from the center by 0.8 r: contact normals are
        // ~53° off the axis.
        let grasp = grasp_at(pos + Vector3::new(0.024, 0.0, 0.0), 0.06);
        assert_eq!(
            execute_grasp(&scene, &grasp, &gripper()),
            GraspOutcome::Failure(FailureReason::Slip)
        );
        // Centered it succeeds.
        let grasp = grasp_at(pos, 0.065);
        assert_eq!(execute_grasp(&scene, &grasp, &gripper()), GraspOutcome::Success);
    }

    #[test]
    fn distractor_in_finger_volume_collides() {
        let pos = Vector3::new(0.15, 0.15, 0.08);
        let mut scene = scene_with_box(pos, Vector3::new(0.03, 0.015, 0.04));
        // A distractor right where the +y finger must close.
        scene.objects.push(Primitive::new(
            1,
            Shape::Box {
                half_extents: Vector3::new(0.01, 0.01, 0.04),
            },
            Pose::from_translation(pos + Vector3::new(0.0, 0.035, 0.0)),
        ));
        let grasp = grasp_at(pos, 0.05);
        assert_eq!(
            execute_grasp(&scene, &grasp, &gripper()),
            GraspOutcome::Failure(FailureReason::Collision)
        );
        // Oracle cross-check: the distractor indeed overlaps the analytic
        // swept box of the +y finger.
        let f = gripper().finger_dims;
        let swept = Primitive::new(
            9,
            Shape::Box {
                half_extents: Vector3::new(f.x / 2.0, (0.025 - 0.015 + f.y) / 2.0, f.z / 2.0),
            },
            Pose::from_translation(pos + Vector3::new(0.0, (0.015 + 0.025 + f.y) / 2.0, f.z / 2.0)),
        );
        assert!(gjk_intersects(&scene.objects[1], &swept, 0.0));
    }

    #[test]
    fn fingers_below_table_collide() {
        // Vertical closing axis on a sphere resting on the table: the lower
        // finger must dive under the table plane.
        let pos = Vector3::new(0.15, 0.15, 0.03);
        let scene = Scene {
            seed: 0,
            table_height: 0.0,
            workspace: default_workspace(),
            objects: vec![Primitive::new(
                0,
                Shape::Sphere { radius: 0.03 },
                Pose::from_translation(pos),
            )],
            target_id: Some(0),
        };
        // Closing along world z (approach horizontal).
        let rot = UnitQuaternion::from_axis_angle(
            &Vector3::x_axis(),
            -std::f64::consts::FRAC_PI_2,
        );
        let grasp = GraspCandidate {
            pose: Pose::new(rot, pos),
            width: 0.07,
            quality: 1.0,
            voxel: 0,
        };
        assert_eq!(
            execute_grasp(&scene, &grasp, &gripper()),
            GraspOutcome::Failure(FailureReason::Collision)
        );
    }

    #[test]
    fn outcome_invariant_under_table_preserving_rigid_transforms() {
        let pos = Vector3::new(0.15, 0.15, 0.08);
        let mut scene = scene_with_box(pos, Vector3::new(0.03, 0.018, 0.04));
        scene.objects.push(Primitive::new(
            1,
            Shape::Cylinder {
                radius: 0.012,
                height: 0.08,
            },
            Pose::from_translation(pos + Vector3::new(0.0, 0.045, 0.0)),
        ));
        let base_grasps = [
            grasp_at(pos, 0.05),
            grasp_at(pos + Vector3::new(0.0, 0.002, 0.01), 0.06),
            grasp_at(pos + Vector3::new(0.1, 0.0, 0.0), 0.05),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            // Rigid transforms that keep the table a horizontal plane:
            // rotation about z plus translation (table height follows).
            let transform = Pose::new(
                UnitQuaternion::from_axis_angle(
                    &Vector3::z_axis(),
                    rng.gen_range(-3.0..3.0),
                ),
                Vector3::new(
                    rng.gen_range(-0.5..0.5),
                    rng.gen_range(-0.5..0.5),
                    rng.gen_range(-0.2..0.2),
                ),
            );
            let moved = Scene {
                seed: scene.seed,
                table_height: scene.table_height + transform.translation().z,
                workspace: Aabb::new(
                    scene.workspace.min + transform.translation(),
                    scene.workspace.max + transform.translation(),
                ),
                objects: scene
                    .objects
                    .iter()
                    .map(|o| Primitive::new(o.id, o.shape, transform.compose(&o.pose)))
                    .collect(),
                target_id: scene.target_id,
            };
            for grasp in &base_grasps {
                let moved_grasp = GraspCandidate {
                    pose: transform.compose(&grasp.pose),
                    ..*grasp
                };
                assert_eq!(
                    execute_grasp(&scene, grasp, &gripper()),
                    execute_grasp(&moved, &moved_grasp, &gripper()),
                );
            }
        }
    }
}
