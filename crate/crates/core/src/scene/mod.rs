//! Ground-truth synthetic worlds: primitive solids on a table plane.
//!
//! The scene is the simulation's hidden truth. Rendering, target selection,
//! and the grasp-outcome oracle all answer against the exact analytic
//! geometry; nothing here consults the voxel map.

mod collision;
mod generate;
mod oracle;
mod primitives;
mod render;

pub use collision::gjk_intersects;
pub use generate::{generate_packed_scene, generate_packed_scene_with, PackedSceneParams};
pub use oracle::{execute_grasp, execute_grasp_with, FRICTION_CONE_HALF_ANGLE};
pub use primitives::{LineHit, Primitive, Shape};
pub use render::{render_depth, render_id_mask, select_target};

use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Aabb, Pose};

/// A world of primitive solids resting on a table plane, with an optional
/// designated target object.
///
/// Scenes serialize to JSON (units meters, quaternions scalar-last):
///
/// ```json
/// {
///   "seed": 7,
///   "table_height": 0.0,
///   "workspace": {"min": [0.0,0.0,0.0], "max": [0.3,0.3,0.3]},
///   "objects": [
///     {"id": 0, "shape": "box", "dims": [0.02,0.015,0.04],
///      "pose": {"quat": [0.0,0.0,0.0,1.0], "pos": [0.1,0.2,0.04]}}
///   ],
///   "target_id": 0
/// }
/// ```
///
/// `dims` holds box half-extents, `[radius, height]` for cylinders, or
/// `[radius]` for spheres. `target_id` is `null` until a target is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub seed: u64,
    pub table_height: f64,
    pub workspace: Aabb,
    pub objects: Vec<Primitive>,
    pub target_id: Option<u32>,
}

impl Scene {
    pub fn object(&self, id: u32) -> Option<&Primitive> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn target(&self) -> Option<&Primitive> {
        self.target_id.and_then(|id| self.object(id))
    }

    /// Tight axis-aligned bound of the target under its pose.
    pub fn target_bbox(&self) -> Option<Aabb> {
        self.target().map(|t| t.aabb())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|source| Error::Parse {
            path: path.display().to_string(),
            source,
        })?;
        fs::write(path, json + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Scene> {
        let text = fs::read_to_string(path)?;
        let scene: Scene = serde_json::from_str(&text).map_err(|source| Error::Parse {
            path: path.display().to_string(),
            source,
        })?;
        if let Some(id) = scene.target_id {
            if scene.object(id).is_none() {
                return Err(Error::InvalidConfig(format!(
                    "{}: target_id {id} does not match any object",
                    path.display()
                )));
            }
        }
        Ok(scene)
    }
}

/// Result of executing a grasp against the ground-truth geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GraspOutcome {
    Success,
    Failure(FailureReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    /// No antipodal contact: the closing segment misses the target, or the
    /// contact normals fall outside the friction cone.
    Slip,
    /// A finger swept volume hits a non-target object or the table.
    Collision,
    /// The target's local width along the closing line exceeds the gripper's
    /// maximum opening.
    WidthExceeded,
}

impl GraspOutcome {
    pub fn is_success(&self) -> bool {
        matches!(self, GraspOutcome::Success)
    }
}

#[derive(Serialize, Deserialize)]
struct PrimitiveRepr {
    id: u32,
    shape: String,
    dims: Vec<f64>,
    pose: Pose,
}

impl Serialize for Primitive {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let (shape, dims) = match self.shape {
            Shape::Box { half_extents } => {
                ("box", vec![half_extents.x, half_extents.y, half_extents.z])
            }
            Shape::Cylinder { radius, height } => ("cylinder", vec![radius, height]),
            Shape::Sphere { radius } => ("sphere", vec![radius]),
        };
        PrimitiveRepr {
            id: self.id,
            shape: shape.to_string(),
            dims,
            pose: self.pose,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Primitive {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = PrimitiveRepr::deserialize(d)?;
        let shape = match (repr.shape.as_str(), repr.dims.as_slice()) {
            ("box", [hx, hy, hz]) => Shape::Box {
                half_extents: Vector3::new(*hx, *hy, *hz),
            },
            ("cylinder", [radius, height]) => Shape::Cylinder {
                radius: *radius,
                height: *height,
            },
            ("sphere", [radius]) => Shape::Sphere { radius: *radius },
            (kind, dims) => {
                return Err(D::Error::custom(format!(
                    "unknown shape {kind:?} with {} dims",
                    dims.len()
                )))
            }
        };
        if !shape.validate() {
            return Err(D::Error::custom("primitive dimensions must be positive"));
        }
        Ok(Primitive::new(repr.id, shape, repr.pose))
    }
}

/// The default 0.3 m workspace cube with its corner at the world origin and
/// the table plane at z = 0.
pub fn default_workspace() -> Aabb {
    Aabb::new(Vector3::zeros(), Vector3::repeat(0.3))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scene_roundtrip_is_bit_exact() {
        let scene = generate_packed_scene(7, 5, default_workspace()).unwrap();
        let json = serde_json::to_string_pretty(&scene).unwrap();
        let back: Scene = serde_json::from_str(&json).unwrap();
        assert_eq!(scene, back);
        let again = serde_json::to_string_pretty(&back).unwrap();
        assert_eq!(json, again);
    }

    #[test]
    fn target_bbox_of_sphere_is_center_pm_radius() {
        let mut scene = generate_packed_scene(3, 2, default_workspace()).unwrap();
        let p = Vector3::new(0.1, 0.12, 0.04);
        scene.objects.push(Primitive::new(
            99,
            Shape::Sphere { radius: 0.04 },
            Pose::from_translation(p),
        ));
        scene.target_id = Some(99);
        let bbox = scene.target_bbox().unwrap();
        assert_eq!(bbox.min, p - Vector3::repeat(0.04));
        assert_eq!(bbox.max, p + Vector3::repeat(0.04));
    }

    #[test]
    fn malformed_scene_reports_path_and_location() {
        let dir = std::env::temp_dir().join("nbv_scene_parse_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.json");
        std::fs::write(&path, "{\"seed\": 1,\n  \"bogus\"").unwrap();
        let err = Scene::load(&path).unwrap_err();
        let msg = format!("{err}: {}", {
            use std::error::Error as _;
            err.source().map(|s| s.to_string()).unwrap_or_default()
        });
        assert!(msg.contains("bad.json"));
        assert!(msg.contains("line"), "expected line info, got: {msg}");
    }
}
