//! Rigid-body poses, axis-aligned boxes, and shared math helpers.
//!
//! Quaternions are serialized scalar-last (`[x, y, z, w]`) everywhere in this
//! repository; [`Pose`] owns that convention so file formats stay consistent.

use nalgebra::{Isometry3, Point3, Rotation3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

/// Rigid transform (rotation + translation) in meters.
///
/// Wraps [`nalgebra::Isometry3`] and fixes the serialization layout:
/// `{"quat": [x, y, z, w], "pos": [x, y, z]}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose(pub Isometry3<f64>);

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    quat: [f64; 4],
    pos: [f64; 3],
}

impl Pose {
    pub fn identity() -> Self {
        Pose(Isometry3::identity())
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Pose(Isometry3::from_parts(
            Translation3::from(translation),
            rotation,
        ))
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self::new(UnitQuaternion::identity(), translation)
    }

    /// Quaternion components in scalar-last order `[x, y, z, w]`.
    pub fn quat_xyzw(&self) -> [f64; 4] {
        let q = self.0.rotation.quaternion();
        [q.i, q.j, q.k, q.w]
    }

    pub fn from_quat_xyzw(quat: [f64; 4], pos: [f64; 3]) -> Self {
        let q = nalgebra::Quaternion::new(quat[3], quat[0], quat[1], quat[2]);
        Pose(Isometry3::from_parts(
            Translation3::new(pos[0], pos[1], pos[2]),
            UnitQuaternion::from_quaternion(q),
        ))
    }

    pub fn rotation(&self) -> UnitQuaternion<f64> {
        self.0.rotation
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.0.translation.vector
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose(self.0 * other.0)
    }

    pub fn inverse(&self) -> Pose {
        Pose(self.0.inverse())
    }

    pub fn transform_point(&self, p: Vector3<f64>) -> Vector3<f64> {
        (self.0 * Point3::from(p)).coords
    }

    pub fn rotate_vector(&self, v: Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    pub fn is_finite(&self) -> bool {
        self.translation().iter().all(|c| c.is_finite())
            && self.quat_xyzw().iter().all(|c| c.is_finite())
    }

    /// Camera-to-world pose with the optical axis (+z) aimed from `eye` at
    /// `target`. The image x axis is kept horizontal where possible; for
    /// straight-down (or straight-up) views the world +x axis is used as the
    /// horizontal reference so the layout stays deterministic.
    pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>) -> Pose {
        let forward = (target - eye).normalize();
        let up = Vector3::z();
        let right = if forward.dot(&up).abs() > 1.0 - 1e-9 {
            // Degenerate: looking along ±z, fall back to world +x as "right".
            Vector3::x()
        } else {
            forward.cross(&up).normalize()
        };
        // Camera frame: +x right, +y down (image rows), +z forward.
        let down = forward.cross(&right).normalize();
        let rot = Rotation3::from_basis_unchecked(&[right, down, forward]);
        Pose::new(UnitQuaternion::from_rotation_matrix(&rot), eye)
    }
}

impl Serialize for Pose {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let t = self.translation();
        PoseRepr {
            quat: self.quat_xyzw(),
            pos: [t.x, t.y, t.z],
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = PoseRepr::deserialize(d)?;
        Ok(Pose::from_quat_xyzw(repr.quat, repr.pos))
    }
}

/// Axis-aligned bounding box, corners in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn new(min: Vector3<f64>, max: Vector3<f64>) -> Self {
        debug_assert!(min.x <= max.x && min.y <= max.y && min.z <= max.z);
        Aabb { min, max }
    }

    pub fn center(&self) -> Vector3<f64> {
        (self.min + self.max) * 0.5
    }

    pub fn half_extents(&self) -> Vector3<f64> {
        (self.max - self.min) * 0.5
    }

    pub fn half_diagonal(&self) -> f64 {
        self.half_extents().norm()
    }

    /// Closed containment: boundary points count as inside.
    pub fn contains(&self, p: Vector3<f64>) -> bool {
        p.x >= self.min.x
            && p.x <= self.max.x
            && p.y >= self.min.y
            && p.y <= self.max.y
            && p.z >= self.min.z
            && p.z <= self.max.z
    }

    /// Center of the top (+z) face; view hemispheres are anchored here.
    pub fn top_center(&self) -> Vector3<f64> {
        let c = self.center();
        Vector3::new(c.x, c.y, self.max.z)
    }

    pub fn union_point(&mut self, p: Vector3<f64>) {
        self.min = self.min.inf(&p);
        self.max = self.max.sup(&p);
    }
}

/// Deterministic 64-bit mixer (splitmix64 finalizer). Used to derive
/// per-image noise streams from (seed, pose) without platform-dependent
/// hashing.
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Fold a pose into a seed by mixing the raw bit patterns of its components.
pub fn seed_from_pose(base: u64, pose: &Pose) -> u64 {
    let mut acc = mix64(base);
    for c in pose.quat_xyzw() {
        acc = mix64(acc ^ c.to_bits());
    }
    let t = pose.translation();
    for c in [t.x, t.y, t.z] {
        acc = mix64(acc ^ c.to_bits());
    }
    acc
}
