//! Primitive solids with exact analytic queries.
//!
//! Every shape supports line/ray intersection with surface normals, point
//! containment, distance-to-surface, support mapping (for GJK), and a tight
//! world-frame bounding box. All queries run in the shape's local frame and
//! map results back through the pose.

use nalgebra::{Matrix3, Vector2, Vector3};

use crate::geom::{Aabb, Pose};

/// Canonical solid shapes. Boxes store half-extents; cylinders are aligned
/// with their local z axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Box { half_extents: Vector3<f64> },
    Cylinder { radius: f64, height: f64 },
    Sphere { radius: f64 },
}

impl Shape {
    pub fn validate(&self) -> bool {
        match self {
            Shape::Box { half_extents } => half_extents.iter().all(|d| *d > 0.0),
            Shape::Cylinder { radius, height } => *radius > 0.0 && *height > 0.0,
            Shape::Sphere { radius } => *radius > 0.0,
        }
    }

    /// Farthest horizontal reach from the local origin, used to keep
    /// generated objects inside the workspace footprint for any yaw.
    pub fn horizontal_reach(&self) -> f64 {
        match self {
            Shape::Box { half_extents } => half_extents.xy().norm(),
            Shape::Cylinder { radius, .. } => *radius,
            Shape::Sphere { radius } => *radius,
        }
    }

    /// Local-frame z of the lowest point, so `-min_z()` is the resting height
    /// of the centroid for an upright pose.
    pub fn min_z(&self) -> f64 {
        match self {
            Shape::Box { half_extents } => -half_extents.z,
            Shape::Cylinder { height, .. } => -height / 2.0,
            Shape::Sphere { radius } => -radius,
        }
    }
}

/// Full-line intersection with a solid: the entry/exit parameters along the
/// line and outward surface normals at both crossings (local frame).
#[derive(Debug, Clone, Copy)]
pub struct LineHit {
    pub t_in: f64,
    pub t_out: f64,
    pub normal_in: Vector3<f64>,
    pub normal_out: Vector3<f64>,
}

const PARALLEL_EPS: f64 = 1e-12;

fn box_line_hit(half: Vector3<f64>, o: Vector3<f64>, d: Vector3<f64>) -> Option<LineHit> {
    let mut t_lo = f64::NEG_INFINITY;
    let mut t_hi = f64::INFINITY;
    let mut axis_lo = 0usize;
    let mut axis_hi = 0usize;
    for a in 0..3 {
        if d[a].abs() < PARALLEL_EPS {
            if o[a].abs() > half[a] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d[a];
        let (mut t1, mut t2) = ((-half[a] - o[a]) * inv, (half[a] - o[a]) * inv);
        if t1 > t2 {
            std::mem::swap(&mut t1, &mut t2);
        }
        if t1 > t_lo {
            t_lo = t1;
            axis_lo = a;
        }
        if t2 < t_hi {
            t_hi = t2;
            axis_hi = a;
        }
    }
    if t_lo > t_hi {
        return None;
    }
    let mut n_in = Vector3::zeros();
    n_in[axis_lo] = -d[axis_lo].signum();
    let mut n_out = Vector3::zeros();
    n_out[axis_hi] = d[axis_hi].signum();
    Some(LineHit {
        t_in: t_lo,
        t_out: t_hi,
        normal_in: n_in,
        normal_out: n_out,
    })
}

fn sphere_line_hit(r: f64, o: Vector3<f64>, d: Vector3<f64>) -> Option<LineHit> {
    let a = d.dot(&d);
    let b = o.dot(&d);
    let c = o.dot(&o) - r * r;
    let disc = b * b - a * c;
    if disc < 0.0 || a < PARALLEL_EPS {
        return None;
    }
    let sq = disc.sqrt();
    let t_in = (-b - sq) / a;
    let t_out = (-b + sq) / a;
    Some(LineHit {
        t_in,
        t_out,
        normal_in: (o + d * t_in) / r,
        normal_out: (o + d * t_out) / r,
    })
}

fn cylinder_line_hit(r: f64, h: f64, o: Vector3<f64>, d: Vector3<f64>) -> Option<LineHit> {
    let hh = h / 2.0;
    // Interval against the infinite cylinder x² + y² ≤ r².
    let a = d.x * d.x + d.y * d.y;
    let (side_lo, side_hi) = if a < PARALLEL_EPS {
        if o.x * o.x + o.y * o.y > r * r {
            return None;
        }
        (f64::NEG_INFINITY, f64::INFINITY)
    } else {
        let b = o.x * d.x + o.y * d.y;
        let c = o.x * o.x + o.y * o.y - r * r;
        let disc = b * b - a * c;
        if disc < 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        ((-b - sq) / a, (-b + sq) / a)
    };
    // Interval against the slab |z| ≤ h/2.
    let (cap_lo, cap_hi) = if d.z.abs() < PARALLEL_EPS {
        if o.z.abs() > hh {
            return None;
        }
        (f64::NEG_INFINITY, f64::INFINITY)
    } else {
        let t1 = (-hh - o.z) / d.z;
        let t2 = (hh - o.z) / d.z;
        (t1.min(t2), t1.max(t2))
    };
    let t_in = side_lo.max(cap_lo);
    let t_out = side_hi.min(cap_hi);
    if t_in > t_out || !t_in.is_finite() || !t_out.is_finite() {
        return None;
    }
    let normal_at = |t: f64, entering: bool| -> Vector3<f64> {
        let p = o + d * t;
        let from_cap = if entering { cap_lo >= side_lo } else { cap_hi <= side_hi };
        if from_cap {
            Vector3::new(0.0, 0.0, p.z.signum())
        } else {
            let xy = Vector2::new(p.x, p.y);
            let n = xy / r;
            Vector3::new(n.x, n.y, 0.0)
        }
    };
    Some(LineHit {
        t_in,
        t_out,
        normal_in: normal_at(t_in, true),
        normal_out: normal_at(t_out, false),
    })
}

impl Shape {
    fn line_hit_local(&self, o: Vector3<f64>, d: Vector3<f64>) -> Option<LineHit> {
        match self {
            Shape::Box { half_extents } => box_line_hit(*half_extents, o, d),
            Shape::Cylinder { radius, height } => cylinder_line_hit(*radius, *height, o, d),
            Shape::Sphere { radius } => sphere_line_hit(*radius, o, d),
        }
    }

    fn contains_local(&self, p: Vector3<f64>) -> bool {
        match self {
            Shape::Box { half_extents } => {
                p.x.abs() <= half_extents.x
                    && p.y.abs() <= half_extents.y
                    && p.z.abs() <= half_extents.z
            }
            Shape::Cylinder { radius, height } => {
                p.z.abs() <= height / 2.0 && p.xy().norm_squared() <= radius * radius
            }
            Shape::Sphere { radius } => p.norm_squared() <= radius * radius,
        }
    }

    /// Unsigned distance from a local point to the shape's surface.
    fn surface_distance_local(&self, p: Vector3<f64>) -> f64 {
        match self {
            Shape::Sphere { radius } => (p.norm() - radius).abs(),
            Shape::Box { half_extents } => {
                let q = p.abs() - half_extents;
                let outside = q.sup(&Vector3::zeros()).norm();
                let inside = q.x.max(q.y).max(q.z).min(0.0);
                (outside + inside).abs()
            }
            Shape::Cylinder { radius, height } => {
                let d = Vector2::new(p.xy().norm() - radius, p.z.abs() - height / 2.0);
                let outside = Vector2::new(d.x.max(0.0), d.y.max(0.0)).norm();
                let inside = d.x.max(d.y).min(0.0);
                (outside + inside).abs()
            }
        }
    }

    fn support_local(&self, d: Vector3<f64>) -> Vector3<f64> {
        match self {
            Shape::Box { half_extents } => Vector3::new(
                half_extents.x.copysign(d.x),
                half_extents.y.copysign(d.y),
                half_extents.z.copysign(d.z),
            ),
            Shape::Sphere { radius } => {
                let n = d.norm();
                if n < PARALLEL_EPS {
                    Vector3::new(0.0, 0.0, *radius)
                } else {
                    d * (*radius / n)
                }
            }
            Shape::Cylinder { radius, height } => {
                let nxy = d.xy().norm();
                let xy = if nxy < PARALLEL_EPS {
                    Vector2::zeros()
                } else {
                    d.xy() * (*radius / nxy)
                };
                Vector3::new(xy.x, xy.y, (height / 2.0).copysign(d.z))
            }
        }
    }
}

/// A rigid solid placed in the world.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Primitive {
    pub id: u32,
    pub shape: Shape,
    pub pose: Pose,
}

impl Primitive {
    pub fn new(id: u32, shape: Shape, pose: Pose) -> Self {
        debug_assert!(shape.validate(), "primitive dimensions must be positive");
        Primitive { id, shape, pose }
    }

    /// Entry/exit of the full line `o + t·d` through the solid, with world
    /// frame outward normals at both crossings.
    pub fn line_hit(&self, o: Vector3<f64>, d: Vector3<f64>) -> Option<LineHit> {
        let inv = self.pose.inverse();
        let hit = self
            .shape
            .line_hit_local(inv.transform_point(o), inv.rotate_vector(d))?;
        Some(LineHit {
            t_in: hit.t_in,
            t_out: hit.t_out,
            normal_in: self.pose.rotate_vector(hit.normal_in),
            normal_out: self.pose.rotate_vector(hit.normal_out),
        })
    }

    /// First surface crossing strictly in front of the ray origin, or `None`.
    pub fn ray_hit(&self, o: Vector3<f64>, d: Vector3<f64>) -> Option<(f64, Vector3<f64>)> {
        let hit = self.line_hit(o, d)?;
        if hit.t_in > 1e-12 {
            Some((hit.t_in, hit.normal_in))
        } else {
            None
        }
    }

    pub fn contains(&self, p: Vector3<f64>) -> bool {
        self.shape
            .contains_local(self.pose.inverse().transform_point(p))
    }

    pub fn surface_distance(&self, p: Vector3<f64>) -> f64 {
        self.shape
            .surface_distance_local(self.pose.inverse().transform_point(p))
    }

    /// Support point in world frame: farthest point of the solid along `d`.
    pub fn support(&self, d: Vector3<f64>) -> Vector3<f64> {
        let local = self
            .shape
            .support_local(self.pose.inverse().rotate_vector(d));
        self.pose.transform_point(local)
    }

    /// Lowest world z of any point of the solid.
    pub fn lowest_z(&self) -> f64 {
        self.support(-Vector3::z()).z
    }

    /// Tight world-frame axis-aligned bounding box.
    pub fn aabb(&self) -> Aabb {
        let c = self.pose.translation();
        match self.shape {
            Shape::Sphere { radius } => {
                let r = Vector3::repeat(radius);
                Aabb::new(c - r, c + r)
            }
            Shape::Box { half_extents } => {
                let rot: Matrix3<f64> = *self.pose.rotation().to_rotation_matrix().matrix();
                let ext = rot.abs() * half_extents;
                Aabb::new(c - ext, c + ext)
            }
            Shape::Cylinder { radius, height } => {
                let axis = self.pose.rotate_vector(Vector3::z());
                let half_axis = axis * (height / 2.0);
                let disk = Vector3::new(
                    radius * (1.0 - axis.x * axis.x).max(0.0).sqrt(),
                    radius * (1.0 - axis.y * axis.y).max(0.0).sqrt(),
                    radius * (1.0 - axis.z * axis.z).max(0.0).sqrt(),
                );
                let lo = (c - half_axis - disk).inf(&(c + half_axis - disk));
                let hi = (c - half_axis + disk).sup(&(c + half_axis + disk));
                Aabb::new(lo, hi)
            }
        }
    }
}
