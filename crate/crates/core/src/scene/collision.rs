//! Convex intersection tests via GJK on support mappings.
//!
//! All solids here (boxes, cylinders, spheres, and the gripper's finger
//! volumes) are convex, so a boolean GJK over their support functions decides
//! intersection exactly up to floating-point tolerance. A non-negative margin
//! inflates one operand by a ball, which turns the same routine into a
//! clearance test: `gjk_intersects(a, b, m)` is true iff `dist(a, b) <= m`.

use nalgebra::Vector3;

use super::primitives::Primitive;

const MAX_ITERATIONS: usize = 64;
const TOUCH_EPS: f64 = 1e-12;

fn support_minkowski(a: &Primitive, b: &Primitive, d: Vector3<f64>, margin: f64) -> Vector3<f64> {
    let p = a.support(d) - b.support(-d);
    if margin > 0.0 {
        let n = d.norm();
        if n > TOUCH_EPS {
            return p + d * (margin / n);
        }
    }
    p
}

/// True iff the solids intersect (closed: touching counts), or come within
/// `margin` of each other when `margin > 0`.
pub fn gjk_intersects(a: &Primitive, b: &Primitive, margin: f64) -> bool {
    let mut dir = b.pose.translation() - a.pose.translation();
    if dir.norm_squared() < TOUCH_EPS {
        dir = Vector3::x();
    }
    let mut simplex: Vec<Vector3<f64>> = vec![support_minkowski(a, b, dir, margin)];
    dir = -simplex[0];

    for _ in 0..MAX_ITERATIONS {
        if dir.norm_squared() < TOUCH_EPS {
            // Origin lies on the simplex boundary: touching.
            return true;
        }
        let p = support_minkowski(a, b, dir, margin);
        if p.dot(&dir) < 0.0 {
            return false;
        }
        simplex.push(p);
        if update_simplex(&mut simplex, &mut dir) {
            return true;
        }
    }
    // No separating direction found within the iteration budget: the shapes
    // are touching or overlap degenerately.
    true
}

/// Advance the simplex toward the origin. Returns true once the simplex
/// encloses the origin. The most recently added point is last.
fn update_simplex(simplex: &mut Vec<Vector3<f64>>, dir: &mut Vector3<f64>) -> bool {
    match simplex.len() {
        2 => {
            let a = simplex[1];
            let b = simplex[0];
            let ab = b - a;
            let ao = -a;
            if ab.dot(&ao) > 0.0 {
                *dir = ab.cross(&ao).cross(&ab);
            } else {
                *simplex = vec![a];
                *dir = ao;
            }
            false
        }
        3 => {
            let a = simplex[2];
            let b = simplex[1];
            let c = simplex[0];
            let ab = b - a;
            let ac = c - a;
            let ao = -a;
            let abc = ab.cross(&ac);
            if abc.cross(&ac).dot(&ao) > 0.0 {
                if ac.dot(&ao) > 0.0 {
                    *simplex = vec![c, a];
                    *dir = ac.cross(&ao).cross(&ac);
                } else {
                    *simplex = vec![b, a];
                    return update_simplex(simplex, dir);
                }
            } else if ab.cross(&abc).dot(&ao) > 0.0 {
                *simplex = vec![b, a];
                return update_simplex(simplex, dir);
            } else if abc.dot(&ao) > 0.0 {
                *dir = abc;
            } else {
                *simplex = vec![b, c, a];
                *dir = -abc;
            }
            false
        }
        4 => {
            let a = simplex[3];
            let b = simplex[2];
            let c = simplex[1];
            let d = simplex[0];
            let ao = -a;
            let abc = (b - a).cross(&(c - a));
            let acd = (c - a).cross(&(d - a));
            let adb = (d - a).cross(&(b - a));
            if abc.dot(&ao) > 0.0 {
                *simplex = vec![c, b, a];
                return update_simplex(simplex, dir);
            }
            if acd.dot(&ao) > 0.0 {
                *simplex = vec![d, c, a];
                return update_simplex(simplex, dir);
            }
            if adb.dot(&ao) > 0.0 {
                *simplex = vec![b, d, a];
                return update_simplex(simplex, dir);
            }
            true
        }
        _ => {
            *dir = -simplex[0];
            false
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Pose;
    use crate::scene::primitives::Shape;
    use nalgebra::UnitQuaternion;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn boxp(half: [f64; 3], pose: Pose) -> Primitive {
        Primitive::new(
            0,
            Shape::Box {
                half_extents: Vector3::new(half[0], half[1], half[2]),
            },
            pose,
        )
    }

    /// Independent separating-axis test for oriented boxes (15 axes).
    fn sat_boxes_intersect(a: &Primitive, b: &Primitive) -> bool {
        let (ha, hb) = match (a.shape, b.shape) {
            (Shape::Box { half_extents: ha }, Shape::Box { half_extents: hb }) => (ha, hb),
            _ => panic!("sat oracle only handles boxes"),
        };
        let ra = a.pose.rotation().to_rotation_matrix();
        let rb = b.pose.rotation().to_rotation_matrix();
        let mut axes: Vec<Vector3<f64>> = Vec::with_capacity(15);
        for i in 0..3 {
            axes.push(ra.matrix().column(i).into());
            axes.push(rb.matrix().column(i).into());
        }
        for i in 0..3 {
            for j in 0..3 {
                let cross = Vector3::from(ra.matrix().column(i)).cross(&rb.matrix().column(j));
                if cross.norm() > 1e-9 {
                    axes.push(cross.normalize());
                }
            }
        }
        let delta = b.pose.translation() - a.pose.translation();
        for axis in axes {
            let proj_a: f64 = (0..3)
                .map(|i| (Vector3::from(ra.matrix().column(i)).dot(&axis) * ha[i]).abs())
                .sum();
            let proj_b: f64 = (0..3)
                .map(|i| (Vector3::from(rb.matrix().column(i)).dot(&axis) * hb[i]).abs())
                .sum();
            if delta.dot(&axis).abs() > proj_a + proj_b {
                return false;
            }
        }
        true
    }

    #[test]
    fn sphere_pair_distance_threshold() {
        let a = Primitive::new(0, Shape::Sphere { radius: 0.05 }, Pose::identity());
        let far = Primitive::new(
            1,
            Shape::Sphere { radius: 0.05 },
            Pose::from_translation(Vector3::new(0.12, 0.0, 0.0)),
        );
        assert!(!gjk_intersects(&a, &far, 0.0));
        assert!(gjk_intersects(&a, &far, 0.021)); // gap is 0.02
        let near = Primitive::new(
            1,
            Shape::Sphere { radius: 0.05 },
            Pose::from_translation(Vector3::new(0.09, 0.0, 0.0)),
        );
        assert!(gjk_intersects(&a, &near, 0.0));
    }

    #[test]
    fn random_box_pairs_match_sat_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut overlaps = 0;
        for _ in 0..500 {
            let mk = |rng: &mut ChaCha8Rng| {
                let half = [
                    rng.gen_range(0.01..0.05),
                    rng.gen_range(0.01..0.05),
                    rng.gen_range(0.01..0.05),
                ];
                let pose = Pose::new(
                    UnitQuaternion::from_euler_angles(
                        rng.gen_range(-3.0..3.0),
                        rng.gen_range(-3.0..3.0),
                        rng.gen_range(-3.0..3.0),
                    ),
                    Vector3::new(
                        rng.gen_range(-0.08..0.08),
                        rng.gen_range(-0.08..0.08),
                        rng.gen_range(-0.08..0.08),
                    ),
                );
                boxp(half, pose)
            };
            let a = mk(&mut rng);
            let b = mk(&mut rng);
            let via_sat = sat_boxes_intersect(&a, &b);
            if via_sat {
                overlaps += 1;
            }
            assert_eq!(gjk_intersects(&a, &b, 0.0), via_sat);
        }
        // Sanity: the sample must exercise both outcomes.
        assert!(overlaps > 50 && overlaps < 450);
    }

    #[test]
    fn box_cylinder_matches_point_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let b = boxp(
                [0.03, 0.02, 0.04],
                Pose::new(
                    UnitQuaternion::from_euler_angles(
                        rng.gen_range(-3.0..3.0),
                        rng.gen_range(-3.0..3.0),
                        rng.gen_range(-3.0..3.0),
                    ),
                    Vector3::new(rng.gen_range(-0.06..0.06), rng.gen_range(-0.06..0.06), 0.0),
                ),
            );
            let c = Primitive::new(
                1,
                Shape::Cylinder {
                    radius: 0.025,
                    height: 0.07,
                },
                Pose::identity(),
            );
            // Dense sampling of the box volume: if any sample is inside the
            // cylinder the shapes certainly intersect.
            let mut sampled_hit = false;
            let steps = 10;
            for i in 0..=steps {
                for j in 0..=steps {
                    for k in 0..=steps {
                        let local = Vector3::new(
                            -0.03 + 0.06 * i as f64 / steps as f64,
                            -0.02 + 0.04 * j as f64 / steps as f64,
                            -0.04 + 0.08 * k as f64 / steps as f64,
                        );
                        if c.contains(b.pose.transform_point(local)) {
                            sampled_hit = true;
                        }
                    }
                }
            }
            let gjk = gjk_intersects(&b, &c, 0.0);
            // Sampling can miss thin overlaps but can never fabricate one.
            if sampled_hit {
                assert!(gjk);
            }
            if !gjk {
                assert!(!sampled_hit);
            }
        }
    }
}
