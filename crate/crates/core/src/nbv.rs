//! Next-best-view planning: candidate views on a hemisphere over the target
//! and the rear-side-voxel information gain.
//!
//! Partially observed objects cast shadows: voxels with negative fused
//! distance on their occluded side. The gain of a candidate view counts the
//! shadow voxels inside the target's bounding box that the view would
//! actually reveal — a voxel counts when the straight path from the camera to
//! its center is not cut off by an already-observed front surface. Each voxel
//! counts once per view regardless of how many rays would graze it, so the
//! gain is exactly the cardinality of the revealed set and is independent of
//! any virtual-camera resolution.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::geom::{Aabb, Pose};
use crate::tsdf::TsdfGrid;

/// Default hemisphere radius floor, meters.
pub const DEFAULT_VIEW_RADIUS: f64 = 0.35;

/// A candidate camera placement: position on the view hemisphere, oriented
/// to look at the bounding-box center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewCandidate {
    pub pose: Pose,
    pub index: usize,
    /// Filled in once the view has been scored.
    pub gain: Option<u64>,
}

/// Radial/height shell standing in for the arm's inverse kinematics: a pose
/// is reachable iff its position lies within the closed distance band from
/// the base and the closed height band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReachabilityModel {
    pub base: Vector3<f64>,
    pub r_min: f64,
    pub r_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl ReachabilityModel {
    /// A shell wide enough to accept any desk-scale pose; benchmarks use
    /// this unless a scenario narrows it.
    pub fn generous() -> Self {
        ReachabilityModel {
            base: Vector3::new(0.15, 0.15, 0.0),
            r_min: 0.0,
            r_max: 2.0,
            z_min: -0.1,
            z_max: 2.0,
        }
    }

    pub fn is_reachable(&self, pose: &Pose) -> bool {
        let p = pose.translation();
        let r = (p - self.base).norm();
        r >= self.r_min && r <= self.r_max && p.z >= self.z_min && p.z <= self.z_max
    }
}

/// Distribute `n_views` candidates over a hemisphere resting on the top face
/// of the bounding box, via a Fibonacci spiral with index 0 pinned to the
/// zenith. The radius clears the sensor's minimum depth by at least half the
/// box diagonal. Unreachable candidates are dropped (indices keep the layout
/// numbering); an empty result is an error so the policy can abort.
pub fn generate_views(
    bbox: &Aabb,
    reach: &ReachabilityModel,
    intr: &CameraIntrinsics,
    n_views: usize,
) -> Result<Vec<ViewCandidate>> {
    assert!(n_views >= 1);
    let center = bbox.center();
    let anchor = bbox.top_center();
    let radius = (intr.depth_min + bbox.half_diagonal()).max(DEFAULT_VIEW_RADIUS);
    let golden_angle = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
    let mut views = Vec::with_capacity(n_views);
    for i in 0..n_views {
        // z descends from exactly 1 (zenith) to 1/n, staying above the rim.
        let z = 1.0 - i as f64 / n_views as f64;
        let ring = (1.0 - z * z).max(0.0).sqrt();
        let az = golden_angle * i as f64;
        let offset = Vector3::new(ring * az.cos(), ring * az.sin(), z) * radius;
        let pose = Pose::look_at(anchor + offset, center);
        if reach.is_reachable(&pose) {
            views.push(ViewCandidate {
                pose,
                index: i,
                gain: None,
            });
        }
    }
    if views.is_empty() {
        return Err(Error::NoReachableViews { candidates: n_views });
    }
    Ok(views)
}

/// Count the rear-side voxels a view would reveal: observed negative voxels
/// inside `bbox` whose center-to-camera segment is not blocked by a front
/// surface. A front-surface block is a transition from an observed strictly
/// positive voxel into an observed negative one along the walk from the
/// camera.
pub fn information_gain(grid: &TsdfGrid, bbox: &Aabb, view: &ViewCandidate) -> u64 {
    let origin = view.pose.translation();
    let mut gain = 0u64;
    for idx in grid.negative_observed_in(bbox) {
        let target = grid.voxel_center(idx);
        let dir = target - origin;
        let dist = dir.norm();
        if dist < 1e-12 {
            gain += 1;
            continue;
        }
        let dir = dir / dist;
        let mut prev_positive = false;
        let mut blocked = false;
        grid.walk_ray(origin, dir, dist, |v| {
            if v == idx {
                // Reached the voxel itself: a crossing here does not block.
                return false;
            }
            let w = grid.weight(v);
            let val = grid.value(v);
            if w > 0.0 && val < 0.0 && prev_positive {
                blocked = true;
                return false;
            }
            prev_positive = w > 0.0 && val > 0.0;
            true
        });
        if !blocked {
            gain += 1;
        }
    }
    gain
}

/// Score every candidate and return the winner with its gain filled in; ties
/// break toward the lowest index.
pub fn next_best_view(
    grid: &TsdfGrid,
    bbox: &Aabb,
    views: &[ViewCandidate],
) -> Option<(ViewCandidate, u64)> {
    let mut best: Option<(ViewCandidate, u64)> = None;
    for view in views {
        let gain = information_gain(grid, bbox, view);
        let better = match &best {
            None => true,
            Some((bv, bg)) => gain > *bg || (gain == *bg && view.index < bv.index),
        };
        if better {
            let mut winner = *view;
            winner.gain = Some(gain);
            best = Some((winner, gain));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::CameraIntrinsics;
    use crate::scene::{default_workspace, render_depth, Primitive, Scene, Shape};
    use crate::tsdf::VoxelIndex;
    use nalgebra::Vector3;

    fn sensor() -> CameraIntrinsics {
        CameraIntrinsics::default_sensor()
    }

    fn small_bbox() -> Aabb {
        Aabb::new(Vector3::new(0.12, 0.12, 0.0), Vector3::new(0.18, 0.18, 0.08))
    }

    #[test]
    fn sixteen_views_with_generous_reach_and_spread() {
        let views = generate_views(&small_bbox(), &ReachabilityModel::generous(), &sensor(), 16)
            .unwrap();
        assert_eq!(views.len(), 16);
        // Index 0 is the zenith: directly above the top-face center.
        let anchor = small_bbox().top_center();
        let zenith = views[0].pose.translation();
        assert!((zenith.x - anchor.x).abs() < 1e-9);
        assert!((zenith.y - anchor.y).abs() < 1e-9);
        assert!(zenith.z > anchor.z);
        // Pairwise angular separation of the fixed layout.
        let mut min_angle = f64::INFINITY;
        for i in 0..views.len() {
            for j in (i + 1)..views.len() {
                let a = (views[i].pose.translation() - anchor).normalize();
                let b = (views[j].pose.translation() - anchor).normalize();
                min_angle = min_angle.min(a.angle(&b).to_degrees());
            }
        }
        assert!(
            min_angle >= 20.0,
            "minimum pairwise separation {min_angle}° too small"
        );
        // Optical axes pass through the bbox center.
        for v in &views {
            let to_center = small_bbox().center() - v.pose.translation();
            let axis = v.pose.rotate_vector(Vector3::z());
            let off = axis.cross(&to_center.normalize()).norm() * to_center.norm();
            assert!(off < 1e-6, "optical axis misses bbox center by {off}");
        }
        // Every candidate clears the sensor's minimum depth from all bbox
        // corners.
        for v in &views {
            let p = v.pose.translation();
            for corner in [small_bbox().min, small_bbox().max] {
                assert!((p - corner).norm() >= sensor().depth_min);
            }
        }
    }

    #[test]
    fn reachability_shell_boundaries_are_closed() {
        let reach = ReachabilityModel {
            base: Vector3::zeros(),
            r_min: 0.1,
            r_max: 0.5,
            z_min: 0.0,
            z_max: 1.0,
        };
        let at = |x: f64, z: f64| Pose::from_translation(Vector3::new(x, 0.0, z));
        assert!(reach.is_reachable(&at(0.3, 0.0)));
        assert!(reach.is_reachable(&at(0.5, 0.0))); // exactly r_max: closed
        assert!(!reach.is_reachable(&at(0.5 + 1e-9, 0.0)));
        assert!(!reach.is_reachable(&at(0.3, -1e-9)));
    }

    #[test]
    fn height_limited_reach_filters_but_keeps_individually_reachable() {
        let reach = ReachabilityModel {
            base: Vector3::new(0.15, 0.15, 0.0),
            r_min: 0.0,
            r_max: 2.0,
            z_min: 0.0,
            z_max: 0.25,
        };
        let views = generate_views(&small_bbox(), &reach, &sensor(), 16).unwrap();
        assert!(views.len() < 16);
        assert!(!views.is_empty());
        for v in &views {
            assert!(reach.is_reachable(&v.pose));
        }
    }

    #[test]
    fn unreachable_everything_errors() {
        let reach = ReachabilityModel {
            base: Vector3::zeros(),
            r_min: 5.0,
            r_max: 6.0,
            z_min: 0.0,
            z_max: 1.0,
        };
        assert!(matches!(
            generate_views(&small_bbox(), &reach, &sensor(), 16),
            Err(Error::NoReachableViews { candidates: 16 })
        ));
    }

    /// Independent gain oracle: same per-voxel semantics, but the voxel
    /// sequence comes from enumerating boundary-plane crossings and
    /// classifying sub-interval midpoints instead of the incremental DDA.
    fn segment_voxels(
        grid: &TsdfGrid,
        origin: Vector3<f64>,
        target: Vector3<f64>,
    ) -> Vec<VoxelIndex> {
        let delta = target - origin;
        let dist = delta.norm();
        let dir = delta / dist;
        let side = grid.side_length();
        let h = grid.voxel_size();
        let mut t0 = 0.0f64;
        let mut t1 = dist;
        for a in 0..3 {
            if dir[a].abs() < 1e-15 {
                if origin[a] < 0.0 || origin[a] > side {
                    return vec![];
                }
                continue;
            }
            let (ta, tb) = ((0.0 - origin[a]) / dir[a], (side - origin[a]) / dir[a]);
            t0 = t0.max(ta.min(tb));
            t1 = t1.min(ta.max(tb));
        }
        if t0 > t1 {
            return vec![];
        }
        let mut ts = vec![t0, t1];
        for a in 0..3 {
            if dir[a].abs() < 1e-15 {
                continue;
            }
            for b in 0..=grid.resolution() {
                let t = (b as f64 * h - origin[a]) / dir[a];
                if t > t0 && t < t1 {
                    ts.push(t);
                }
            }
        }
        ts.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let mut out: Vec<VoxelIndex> = Vec::new();
        for w in ts.windows(2) {
            if w[1] - w[0] < 1e-12 {
                continue;
            }
            let mid = origin + dir * ((w[0] + w[1]) / 2.0);
            if let Some(v) = grid.world_to_index(mid) {
                if out.last() != Some(&v) {
                    out.push(v);
                }
            }
        }
        out
    }

    fn gain_oracle(grid: &TsdfGrid, bbox: &Aabb, view: &ViewCandidate) -> u64 {
        let origin = view.pose.translation();
        let mut gain = 0u64;
        for idx in grid.negative_observed_in(bbox) {
            let mut prev_positive = false;
            let mut blocked = false;
            for v in segment_voxels(grid, origin, grid.voxel_center(idx)) {
                if v == idx {
                    break;
                }
                let w = grid.weight(v);
                let val = grid.value(v);
                if w > 0.0 && val < 0.0 && prev_positive {
                    blocked = true;
                    break;
                }
                prev_positive = w > 0.0 && val > 0.0;
            }
            if !blocked {
                gain += 1;
            }
        }
        gain
    }

    fn fused_scene_grid(seed: u64, n: usize) -> (Scene, TsdfGrid) {
        let scene =
            crate::scene::generate_packed_scene(seed, 4, default_workspace()).unwrap();
        let mut grid = TsdfGrid::for_workspace(&scene.workspace, n);
        let center = Vector3::new(0.15, 0.15, 0.05);
        for (i, elev) in [(0usize, 0.7f64), (3, 0.4)] {
            let az = i as f64 * 1.3;
            let eye = center
                + 0.35 * Vector3::new(az.cos() * elev.cos(), az.sin() * elev.cos(), elev.sin());
            let view = Pose::look_at(eye, center);
            grid.integrate(&render_depth(&scene, &view, &sensor(), 0.0), &view);
        }
        (scene, grid)
    }

    #[test]
    fn gain_matches_oracle_on_fused_scenes() {
        for seed in 0..8 {
            let (scene, grid) = fused_scene_grid(seed, 32);
            let bbox = scene.objects[0].aabb();
            let views =
                generate_views(&bbox, &ReachabilityModel::generous(), &sensor(), 8).unwrap();
            for view in &views {
                assert_eq!(
                    information_gain(&grid, &bbox, view),
                    gain_oracle(&grid, &bbox, view),
                    "seed {seed} view {}",
                    view.index
                );
            }
        }
    }

    #[test]
    fn gain_bounded_by_negative_bbox_population() {
        let (scene, grid) = fused_scene_grid(2, 32);
        let bbox = scene.objects[1].aabb();
        let total = grid.negative_observed_in(&bbox).len() as u64;
        let views = generate_views(&bbox, &ReachabilityModel::generous(), &sensor(), 16).unwrap();
        for view in &views {
            assert!(information_gain(&grid, &bbox, view) <= total);
        }
    }

    #[test]
    fn empty_shadow_means_zero_gain_everywhere() {
        let grid = TsdfGrid::new(0.3, 32, Pose::identity());
        let bbox = small_bbox();
        let views = generate_views(&bbox, &ReachabilityModel::generous(), &sensor(), 16).unwrap();
        for view in &views {
            assert_eq!(information_gain(&grid, &bbox, view), 0);
        }
        // All gains zero: the tie-break picks index 0.
        let (winner, gain) = next_best_view(&grid, &bbox, &views).unwrap();
        assert_eq!(winner.index, 0);
        assert_eq!(gain, 0);
        assert_eq!(winner.gain, Some(0));
    }

    #[test]
    fn single_candidate_wins() {
        let grid = TsdfGrid::new(0.3, 16, Pose::identity());
        let views = vec![ViewCandidate {
            pose: Pose::from_translation(Vector3::new(0.15, 0.15, 0.5)),
            index: 3,
            gain: None,
        }];
        let (winner, _) = next_best_view(&grid, &small_bbox(), &views).unwrap();
        assert_eq!(winner.index, 3);
    }

    #[test]
    fn frontally_observed_object_pulls_view_to_the_rear() {
        // Observe a box from the front only; the winning view must sit in
        // the rear half-space.
        let pos = Vector3::new(0.15, 0.15, 0.05);
        let scene = Scene {
            seed: 0,
            table_height: 0.0,
            workspace: default_workspace(),
            objects: vec![Primitive::new(
                0,
                Shape::Box {
                    half_extents: Vector3::new(0.025, 0.025, 0.05),
                },
                Pose::from_translation(pos),
            )],
            target_id: Some(0),
        };
        let mut grid = TsdfGrid::for_workspace(&scene.workspace, 40);
        let front_dir = Vector3::new(1.0, 0.0, 0.0);
        let eye = pos + Vector3::new(0.3, 0.0, 0.1);
        let front = Pose::look_at(eye, pos);
        grid.integrate(&render_depth(&scene, &front, &sensor(), 0.0), &front);
        let bbox = scene.target_bbox().unwrap();
        let views = generate_views(&bbox, &ReachabilityModel::generous(), &sensor(), 16).unwrap();
        let (winner, gain) = next_best_view(&grid, &bbox, &views).unwrap();
        assert!(gain > 0);
        let to_winner = winner.pose.translation() - bbox.center();
        assert!(
            to_winner.dot(&front_dir) < 0.0,
            "winner should be in the rear half-space, got offset {to_winner:?}"
        );
    }

    #[test]
    fn single_isolated_negative_voxel_counts_once() {
        // Construct a grid with exactly one negative bbox voxel by fusing a
        // tiny synthetic patch: simpler to assert through the public API by
        // checking the revealed set size equals the population when nothing
        // blocks.
        let (scene, grid) = fused_scene_grid(5, 32);
        let bbox = scene.objects[2].aabb();
        let negs = grid.negative_observed_in(&bbox);
        if negs.is_empty() {
            return; // seed produced no shadow in this bbox; other tests cover gain
        }
        // A view just above one negative voxel (jittered off the lattice so
        // no segment runs exactly through voxel corners): compare gain
        // against the oracle from very close range.
        let idx = negs[0];
        let above = grid.voxel_center(idx) + Vector3::new(0.0213, 0.0117, 0.0191);
        let view = ViewCandidate {
            pose: Pose::look_at(above, grid.voxel_center(idx)),
            index: 0,
            gain: None,
        };
        assert_eq!(
            information_gain(&grid, &bbox, &view),
            gain_oracle(&grid, &bbox, &view)
        );
    }
}
