//! Voxel-wise grasp detection on the fused distance field.
//!
//! For every surface point extracted from the map, a parallel-jaw grasp
//! hypothesis closes along the surface normal. The opposing contact is found
//! by walking the field through the object: a sign change back to free space
//! gives a measured contact, while a walk that runs off the observed shadow
//! into unknown space gives a *speculative* contact at the shadow boundary —
//! the geometric analog of completing an object from partial data. Quality
//! factors:
//!
//! - `q_antipodal`: alignment of the two contact normals (1 for a perfect
//!   antipodal pair; speculative contacts assume alignment and rely on the
//!   visibility factor for honesty),
//! - `q_clearance`: 1 only if the finger volumes avoid all observed surfaces
//!   and shadows and stay above the support plane,
//! - `q_visibility`: fraction of observed voxels along the closing span, the
//!   term that grows as exploration resolves occlusion.
//!
//! The product lands in a `(Q, R, W)` field: per-voxel quality, orientation,
//! and opening width, with a validity mask.

use nalgebra::{Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::geom::{Aabb, Pose};
use crate::nbv::ReachabilityModel;
use crate::tsdf::{SurfacePoint, TsdfGrid, VoxelIndex, VoxelState};

/// Candidates below this quality never enter the filtered list.
pub const Q_FLOOR: f64 = 0.1;

/// Non-maximum-suppression radius in voxel units.
pub const NMS_RADIUS_VOXELS: f64 = 2.0;

/// Extra standoff (in voxels) between the modelled finger volume and the
/// contact surface, so a grasp is not voided by its own object's shell.
const CLEARANCE_STANDOFF_VOXELS: f64 = 1.0;

/// Finger volumes must stay this far above the grid's support plane.
const TABLE_CLEARANCE: f64 = 0.002;

/// Parallel-jaw gripper geometry.
///
/// `finger_dims` is the solid finger box: x lateral, y along the closing
/// axis (thickness), z along the approach axis (length). The approach
/// clearance extends the checked volume behind the fingers to model the
/// corridor the hand sweeps during the final approach.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GripperModel {
    pub max_width: f64,
    pub finger_dims: Vector3<f64>,
    pub approach_clearance: f64,
}

impl Default for GripperModel {
    fn default() -> Self {
        GripperModel {
            max_width: 0.08,
            finger_dims: Vector3::new(0.01, 0.01, 0.04),
            approach_clearance: 0.02,
        }
    }
}

impl GripperModel {
    pub fn validate(&self) -> bool {
        self.max_width > 0.0
            && self.approach_clearance > 0.0
            && self.finger_dims.iter().all(|d| *d > 0.0)
    }
}

/// A concrete grasp: tool-center frame with the origin midway between the
/// fingertips, closing axis = local +y, approach axis = local +z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspCandidate {
    pub pose: Pose,
    pub width: f64,
    pub quality: f64,
    /// Linear index of the field voxel this grasp belongs to.
    pub voxel: usize,
}

impl GraspCandidate {
    pub fn closing_axis(&self) -> Vector3<f64> {
        self.pose.rotate_vector(Vector3::y())
    }

    pub fn approach_axis(&self) -> Vector3<f64> {
        self.pose.rotate_vector(Vector3::z())
    }

    /// Fingertip centers: `pose ∘ (0, ±width/2, 0)`.
    pub fn fingertips(&self) -> (Vector3<f64>, Vector3<f64>) {
        let half = self.width / 2.0;
        (
            self.pose.transform_point(Vector3::new(0.0, -half, 0.0)),
            self.pose.transform_point(Vector3::new(0.0, half, 0.0)),
        )
    }
}

/// Voxel-wise grasp tensors: quality `Q ∈ [0, 1]`, orientation `R`, opening
/// width `W`, and the refined grasp center, with a validity mask. `Q` is zero
/// wherever the mask is false.
#[derive(Debug, Clone)]
pub struct GraspField {
    n: usize,
    quality: Vec<f64>,
    rotation: Vec<UnitQuaternion<f64>>,
    width: Vec<f64>,
    center: Vec<Vector3<f64>>,
    valid: Vec<bool>,
}

impl GraspField {
    fn empty(n: usize) -> Self {
        let len = n * n * n;
        GraspField {
            n,
            quality: vec![0.0; len],
            rotation: vec![UnitQuaternion::identity(); len],
            width: vec![0.0; len],
            center: vec![Vector3::zeros(); len],
            valid: vec![false; len],
        }
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn quality_at(&self, lin: usize) -> f64 {
        self.quality[lin]
    }

    pub fn is_valid(&self, lin: usize) -> bool {
        self.valid[lin]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn candidate_at(&self, lin: usize) -> Option<GraspCandidate> {
        if !self.valid[lin] {
            return None;
        }
        Some(GraspCandidate {
            pose: Pose::new(self.rotation[lin], self.center[lin]),
            width: self.width[lin],
            quality: self.quality[lin],
            voxel: lin,
        })
    }

    /// Debug dump in the same text container style as the grid dump:
    /// `i j k quality width qx qy qz qw cx cy cz` per valid voxel.
    pub fn dump(&self) -> String {
        use std::fmt::Write as _;
        let mut s = String::new();
        let _ = writeln!(s, "graspfield v1");
        let _ = writeln!(s, "n {}", self.n);
        for lin in 0..self.quality.len() {
            if !self.valid[lin] {
                continue;
            }
            let k = lin % self.n;
            let j = (lin / self.n) % self.n;
            let i = lin / (self.n * self.n);
            let q = self.rotation[lin].quaternion();
            let c = self.center[lin];
            let _ = writeln!(
                s,
                "{} {} {} {} {} {} {} {} {} {} {} {}",
                i, j, k, self.quality[lin], self.width[lin], q.i, q.j, q.k, q.w, c.x, c.y, c.z
            );
        }
        s
    }
}

/// How the opposing contact was established.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContactKind {
    /// The walk crossed back into observed free space: both contacts seen.
    Measured,
    /// The walk ran off the observed shadow into unknown space; the contact
    /// is hypothesized at the shadow boundary.
    Speculative,
}

/// Full evaluation of one grasp hypothesis, with the factor breakdown.
#[derive(Debug, Clone, Copy)]
pub struct GraspEval {
    pub voxel: VoxelIndex,
    pub pose: Pose,
    pub width: f64,
    pub contact: ContactKind,
    pub q_antipodal: f64,
    pub q_clearance: f64,
    pub q_visibility: f64,
    pub quality: f64,
}

/// Observed fraction of the closing span: voxels pierced by the ray from the
/// contact point one full opening into the object, counted observed/total.
pub fn visibility_fraction(
    grid: &TsdfGrid,
    contact: Vector3<f64>,
    inward: Vector3<f64>,
    max_width: f64,
) -> f64 {
    let mut observed = 0usize;
    let mut total = 0usize;
    grid.walk_ray(contact, inward, max_width, |idx| {
        total += 1;
        if grid.weight(idx) > 0.0 {
            observed += 1;
        }
        true
    });
    if total == 0 {
        0.0
    } else {
        observed as f64 / total as f64
    }
}

/// Evaluate the grasp hypothesis anchored at one surface point. `None` when
/// no opposing contact exists within the gripper's opening.
pub fn evaluate_surface_point(
    grid: &TsdfGrid,
    gripper: &GripperModel,
    sp: &SurfacePoint,
) -> Option<GraspEval> {
    let inward = -sp.normal;
    let contact = find_opposing_contact(grid, sp.point, inward, gripper.max_width)?;
    let width = contact.distance;
    let center = sp.point + inward * (width / 2.0);
    let rotation = tool_orientation(sp.normal)?;
    let pose = Pose::new(rotation, center);

    let q_antipodal = match contact.normal {
        // Both normals known: 1 for a perfectly opposed pair.
        Some(n2) => (-sp.normal.dot(&n2)).max(0.0),
        // Speculative: assume antipodal, let visibility carry the doubt.
        None => 1.0,
    };
    let q_clearance = clearance_factor(grid, gripper, &pose, width);
    let q_visibility = visibility_fraction(grid, sp.point, inward, gripper.max_width);
    let quality = (q_antipodal * q_clearance * q_visibility).clamp(0.0, 1.0);

    Some(GraspEval {
        voxel: sp.voxel,
        pose,
        width,
        contact: contact.kind,
        q_antipodal,
        q_clearance,
        q_visibility,
        quality,
    })
}

struct OpposingContact {
    distance: f64,
    normal: Option<Vector3<f64>>,
    kind: ContactKind,
}

/// Walk the field from a contact point into the object and locate where the
/// solid ends: either a measured crossing back to observed free space or the
/// boundary where the shadow fades into unknown.
fn find_opposing_contact(
    grid: &TsdfGrid,
    start: Vector3<f64>,
    inward: Vector3<f64>,
    max_width: f64,
) -> Option<OpposingContact> {
    let voxel = grid.voxel_size();
    let range = max_width + 2.0 * voxel;
    let mut inside = false;
    let mut prev_neg: Option<(f64, f64, VoxelIndex)> = None; // (t, value, idx)
    let mut result: Option<OpposingContact> = None;

    grid.walk_ray(start, inward, range, |idx| {
        let t = (grid.voxel_center(idx) - start).dot(&inward);
        let w = grid.weight(idx);
        let v = grid.value(idx);
        if !inside {
            if w > 0.0 && v < 0.0 {
                inside = true;
                prev_neg = Some((t, v, idx));
            } else if w == 0.0 && t > 2.0 * voxel {
                // Never entered the solid: give up.
                return false;
            }
            return true;
        }
        if w == 0.0 {
            // Shadow ends in unknown space: speculative contact at the
            // boundary between the last negative voxel and this one.
            let (tp, _, _) = prev_neg.unwrap();
            let d = (tp + t) / 2.0;
            if d <= max_width {
                result = Some(OpposingContact {
                    distance: d,
                    normal: None,
                    kind: ContactKind::Speculative,
                });
            }
            return false;
        }
        if v >= 0.0 {
            // Measured crossing: interpolate between the negative and free
            // voxel centers projected on the walk.
            let (tp, vp, idx_p) = prev_neg.unwrap();
            let d = tp + (t - tp) * vp / (vp - v);
            if d <= max_width {
                result = Some(OpposingContact {
                    distance: d,
                    normal: interpolated_gradient_normal(grid, idx_p, idx, vp / (vp - v)),
                    kind: ContactKind::Measured,
                });
            }
            return false;
        }
        prev_neg = Some((t, v, idx));
        true
    });
    result.filter(|c| c.distance > 0.0)
}

fn interpolated_gradient_normal(
    grid: &TsdfGrid,
    neg: VoxelIndex,
    pos: VoxelIndex,
    t: f64,
) -> Option<Vector3<f64>> {
    let ga = grid.gradient_at(neg)?;
    let gb = grid.gradient_at(pos)?;
    let g = ga * (1.0 - t) + gb * t;
    let n = g.norm();
    (n > 1e-12).then(|| g / n)
}

/// Tool orientation from the closing axis: approach points as far downward
/// as possible while staying orthogonal (top-down preference); for vertical
/// closing axes the approach deterministically falls back to horizontal +x.
fn tool_orientation(closing: Vector3<f64>) -> Option<UnitQuaternion<f64>> {
    let y = closing.normalize();
    let mut approach = -Vector3::z() - y * y.dot(&-Vector3::z());
    if approach.norm() < 1e-9 {
        approach = Vector3::x() - y * y.dot(&Vector3::x());
    }
    let n = approach.norm();
    if n < 1e-9 {
        return None;
    }
    let z = approach / n;
    let x = y.cross(&z);
    let rot = Rotation3::from_basis_unchecked(&[x, y, z]);
    Some(UnitQuaternion::from_rotation_matrix(&rot))
}

/// Check the finger volumes against the map: 1 unless a swept volume holds a
/// shadow voxel or an observed surface voxel, or dips below the support
/// plane. Unknown space does not void clearance; the visibility factor
/// already prices that risk.
fn clearance_factor(grid: &TsdfGrid, gripper: &GripperModel, pose: &Pose, width: f64) -> f64 {
    let standoff = CLEARANCE_STANDOFF_VOXELS * grid.voxel_size();
    let f = gripper.finger_dims;
    let z_len = f.z + gripper.approach_clearance;
    // Finger boxes in tool frame: just outside each contact, extending back
    // along the approach direction.
    for side in [-1.0, 1.0] {
        let y_near = side * (width / 2.0 + standoff);
        let y_far = side * (width / 2.0 + standoff + f.y);
        let (y_lo, y_hi) = if side < 0.0 {
            (y_far, y_near)
        } else {
            (y_near, y_far)
        };
        let center_local = Vector3::new(0.0, (y_lo + y_hi) / 2.0, -z_len / 2.0);
        let half = Vector3::new(f.x / 2.0, (y_hi - y_lo) / 2.0, z_len / 2.0);
        if finger_box_blocked(grid, pose, center_local, half) {
            return 0.0;
        }
    }
    1.0
}

fn finger_box_blocked(
    grid: &TsdfGrid,
    pose: &Pose,
    center_local: Vector3<f64>,
    half: Vector3<f64>,
) -> bool {
    let box_pose = pose.compose(&Pose::from_translation(center_local));
    // Support plane guard: the grid origin plane is the table.
    let lowest = {
        let rot = box_pose.rotation().to_rotation_matrix();
        let ext = rot.matrix().abs() * half;
        box_pose.translation().z - ext.z
    };
    if lowest < grid.origin().translation().z + TABLE_CLEARANCE {
        return true;
    }
    // Scan voxels whose centers fall inside the oriented box.
    let world_center = box_pose.translation();
    let reach = half.norm();
    let h = grid.voxel_size();
    let n = grid.resolution() as i64;
    let origin = grid.origin().translation();
    let inv = box_pose.inverse();
    let lo = (world_center - Vector3::repeat(reach) - origin) / h;
    let hi = (world_center + Vector3::repeat(reach) - origin) / h;
    let clamp = |x: f64| (x.floor() as i64).clamp(0, n - 1);
    for i in clamp(lo.x)..=clamp(hi.x) {
        for j in clamp(lo.y)..=clamp(hi.y) {
            for k in clamp(lo.z)..=clamp(hi.z) {
                let idx = [i as usize, j as usize, k as usize];
                let c = inv.transform_point(grid.voxel_center(idx));
                if c.x.abs() > half.x || c.y.abs() > half.y || c.z.abs() > half.z {
                    continue;
                }
                match grid.state(idx) {
                    VoxelState::NegativeObserved => return true,
                    VoxelState::FreeObserved => {
                        if has_negative_neighbor(grid, idx) {
                            return true;
                        }
                    }
                    VoxelState::Unknown => {}
                }
            }
        }
    }
    false
}

fn has_negative_neighbor(grid: &TsdfGrid, idx: VoxelIndex) -> bool {
    let n = grid.resolution();
    for axis in 0..3 {
        for delta in [-1i64, 1] {
            let c = idx[axis] as i64 + delta;
            if c < 0 || c >= n as i64 {
                continue;
            }
            let mut nb = idx;
            nb[axis] = c as usize;
            if grid.state(nb) == VoxelState::NegativeObserved {
                return true;
            }
        }
    }
    false
}

/// Build the voxel-wise grasp field from the current map. Deterministic:
/// surface points arrive in lexicographic order and each voxel keeps its
/// best-quality hypothesis.
pub fn predict_grasp_field(grid: &TsdfGrid, gripper: &GripperModel) -> GraspField {
    debug_assert!(gripper.validate());
    let mut field = GraspField::empty(grid.resolution());
    for sp in grid.surface_points() {
        let Some(eval) = evaluate_surface_point(grid, gripper, &sp) else {
            continue;
        };
        let lin = grid.linear(eval.voxel);
        if !field.valid[lin] || eval.quality > field.quality[lin] {
            field.valid[lin] = true;
            field.quality[lin] = eval.quality;
            field.rotation[lin] = eval.pose.rotation();
            field.width[lin] = eval.width.min(gripper.max_width);
            field.center[lin] = eval.pose.translation();
        }
    }
    field
}

/// Filter the field down to an ordered candidate list: quality floor, both
/// fingertips inside the target bounding box (closed containment),
/// reachability, then non-maximum suppression. Sorted by quality descending
/// with voxel-index tie-break.
pub fn filter_candidates(
    field: &GraspField,
    bbox: &Aabb,
    reach: &ReachabilityModel,
    gripper: &GripperModel,
) -> Vec<GraspCandidate> {
    let mut kept: Vec<GraspCandidate> = Vec::new();
    for lin in 0..field.quality.len() {
        let Some(c) = field.candidate_at(lin) else {
            continue;
        };
        if c.quality < Q_FLOOR || c.width > gripper.max_width {
            continue;
        }
        let (f1, f2) = c.fingertips();
        if !bbox.contains(f1) || !bbox.contains(f2) {
            continue;
        }
        if !reach.is_reachable(&c.pose) {
            continue;
        }
        kept.push(c);
    }
    kept.sort_by(|a, b| {
        b.quality
            .partial_cmp(&a.quality)
            .unwrap()
            .then(a.voxel.cmp(&b.voxel))
    });
    // Greedy NMS in voxel-index space.
    let n = field.n;
    let coords = |lin: usize| {
        [
            (lin / (n * n)) as f64,
            ((lin / n) % n) as f64,
            (lin % n) as f64,
        ]
    };
    let mut result: Vec<GraspCandidate> = Vec::new();
    'outer: for c in kept {
        let pc = coords(c.voxel);
        for r in &result {
            let pr = coords(r.voxel);
            let d2 = (0..3).map(|a| (pc[a] - pr[a]).powi(2)).sum::<f64>();
            if d2.sqrt() <= NMS_RADIUS_VOXELS {
                continue 'outer;
            }
        }
        result.push(c);
    }
    result
}

/// Highest-quality candidate of a filtered list, if any.
pub fn best_grasp(candidates: &[GraspCandidate]) -> Option<&GraspCandidate> {
    candidates.first()
}
