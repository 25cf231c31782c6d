//! Truncated signed distance fusion and voxel ray traversal.
//!
//! The grid covers a cubic workspace with `n³` uniformly sized voxels, each
//! storing a distance value normalized by the truncation band (so values live
//! in [-1, 1]) and a fusion weight. Weight 0 means the voxel has never been
//! observed and its value must not be read.
//!
//! The same grid feeds both grasp detection (through surface extraction) and
//! information gain (through ray traversal), so everything here is written to
//! be deterministic: a fixed image sequence always produces a bit-identical
//! grid.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use crate::camera::DepthImage;
use crate::error::{Error, Result};
use crate::geom::{Aabb, Pose};

/// Default truncation distance as a multiple of the voxel size. Four voxels
/// keeps a usable band of negative (shadow) voxels behind observed surfaces.
pub const DEFAULT_TRUNCATION_VOXELS: f64 = 4.0;

/// Cap on per-voxel fusion weight; keeps the map responsive to change while
/// still averaging noise.
pub const DEFAULT_WEIGHT_CAP: f64 = 32.0;

/// Observation state of a voxel, a total function of (value, weight).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoxelState {
    /// Never observed (weight 0); the stored value is meaningless.
    Unknown,
    /// Observed with non-negative distance: free space or just in front of a
    /// surface.
    FreeObserved,
    /// Observed with negative distance: just behind a surface, the "shadow"
    /// cast by partial observation.
    NegativeObserved,
}

/// Index triple of a voxel.
pub type VoxelIndex = [usize; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct TsdfGrid {
    side: f64,
    n: usize,
    origin: Pose,
    truncation: f64,
    weight_cap: f64,
    values: Vec<f64>,
    weights: Vec<f64>,
}

/// A zero-crossing of the fused distance field with its outward normal.
#[derive(Debug, Clone, Copy)]
pub struct SurfacePoint {
    pub point: Vector3<f64>,
    pub normal: Vector3<f64>,
    /// Grid voxel containing the crossing point.
    pub voxel: VoxelIndex,
}

impl TsdfGrid {
    /// Grid over a cube of side `side` meters with `n` voxels per side, whose
    /// min corner sits at `origin`.
    pub fn new(side: f64, n: usize, origin: Pose) -> Self {
        let voxel = side / n as f64;
        Self::with_truncation(side, n, origin, DEFAULT_TRUNCATION_VOXELS * voxel)
    }

    pub fn with_truncation(side: f64, n: usize, origin: Pose, truncation: f64) -> Self {
        assert!(side > 0.0 && n > 0 && truncation > 0.0);
        TsdfGrid {
            side,
            n,
            origin,
            truncation,
            weight_cap: DEFAULT_WEIGHT_CAP,
            values: vec![0.0; n * n * n],
            weights: vec![0.0; n * n * n],
        }
    }

    /// Grid covering a workspace box (assumed cubic), corner at its min.
    pub fn for_workspace(workspace: &Aabb, n: usize) -> Self {
        let ext = workspace.max - workspace.min;
        TsdfGrid::new(ext.x, n, Pose::from_translation(workspace.min))
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn side_length(&self) -> f64 {
        self.side
    }

    pub fn voxel_size(&self) -> f64 {
        self.side / self.n as f64
    }

    pub fn truncation(&self) -> f64 {
        self.truncation
    }

    pub fn origin(&self) -> &Pose {
        &self.origin
    }

    pub fn linear(&self, idx: VoxelIndex) -> usize {
        (idx[0] * self.n + idx[1]) * self.n + idx[2]
    }

    pub fn from_linear(&self, lin: usize) -> VoxelIndex {
        let k = lin % self.n;
        let j = (lin / self.n) % self.n;
        let i = lin / (self.n * self.n);
        [i, j, k]
    }

    pub fn value(&self, idx: VoxelIndex) -> f64 {
        self.values[self.linear(idx)]
    }

    pub fn weight(&self, idx: VoxelIndex) -> f64 {
        self.weights[self.linear(idx)]
    }

    pub fn state(&self, idx: VoxelIndex) -> VoxelState {
        let lin = self.linear(idx);
        classify(self.values[lin], self.weights[lin])
    }

    pub fn voxel_center(&self, idx: VoxelIndex) -> Vector3<f64> {
        let h = self.voxel_size();
        self.origin.transform_point(Vector3::new(
            (idx[0] as f64 + 0.5) * h,
            (idx[1] as f64 + 0.5) * h,
            (idx[2] as f64 + 0.5) * h,
        ))
    }

    /// Voxel containing a world point. Coordinates floor into voxels, so
    /// points exactly on the max face are out of bounds.
    pub fn world_to_index(&self, p: Vector3<f64>) -> Option<VoxelIndex> {
        let local = self.origin.inverse().transform_point(p);
        let h = self.voxel_size();
        let mut idx = [0usize; 3];
        for a in 0..3 {
            let c = (local[a] / h).floor();
            if c < 0.0 || c >= self.n as f64 {
                return None;
            }
            idx[a] = c as usize;
        }
        Some(idx)
    }

    /// Indices of all observed, negative-valued voxels whose centers lie in
    /// `bbox` (world frame). These are the candidate rear-side voxels for
    /// information gain.
    pub fn negative_observed_in(&self, bbox: &Aabb) -> Vec<VoxelIndex> {
        let mut out = Vec::new();
        for lin in 0..self.values.len() {
            if self.weights[lin] > 0.0 && self.values[lin] < 0.0 {
                let idx = self.from_linear(lin);
                if bbox.contains(self.voxel_center(idx)) {
                    out.push(idx);
                }
            }
        }
        out
    }

    /// Projective TSDF update. For every voxel center visible in the image,
    /// the signed distance along the ray (`depth - voxel z`) is truncated,
    /// normalized, and fused with an incremented-weight running average.
    /// Voxels farther than one truncation band behind the surface are left
    /// untouched.
    pub fn integrate(&mut self, depth: &DepthImage, camera: &Pose) {
        debug_assert!(camera.is_finite());
        let cam_inv = camera.inverse();
        let intr = &depth.intrinsics;
        for lin in 0..self.values.len() {
            let p_cam = cam_inv.transform_point(self.voxel_center(self.from_linear(lin)));
            let Some((u, v)) = intr.project(p_cam) else {
                continue;
            };
            let d = depth.depth_at(u, v);
            if d <= 0.0 {
                continue;
            }
            let sdf = d - p_cam.z;
            if sdf <= -self.truncation {
                continue;
            }
            let sample = (sdf / self.truncation).clamp(-1.0, 1.0);
            let w = self.weights[lin];
            self.values[lin] = (self.values[lin] * w + sample) / (w + 1.0);
            self.weights[lin] = (w + 1.0).min(self.weight_cap);
        }
    }

    /// Walk every voxel pierced by the segment `origin + t·dir`,
    /// `t ∈ [0, max_range]`, in entry order, invoking `visit` with the voxel
    /// index. Return `false` from the visitor to stop early.
    ///
    /// Amortized DDA: one comparison and one addition per voxel step. Entry
    /// points exactly on a voxel boundary belong to the voxel in the
    /// direction of travel.
    pub fn walk_ray<F: FnMut(VoxelIndex) -> bool>(
        &self,
        origin: Vector3<f64>,
        dir: Vector3<f64>,
        max_range: f64,
        mut visit: F,
    ) {
        let inv = self.origin.inverse();
        let o = inv.transform_point(origin);
        let d = inv.rotate_vector(dir);
        let h = self.voxel_size();
        let side = self.side;

        // Clip [0, max_range] against the cube [0, side]³.
        let mut t0 = 0.0f64;
        let mut t1 = max_range;
        for a in 0..3 {
            if d[a].abs() < 1e-15 {
                if o[a] < 0.0 || o[a] > side {
                    return;
                }
                continue;
            }
            let inv_d = 1.0 / d[a];
            let (mut ta, mut tb) = ((0.0 - o[a]) * inv_d, (side - o[a]) * inv_d);
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
        }
        if t0 > t1 {
            return;
        }

        let entry = o + d * t0;
        let n = self.n as i64;
        let mut idx = [0i64; 3];
        let mut step = [0i64; 3];
        let mut t_max = [f64::INFINITY; 3];
        let mut t_delta = [f64::INFINITY; 3];
        for a in 0..3 {
            let c = entry[a] / h;
            let mut i = c.floor() as i64;
            // On-boundary entries move with the ray direction.
            if c == i as f64 && d[a] < 0.0 {
                i -= 1;
            }
            idx[a] = i.clamp(0, n - 1);
            if d[a] > 1e-15 {
                step[a] = 1;
                t_delta[a] = h / d[a];
                t_max[a] = t0 + ((idx[a] + 1) as f64 * h - entry[a]) / d[a];
            } else if d[a] < -1e-15 {
                step[a] = -1;
                t_delta[a] = -h / d[a];
                t_max[a] = t0 + (idx[a] as f64 * h - entry[a]) / d[a];
            }
        }

        loop {
            if !visit([idx[0] as usize, idx[1] as usize, idx[2] as usize]) {
                return;
            }
            // Advance along the axis with the nearest boundary; ties resolve
            // x before y before z for determinism.
            let axis = if t_max[0] <= t_max[1] && t_max[0] <= t_max[2] {
                0
            } else if t_max[1] <= t_max[2] {
                1
            } else {
                2
            };
            if t_max[axis] > t1 {
                return;
            }
            idx[axis] += step[axis];
            if idx[axis] < 0 || idx[axis] >= n {
                return;
            }
            t_max[axis] += t_delta[axis];
        }
    }

    /// Ordered list of (voxel index, state) for every voxel the segment
    /// pierces. Empty if the ray misses the grid entirely.
    pub fn traverse_ray(
        &self,
        origin: Vector3<f64>,
        dir: Vector3<f64>,
        max_range: f64,
    ) -> Vec<(VoxelIndex, VoxelState)> {
        debug_assert!(
            (dir.norm() - 1.0).abs() < 1e-9,
            "traverse_ray expects a unit direction"
        );
        let mut out = Vec::new();
        self.walk_ray(origin, dir, max_range, |idx| {
            out.push((idx, self.state(idx)));
            true
        });
        out
    }

    /// Zero-crossing points between adjacent observed voxels of opposite
    /// value sign, linearly interpolated, with central-difference gradient
    /// normals. Crossings where either endpoint lacks a full gradient stencil
    /// are skipped.
    pub fn surface_points(&self) -> Vec<SurfacePoint> {
        let mut out = Vec::new();
        let n = self.n;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let a = [i, j, k];
                    for axis in 0..3 {
                        let mut b = a;
                        b[axis] += 1;
                        if b[axis] >= n {
                            continue;
                        }
                        if let Some(sp) = self.edge_crossing(a, b) {
                            out.push(sp);
                        }
                    }
                }
            }
        }
        out
    }

    fn edge_crossing(&self, a: VoxelIndex, b: VoxelIndex) -> Option<SurfacePoint> {
        let (va, wa) = (self.value(a), self.weight(a));
        let (vb, wb) = (self.value(b), self.weight(b));
        if wa == 0.0 || wb == 0.0 {
            return None;
        }
        if (va < 0.0) == (vb < 0.0) {
            return None;
        }
        // Clamped endpoints mark a shadow boundary (deep shadow meeting free
        // space observed from elsewhere), not a real surface.
        if va.abs() >= 1.0 || vb.abs() >= 1.0 {
            return None;
        }
        let t = va / (va - vb);
        let ga = self.gradient_at(a)?;
        let gb = self.gradient_at(b)?;
        let g = ga * (1.0 - t) + gb * t;
        let norm = g.norm();
        if norm < 1e-12 {
            return None;
        }
        // A genuine distance field has unit metric slope (1/truncation in
        // normalized units); reject crossings whose gradient is far off.
        let metric_slope = norm * self.truncation;
        if !(0.25..=2.5).contains(&metric_slope) {
            return None;
        }
        let pa = self.voxel_center(a);
        let pb = self.voxel_center(b);
        let point = pa + (pb - pa) * t;
        let voxel = self.world_to_index(point)?;
        Some(SurfacePoint {
            point,
            // The gradient runs from negative (inside) to positive (outside).
            normal: g / norm,
            voxel,
        })
    }

    /// Central-difference gradient; `None` unless all six stencil voxels are
    /// observed and in bounds.
    pub fn gradient_at(&self, idx: VoxelIndex) -> Option<Vector3<f64>> {
        let mut g = Vector3::zeros();
        let h2 = 2.0 * self.voxel_size();
        for axis in 0..3 {
            if idx[axis] == 0 || idx[axis] + 1 >= self.n {
                return None;
            }
            let mut lo = idx;
            lo[axis] -= 1;
            let mut hi = idx;
            hi[axis] += 1;
            if self.weight(lo) == 0.0 || self.weight(hi) == 0.0 {
                return None;
            }
            g[axis] = (self.value(hi) - self.value(lo)) / h2;
        }
        Some(g)
    }

    // --- debug dump ---------------------------------------------------------
    //
    // Text format, one observed voxel per line:
    //
    //   tsdf v1
    //   side <f64> n <usize> trunc <f64> cap <f64>
    //   origin <qx> <qy> <qz> <qw> <tx> <ty> <tz>
    //   <i> <j> <k> <value> <weight>
    //
    // Floats print in Rust's shortest round-trip form, so dump/load is
    // bit-exact. Voxels absent from the listing are Unknown.

    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "tsdf v1");
        let _ = writeln!(
            s,
            "side {} n {} trunc {} cap {}",
            self.side, self.n, self.truncation, self.weight_cap
        );
        let q = self.origin.quat_xyzw();
        let t = self.origin.translation();
        let _ = writeln!(
            s,
            "origin {} {} {} {} {} {} {}",
            q[0], q[1], q[2], q[3], t.x, t.y, t.z
        );
        for lin in 0..self.values.len() {
            if self.weights[lin] > 0.0 {
                let [i, j, k] = self.from_linear(lin);
                let _ = writeln!(
                    s,
                    "{} {} {} {} {}",
                    i, j, k, self.values[lin], self.weights[lin]
                );
            }
        }
        s
    }

    pub fn dump_to(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.dump())?;
        Ok(())
    }

    pub fn parse_dump(text: &str) -> Result<TsdfGrid> {
        let bad = |line: usize, msg: &str| {
            Error::InvalidConfig(format!("tsdf dump line {}: {}", line + 1, msg))
        };
        let mut lines = text.lines().enumerate();
        let (i0, header) = lines.next().ok_or_else(|| bad(0, "empty dump"))?;
        if header.trim() != "tsdf v1" {
            return Err(bad(i0, "expected header 'tsdf v1'"));
        }
        let (i1, meta) = lines.next().ok_or_else(|| bad(1, "missing meta line"))?;
        let parts: Vec<&str> = meta.split_whitespace().collect();
        if parts.len() != 8 || parts[0] != "side" || parts[2] != "n" || parts[4] != "trunc" {
            return Err(bad(i1, "malformed meta line"));
        }
        let side: f64 = parts[1].parse().map_err(|_| bad(i1, "bad side"))?;
        let n: usize = parts[3].parse().map_err(|_| bad(i1, "bad n"))?;
        let trunc: f64 = parts[5].parse().map_err(|_| bad(i1, "bad trunc"))?;
        let cap: f64 = parts[7].parse().map_err(|_| bad(i1, "bad cap"))?;
        let (i2, origin_line) = lines.next().ok_or_else(|| bad(2, "missing origin"))?;
        let o: Vec<&str> = origin_line.split_whitespace().collect();
        if o.len() != 8 || o[0] != "origin" {
            return Err(bad(i2, "malformed origin line"));
        }
        let f = |s: &str| s.parse::<f64>().map_err(|_| bad(i2, "bad origin float"));
        let origin = Pose::from_quat_xyzw(
            [f(o[1])?, f(o[2])?, f(o[3])?, f(o[4])?],
            [f(o[5])?, f(o[6])?, f(o[7])?],
        );
        let mut grid = TsdfGrid::with_truncation(side, n, origin, trunc);
        grid.weight_cap = cap;
        for (ln, line) in lines {
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.is_empty() {
                continue;
            }
            if parts.len() != 5 {
                return Err(bad(ln, "expected 'i j k value weight'"));
            }
            let idx: VoxelIndex = [
                parts[0].parse().map_err(|_| bad(ln, "bad index"))?,
                parts[1].parse().map_err(|_| bad(ln, "bad index"))?,
                parts[2].parse().map_err(|_| bad(ln, "bad index"))?,
            ];
            if idx.iter().any(|&c| c >= n) {
                return Err(bad(ln, "index out of bounds"));
            }
            let lin = grid.linear(idx);
            grid.values[lin] = parts[3].parse().map_err(|_| bad(ln, "bad value"))?;
            grid.weights[lin] = parts[4].parse().map_err(|_| bad(ln, "bad weight"))?;
        }
        Ok(grid)
    }
}

fn classify(value: f64, weight: f64) -> VoxelState {
    if weight == 0.0 {
        VoxelState::Unknown
    } else if value >= 0.0 {
        VoxelState::FreeObserved
    } else {
        VoxelState::NegativeObserved
    }
}
