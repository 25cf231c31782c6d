//! Pinhole camera model and z-depth images.
//!
//! Camera frame convention: +x right, +y down (image rows), +z along the
//! optical axis. Pixel `(u, v)` looks through the point `(u + 0.5, v + 0.5)`
//! in pixel coordinates, and depth values are z-depths (distance along the
//! optical axis, not Euclidean ray length). Invalid pixels store `0.0`.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Closest reportable z-depth, meters.
    pub depth_min: f64,
    /// Farthest reportable z-depth, meters.
    pub depth_max: f64,
}

impl CameraIntrinsics {
    pub fn new(width: u32, height: u32, fx: f64, fy: f64, depth_min: f64, depth_max: f64) -> Self {
        assert!(fx > 0.0 && fy > 0.0, "focal lengths must be positive");
        assert!(
            0.0 < depth_min && depth_min < depth_max,
            "need 0 < depth_min < depth_max"
        );
        CameraIntrinsics {
            width,
            height,
            fx,
            fy,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            depth_min,
            depth_max,
        }
    }

    /// Default virtual sensor: a RealSense-like depth camera downscaled for
    /// simulation speed (~72° horizontal field of view).
    pub fn default_sensor() -> Self {
        CameraIntrinsics::new(160, 120, 110.0, 110.0, 0.1, 1.0)
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Ray through pixel `(u, v)` in the camera frame, scaled so that the z
    /// component is exactly 1: the ray parameter then equals z-depth.
    pub fn pixel_ray(&self, u: u32, v: u32) -> Vector3<f64> {
        Vector3::new(
            (u as f64 + 0.5 - self.cx) / self.fx,
            (v as f64 + 0.5 - self.cy) / self.fy,
            1.0,
        )
    }

    /// Project a camera-frame point to the pixel containing it, or `None` if
    /// it is behind the camera or outside the image.
    pub fn project(&self, p_cam: Vector3<f64>) -> Option<(u32, u32)> {
        if p_cam.z <= 1e-12 {
            return None;
        }
        let u = (self.fx * p_cam.x / p_cam.z + self.cx).floor();
        let v = (self.fy * p_cam.y / p_cam.z + self.cy).floor();
        if u < 0.0 || v < 0.0 || u >= self.width as f64 || v >= self.height as f64 {
            return None;
        }
        Some((u as u32, v as u32))
    }

    pub fn in_depth_range(&self, d: f64) -> bool {
        d >= self.depth_min && d <= self.depth_max
    }
}

/// Row-major z-depth image; `0.0` marks pixels with no valid return.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthImage {
    pub intrinsics: CameraIntrinsics,
    pub depths: Vec<f64>,
}

impl DepthImage {
    pub fn new(intrinsics: CameraIntrinsics, depths: Vec<f64>) -> Self {
        assert_eq!(depths.len(), intrinsics.pixel_count());
        DepthImage { intrinsics, depths }
    }

    pub fn constant(intrinsics: CameraIntrinsics, depth: f64) -> Self {
        let n = intrinsics.pixel_count();
        DepthImage::new(intrinsics, vec![depth; n])
    }

    pub fn depth_at(&self, u: u32, v: u32) -> f64 {
        self.depths[(v * self.intrinsics.width + u) as usize]
    }

    pub fn is_valid(&self, u: u32, v: u32) -> bool {
        self.depth_at(u, v) > 0.0
    }

    pub fn valid_count(&self) -> usize {
        self.depths.iter().filter(|d| **d > 0.0).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn project_inverts_pixel_ray() {
        let intr = CameraIntrinsics::default_sensor();
        for (u, v) in [(0, 0), (80, 60), (159, 119), (13, 97)] {
            let ray = intr.pixel_ray(u, v);
            let p = ray * 0.7; // any depth
            assert_eq!(intr.project(p), Some((u, v)));
        }
    }

    #[test]
    fn project_rejects_behind_camera() {
        let intr = CameraIntrinsics::default_sensor();
        assert_eq!(intr.project(Vector3::new(0.0, 0.0, -0.5)), None);
        assert_eq!(intr.project(Vector3::new(10.0, 0.0, 0.5)), None);
    }
}
