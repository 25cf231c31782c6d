//! Virtual depth sensor: exact per-pixel ray casting against the analytic
//! scene, with optional Gaussian depth noise.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::Scene;
use crate::camera::{CameraIntrinsics, DepthImage};
use crate::error::{Error, Result};
use crate::geom::{seed_from_pose, Pose};

/// Nearest hit along a world ray: z-depth parameter and the id of the object
/// hit (`None` for the table).
fn nearest_hit(scene: &Scene, origin: Vector3<f64>, dir: Vector3<f64>) -> Option<(f64, Option<u32>)> {
    let mut best: Option<(f64, Option<u32>)> = None;
    // Table plane z = table_height, visible from above only.
    if dir.z < -1e-12 {
        let t = (scene.table_height - origin.z) / dir.z;
        if t > 1e-12 {
            best = Some((t, None));
        }
    }
    for obj in &scene.objects {
        if let Some((t, _)) = obj.ray_hit(origin, dir) {
            if best.map_or(true, |(bt, _)| t < bt) {
                best = Some((t, Some(obj.id)));
            }
        }
    }
    best
}

/// Render a z-depth image from `camera`. Hits outside the sensor's depth
/// range (and sky pixels) are invalid (0). With `noise_sigma > 0`, additive
/// Gaussian noise is applied to valid pixels and clamped back into range; the
/// noise stream is seeded from `(scene.seed, camera)` so renders are
/// reproducible.
pub fn render_depth(
    scene: &Scene,
    camera: &Pose,
    intr: &CameraIntrinsics,
    noise_sigma: f64,
) -> DepthImage {
    debug_assert!(camera.is_finite());
    let origin = camera.translation();
    let mut depths = vec![0.0f64; intr.pixel_count()];
    for v in 0..intr.height {
        for u in 0..intr.width {
            // Ray scaled so the camera-frame z component is 1: the ray
            // parameter of a hit is directly its z-depth.
            let dir = camera.rotate_vector(intr.pixel_ray(u, v));
            if let Some((t, _)) = nearest_hit(scene, origin, dir) {
                if intr.in_depth_range(t) {
                    depths[(v * intr.width + u) as usize] = t;
                }
            }
        }
    }
    if noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed_from_pose(scene.seed, camera));
        let normal = Normal::new(0.0, noise_sigma).expect("sigma must be finite");
        for d in depths.iter_mut() {
            let n = normal.sample(&mut rng);
            if *d > 0.0 {
                *d = (*d + n).clamp(intr.depth_min, intr.depth_max);
            }
        }
    }
    DepthImage::new(*intr, depths)
}

/// Exact per-pixel object-id mask under the same visibility rules as
/// [`render_depth`] with noise off. Table and sky pixels are `None`.
pub fn render_id_mask(scene: &Scene, camera: &Pose, intr: &CameraIntrinsics) -> Vec<Option<u32>> {
    let origin = camera.translation();
    let mut mask = vec![None; intr.pixel_count()];
    for v in 0..intr.height {
        for u in 0..intr.width {
            let dir = camera.rotate_vector(intr.pixel_ray(u, v));
            if let Some((t, id)) = nearest_hit(scene, origin, dir) {
                if intr.in_depth_range(t) {
                    mask[(v * intr.width + u) as usize] = id;
                }
            }
        }
    }
    mask
}

/// Choose the target: the object with the fewest visible pixels from the
/// initial view, among objects with at least one visible pixel. Ties break
/// toward the lowest id. Errors when nothing is visible so the harness can
/// reject the scene.
pub fn select_target(scene: &Scene, initial_view: &Pose, intr: &CameraIntrinsics) -> Result<u32> {
    assert!(!scene.objects.is_empty(), "scene must contain objects");
    let mask = render_id_mask(scene, initial_view, intr);
    let mut counts: Vec<(u32, usize)> = scene.objects.iter().map(|o| (o.id, 0)).collect();
    for id in mask.into_iter().flatten() {
        if let Some(entry) = counts.iter_mut().find(|(oid, _)| *oid == id) {
            entry.1 += 1;
        }
    }
    counts
        .into_iter()
        .filter(|(_, n)| *n > 0)
        .min_by_key(|&(id, n)| (n, id))
        .map(|(id, _)| id)
        .ok_or(Error::NoVisibleObject)
}
