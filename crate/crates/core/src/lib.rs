//! Closed-loop next-best-view grasp planning on a shared TSDF world model.
//!
//! The crate simulates a depth camera moving around a tabletop scene while a
//! policy incrementally fuses observations into a truncated signed distance
//! field, detects parallel-jaw grasps on a target object, scores candidate
//! viewpoints by how many hidden target voxels they would reveal, and decides
//! every tick whether to keep exploring or to commit to a grasp.
//!
//! Modules mirror the pipeline stages:
//!
//! - [`geom`]: rigid poses, axis-aligned boxes, small math helpers
//! - [`camera`]: pinhole intrinsics and depth images
//! - [`scene`]: ground-truth worlds of primitive solids, rendering, and the
//!   geometric grasp-outcome oracle
//! - [`tsdf`]: the voxel map, depth fusion, ray traversal, surface extraction
//! - [`grasp`]: voxel-wise grasp fields and candidate filtering
//! - [`nbv`]: view generation on a hemisphere and information gain
//! - [`policy`]: the closed-loop controller and the fixed-camera baselines

pub mod camera;
pub mod error;
pub mod geom;
pub mod grasp;
pub mod nbv;
pub mod policy;
pub mod scene;
pub mod tsdf;

pub use error::Error;
