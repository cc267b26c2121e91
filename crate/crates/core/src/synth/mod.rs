//! Deterministic synthetic scenes: primitives on a ground disk, a
//! co-located pinhole camera, an analytically rendered label mask and
//! controllable label noise.

mod corrupt;
mod primitives;
mod scene;

pub use corrupt::{corrupt_mask, is_boundary_pixel, BOUNDARY_RADIUS};
pub use primitives::{cast, Hit, Primitive, Shape};
pub use scene::{
    gen_scene, CameraSpec, Scene, SceneConfig, GROUND, NUM_CLASSES, PEDESTRIAN, POLE, VEHICLE,
};
