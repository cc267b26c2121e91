//! Camera calibration, lidar to image projection and point painting.

mod calib;
mod mask;
mod paint;
mod project;

pub use calib::{perturb_calibration, Calibration};
pub use mask::LabeledMask;
pub use paint::{
    paint_with_mask, run_self_painting, run_two_stage, self_paint_stage1, self_paint_stage2,
    Segmenter, TwoStage, INSTANCE_TABLE_SIZE, INST_ATTR, SELFSEM_ATTR, SEM_ATTR,
};
pub use project::{project_point, project_points, ProjectedPoint, Projection, MIN_DEPTH};
