//! Point painting and an attribute-token point encoder.
//!
//! Points are painted with labels read from a per-pixel mask (or with a
//! model's own earlier predictions), then every scalar attribute is
//! embedded as a small learned token and the tokens of one point attend to
//! each other. A tape-based gradient engine trains the encoder, and a
//! deterministic synthetic scene generator provides exactly consistent
//! masks and labels to test against.

pub mod cloud;
pub mod encoder;
pub mod error;
pub mod geometry;
pub mod grad;
pub mod io;
pub mod metrics;
pub mod synth;
pub mod train;

pub use cloud::{AttrDesc, AttrKind, AttributeSchema, ClassSpace, PointCloud, UNKNOWN};
pub use encoder::{EncoderConfig, EncoderParams, SegmentationModel};
pub use error::{Error, Result};
pub use geometry::{Calibration, LabeledMask, Projection, Segmenter};
pub use grad::{Tape, Tensor};
pub use metrics::{miou, ConfusionMatrix, MiouReport};
