//! Attribute-token point encoder: per-attribute tokenizer, self-attention
//! among a point's tokens, and a small per-point segmentation head with
//! optional neighbor pooling.

mod checkpoint;
mod config;
mod forward;
mod gradcheck;
mod graph;
mod knn;
mod model;
mod params;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, MAGIC, VERSION,
};
pub use config::EncoderConfig;
pub use forward::{
    argmax_rows, attend, attention_weights, encode_point, forward_segmentation, tokenize,
};
pub use gradcheck::{gradcheck, gradcheck_instance, GRADCHECK_EPS};
pub use graph::{forward_graph, ForwardGraph};
pub use knn::{cloud_xyz, knn_indices};
pub use model::{schemas_compatible, SegmentationModel};
pub use params::{AttrParams, EncoderParams};
