//! File formats: KITTI velodyne and calibration files, columnar text
//! clouds, label masks and per-point label lists.

mod cloud_text;
mod kitti;
mod mask_text;

pub use cloud_text::{format_cloud, parse_cloud, read_cloud, write_cloud, GT_COLUMN};
pub use kitti::{
    decode_kitti_bin, encode_kitti_bin, format_kitti_calib, kitti_schema, parse_kitti_calib,
    read_kitti_bin, read_kitti_calib, write_kitti_bin, write_kitti_calib, KITTI_IMAGE_H,
    KITTI_IMAGE_W,
};
pub use mask_text::{
    format_labels, format_mask, parse_labels, parse_mask, read_labels, read_mask, write_labels,
    write_mask,
};
