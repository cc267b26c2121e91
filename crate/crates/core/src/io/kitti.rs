//! KITTI velodyne scans and calibration text.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3x4, Matrix4};

use crate::cloud::{AttrDesc, AttributeSchema, PointCloud};
use crate::error::{Error, Result};
use crate::geometry::Calibration;

/// Image extent assumed when a calib file has no `image_size:` line
/// (the usual KITTI object-benchmark frame).
pub const KITTI_IMAGE_W: usize = 1242;
pub const KITTI_IMAGE_H: usize = 375;

const RECORD: usize = 16;

/// x, y, z, intensity as stored in a velodyne `.bin`.
pub fn kitti_schema() -> AttributeSchema {
    AttributeSchema::new(vec![
        AttrDesc::continuous("x", "m"),
        AttrDesc::continuous("y", "m"),
        AttrDesc::continuous("z", "m"),
        AttrDesc::continuous("intensity", ""),
    ])
    .expect("fixed schema")
}

pub fn decode_kitti_bin(bytes: &[u8]) -> Result<PointCloud> {
    if !bytes.len().is_multiple_of(RECORD) {
        return Err(Error::parse(
            "kitti bin",
            format!(
                "length {} is not a multiple of {RECORD} (truncated record of {} bytes)",
                bytes.len(),
                bytes.len() % RECORD
            ),
        ));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    PointCloud::new(kitti_schema(), values)
}

/// Encodes the first four attributes of each point as little-endian `f32`.
/// Values that do not survive the narrowing exactly are rejected.
pub fn encode_kitti_bin(cloud: &PointCloud) -> Result<Vec<u8>> {
    if cloud.num_attrs() < 4 {
        return Err(Error::LengthMismatch {
            what: "kitti bin attributes",
            expected: 4,
            got: cloud.num_attrs(),
        });
    }
    let mut out = Vec::with_capacity(cloud.len() * RECORD);
    for (i, row) in cloud.rows().enumerate() {
        for &v in &row[..4] {
            let narrow = v as f32;
            if narrow as f64 != v {
                return Err(Error::parse(
                    "kitti bin",
                    format!("value {v} at point {i} is not representable as f32"),
                ));
            }
            out.extend_from_slice(&narrow.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn read_kitti_bin(path: &Path) -> Result<PointCloud> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_kitti_bin(&bytes).map_err(|e| with_path(e, path))
}

pub fn write_kitti_bin(cloud: &PointCloud, path: &Path) -> Result<()> {
    std::fs::write(path, encode_kitti_bin(cloud)?).map_err(|e| Error::io(path, e))
}

fn with_path(err: Error, path: &Path) -> Error {
    match err {
        Error::Parse { context, message } => Error::Parse {
            context: format!("{context} {}", path.display()),
            message,
        },
        e => e,
    }
}

struct Entry {
    line: usize,
    values: Vec<f64>,
}

fn calib_err(key: &str, message: impl Into<String>) -> Error {
    Error::parse(format!("calib key `{key}`"), message)
}

/// Parses calibration text. `P2`, `R0_rect` and `Tr_velo_to_cam` are
/// required; an optional `image_size: W H` line sets the extent. Other keys
/// are ignored.
pub fn parse_kitti_calib(text: &str) -> Result<Calibration> {
    let mut p2 = None;
    let mut r0 = None;
    let mut tr = None;
    let mut size = None;
    for (ln, line) in text.lines().enumerate() {
        let line_no = ln + 1;
        let trimmed = line.trim_start();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let Some((key, rest)) = line.split_once(':') else {
            return Err(Error::parse(
                "calib",
                format!("line {line_no}: expected `key: values`"),
            ));
        };
        let key = key.trim();
        let slot = match key {
            "P2" => &mut p2,
            "R0_rect" => &mut r0,
            "Tr_velo_to_cam" => &mut tr,
            "image_size" => &mut size,
            _ => continue,
        };
        if slot.is_some() {
            return Err(calib_err(key, format!("line {line_no}: duplicate key")));
        }
        let mut col = line.len() - rest.len();
        let mut values = Vec::new();
        for tok in rest.split_inclusive(char::is_whitespace) {
            let word = tok.trim_end();
            if !word.is_empty() {
                let v: f64 = word.parse().map_err(|_| {
                    calib_err(
                        key,
                        format!(
                            "line {line_no}, column {}: cannot parse `{word}` as a number",
                            col + 1
                        ),
                    )
                })?;
                if !v.is_finite() {
                    return Err(calib_err(
                        key,
                        format!("line {line_no}, column {}: non-finite value", col + 1),
                    ));
                }
                values.push(v);
            }
            col += tok.chars().count();
        }
        *slot = Some(Entry {
            line: line_no,
            values,
        });
    }

    let take = |key: &str, entry: Option<Entry>, n: usize| -> Result<Vec<f64>> {
        let e = entry.ok_or_else(|| calib_err(key, "missing"))?;
        if e.values.len() != n {
            return Err(calib_err(
                key,
                format!(
                    "line {}: expected {n} values, got {}",
                    e.line,
                    e.values.len()
                ),
            ));
        }
        Ok(e.values)
    };
    let p = Matrix3x4::from_row_slice(&take("P2", p2, 12)?);
    let r = take("R0_rect", r0, 9)?;
    let mut r_rect = Matrix4::identity();
    for i in 0..3 {
        for j in 0..3 {
            r_rect[(i, j)] = r[3 * i + j];
        }
    }
    let t = take("Tr_velo_to_cam", tr, 12)?;
    let mut t_velo_cam = Matrix4::identity();
    for i in 0..3 {
        for j in 0..4 {
            t_velo_cam[(i, j)] = t[4 * i + j];
        }
    }
    let (w, h) = match size {
        None => (KITTI_IMAGE_W, KITTI_IMAGE_H),
        Some(_) => {
            let s = take("image_size", size, 2)?;
            let ok = |v: f64| v >= 1.0 && v.fract() == 0.0;
            if !ok(s[0]) || !ok(s[1]) {
                return Err(calib_err(
                    "image_size",
                    "width and height must be positive integers",
                ));
            }
            (s[0] as usize, s[1] as usize)
        }
    };
    Calibration::new(p, r_rect, t_velo_cam, w, h)
}

/// Writes the three required keys plus `image_size`. Fails when `R_rect`
/// has a translation part, which the KITTI layout cannot express.
pub fn format_kitti_calib(calib: &Calibration) -> Result<String> {
    let r = &calib.r_rect;
    if (0..3).any(|i| r[(i, 3)] != 0.0) {
        return Err(Error::Calibration(
            "R_rect has a translation column; not expressible as R0_rect".into(),
        ));
    }
    let mut s = String::new();
    let row = |s: &mut String, key: &str, vals: &mut dyn Iterator<Item = f64>| {
        s.push_str(key);
        s.push(':');
        for v in vals {
            write!(s, " {v}").expect("string write");
        }
        s.push('\n');
    };
    row(&mut s, "P2", &mut (0..12).map(|k| calib.p[(k / 4, k % 4)]));
    row(&mut s, "R0_rect", &mut (0..9).map(|k| r[(k / 3, k % 3)]));
    row(
        &mut s,
        "Tr_velo_to_cam",
        &mut (0..12).map(|k| calib.t_velo_cam[(k / 4, k % 4)]),
    );
    writeln!(s, "image_size: {} {}", calib.image_w, calib.image_h).expect("string write");
    Ok(s)
}

pub fn read_kitti_calib(path: &Path) -> Result<Calibration> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_kitti_calib(&text).map_err(|e| with_path(e, path))
}

pub fn write_kitti_calib(calib: &Calibration, path: &Path) -> Result<()> {
    std::fs::write(path, format_kitti_calib(calib)?).map_err(|e| Error::io(path, e))
}
