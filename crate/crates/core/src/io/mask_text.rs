//! Label masks and per-point label lists as text.
//!
//! A mask file starts with `pep-mask W H`, followed by H lines of W
//! semantic labels and then H lines of W instance ids. A label file holds
//! one integer class id per line.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::LabeledMask;

const MASK_MAGIC: &str = "pep-mask";

pub fn format_mask(mask: &LabeledMask) -> String {
    let (w, h) = (mask.width(), mask.height());
    let mut out = format!("{MASK_MAGIC} {w} {h}\n");
    for plane in [mask.semantic(), mask.instance()] {
        for row in plane.chunks(w.max(1)).take(h) {
            let line: Vec<String> = row.iter().map(i32::to_string).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
    }
    out
}

pub fn parse_mask(text: &str) -> Result<LabeledMask> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse("mask", "missing header line"))?;
    let head: Vec<&str> = header.split_whitespace().collect();
    let dims = match head.as_slice() {
        [MASK_MAGIC, w, h] => w.parse::<usize>().ok().zip(h.parse::<usize>().ok()),
        _ => None,
    };
    let (w, h) = dims.ok_or_else(|| {
        Error::parse(
            "mask",
            format!("bad header `{header}`, expected `{MASK_MAGIC} W H`"),
        )
    })?;
    let mut planes = [Vec::with_capacity(w * h), Vec::with_capacity(w * h)];
    for plane in &mut planes {
        for _ in 0..h {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| Error::parse("mask", format!("expected {} label rows", 2 * h)))?;
            let row = line
                .split_whitespace()
                .enumerate()
                .map(|(j, t)| {
                    t.parse::<i32>().map_err(|_| {
                        Error::parse(
                            "mask",
                            format!("line {}, field {}: cannot parse `{t}`", ln + 1, j + 1),
                        )
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if row.len() != w {
                return Err(Error::parse(
                    "mask",
                    format!("line {}: expected {w} labels, got {}", ln + 1, row.len()),
                ));
            }
            plane.extend(row);
        }
    }
    if let Some((ln, _)) = lines.next() {
        return Err(Error::parse(
            "mask",
            format!("line {}: trailing data", ln + 1),
        ));
    }
    let [semantic, instance] = planes;
    LabeledMask::new(w, h, semantic, instance)
}

pub fn read_mask(path: &Path) -> Result<LabeledMask> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_mask(&text)
}

pub fn write_mask(mask: &LabeledMask, path: &Path) -> Result<()> {
    std::fs::write(path, format_mask(mask)).map_err(|e| Error::io(path, e))
}

pub fn format_labels(labels: &[i64]) -> String {
    let mut out = String::with_capacity(labels.len() * 2);
    for l in labels {
        writeln!(out, "{l}").expect("string write");
    }
    out
}

pub fn parse_labels(text: &str) -> Result<Vec<i64>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse::<i64>().map_err(|_| {
                Error::parse(
                    "labels",
                    format!("line {}: cannot parse `{}`", i + 1, l.trim()),
                )
            })
        })
        .collect()
}

pub fn read_labels(path: &Path) -> Result<Vec<i64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text)
}

pub fn write_labels(labels: &[i64], path: &Path) -> Result<()> {
    std::fs::write(path, format_labels(labels)).map_err(|e| Error::io(path, e))
}
