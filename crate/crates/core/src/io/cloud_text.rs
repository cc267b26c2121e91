//! Columnar text clouds.
//!
//! The first line names every column as `name:kind`, where kind is `f`
//! (continuous), `f@unit` (continuous with a unit) or `cN` (categorical
//! with cardinality N). An optional final `gt:label` column holds
//! ground-truth class ids. Each further line is one point, values separated
//! by single spaces. Continuous values use the shortest decimal form that
//! parses back to the same `f64`; categorical values are integers.

use std::fmt::Write as _;
use std::path::Path;

use crate::cloud::{AttrDesc, AttrKind, AttributeSchema, PointCloud};
use crate::error::{Error, Result};

pub const GT_COLUMN: &str = "gt:label";

fn check_name(name: &str) -> Result<()> {
    let bad = name.is_empty()
        || name
            .chars()
            .any(|c| c.is_whitespace() || c == ':' || c == '@');
    if bad || name == "gt" {
        return Err(Error::parse(
            "cloud text",
            format!("attribute name `{name}` cannot be written"),
        ));
    }
    Ok(())
}

fn header_token(desc: &AttrDesc) -> Result<String> {
    check_name(&desc.name)?;
    Ok(match desc.kind {
        AttrKind::Continuous if desc.unit.is_empty() => format!("{}:f", desc.name),
        AttrKind::Continuous => {
            if desc.unit.chars().any(char::is_whitespace) {
                return Err(Error::parse(
                    "cloud text",
                    format!("unit `{}` contains whitespace", desc.unit),
                ));
            }
            format!("{}:f@{}", desc.name, desc.unit)
        }
        AttrKind::Categorical { cardinality } => format!("{}:c{cardinality}", desc.name),
    })
}

pub fn format_cloud(cloud: &PointCloud) -> Result<String> {
    let schema = cloud.schema();
    let mut header: Vec<String> = schema
        .attrs()
        .iter()
        .map(header_token)
        .collect::<Result<_>>()?;
    let gt = cloud.gt_labels();
    if gt.is_some() {
        header.push(GT_COLUMN.to_string());
    }
    let mut out = header.join(" ");
    out.push('\n');
    for (i, row) in cloud.rows().enumerate() {
        for (j, (&v, desc)) in row.iter().zip(schema.attrs()).enumerate() {
            if j > 0 {
                out.push(' ');
            }
            if desc.is_categorical() {
                write!(out, "{}", v as i64)
            } else {
                write!(out, "{v}")
            }
            .expect("string write");
        }
        if let Some(gt) = gt {
            write!(out, " {}", gt[i]).expect("string write");
        }
        out.push('\n');
    }
    Ok(out)
}

fn parse_header_token(tok: &str, col: usize) -> Result<AttrDesc> {
    let err = |m: String| Error::parse("cloud text header", format!("column {col}: {m}"));
    let (name, kind) = tok
        .split_once(':')
        .ok_or_else(|| err(format!("`{tok}` lacks a `:kind` suffix")))?;
    if name.is_empty() {
        return Err(err("empty attribute name".into()));
    }
    if kind == "f" {
        return Ok(AttrDesc::continuous(name, ""));
    }
    if let Some(unit) = kind.strip_prefix("f@") {
        return Ok(AttrDesc::continuous(name, unit));
    }
    if let Some(card) = kind.strip_prefix('c') {
        if let Ok(c) = card.parse::<usize>() {
            return Ok(AttrDesc::categorical(name, c));
        }
    }
    Err(err(format!("unknown kind suffix `{kind}` in `{tok}`")))
}

pub fn parse_cloud(text: &str) -> Result<PointCloud> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse("cloud text", "missing header line"))?;
    let mut tokens: Vec<&str> = header.split_whitespace().collect();
    let has_gt = tokens.last() == Some(&GT_COLUMN);
    if has_gt {
        tokens.pop();
    }
    if tokens.contains(&GT_COLUMN) {
        return Err(Error::parse(
            "cloud text header",
            "`gt:label` must be the last column",
        ));
    }
    let attrs = tokens
        .iter()
        .enumerate()
        .map(|(i, t)| parse_header_token(t, i + 1))
        .collect::<Result<Vec<_>>>()?;
    let schema = AttributeSchema::new(attrs)?;
    let m = schema.len();
    let width = m + has_gt as usize;

    let mut values = Vec::new();
    let mut gt = Vec::new();
    for (ln, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != width {
            return Err(Error::parse(
                "cloud text",
                format!(
                    "line {}: expected {width} values, got {}",
                    ln + 1,
                    fields.len()
                ),
            ));
        }
        for (j, f) in fields.iter().enumerate() {
            let bad = || {
                Error::parse(
                    "cloud text",
                    format!("line {}, column {}: cannot parse `{f}`", ln + 1, j + 1),
                )
            };
            if j == m {
                gt.push(f.parse::<i64>().map_err(|_| bad())?);
            } else if schema.attrs()[j].is_categorical() {
                values.push(f.parse::<i64>().map_err(|_| bad())? as f64);
            } else {
                values.push(f.parse::<f64>().map_err(|_| bad())?);
            }
        }
    }
    let cloud = PointCloud::new(schema, values)?;
    if has_gt {
        cloud.with_gt_labels(gt)
    } else {
        Ok(cloud)
    }
}

pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_cloud(&text)
}

pub fn write_cloud(cloud: &PointCloud, path: &Path) -> Result<()> {
    std::fs::write(path, format_cloud(cloud)?).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn painted_schema() -> AttributeSchema {
        AttributeSchema::lidar()
            .with(AttrDesc::categorical("sem", 4))
            .unwrap()
    }

    #[test]
    fn header_and_rows() {
        let c = PointCloud::new(painted_schema(), vec![1.5, -2.0, 0.1, 0.25, 0.0, -1.0])
            .unwrap()
            .with_gt_labels(vec![3])
            .unwrap();
        let text = format_cloud(&c).unwrap();
        assert_eq!(
            text,
            "x:f@m y:f@m z:f@m intensity:f t:f@s sem:c4 gt:label\n1.5 -2 0.1 0.25 0 -1 3\n"
        );
        assert_eq!(parse_cloud(&text).unwrap(), c);
    }

    #[test]
    fn empty_cloud() {
        let c = PointCloud::empty(painted_schema());
        let back = parse_cloud(&format_cloud(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(back.is_empty());
    }

    #[test]
    fn arity_and_kind_errors() {
        let err = parse_cloud("x:f y:f\n1 2 3\n").unwrap_err().to_string();
        assert!(
            err.contains("line 2") && err.contains("expected 2"),
            "{err}"
        );
        let err = parse_cloud("x:q\n1\n").unwrap_err().to_string();
        assert!(err.contains("unknown kind suffix"), "{err}");
        assert!(parse_cloud("sem:c4\n4\n").is_err());
        assert!(parse_cloud("sem:c4\n0.5\n").is_err());
        assert!(parse_cloud("").is_err());
    }

    proptest! {
        #[test]
        fn round_trip(
            rows in prop::collection::vec(
                (any::<f64>().prop_filter("finite", |v| v.is_finite()), -1i64..4, 0i64..4),
                0..30,
            )
        ) {
            let schema = AttributeSchema::new(vec![
                AttrDesc::continuous("v", ""),
                AttrDesc::categorical("sem", 4),
            ]).unwrap();
            let values = rows.iter().flat_map(|&(v, s, _)| [v, s as f64]).collect();
            let gt = rows.iter().map(|r| r.2).collect();
            let c = PointCloud::new(schema, values).unwrap().with_gt_labels(gt).unwrap();
            let back = parse_cloud(&format_cloud(&c).unwrap()).unwrap();
            prop_assert_eq!(back, c);
        }
    }
}
