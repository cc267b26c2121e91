//! Attribute schemas and the point cloud matrix they describe.
//!
//! Every attribute is stored as an `f64`, categorical ids included. A
//! categorical entry is either the unknown sentinel `-1` or an integer in
//! `[0, cardinality)`.

use std::collections::HashSet;

use crate::error::{Error, Result};

/// The reserved categorical value meaning "no label available".
pub const UNKNOWN: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttrKind {
    Continuous,
    /// Number of valid ids, excluding the `-1` sentinel.
    Categorical {
        cardinality: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttrDesc {
    pub name: String,
    pub kind: AttrKind,
    /// Documentation only.
    pub unit: String,
}

impl AttrDesc {
    pub fn continuous(name: impl Into<String>, unit: impl Into<String>) -> Self {
        AttrDesc {
            name: name.into(),
            kind: AttrKind::Continuous,
            unit: unit.into(),
        }
    }

    pub fn categorical(name: impl Into<String>, cardinality: usize) -> Self {
        AttrDesc {
            name: name.into(),
            kind: AttrKind::Categorical { cardinality },
            unit: String::new(),
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, AttrKind::Categorical { .. })
    }

    pub fn cardinality(&self) -> Option<usize> {
        match self.kind {
            AttrKind::Categorical { cardinality } => Some(cardinality),
            AttrKind::Continuous => None,
        }
    }

    /// Checks one value against this descriptor. Continuous values only need
    /// to be finite.
    pub fn check_value(&self, row: usize, value: f64) -> Result<()> {
        match self.kind {
            AttrKind::Continuous => {
                if value.is_finite() {
                    Ok(())
                } else {
                    Err(Error::NonFinite(format!(
                        "attribute `{}` row {row}",
                        self.name
                    )))
                }
            }
            AttrKind::Categorical { cardinality } => {
                if categorical_ok(value, cardinality) {
                    Ok(())
                } else {
                    Err(Error::CategoricalRange {
                        name: self.name.clone(),
                        row,
                        value,
                        cardinality,
                    })
                }
            }
        }
    }
}

pub(crate) fn categorical_ok(value: f64, cardinality: usize) -> bool {
    value == UNKNOWN || (value >= 0.0 && value.fract() == 0.0 && value < cardinality as f64)
}

/// Ordered attribute descriptors with unique names.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AttributeSchema {
    attrs: Vec<AttrDesc>,
}

impl AttributeSchema {
    pub fn new(attrs: Vec<AttrDesc>) -> Result<Self> {
        let mut seen = HashSet::new();
        for a in &attrs {
            if !seen.insert(a.name.as_str()) {
                return Err(Error::DuplicateAttribute(a.name.clone()));
            }
            if a.cardinality() == Some(0) {
                return Err(Error::ZeroCardinality(a.name.clone()));
            }
        }
        Ok(AttributeSchema { attrs })
    }

    /// The raw lidar layout: x, y, z in meters, intensity, timestamp in seconds.
    pub fn lidar() -> Self {
        AttributeSchema {
            attrs: vec![
                AttrDesc::continuous("x", "m"),
                AttrDesc::continuous("y", "m"),
                AttrDesc::continuous("z", "m"),
                AttrDesc::continuous("intensity", ""),
                AttrDesc::continuous("t", "s"),
            ],
        }
    }

    pub fn attrs(&self) -> &[AttrDesc] {
        &self.attrs
    }

    pub fn len(&self) -> usize {
        self.attrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attrs.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.attrs.iter().position(|a| a.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&AttrDesc> {
        self.attrs.iter().find(|a| a.name == name)
    }

    pub fn with(&self, desc: AttrDesc) -> Result<Self> {
        if self.index_of(&desc.name).is_some() {
            return Err(Error::DuplicateAttribute(desc.name));
        }
        if desc.cardinality() == Some(0) {
            return Err(Error::ZeroCardinality(desc.name));
        }
        let mut attrs = self.attrs.clone();
        attrs.push(desc);
        Ok(AttributeSchema { attrs })
    }

    /// Column indices of x, y, z.
    pub fn xyz(&self) -> Result<[usize; 3]> {
        let find = |n: &str| {
            self.index_of(n)
                .ok_or_else(|| Error::MissingAttribute(n.to_string()))
        };
        Ok([find("x")?, find("y")?, find("z")?])
    }
}

/// An N x m attribute matrix bound to a schema, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    schema: AttributeSchema,
    values: Vec<f64>,
    gt_labels: Option<Vec<i64>>,
}

impl PointCloud {
    pub fn new(schema: AttributeSchema, values: Vec<f64>) -> Result<Self> {
        let m = schema.len();
        if m == 0 {
            if !values.is_empty() {
                return Err(Error::LengthMismatch {
                    what: "values of an attribute-less cloud",
                    expected: 0,
                    got: values.len(),
                });
            }
        } else if !values.len().is_multiple_of(m) {
            return Err(Error::LengthMismatch {
                what: "values (not a multiple of the attribute count)",
                expected: values.len() / m * m,
                got: values.len(),
            });
        }
        if m > 0 {
            for (row, chunk) in values.chunks(m).enumerate() {
                for (desc, &v) in schema.attrs().iter().zip(chunk) {
                    desc.check_value(row, v)?;
                }
            }
        }
        Ok(PointCloud {
            schema,
            values,
            gt_labels: None,
        })
    }

    pub fn from_rows(schema: AttributeSchema, rows: &[Vec<f64>]) -> Result<Self> {
        let m = schema.len();
        let mut values = Vec::with_capacity(rows.len() * m);
        for r in rows {
            if r.len() != m {
                return Err(Error::LengthMismatch {
                    what: "row",
                    expected: m,
                    got: r.len(),
                });
            }
            values.extend_from_slice(r);
        }
        Self::new(schema, values)
    }

    pub fn empty(schema: AttributeSchema) -> Self {
        PointCloud {
            schema,
            values: Vec::new(),
            gt_labels: None,
        }
    }

    /// Attaches ground-truth class ids (`-1` = unlabeled).
    pub fn with_gt_labels(mut self, labels: Vec<i64>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::LengthMismatch {
                what: "gt labels",
                expected: self.len(),
                got: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l < -1) {
            return Err(Error::ClassRange {
                id: bad,
                classes: usize::MAX,
            });
        }
        self.gt_labels = Some(labels);
        Ok(self)
    }

    pub fn without_gt_labels(mut self) -> Self {
        self.gt_labels = None;
        self
    }

    pub fn schema(&self) -> &AttributeSchema {
        &self.schema
    }

    pub fn gt_labels(&self) -> Option<&[i64]> {
        self.gt_labels.as_deref()
    }

    /// Number of points N.
    pub fn len(&self) -> usize {
        match self.schema.len() {
            0 => 0,
            m => self.values.len() / m,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of attributes m.
    pub fn num_attrs(&self) -> usize {
        self.schema.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.num_attrs();
        &self.values[i * m..(i + 1) * m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.num_attrs().max(1))
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.num_attrs() + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn column_by_name(&self, name: &str) -> Option<Vec<f64>> {
        self.schema.index_of(name).map(|j| self.column(j))
    }

    /// Returns a new cloud with `column` appended as attribute `desc`.
    /// The input is left untouched and its columns are copied bit-exactly.
    pub fn append_column(&self, desc: AttrDesc, column: &[f64]) -> Result<PointCloud> {
        let n = self.len();
        if column.len() != n {
            return Err(Error::LengthMismatch {
                what: "appended column",
                expected: n,
                got: column.len(),
            });
        }
        for (row, &v) in column.iter().enumerate() {
            desc.check_value(row, v)?;
        }
        let schema = self.schema.with(desc)?;
        let m = self.num_attrs();
        let mut values = Vec::with_capacity(n * (m + 1));
        if m == 0 {
            values.extend_from_slice(column);
        } else {
            for (r, &v) in self.values.chunks(m).zip(column) {
                values.extend_from_slice(r);
                values.push(v);
            }
        }
        Ok(PointCloud {
            schema,
            values,
            gt_labels: self.gt_labels.clone(),
        })
    }

    /// Reorders points: row `i` of the result is row `perm[i]` of `self`.
    pub fn permute_points(&self, perm: &[usize]) -> Result<PointCloud> {
        if perm.len() != self.len() {
            return Err(Error::LengthMismatch {
                what: "permutation",
                expected: self.len(),
                got: perm.len(),
            });
        }
        let mut values = Vec::with_capacity(self.values.len());
        for &p in perm {
            values.extend_from_slice(self.row(p));
        }
        Ok(PointCloud {
            schema: self.schema.clone(),
            values,
            gt_labels: self
                .gt_labels
                .as_ref()
                .map(|g| perm.iter().map(|&p| g[p]).collect()),
        })
    }
}

/// The label vocabulary. Class ids occupy `[0, C)`; `-1` is unknown.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassSpace {
    names: Vec<String>,
}

impl ClassSpace {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::Config("class space needs at least one class".into()));
        }
        Ok(ClassSpace { names })
    }

    /// ground, vehicle, pole, pedestrian.
    pub fn synthetic() -> Self {
        ClassSpace {
            names: ["ground", "vehicle", "pole", "pedestrian"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn contains(&self, id: i64) -> bool {
        id >= 0 && (id as usize) < self.names.len()
    }
}
