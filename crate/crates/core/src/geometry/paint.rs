//! Mask painting and two-stage self-painting.

use crate::cloud::{AttrDesc, PointCloud, UNKNOWN};
use crate::error::{Error, Result};

use super::mask::LabeledMask;
use super::project::Projection;

pub const SEM_ATTR: &str = "sem";
pub const INST_ATTR: &str = "inst";
pub const SELFSEM_ATTR: &str = "selfsem";

/// Instance ids are nominal; they are embedded through a table of this
/// size at index `id mod INSTANCE_TABLE_SIZE`.
pub const INSTANCE_TABLE_SIZE: usize = 64;

/// Appends `sem` and `inst` columns read from `mask` at the floored pixel of
/// each visible point. Invisible points receive `(-1, -1)`.
pub fn paint_with_mask(
    cloud: &PointCloud,
    proj: &Projection,
    mask: &LabeledMask,
    classes: usize,
) -> Result<PointCloud> {
    if proj.len() != cloud.len() {
        return Err(Error::LengthMismatch {
            what: "projection",
            expected: cloud.len(),
            got: proj.len(),
        });
    }
    if mask.width() != proj.image_w || mask.height() != proj.image_h {
        return Err(Error::LengthMismatch {
            what: "mask extent (width*height) vs calibration image",
            expected: proj.image_w * proj.image_h,
            got: mask.width() * mask.height(),
        });
    }
    let mut sem = Vec::with_capacity(cloud.len());
    let mut inst = Vec::with_capacity(cloud.len());
    for p in &proj.points {
        if !p.visible {
            sem.push(UNKNOWN);
            inst.push(UNKNOWN);
            continue;
        }
        let (s, i) = mask.at(p.u.floor() as usize, p.v.floor() as usize);
        if s >= classes as i32 {
            return Err(Error::ClassRange {
                id: s as i64,
                classes,
            });
        }
        sem.push(s as f64);
        inst.push(if i < 0 {
            UNKNOWN
        } else {
            (i as usize % INSTANCE_TABLE_SIZE) as f64
        });
    }
    cloud
        .append_column(AttrDesc::categorical(SEM_ATTR, classes), &sem)?
        .append_column(AttrDesc::categorical(INST_ATTR, INSTANCE_TABLE_SIZE), &inst)
}

/// Stage one: every point painted with the unknown label.
pub fn self_paint_stage1(cloud: &PointCloud, classes: usize) -> Result<PointCloud> {
    cloud.append_column(
        AttrDesc::categorical(SELFSEM_ATTR, classes),
        &vec![UNKNOWN; cloud.len()],
    )
}

/// Stage two: every point painted with a previous prediction in `[0, C)`.
pub fn self_paint_stage2(cloud: &PointCloud, preds: &[i64], classes: usize) -> Result<PointCloud> {
    if preds.len() != cloud.len() {
        return Err(Error::LengthMismatch {
            what: "stage-1 predictions",
            expected: cloud.len(),
            got: preds.len(),
        });
    }
    if let Some(&bad) = preds.iter().find(|&&p| p < 0 || p >= classes as i64) {
        return Err(Error::ClassRange { id: bad, classes });
    }
    let column: Vec<f64> = preds.iter().map(|&p| p as f64).collect();
    cloud.append_column(AttrDesc::categorical(SELFSEM_ATTR, classes), &column)
}

/// Anything that maps a cloud to one class id per point.
pub trait Segmenter {
    fn num_classes(&self) -> usize;
    fn infer(&self, cloud: &PointCloud) -> Result<Vec<usize>>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TwoStage {
    pub stage1: Vec<usize>,
    pub stage2: Vec<usize>,
}

/// Runs `stages >= 1` passes: the first over a `-1`-painted cloud, each later
/// one over the cloud painted with the previous pass's predictions.
pub fn run_self_painting<S: Segmenter + ?Sized>(
    model: &S,
    cloud: &PointCloud,
    stages: usize,
) -> Result<Vec<Vec<usize>>> {
    if stages == 0 {
        return Err(Error::Config(
            "self-painting needs at least one stage".into(),
        ));
    }
    let classes = model.num_classes();
    let mut out: Vec<Vec<usize>> = Vec::with_capacity(stages);
    out.push(model.infer(&self_paint_stage1(cloud, classes)?)?);
    for _ in 1..stages {
        let prev: Vec<i64> = out.last().unwrap().iter().map(|&p| p as i64).collect();
        out.push(model.infer(&self_paint_stage2(cloud, &prev, classes)?)?);
    }
    Ok(out)
}

pub fn run_two_stage<S: Segmenter + ?Sized>(model: &S, cloud: &PointCloud) -> Result<TwoStage> {
    let mut runs = run_self_painting(model, cloud, 2)?.into_iter();
    let stage1 = runs.next().unwrap();
    let stage2 = runs.next().unwrap();
    Ok(TwoStage { stage1, stage2 })
}
