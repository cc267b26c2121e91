//! Confusion matrices and mean intersection-over-union.

use crate::error::{Error, Result};

/// Row = ground truth, column = prediction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_labels(pred: &[usize], gt: &[usize], classes: usize) -> Result<Self> {
        let mut cm = Self::new(classes);
        cm.accumulate(pred, gt)?;
        Ok(cm)
    }

    pub fn accumulate(&mut self, pred: &[usize], gt: &[usize]) -> Result<()> {
        if pred.len() != gt.len() {
            return Err(Error::LengthMismatch {
                what: "predictions",
                expected: gt.len(),
                got: pred.len(),
            });
        }
        for (&p, &g) in pred.iter().zip(gt) {
            for id in [p, g] {
                if id >= self.classes {
                    return Err(Error::ClassRange {
                        id: id as i64,
                        classes: self.classes,
                    });
                }
            }
        }
        for (&p, &g) in pred.iter().zip(gt) {
            self.counts[g * self.classes + p] += 1;
        }
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// IoU per class; `None` where TP + FP + FN = 0.
    pub fn per_class_iou(&self) -> Vec<Option<f64>> {
        let c = self.classes;
        (0..c)
            .map(|k| {
                let tp = self.get(k, k);
                let fn_: u64 = (0..c).filter(|&j| j != k).map(|j| self.get(k, j)).sum();
                let fp: u64 = (0..c).filter(|&i| i != k).map(|i| self.get(i, k)).sum();
                let denom = tp + fp + fn_;
                (denom > 0).then(|| tp as f64 / denom as f64)
            })
            .collect()
    }

    pub fn accuracy(&self) -> f64 {
        let diag: u64 = (0..self.classes).map(|k| self.get(k, k)).sum();
        diag as f64 / self.total().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiouReport {
    pub per_class_iou: Vec<Option<f64>>,
    pub miou: f64,
}

impl MiouReport {
    pub fn from_confusion(cm: &ConfusionMatrix) -> Result<Self> {
        if cm.total() == 0 {
            return Err(Error::Empty("no points to evaluate"));
        }
        let per_class_iou = cm.per_class_iou();
        let included: Vec<f64> = per_class_iou.iter().flatten().copied().collect();
        let miou = included.iter().sum::<f64>() / included.len() as f64;
        Ok(MiouReport {
            per_class_iou,
            miou,
        })
    }
}

/// Mean IoU over classes present in either `pred` or `gt`.
pub fn miou(pred: &[usize], gt: &[usize], classes: usize) -> Result<MiouReport> {
    if gt.is_empty() {
        return Err(Error::Empty("miou over zero points"));
    }
    MiouReport::from_confusion(&ConfusionMatrix::from_labels(pred, gt, classes)?)
}

/// Like [`miou`] but skips points whose ground truth is `-1`.
pub fn miou_labeled(pred: &[usize], gt: &[i64], classes: usize) -> Result<MiouReport> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch {
            what: "predictions",
            expected: gt.len(),
            got: pred.len(),
        });
    }
    let mut p = Vec::with_capacity(pred.len());
    let mut g = Vec::with_capacity(gt.len());
    for (&pi, &gi) in pred.iter().zip(gt) {
        if gi < 0 {
            continue;
        }
        p.push(pi);
        g.push(gi as usize);
    }
    miou(&p, &g, classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_prediction() {
        let gt = [0, 1, 2, 2, 1, 3];
        let r = miou(&gt, &gt, 4).unwrap();
        assert_eq!(r.miou, 1.0);
    }

    #[test]
    fn total_confusion() {
        let gt = [0, 1, 1, 0, 1];
        let pred: Vec<usize> = gt.iter().map(|&g| 1 - g).collect();
        assert_eq!(miou(&pred, &gt, 2).unwrap().miou, 0.0);
    }

    #[test]
    fn hand_counted_two_class() {
        // gt row 0: one TP, one predicted as 1. gt row 1: two TP.
        // IoU_0 = 1 / (1 + 0 + 1), IoU_1 = 2 / (2 + 1 + 0).
        let r = miou(&[0, 1, 1, 1], &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(r.per_class_iou, vec![Some(0.5), Some(2.0 / 3.0)]);
        assert!((r.miou - 7.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn absent_classes_are_excluded() {
        let r = miou(&[0, 0, 2], &[0, 0, 2], 4).unwrap();
        assert_eq!(r.per_class_iou, vec![Some(1.0), None, Some(1.0), None]);
        assert_eq!(r.miou, 1.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(miou(&[], &[], 3), Err(Error::Empty(_))));
        assert!(matches!(
            miou(&[0, 3], &[0, 1], 3),
            Err(Error::ClassRange { id: 3, .. })
        ));
        assert!(matches!(
            miou(&[0], &[0, 1], 3),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn unlabeled_points_skipped() {
        let r = miou_labeled(&[0, 1, 3], &[0, 1, -1], 4).unwrap();
        assert_eq!(r.miou, 1.0);
    }

    fn labels(classes: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
        (1usize..60).prop_flat_map(move |n| {
            (
                prop::collection::vec(0..classes, n),
                prop::collection::vec(0..classes, n),
            )
        })
    }

    proptest! {
        #[test]
        fn bounded_and_mean_of_entries((pred, gt) in labels(5)) {
            let r = miou(&pred, &gt, 5).unwrap();
            let inc: Vec<f64> = r.per_class_iou.iter().flatten().copied().collect();
            for &v in &inc {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            let mean = inc.iter().sum::<f64>() / inc.len() as f64;
            prop_assert!((mean - r.miou).abs() <= 1e-12);
            prop_assert!((0.0..=1.0).contains(&r.miou));
        }

        #[test]
        fn invariant_under_point_permutation((pred, gt) in labels(4), rot in 0usize..100) {
            let n = pred.len();
            let k = rot % n;
            let p2: Vec<usize> = (0..n).map(|i| pred[(i + k) % n]).collect();
            let g2: Vec<usize> = (0..n).map(|i| gt[(i + k) % n]).collect();
            prop_assert_eq!(miou(&pred, &gt, 4).unwrap().miou, miou(&p2, &g2, 4).unwrap().miou);
        }

        #[test]
        fn invariant_under_class_relabeling((pred, gt) in labels(4), perm in Just(vec![2usize, 0, 3, 1])) {
            let p2: Vec<usize> = pred.iter().map(|&c| perm[c]).collect();
            let g2: Vec<usize> = gt.iter().map(|&c| perm[c]).collect();
            let a = miou(&pred, &gt, 4).unwrap().miou;
            let b = miou(&p2, &g2, 4).unwrap().miou;
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}
