use crate::error::{Error, Result};

/// Per-pixel semantic class (`-1` = unlabeled) and instance id (`-1` = none),
/// row-major with `height` rows of `width` pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledMask {
    width: usize,
    height: usize,
    semantic: Vec<i32>,
    instance: Vec<i32>,
}

impl LabeledMask {
    pub fn new(
        width: usize,
        height: usize,
        semantic: Vec<i32>,
        instance: Vec<i32>,
    ) -> Result<Self> {
        let n = width * height;
        for (what, len) in [
            ("mask semantic", semantic.len()),
            ("mask instance", instance.len()),
        ] {
            if len != n {
                return Err(Error::LengthMismatch {
                    what,
                    expected: n,
                    got: len,
                });
            }
        }
        if let Some(&bad) = semantic.iter().chain(&instance).find(|&&v| v < -1) {
            return Err(Error::parse("mask", format!("label {bad} below -1")));
        }
        Ok(LabeledMask {
            width,
            height,
            semantic,
            instance,
        })
    }

    pub fn unlabeled(width: usize, height: usize) -> Self {
        LabeledMask {
            width,
            height,
            semantic: vec![-1; width * height],
            instance: vec![-1; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn semantic(&self) -> &[i32] {
        &self.semantic
    }

    pub fn instance(&self) -> &[i32] {
        &self.instance
    }

    pub fn at(&self, x: usize, y: usize) -> (i32, i32) {
        let k = y * self.width + x;
        (self.semantic[k], self.instance[k])
    }

    pub fn set(&mut self, x: usize, y: usize, semantic: i32, instance: i32) {
        let k = y * self.width + x;
        self.semantic[k] = semantic;
        self.instance[k] = instance;
    }
}
