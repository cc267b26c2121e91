use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    /// Token dimension per attribute.
    pub d: usize,
    pub heads: usize,
    pub num_classes: usize,
    pub head_hidden: usize,
    /// Neighbors pooled per point; 0 makes the model point-wise.
    pub knn_k: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            d: 4,
            heads: 1,
            num_classes: 4,
            head_hidden: 32,
            knn_k: 8,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Config("token dimension d must be >= 1".into()));
        }
        if self.heads != 1 {
            return Err(Error::Config(format!(
                "only single-head attention is supported (heads = {})",
                self.heads
            )));
        }
        if self.num_classes == 0 || self.head_hidden == 0 {
            return Err(Error::Config(
                "class count and head width must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Width of the per-point head input for `m` attributes.
    pub fn head_input(&self, m: usize) -> usize {
        m * self.d * if self.knn_k > 0 { 2 } else { 1 }
    }
}
