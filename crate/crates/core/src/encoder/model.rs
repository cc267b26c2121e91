use crate::cloud::{AttrKind, AttributeSchema, PointCloud};
use crate::error::{Error, Result};
use crate::geometry::Segmenter;
use crate::grad::Tensor;

use super::config::EncoderConfig;
use super::forward::{argmax_rows, forward_segmentation};
use super::params::{AttrParams, EncoderParams};

/// Encoder plus head, bound to the attribute schema it was built for.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationModel {
    schema: AttributeSchema,
    config: EncoderConfig,
    params: EncoderParams,
}

/// Same attribute names and kinds, in the same order. Units are ignored.
pub fn schemas_compatible(a: &AttributeSchema, b: &AttributeSchema) -> bool {
    a.len() == b.len()
        && a.attrs()
            .iter()
            .zip(b.attrs())
            .all(|(x, y)| x.name == y.name && x.kind == y.kind)
}

impl SegmentationModel {
    pub fn new(schema: AttributeSchema, config: EncoderConfig, seed: u64) -> Result<Self> {
        let params = EncoderParams::init(&schema, &config, seed)?;
        Ok(SegmentationModel {
            schema,
            config,
            params,
        })
    }

    pub fn from_parts(
        schema: AttributeSchema,
        config: EncoderConfig,
        params: EncoderParams,
    ) -> Result<Self> {
        config.validate()?;
        let params = EncoderParams::from_tensors(&schema, &config, params.to_tensors())?;
        Ok(SegmentationModel {
            schema,
            config,
            params,
        })
    }

    pub fn schema(&self) -> &AttributeSchema {
        &self.schema
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn params(&self) -> &EncoderParams {
        &self.params
    }

    /// Replaces all parameters, keeping shapes checked.
    pub fn set_params(&mut self, tensors: Vec<Tensor>) -> Result<()> {
        self.params = EncoderParams::from_tensors(&self.schema, &self.config, tensors)?;
        Ok(())
    }

    pub fn check_input(&self, cloud: &PointCloud) -> Result<()> {
        if schemas_compatible(&self.schema, cloud.schema()) {
            Ok(())
        } else {
            let names = |s: &AttributeSchema| {
                s.attrs()
                    .iter()
                    .map(|a| a.name.as_str())
                    .collect::<Vec<_>>()
                    .join(",")
            };
            Err(Error::Config(format!(
                "cloud attributes [{}] do not match model attributes [{}]",
                names(cloud.schema()),
                names(&self.schema)
            )))
        }
    }

    pub fn logits(&self, cloud: &PointCloud) -> Result<Tensor> {
        self.check_input(cloud)?;
        forward_segmentation(cloud, &self.params, &self.config)
    }

    pub fn predict(&self, cloud: &PointCloud) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.logits(cloud)?))
    }

    /// Sets every tokenizer parameter of attribute `name` to zero, so the
    /// model no longer distinguishes that attribute's values.
    pub fn zero_attribute(&mut self, name: &str) -> Result<()> {
        let j = self
            .schema
            .index_of(name)
            .ok_or_else(|| Error::MissingAttribute(name.to_string()))?;
        match &mut self.params.attrs[j] {
            AttrParams::Affine { weight, bias } => {
                weight.data_mut().fill(0.0);
                bias.data_mut().fill(0.0);
            }
            AttrParams::Table(t) => t.data_mut().fill(0.0),
        }
        Ok(())
    }

    pub fn has_categorical(&self, name: &str) -> bool {
        matches!(
            self.schema.get(name).map(|a| a.kind),
            Some(AttrKind::Categorical { .. })
        )
    }
}

impl Segmenter for SegmentationModel {
    fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    fn infer(&self, cloud: &PointCloud) -> Result<Vec<usize>> {
        self.predict(cloud)
    }
}
