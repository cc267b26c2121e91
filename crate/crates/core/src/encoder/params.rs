use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cloud::{AttrKind, AttributeSchema};
use crate::error::{Error, Result};
use crate::grad::Tensor;

use super::config::EncoderConfig;

/// Learnable tokenizer for one attribute.
#[derive(Debug, Clone, PartialEq)]
pub enum AttrParams {
    /// `token = weight * v + bias`, both of length d.
    Affine { weight: Tensor, bias: Tensor },
    /// `(cardinality + 1) x d`; the last row embeds the unknown id.
    Table(Tensor),
}

/// Every learnable tensor of the encoder and its segmentation head.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub attrs: Vec<AttrParams>,
    pub wq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
    pub wo: Tensor,
    /// Head layer 1, `head_input x head_hidden`.
    pub w1: Tensor,
    pub b1: Tensor,
    /// Head layer 2, `head_hidden x C`.
    pub w2: Tensor,
    pub b2: Tensor,
}

fn uniform(rng: &mut ChaCha8Rng, dims: &[usize], bound: f64) -> Tensor {
    let n = dims.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::new(dims.to_vec(), data).expect("dims match")
}

/// Expected dims of every tensor, in [`EncoderParams::tensors`] order.
fn layout(schema: &AttributeSchema, cfg: &EncoderConfig) -> Vec<(String, Vec<usize>)> {
    let d = cfg.d;
    let mut out = Vec::new();
    for a in schema.attrs() {
        match a.kind {
            AttrKind::Continuous => {
                out.push((format!("attr.{}.w", a.name), vec![d]));
                out.push((format!("attr.{}.b", a.name), vec![d]));
            }
            AttrKind::Categorical { cardinality } => {
                out.push((format!("attr.{}.emb", a.name), vec![cardinality + 1, d]));
            }
        }
    }
    for n in ["wq", "wk", "wv", "wo"] {
        out.push((format!("attn.{n}"), vec![d, d]));
    }
    let input = cfg.head_input(schema.len());
    out.push(("head.w1".into(), vec![input, cfg.head_hidden]));
    out.push(("head.b1".into(), vec![cfg.head_hidden]));
    out.push(("head.w2".into(), vec![cfg.head_hidden, cfg.num_classes]));
    out.push(("head.b2".into(), vec![cfg.num_classes]));
    out
}

impl EncoderParams {
    /// Tokenizer and attention weights uniform in `[-1/sqrt(d), 1/sqrt(d)]`,
    /// head weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, biases zero.
    pub fn init(schema: &AttributeSchema, cfg: &EncoderConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = cfg.d;
        let bound = 1.0 / (d as f64).sqrt();
        let attrs = schema
            .attrs()
            .iter()
            .map(|a| match a.kind {
                AttrKind::Continuous => AttrParams::Affine {
                    weight: uniform(&mut rng, &[d], bound),
                    bias: Tensor::zeros(&[d]),
                },
                AttrKind::Categorical { cardinality } => {
                    AttrParams::Table(uniform(&mut rng, &[cardinality + 1, d], bound))
                }
            })
            .collect();
        let wq = uniform(&mut rng, &[d, d], bound);
        let wk = uniform(&mut rng, &[d, d], bound);
        let wv = uniform(&mut rng, &[d, d], bound);
        let wo = uniform(&mut rng, &[d, d], bound);
        let input = cfg.head_input(schema.len());
        let w1 = uniform(
            &mut rng,
            &[input, cfg.head_hidden],
            1.0 / (input as f64).sqrt(),
        );
        let w2 = uniform(
            &mut rng,
            &[cfg.head_hidden, cfg.num_classes],
            1.0 / (cfg.head_hidden as f64).sqrt(),
        );
        Ok(EncoderParams {
            attrs,
            wq,
            wk,
            wv,
            wo,
            w1,
            b1: Tensor::zeros(&[cfg.head_hidden]),
            w2,
            b2: Tensor::zeros(&[cfg.num_classes]),
        })
    }

    pub fn names(schema: &AttributeSchema, cfg: &EncoderConfig) -> Vec<String> {
        layout(schema, cfg).into_iter().map(|(n, _)| n).collect()
    }

    /// All tensors in a fixed order: per-attribute tensors in schema order,
    /// then attention Q, K, V, O, then the head.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for a in &self.attrs {
            match a {
                AttrParams::Affine { weight, bias } => {
                    out.push(weight);
                    out.push(bias);
                }
                AttrParams::Table(t) => out.push(t),
            }
        }
        out.extend([&self.wq, &self.wk, &self.wv, &self.wo]);
        out.extend([&self.w1, &self.b1, &self.w2, &self.b2]);
        out
    }

    pub fn to_tensors(&self) -> Vec<Tensor> {
        self.tensors().into_iter().cloned().collect()
    }

    /// Rebuilds parameters from [`EncoderParams::tensors`]-ordered tensors,
    /// checking every shape against the schema and config.
    pub fn from_tensors(
        schema: &AttributeSchema,
        cfg: &EncoderConfig,
        tensors: Vec<Tensor>,
    ) -> Result<Self> {
        let expected = layout(schema, cfg);
        if expected.len() != tensors.len() {
            return Err(Error::LengthMismatch {
                what: "encoder tensors",
                expected: expected.len(),
                got: tensors.len(),
            });
        }
        for ((name, dims), t) in expected.iter().zip(&tensors) {
            if t.dims() != dims.as_slice() {
                return Err(Error::shape(
                    "encoder params",
                    format!("{name}: expected {dims:?}, got {:?}", t.dims()),
                ));
            }
            if !t.is_finite() {
                return Err(Error::NonFinite(name.clone()));
            }
        }
        let mut it = tensors.into_iter();
        let attrs = schema
            .attrs()
            .iter()
            .map(|a| match a.kind {
                AttrKind::Continuous => AttrParams::Affine {
                    weight: it.next().unwrap(),
                    bias: it.next().unwrap(),
                },
                AttrKind::Categorical { .. } => AttrParams::Table(it.next().unwrap()),
            })
            .collect();
        let mut next = || it.next().unwrap();
        Ok(EncoderParams {
            attrs,
            wq: next(),
            wk: next(),
            wv: next(),
            wo: next(),
            w1: next(),
            b1: next(),
            w2: next(),
            b2: next(),
        })
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}
