//! The encoder and head recorded on a [`Tape`] for training.

use crate::cloud::{AttrKind, PointCloud};
use crate::error::{Error, Result};
use crate::grad::{Tape, Tensor, Var};

use super::config::EncoderConfig;
use super::forward::table_row;
use super::params::{AttrParams, EncoderParams};

pub struct ForwardGraph {
    /// One leaf per parameter tensor, in [`EncoderParams::tensors`] order.
    pub params: Vec<Var>,
    /// Head pre-activation, `N x head_hidden`.
    pub hidden_pre: Var,
    /// `N x C`.
    pub logits: Var,
}

/// Records the full forward pass. `neighbors` is required when
/// `cfg.knn_k > 0`.
pub fn forward_graph(
    tape: &mut Tape,
    cloud: &PointCloud,
    params: &EncoderParams,
    cfg: &EncoderConfig,
    neighbors: Option<&[Vec<usize>]>,
) -> Result<ForwardGraph> {
    let n = cloud.len();
    let m = cloud.num_attrs();
    let d = cfg.d;
    let schema = cloud.schema();
    if params.attrs.len() != m {
        return Err(Error::LengthMismatch {
            what: "attribute parameters",
            expected: m,
            got: params.attrs.len(),
        });
    }
    let vars: Vec<Var> = params
        .tensors()
        .into_iter()
        .map(|t| tape.param(t.clone()))
        .collect();

    let mut slabs = Vec::with_capacity(m);
    let mut next = 0;
    for (j, (desc, p)) in schema.attrs().iter().zip(&params.attrs).enumerate() {
        let column = cloud.column(j);
        let token = match (desc.kind, p) {
            (AttrKind::Continuous, AttrParams::Affine { .. }) => {
                let (w, b) = (vars[next], vars[next + 1]);
                next += 2;
                let col = tape.constant(Tensor::new(vec![n, 1], column)?);
                let w_row = tape.reshape(w, &[1, d])?;
                let scaled = tape.matmul(col, w_row)?;
                tape.add(scaled, b)?
            }
            (AttrKind::Categorical { cardinality }, AttrParams::Table(_)) => {
                let table = vars[next];
                next += 1;
                let ids = column
                    .iter()
                    .map(|&v| table_row(&desc.name, v, cardinality))
                    .collect::<Result<Vec<_>>>()?;
                tape.gather_row(table, &ids)?
            }
            _ => {
                return Err(Error::shape(
                    "forward_graph",
                    format!(
                        "attribute `{}` kind does not match its parameters",
                        desc.name
                    ),
                ))
            }
        };
        slabs.push(tape.reshape(token, &[n, 1, d])?);
    }
    let [wq, wk, wv, wo, w1, b1, w2, b2] = vars[next..next + 8] else {
        unreachable!("eight trailing tensors")
    };

    let tokens = tape.concat(&slabs, 1)?;
    let q = tape.matmul(tokens, wq)?;
    let k = tape.matmul(tokens, wk)?;
    let v = tape.matmul(tokens, wv)?;
    let kt = tape.transpose_last(k)?;
    let raw = tape.matmul(q, kt)?;
    let scores = tape.scale(raw, 1.0 / (d as f64).sqrt());
    let attn = tape.rowsoftmax(scores);
    let mixed = tape.matmul(attn, v)?;
    let out = tape.matmul(mixed, wo)?;
    let feats = tape.reshape(out, &[n, m * d])?;

    let input = if cfg.knn_k > 0 {
        let nbrs =
            neighbors.ok_or_else(|| Error::Config("knn_k > 0 needs neighbor lists".into()))?;
        if nbrs.len() != n {
            return Err(Error::LengthMismatch {
                what: "neighbor lists",
                expected: n,
                got: nbrs.len(),
            });
        }
        let pooled = tape.gather_mean(feats, nbrs)?;
        tape.concat(&[feats, pooled], 1)?
    } else {
        feats
    };
    let pre = tape.matmul(input, w1)?;
    let hidden_pre = tape.add(pre, b1)?;
    let hidden = tape.relu(hidden_pre);
    let out = tape.matmul(hidden, w2)?;
    let logits = tape.add(out, b2)?;
    Ok(ForwardGraph {
        params: vars,
        hidden_pre,
        logits,
    })
}

/// Sign pattern of the head pre-activations, hashed.
pub(crate) fn relu_signature(tape: &Tape, hidden_pre: Var) -> u64 {
    // FNV-1a over the active/inactive bits
    let mut h: u64 = 0xcbf29ce484222325;
    for &v in tape.value(hidden_pre).data() {
        h ^= (v > 0.0) as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}
