//! Plain (tape-free) forward pass used for inference.

use crate::cloud::{AttrKind, AttributeSchema, PointCloud};
use crate::error::{Error, Result};
use crate::grad::Tensor;

use super::config::EncoderConfig;
use super::knn::{cloud_xyz, knn_indices};
use super::params::{AttrParams, EncoderParams};

/// Row index into a categorical table; `-1` maps to the last row.
pub(crate) fn table_row(name: &str, value: f64, cardinality: usize) -> Result<usize> {
    if value == -1.0 {
        Ok(cardinality)
    } else if value >= 0.0 && value.fract() == 0.0 && value < cardinality as f64 {
        Ok(value as usize)
    } else {
        Err(Error::CategoricalRange {
            name: name.to_string(),
            row: 0,
            value,
            cardinality,
        })
    }
}

/// One point's attributes as an `m x d` token matrix (row-major).
pub fn tokenize(
    point: &[f64],
    schema: &AttributeSchema,
    params: &EncoderParams,
    cfg: &EncoderConfig,
) -> Result<Vec<f64>> {
    if point.len() != schema.len() || params.attrs.len() != schema.len() {
        return Err(Error::LengthMismatch {
            what: "point attributes",
            expected: schema.len(),
            got: point.len(),
        });
    }
    let d = cfg.d;
    let mut out = Vec::with_capacity(point.len() * d);
    for ((desc, p), &v) in schema.attrs().iter().zip(&params.attrs).zip(point) {
        match (desc.kind, p) {
            (AttrKind::Continuous, AttrParams::Affine { weight, bias }) => {
                out.extend(
                    weight
                        .data()
                        .iter()
                        .zip(bias.data())
                        .map(|(w, b)| w * v + b),
                );
            }
            (AttrKind::Categorical { cardinality }, AttrParams::Table(t)) => {
                out.extend_from_slice(t.row(table_row(&desc.name, v, cardinality)?));
            }
            _ => {
                return Err(Error::shape(
                    "tokenize",
                    format!(
                        "attribute `{}` kind does not match its parameters",
                        desc.name
                    ),
                ))
            }
        }
    }
    Ok(out)
}

/// `x (r x k) * w (k x c)`.
fn matmul(x: &[f64], r: usize, k: usize, w: &[f64], c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for l in 0..k {
            let a = x[i * k + l];
            for j in 0..c {
                out[i * c + j] += a * w[l * c + j];
            }
        }
    }
    out
}

/// Row-softmaxed `Q K^T / sqrt(d)` for an `m x d` token matrix.
pub fn attention_weights(tokens: &[f64], params: &EncoderParams, cfg: &EncoderConfig) -> Vec<f64> {
    let d = cfg.d;
    let m = tokens.len() / d;
    let q = matmul(tokens, m, d, params.wq.data(), d);
    let k = matmul(tokens, m, d, params.wk.data(), d);
    let scale = 1.0 / (d as f64).sqrt();
    let mut a = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            let dot: f64 = (0..d).map(|t| q[i * d + t] * k[j * d + t]).sum();
            a[i * m + j] = dot * scale;
        }
        let row = &mut a[i * m..(i + 1) * m];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    a
}

/// Single-layer self-attention among one point's tokens:
/// `softmax(Q K^T / sqrt(d)) V W_O`, no residual or normalization.
pub fn attend(tokens: &[f64], params: &EncoderParams, cfg: &EncoderConfig) -> Vec<f64> {
    let d = cfg.d;
    let m = tokens.len() / d;
    let a = attention_weights(tokens, params, cfg);
    let v = matmul(tokens, m, d, params.wv.data(), d);
    let av = matmul(&a, m, m, &v, d);
    matmul(&av, m, d, params.wo.data(), d)
}

/// The attended tokens concatenated in schema order: `m * d` values.
pub fn encode_point(
    point: &[f64],
    schema: &AttributeSchema,
    params: &EncoderParams,
    cfg: &EncoderConfig,
) -> Result<Vec<f64>> {
    let tokens = tokenize(point, schema, params, cfg)?;
    Ok(attend(&tokens, params, cfg))
}

/// Per-point logits, `N x C`.
pub fn forward_segmentation(
    cloud: &PointCloud,
    params: &EncoderParams,
    cfg: &EncoderConfig,
) -> Result<Tensor> {
    let neighbors = if cfg.knn_k > 0 {
        Some(knn_indices(&cloud_xyz(cloud)?, cfg.knn_k)?)
    } else {
        None
    };
    forward_with_neighbors(cloud, params, cfg, neighbors.as_deref())
}

pub(crate) fn forward_with_neighbors(
    cloud: &PointCloud,
    params: &EncoderParams,
    cfg: &EncoderConfig,
    neighbors: Option<&[Vec<usize>]>,
) -> Result<Tensor> {
    let n = cloud.len();
    let m = cloud.num_attrs();
    let f_len = m * cfg.d;
    let schema = cloud.schema();
    let mut feats = Vec::with_capacity(n * f_len);
    for (i, row) in cloud.rows().take(n).enumerate() {
        let f = encode_point(row, schema, params, cfg).map_err(|e| match e {
            Error::CategoricalRange {
                name,
                value,
                cardinality,
                ..
            } => Error::CategoricalRange {
                name,
                row: i,
                value,
                cardinality,
            },
            other => other,
        })?;
        feats.extend(f);
    }
    let input_w = cfg.head_input(m);
    if params.w1.dims() != [input_w, cfg.head_hidden] {
        return Err(Error::shape(
            "forward_segmentation",
            format!("head expects {:?}, input width {input_w}", params.w1.dims()),
        ));
    }
    let input = match neighbors {
        Some(nbrs) if cfg.knn_k > 0 => {
            let mut x = Vec::with_capacity(n * input_w);
            for i in 0..n {
                x.extend_from_slice(&feats[i * f_len..(i + 1) * f_len]);
                let mut g = vec![0.0; f_len];
                let inv = 1.0 / nbrs[i].len() as f64;
                for &j in &nbrs[i] {
                    for (gv, &fv) in g.iter_mut().zip(&feats[j * f_len..(j + 1) * f_len]) {
                        *gv += fv * inv;
                    }
                }
                x.extend(g);
            }
            x
        }
        _ => feats,
    };
    let h = cfg.head_hidden;
    let mut hidden = matmul(&input, n, input_w, params.w1.data(), h);
    for row in hidden.chunks_mut(h) {
        for (v, b) in row.iter_mut().zip(params.b1.data()) {
            *v = (*v + b).max(0.0);
        }
    }
    let c = cfg.num_classes;
    let mut logits = matmul(&hidden, n, h, params.w2.data(), c);
    for row in logits.chunks_mut(c) {
        row.iter_mut()
            .zip(params.b2.data())
            .for_each(|(v, b)| *v += b);
    }
    Tensor::new(vec![n, c], logits)
}

/// Index of the largest logit per row; ties go to the lower class id.
pub fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    let c = logits.last_dim();
    logits
        .data()
        .chunks(c)
        .map(|r| {
            r.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (j, &v)| {
                    if v > best.1 {
                        (j, v)
                    } else {
                        best
                    }
                })
                .0
        })
        .collect()
}
