use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cloud::{AttrDesc, AttributeSchema, PointCloud};
use crate::error::Result;
use crate::geometry::{INSTANCE_TABLE_SIZE, INST_ATTR, SEM_ATTR};
use crate::grad::{grad_check, Evaluation, GradCheckReport, Tape, DEFAULT_TOLERANCE};

use super::config::EncoderConfig;
use super::graph::{forward_graph, relu_signature};
use super::knn::{cloud_xyz, knn_indices};
use super::params::EncoderParams;

/// Central-difference step used by [`gradcheck`].
pub const GRADCHECK_EPS: f64 = 1e-3;

/// A small painted cloud: x, y, z, intensity, t, sem, inst with random
/// values and targets, all drawn from `seed`.
pub fn gradcheck_instance(n: usize, classes: usize, seed: u64) -> Result<(PointCloud, Vec<usize>)> {
    let schema = AttributeSchema::lidar()
        .with(AttrDesc::categorical(SEM_ATTR, classes))?
        .with(AttrDesc::categorical(INST_ATTR, INSTANCE_TABLE_SIZE))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut values = Vec::with_capacity(n * schema.len());
    for _ in 0..n {
        values.push(rng.random_range(-5.0..5.0));
        values.push(rng.random_range(-5.0..5.0));
        values.push(rng.random_range(-2.0..1.0));
        values.push(rng.random_range(0.0..1.0));
        values.push(rng.random_range(0.0..0.1));
        values.push(rng.random_range(-1..classes as i64) as f64);
        values.push(rng.random_range(-1..6) as f64);
    }
    let targets = (0..n).map(|_| rng.random_range(0..classes)).collect();
    Ok((PointCloud::new(schema, values)?, targets))
}

/// Checks every encoder and head gradient on `n` random points against
/// central differences of the same loss.
pub fn gradcheck(cfg: &EncoderConfig, n: usize, seed: u64) -> Result<GradCheckReport> {
    let (cloud, targets) = gradcheck_instance(n, cfg.num_classes, seed)?;
    let params = EncoderParams::init(cloud.schema(), cfg, seed)?;
    let neighbors = if cfg.knn_k > 0 {
        Some(knn_indices(&cloud_xyz(&cloud)?, cfg.knn_k)?)
    } else {
        None
    };
    let nbrs = neighbors.as_deref();

    let mut tape = Tape::new();
    let g = forward_graph(&mut tape, &cloud, &params, cfg, nbrs)?;
    let loss = tape.cross_entropy(g.logits, &targets)?;
    tape.backward(loss)?;
    let analytic: Vec<_> = g
        .params
        .iter()
        .map(|&v| tape.grad(v).expect("parameter leaf").clone())
        .collect();

    let names = EncoderParams::names(cloud.schema(), cfg);
    let schema = cloud.schema().clone();
    let eval = |ts: &[crate::grad::Tensor]| -> Evaluation {
        let p = EncoderParams::from_tensors(&schema, cfg, ts.to_vec()).expect("same layout");
        let mut tp = Tape::new();
        let g = forward_graph(&mut tp, &cloud, &p, cfg, nbrs).expect("valid instance");
        let l = tp.cross_entropy(g.logits, &targets).expect("valid targets");
        Evaluation {
            loss: tp.value(l).item(),
            signature: relu_signature(&tp, g.hidden_pre),
        }
    };
    Ok(grad_check(
        &names,
        &params.to_tensors(),
        &analytic,
        GRADCHECK_EPS,
        DEFAULT_TOLERANCE,
        eval,
    ))
}
