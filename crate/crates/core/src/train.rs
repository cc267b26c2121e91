//! Experiment configuration, the deterministic training loop and the
//! evaluation helpers shared by the CLI and the acceptance checks.

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cloud::{AttrDesc, AttributeSchema, PointCloud};
use crate::encoder::{cloud_xyz, forward_graph, knn_indices, EncoderConfig, SegmentationModel};
use crate::error::{Error, Result};
use crate::geometry::{
    paint_with_mask, project_points, run_two_stage, self_paint_stage1, SELFSEM_ATTR,
};
use crate::grad::{adam_step, AdamConfig, AdamState, Tape, Tensor};
use crate::metrics::{ConfusionMatrix, MiouReport};
use crate::synth::{gen_scene, Scene, SceneConfig, NUM_CLASSES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PaintingMode {
    /// Raw lidar attributes only.
    None,
    /// `sem` and `inst` painted from the scene's mask.
    Mask,
    /// A `selfsem` column holding the model's own earlier predictions.
    #[serde(rename = "self")]
    SelfPaint,
}

impl fmt::Display for PaintingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PaintingMode::None => "none",
            PaintingMode::Mask => "mask",
            PaintingMode::SelfPaint => "self",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub steps: usize,
    /// Points per step drawn from one scene; 0 uses every point.
    pub batch_points: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            lr: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            steps: 1200,
            batch_points: 0,
        }
    }
}

impl OptimConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Root of every random stream: scenes, initialization and sampling.
    pub seed: u64,
    pub painting: PaintingMode,
    pub train_scenes: usize,
    pub holdout_scenes: usize,
    /// Rate at which ground-truth labels are corrupted when they stand in
    /// for stage-one predictions during self-painting training.
    pub self_noise: f64,
    /// Probability that a self-painting training step sees the all `-1`
    /// stage-one column instead of corrupted labels.
    pub self_unknown_prob: f64,
    /// A metrics record is written every this many steps and after the last.
    pub log_every: usize,
    /// Template for generated scenes; its `seed` is replaced per scene.
    pub scene: SceneConfig,
    pub encoder: EncoderConfig,
    pub optim: OptimConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            painting: PaintingMode::Mask,
            train_scenes: 32,
            holdout_scenes: 4,
            self_noise: 0.6,
            self_unknown_prob: 0.5,
            log_every: 100,
            scene: SceneConfig::default(),
            encoder: EncoderConfig::default(),
            optim: OptimConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::parse("experiment config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.scene.validate()?;
        if self.encoder.num_classes != NUM_CLASSES {
            return Err(Error::Config(format!(
                "synthetic scenes have {NUM_CLASSES} classes, encoder has {}",
                self.encoder.num_classes
            )));
        }
        if self.train_scenes == 0 || self.holdout_scenes == 0 {
            return Err(Error::Config(
                "need at least one train and one holdout scene".into(),
            ));
        }
        for (name, r) in [
            ("self_noise", self.self_noise),
            ("self_unknown_prob", self.self_unknown_prob),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Config(format!("{name} = {r} outside [0, 1]")));
            }
        }
        if self.log_every == 0 {
            return Err(Error::Config("log_every must be >= 1".into()));
        }
        let o = &self.optim;
        if !(o.lr > 0.0 && o.lr.is_finite())
            || !(0.0..1.0).contains(&o.beta1)
            || !(0.0..1.0).contains(&o.beta2)
            || o.eps.is_nan()
            || o.eps <= 0.0
        {
            return Err(Error::Config("optimizer settings out of range".into()));
        }
        Ok(())
    }

    /// Seed of the `i`-th training scene.
    pub fn train_scene_seed(&self, i: usize) -> u64 {
        mix(self.seed, 1, i as u64)
    }

    /// Seed of the `i`-th holdout scene.
    pub fn holdout_scene_seed(&self, i: usize) -> u64 {
        mix(self.seed, 2, i as u64)
    }

    pub fn init_seed(&self) -> u64 {
        mix(self.seed, 3, 0)
    }

    fn sampling_seed(&self) -> u64 {
        mix(self.seed, 4, 0)
    }

    pub fn scene_config(&self, seed: u64) -> SceneConfig {
        SceneConfig {
            seed,
            ..self.scene.clone()
        }
    }
}

/// SplitMix64 finalizer over `(seed, stream, index)`.
fn mix(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(index.wrapping_mul(0xd1b5_4a32_d192_ed03));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The model input for `scene` under `mode`. Self-painting returns the
/// stage-one cloud (all `-1`).
pub fn model_input(scene: &Scene, mode: PaintingMode) -> Result<PointCloud> {
    match mode {
        PaintingMode::None => Ok(scene.cloud.clone()),
        PaintingMode::Mask => {
            let proj = project_points(&scene.cloud, &scene.calib)?;
            paint_with_mask(&scene.cloud, &proj, &scene.mask, NUM_CLASSES)
        }
        PaintingMode::SelfPaint => self_paint_stage1(&scene.cloud, NUM_CLASSES),
    }
}

/// Visible points whose painted `sem` equals their ground-truth class, and
/// the number of visible points.
pub fn painted_correctness(scene: &Scene) -> Result<(usize, usize)> {
    let proj = project_points(&scene.cloud, &scene.calib)?;
    let painted = paint_with_mask(&scene.cloud, &proj, &scene.mask, NUM_CLASSES)?;
    let sem = painted
        .column_by_name(crate::geometry::SEM_ATTR)
        .expect("painted");
    let gt = scene
        .cloud
        .gt_labels()
        .ok_or(Error::Empty("ground-truth labels"))?;
    let mut correct = 0;
    let mut visible = 0;
    for (i, p) in proj.points.iter().enumerate() {
        if p.visible {
            visible += 1;
            correct += (sem[i] == gt[i] as f64) as usize;
        }
    }
    Ok((correct, visible))
}

/// Replaces each label with a uniformly drawn different class with
/// probability `rate`.
pub fn corrupt_labels(labels: &[usize], rate: f64, classes: usize, rng: &mut impl Rng) -> Vec<i64> {
    labels
        .iter()
        .map(|&l| {
            let u: f64 = rng.random();
            let pick = rng.random_range(0..classes.max(2) - 1);
            if u < rate && classes > 1 {
                (if pick >= l { pick + 1 } else { pick }) as i64
            } else {
                l as i64
            }
        })
        .collect()
}

/// One generated scene prepared for training or evaluation.
pub struct Sample {
    pub scene: Scene,
    /// Input for the configured mode, without the `selfsem` column in self
    /// mode (it changes per step).
    pub base: PointCloud,
    pub targets: Vec<usize>,
    pub neighbors: Option<Vec<Vec<usize>>>,
}

impl Sample {
    pub fn new(scene: Scene, mode: PaintingMode, cfg: &EncoderConfig) -> Result<Self> {
        let base = match mode {
            PaintingMode::SelfPaint => scene.cloud.clone(),
            m => model_input(&scene, m)?,
        };
        let targets = scene.gt_labels();
        let neighbors = if cfg.knn_k > 0 {
            Some(knn_indices(&cloud_xyz(&base)?, cfg.knn_k)?)
        } else {
            None
        };
        Ok(Sample {
            scene,
            base,
            targets,
            neighbors,
        })
    }
}

pub fn make_samples(
    cfg: &ExperimentConfig,
    seeds: impl Iterator<Item = u64>,
) -> Result<Vec<Sample>> {
    seeds
        .map(|s| Sample::new(gen_scene(&cfg.scene_config(s))?, cfg.painting, &cfg.encoder))
        .collect()
}

/// mIoU over the union of all samples' points. In self mode the model runs
/// both stages; `stage1` is then the first pass and `miou` the second.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub miou: MiouReport,
    pub stage1: Option<MiouReport>,
}

pub fn evaluate(
    model: &SegmentationModel,
    samples: &[Sample],
    mode: PaintingMode,
) -> Result<Evaluation> {
    let c = model.config().num_classes;
    let mut cm = ConfusionMatrix::new(c);
    let mut cm1 = ConfusionMatrix::new(c);
    for s in samples {
        match mode {
            PaintingMode::SelfPaint => {
                let two = run_two_stage(model, &s.base)?;
                cm1.accumulate(&two.stage1, &s.targets)?;
                cm.accumulate(&two.stage2, &s.targets)?;
            }
            _ => cm.accumulate(&model.predict(&s.base)?, &s.targets)?,
        }
    }
    Ok(Evaluation {
        miou: MiouReport::from_confusion(&cm)?,
        stage1: match mode {
            PaintingMode::SelfPaint => Some(MiouReport::from_confusion(&cm1)?),
            _ => None,
        },
    })
}

/// One structured metrics line.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub step: usize,
    pub loss: f64,
    pub train_miou: f64,
    pub holdout_miou: f64,
    /// Stage-one holdout mIoU in self mode.
    pub holdout_stage1_miou: Option<f64>,
}

impl fmt::Display for MetricRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "step={} loss={:.6} train_miou={:.6} holdout_miou={:.6}",
            self.step, self.loss, self.train_miou, self.holdout_miou
        )?;
        if let Some(s1) = self.holdout_stage1_miou {
            write!(f, " holdout_stage1_miou={s1:.6}")?;
        }
        Ok(())
    }
}

pub struct TrainOutcome {
    pub model: SegmentationModel,
    pub log: Vec<MetricRecord>,
    pub holdout: Evaluation,
}

impl TrainOutcome {
    pub fn log_text(&self) -> String {
        self.log.iter().map(|r| format!("{r}\n")).collect()
    }
}

/// Loss and gradients of one step over `input` restricted to `batch`.
fn step_gradients(
    model: &SegmentationModel,
    input: &PointCloud,
    neighbors: Option<&[Vec<usize>]>,
    targets: &[usize],
    batch: Option<&[usize]>,
) -> Result<(f64, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let g = forward_graph(&mut tape, input, model.params(), model.config(), neighbors)?;
    let loss = match batch {
        Some(ids) => {
            let rows = tape.gather_row(g.logits, ids)?;
            let t: Vec<usize> = ids.iter().map(|&i| targets[i]).collect();
            tape.cross_entropy(rows, &t)?
        }
        None => tape.cross_entropy(g.logits, targets)?,
    };
    let value = tape.value(loss).item();
    if !value.is_finite() {
        return Ok((value, Vec::new()));
    }
    tape.backward(loss)?;
    let grads = g
        .params
        .iter()
        .map(|&v| tape.grad(v).expect("parameter leaf").clone())
        .collect();
    Ok((value, grads))
}

/// The input for one training step: in self mode a `selfsem` column that is
/// all `-1` or corrupted ground truth.
fn step_input(cfg: &ExperimentConfig, s: &Sample, rng: &mut ChaCha8Rng) -> Result<PointCloud> {
    if cfg.painting != PaintingMode::SelfPaint {
        return Ok(s.base.clone());
    }
    let classes = cfg.encoder.num_classes;
    if rng.random::<f64>() < cfg.self_unknown_prob {
        return self_paint_stage1(&s.base, classes);
    }
    let col: Vec<f64> = corrupt_labels(&s.targets, cfg.self_noise, classes, rng)
        .into_iter()
        .map(|l| l as f64)
        .collect();
    s.base
        .append_column(AttrDesc::categorical(SELFSEM_ATTR, classes), &col)
}

/// Model schema for a mode, taken from a prepared sample.
fn input_schema(cfg: &ExperimentConfig, s: &Sample) -> Result<AttributeSchema> {
    Ok(match cfg.painting {
        PaintingMode::SelfPaint => self_paint_stage1(&s.base, cfg.encoder.num_classes)?
            .schema()
            .clone(),
        _ => s.base.schema().clone(),
    })
}

/// Trains on freshly generated scenes. Everything is a pure function of
/// `cfg`; the metrics log is bit-identical across runs.
pub fn train(cfg: &ExperimentConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let train_set = make_samples(cfg, (0..cfg.train_scenes).map(|i| cfg.train_scene_seed(i)))?;
    let holdout = make_samples(
        cfg,
        (0..cfg.holdout_scenes).map(|i| cfg.holdout_scene_seed(i)),
    )?;
    train_on(cfg, &train_set, &holdout)
}

pub fn train_on(
    cfg: &ExperimentConfig,
    train_set: &[Sample],
    holdout: &[Sample],
) -> Result<TrainOutcome> {
    let first = train_set.first().ok_or(Error::Empty("training set"))?;
    let schema = input_schema(cfg, first)?;
    let mut model = SegmentationModel::new(schema, cfg.encoder, cfg.init_seed())?;
    let mut params = model.params().to_tensors();
    let mut state = AdamState::new(&params);
    let adam = cfg.optim.adam();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.sampling_seed());
    let mut log = Vec::new();
    let mut last_loss = f64::NAN;

    let record =
        |model: &SegmentationModel, step: usize, loss: f64| -> Result<(MetricRecord, Evaluation)> {
            let tr = evaluate(model, train_set, cfg.painting)?;
            let ho = evaluate(model, holdout, cfg.painting)?;
            let rec = MetricRecord {
                step,
                loss,
                train_miou: tr.miou.miou,
                holdout_miou: ho.miou.miou,
                holdout_stage1_miou: ho.stage1.as_ref().map(|r| r.miou),
            };
            Ok((rec, ho))
        };

    if cfg.optim.steps == 0 {
        let input = step_input(cfg, first, &mut rng)?;
        let (loss, _) = step_gradients(
            &model,
            &input,
            first.neighbors.as_deref(),
            &first.targets,
            None,
        )?;
        last_loss = loss;
    }
    for step in 1..=cfg.optim.steps {
        let s = &train_set[(step - 1) % train_set.len()];
        let input = step_input(cfg, s, &mut rng)?;
        let batch = match cfg.optim.batch_points {
            0 => None,
            b if b >= s.targets.len() => None,
            b => Some(rand::seq::index::sample(&mut rng, s.targets.len(), b).into_vec()),
        };
        let (loss, grads) = step_gradients(
            &model,
            &input,
            s.neighbors.as_deref(),
            &s.targets,
            batch.as_deref(),
        )?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "training loss at step {step} (value {loss}, lr {}); lower optim.lr",
                cfg.optim.lr
            )));
        }
        let diverged = |e: Error| match e {
            Error::NonFinite(what) => Error::NonFinite(format!(
                "{what} at training step {step} (loss {loss}, lr {}); lower optim.lr",
                cfg.optim.lr
            )),
            e => e,
        };
        adam_step(&mut params, &grads, &mut state, &adam).map_err(diverged)?;
        model.set_params(params.clone()).map_err(diverged)?;
        last_loss = loss;
        if step % cfg.log_every == 0 && step != cfg.optim.steps {
            log.push(record(&model, step, loss)?.0);
        }
    }
    let (rec, ho) = record(&model, cfg.optim.steps, last_loss)?;
    log.push(rec);
    Ok(TrainOutcome {
        model,
        log,
        holdout: ho,
    })
}
