//! `pep`: generate scenes, paint clouds, train and evaluate the encoder.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use pep_core::encoder::{gradcheck, load_checkpoint, save_checkpoint};
use pep_core::geometry::{
    paint_with_mask, project_points, run_two_stage, self_paint_stage1, self_paint_stage2,
};
use pep_core::io;
use pep_core::metrics::miou_labeled;
use pep_core::synth::{gen_scene, NUM_CLASSES};
use pep_core::train::{train, ExperimentConfig, PaintingMode};
use pep_core::{EncoderConfig, PointCloud};

#[derive(Parser)]
#[command(
    name = "pep",
    version,
    about = "Point painting and attribute-token segmentation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene: <out>, <out>.mask and <out>.calib.
    Gen(GenArgs),
    /// Append mask labels (sem, inst) to a cloud.
    Paint(PaintArgs),
    /// Append a self-painting column (selfsem) to a cloud.
    Selfpaint(SelfpaintArgs),
    /// Train on generated scenes; writes a checkpoint and a metrics log.
    Train(TrainArgs),
    /// Score predictions or a checkpoint against a cloud's gt labels.
    Eval(EvalArgs),
    /// Compare analytic and finite-difference gradients of the encoder.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML); its [scene], [encoder] and [optim]
    /// sections are used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed of every random choice.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    common: Common,
    /// Mask noise rate; overrides the config.
    #[arg(long)]
    noise: Option<f64>,
    /// Number of points; overrides the config.
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PaintArgs {
    /// Cloud text file, or a KITTI `.bin` scan.
    #[arg(long)]
    cloud: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    /// KITTI-style calibration text.
    #[arg(long)]
    calib: PathBuf,
    #[arg(long, default_value_t = NUM_CLASSES)]
    classes: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SelfpaintArgs {
    #[arg(long)]
    cloud: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    stage: u8,
    /// Stage-one predictions, one class id per line (stage 2 only).
    #[arg(long)]
    pred: Option<PathBuf>,
    #[arg(long, default_value_t = NUM_CLASSES)]
    classes: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// none, mask or self; overrides the config.
    #[arg(long)]
    painting: Option<String>,
    /// Training steps; overrides the config.
    #[arg(long)]
    steps: Option<usize>,
    /// Scene mask noise rate; overrides the config.
    #[arg(long)]
    noise: Option<f64>,
    /// Checkpoint path. The metrics log goes next to it with extension
    /// `.metrics` unless `--metrics` is given.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Cloud with a `gt:label` column.
    #[arg(long)]
    cloud: PathBuf,
    /// Predictions, one class id per line.
    #[arg(long, conflicts_with = "checkpoint")]
    pred: Option<PathBuf>,
    #[arg(long, required_unless_present = "pred")]
    checkpoint: Option<PathBuf>,
    /// Run stage one and stage two of self-painting (checkpoint must have
    /// been trained with painting = "self"; cloud unpainted).
    #[arg(long, requires = "checkpoint")]
    two_stage: bool,
    #[arg(long, default_value_t = NUM_CLASSES)]
    classes: usize,
    /// Also write the predictions here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 12)]
    points: usize,
}

enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

impl From<pep_core::Error> for Failure {
    fn from(e: pep_core::Error) -> Self {
        Failure::Data(e.into())
    }
}

type Outcome = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn load_config(common: &Common) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    cfg.seed = common.seed;
    Ok(cfg)
}

fn read_any_cloud(path: &Path) -> pep_core::Result<PointCloud> {
    if path.extension().is_some_and(|e| e == "bin") {
        io::read_kitti_bin(path)
    } else {
        io::read_cloud(path)
    }
}

fn sibling(path: &Path, ext: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn gen(a: GenArgs) -> Outcome {
    let cfg = load_config(&a.common)?;
    let mut scene_cfg = cfg.scene_config(a.common.seed);
    if let Some(r) = a.noise {
        scene_cfg.mask_noise_rate = r;
    }
    if let Some(n) = a.points {
        scene_cfg.n_points = n;
    }
    let scene = gen_scene(&scene_cfg)?;
    io::write_cloud(&scene.cloud, &a.out)?;
    io::write_mask(&scene.mask, &sibling(&a.out, "mask"))?;
    io::write_kitti_calib(&scene.calib, &sibling(&a.out, "calib"))?;
    let visible = project_points(&scene.cloud, &scene.calib)?.visible_count();
    println!(
        "points={} visible={visible} out={}",
        scene.cloud.len(),
        a.out.display()
    );
    Ok(())
}

fn paint(a: PaintArgs) -> Outcome {
    let cloud = read_any_cloud(&a.cloud)?;
    let mask = io::read_mask(&a.mask)?;
    let calib = io::read_kitti_calib(&a.calib)?;
    let proj = project_points(&cloud, &calib)?;
    let painted = paint_with_mask(&cloud, &proj, &mask, a.classes)
        .with_context(|| format!("painting {} with {}", a.cloud.display(), a.mask.display()))?;
    io::write_cloud(&painted, &a.out)?;
    println!(
        "points={} visible={} out={}",
        cloud.len(),
        proj.visible_count(),
        a.out.display()
    );
    Ok(())
}

fn selfpaint(a: SelfpaintArgs) -> Outcome {
    let cloud = read_any_cloud(&a.cloud)?;
    let painted = match (a.stage, &a.pred) {
        (1, None) => self_paint_stage1(&cloud, a.classes)?,
        (1, Some(_)) => return Err(usage("--pred is only used with --stage 2")),
        (_, None) => return Err(usage("--stage 2 needs --pred <stage-one predictions>")),
        (_, Some(p)) => self_paint_stage2(&cloud, &io::read_labels(p)?, a.classes)?,
    };
    io::write_cloud(&painted, &a.out)?;
    println!(
        "points={} stage={} out={}",
        cloud.len(),
        a.stage,
        a.out.display()
    );
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Outcome {
    let mut cfg = load_config(&a.common)?;
    if let Some(p) = &a.painting {
        cfg.painting = match p.as_str() {
            "none" => PaintingMode::None,
            "mask" => PaintingMode::Mask,
            "self" => PaintingMode::SelfPaint,
            other => {
                return Err(usage(format!(
                    "unknown painting mode `{other}` (none, mask, self)"
                )))
            }
        };
    }
    if let Some(s) = a.steps {
        cfg.optim.steps = s;
    }
    if let Some(r) = a.noise {
        cfg.scene.mask_noise_rate = r;
    }
    cfg.validate()?;
    let out = train(&cfg)?;
    let log = out.log_text();
    print!("{log}");
    save_checkpoint(&out.model, &a.out)?;
    let metrics = a.metrics.unwrap_or_else(|| a.out.with_extension("metrics"));
    std::fs::write(&metrics, &log).with_context(|| format!("writing {}", metrics.display()))?;
    Ok(())
}

fn print_report(prefix: &str, pred: &[usize], gt: &[i64], classes: usize) -> anyhow::Result<()> {
    let r = miou_labeled(pred, gt, classes)?;
    let per: Vec<String> = r
        .per_class_iou
        .iter()
        .map(|v| v.map_or("nan".to_string(), |x| format!("{x:?}")))
        .collect();
    println!("{prefix}miou={:?} per_class={}", r.miou, per.join(","));
    Ok(())
}

fn eval(a: EvalArgs) -> Outcome {
    let cloud = read_any_cloud(&a.cloud)?;
    let gt = cloud
        .gt_labels()
        .with_context(|| format!("{} has no gt:label column", a.cloud.display()))?
        .to_vec();
    let pred: Vec<usize> = match (&a.pred, &a.checkpoint) {
        (Some(p), _) => {
            let raw = io::read_labels(p)?;
            if raw.len() != cloud.len() {
                return Err(Failure::Data(anyhow!(
                    "{} has {} labels for {} points",
                    p.display(),
                    raw.len(),
                    cloud.len()
                )));
            }
            raw.iter()
                .map(|&l| {
                    usize::try_from(l)
                        .ok()
                        .filter(|&v| v < a.classes)
                        .with_context(|| format!("prediction {l} outside [0, {})", a.classes))
                })
                .collect::<anyhow::Result<_>>()?
        }
        (None, Some(ck)) => {
            let model = load_checkpoint(ck)?;
            if a.two_stage {
                let two = run_two_stage(&model, &cloud)?;
                print_report("stage1_", &two.stage1, &gt, a.classes)?;
                two.stage2
            } else {
                model.predict(&cloud)?
            }
        }
        (None, None) => return Err(usage("eval needs --pred or --checkpoint")),
    };
    print_report("", &pred, &gt, a.classes)?;
    if let Some(out) = &a.out {
        let ids: Vec<i64> = pred.iter().map(|&p| p as i64).collect();
        io::write_labels(&ids, out)?;
    }
    Ok(())
}

fn gradcheck_cmd(a: GradcheckArgs) -> Outcome {
    let enc = match &a.common.config {
        Some(_) => load_config(&a.common)?.encoder,
        None => EncoderConfig::default(),
    };
    let report = gradcheck(&enc, a.points, a.common.seed)?;
    print!("{}", report.render());
    if !report.passed() {
        return Err(Failure::Data(anyhow!(
            "gradient check failed: max relative error {:e}",
            report.max_rel_err
        )));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Paint(a) => paint(a),
        Command::Selfpaint(a) => selfpaint(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Gradcheck(a) => gradcheck_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run `pep --help` for usage");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
