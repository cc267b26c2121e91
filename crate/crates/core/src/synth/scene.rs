use nalgebra::{Matrix3x4, Matrix4};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cloud::{AttributeSchema, ClassSpace, PointCloud};
use crate::error::{Error, Result};
use crate::geometry::{project_point, Calibration, LabeledMask};

use super::corrupt::corrupt_mask;
use super::primitives::{cast, Hit, Primitive, Shape, Vec3};

pub const GROUND: i32 = 0;
pub const VEHICLE: i32 = 1;
pub const POLE: i32 = 2;
pub const PEDESTRIAN: i32 = 3;
pub const NUM_CLASSES: usize = 4;

/// Per-class intensity means; jitter is added on top.
const INTENSITY_BASE: [f64; NUM_CLASSES] = [0.2, 0.6, 0.45, 0.35];

/// Pinhole camera co-located with the lidar, looking along `yaw` (radians,
/// counter-clockwise from lidar x) and tilted up by `pitch`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraSpec {
    pub focal: f64,
    pub width: usize,
    pub height: usize,
    pub yaw: f64,
    pub pitch: f64,
}

impl Default for CameraSpec {
    fn default() -> Self {
        CameraSpec {
            focal: 120.0,
            width: 240,
            height: 80,
            yaw: 0.0,
            pitch: 0.0,
        }
    }
}

impl CameraSpec {
    pub fn calibration(&self) -> Calibration {
        let f = self.focal;
        #[rustfmt::skip]
        let p = Matrix3x4::new(
            f, 0.0, self.width as f64 / 2.0, 0.0,
            0.0, f, self.height as f64 / 2.0, 0.0,
            0.0, 0.0, 1.0, 0.0,
        );
        let (sy, cy) = self.yaw.sin_cos();
        let (sp, cp) = self.pitch.sin_cos();
        let fwd = [cp * cy, cp * sy, sp];
        let right = [sy, -cy, 0.0];
        // down = forward x right
        let down = [
            fwd[1] * right[2] - fwd[2] * right[1],
            fwd[2] * right[0] - fwd[0] * right[2],
            fwd[0] * right[1] - fwd[1] * right[0],
        ];
        #[rustfmt::skip]
        let t = Matrix4::new(
            right[0], right[1], right[2], 0.0,
            down[0], down[1], down[2], 0.0,
            fwd[0], fwd[1], fwd[2], 0.0,
            0.0, 0.0, 0.0, 1.0,
        );
        Calibration {
            p,
            r_rect: Matrix4::identity(),
            t_velo_cam: t,
            image_w: self.width,
            image_h: self.height,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub seed: u64,
    pub n_points: usize,
    /// Inclusive object count ranges.
    pub vehicles: (usize, usize),
    pub poles: (usize, usize),
    pub pedestrians: (usize, usize),
    /// Ground disk radius in meters.
    pub extent: f64,
    /// Ground height in the lidar frame.
    pub ground_z: f64,
    pub camera: CameraSpec,
    /// Probability that an object is placed inside the camera's field of view.
    pub front_bias: f64,
    /// Fraction of points sampled outside the image.
    pub out_of_view_fraction: f64,
    pub intensity_jitter: f64,
    pub mask_noise_rate: f64,
    /// Fraction of points whose intensity and timestamp read zero.
    pub drop_rate: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            seed: 0,
            n_points: 600,
            vehicles: (2, 4),
            poles: (2, 5),
            pedestrians: (2, 5),
            extent: 30.0,
            ground_z: -1.73,
            camera: CameraSpec::default(),
            front_bias: 0.75,
            out_of_view_fraction: 0.1,
            intensity_jitter: 0.15,
            mask_noise_rate: 0.0,
            drop_rate: 0.0,
        }
    }
}

impl SceneConfig {
    pub fn with_seed(seed: u64) -> Self {
        SceneConfig {
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("mask_noise_rate", self.mask_noise_rate),
            ("drop_rate", self.drop_rate),
            ("front_bias", self.front_bias),
            ("out_of_view_fraction", self.out_of_view_fraction),
        ];
        for (name, r) in rates {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Config(format!("{name} = {r} outside [0, 1]")));
            }
        }
        if self.n_points == 0 {
            return Err(Error::Config("n_points must be >= 1".into()));
        }
        for (name, (lo, hi)) in [
            ("vehicles", self.vehicles),
            ("poles", self.poles),
            ("pedestrians", self.pedestrians),
        ] {
            if lo > hi {
                return Err(Error::Config(format!("{name} range ({lo}, {hi}) is empty")));
            }
        }
        if self.extent.is_nan()
            || self.extent <= 0.0
            || self.camera.width == 0
            || self.camera.height == 0
        {
            return Err(Error::Config(
                "extent and image size must be positive".into(),
            ));
        }
        if self.intensity_jitter.is_nan() || self.intensity_jitter < 0.0 {
            return Err(Error::Config("intensity_jitter must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    /// x, y, z, intensity, t with ground-truth classes attached.
    pub cloud: PointCloud,
    /// Per-point instance id, `-1` for ground.
    pub gt_instances: Vec<i64>,
    /// Rendered labels, corrupted at `mask_noise_rate`.
    pub mask: LabeledMask,
    pub calib: Calibration,
    pub classes: ClassSpace,
}

impl Scene {
    pub fn gt_labels(&self) -> Vec<usize> {
        self.cloud
            .gt_labels()
            .expect("generated scenes carry labels")
            .iter()
            .map(|&l| l as usize)
            .collect()
    }
}

/// Seeds of the independent random streams.
fn stream(seed: u64, k: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(k))
}

fn place_objects(cfg: &SceneConfig, rng: &mut ChaCha8Rng) -> Vec<Primitive> {
    let mut prims = vec![Primitive {
        shape: Shape::Ground {
            height: cfg.ground_z,
            radius: cfg.extent,
        },
        class: GROUND,
        instance: -1,
    }];
    let half_fov = (cfg.camera.width as f64 / 2.0 / cfg.camera.focal).atan();
    let min_r = 4.0;
    let max_r = (cfg.extent - 3.0).max(min_r + 1.0);
    let mut footprints: Vec<(f64, f64, f64)> = Vec::new();
    let mut next_instance = 0;
    let counts = [
        (VEHICLE, cfg.vehicles),
        (POLE, cfg.poles),
        (PEDESTRIAN, cfg.pedestrians),
    ];
    for (class, (lo, hi)) in counts {
        let n = rng.random_range(lo..=hi);
        for _ in 0..n {
            let (shape, footprint) = match class {
                VEHICLE => {
                    let l = rng.random_range(3.5..4.8);
                    let w = rng.random_range(1.6..2.0);
                    let h = rng.random_range(1.4..1.8);
                    let yaw = rng.random_range(0.0..std::f64::consts::PI);
                    (
                        Shape::Box {
                            center: [0.0, 0.0, cfg.ground_z + h / 2.0],
                            half: [l / 2.0, w / 2.0, h / 2.0],
                            yaw,
                        },
                        (l * l + w * w).sqrt() / 2.0,
                    )
                }
                POLE => {
                    let r = rng.random_range(0.1..0.25);
                    let h = rng.random_range(3.0..6.0);
                    (
                        Shape::Cylinder {
                            x: 0.0,
                            y: 0.0,
                            radius: r,
                            z0: cfg.ground_z,
                            z1: cfg.ground_z + h,
                        },
                        r,
                    )
                }
                _ => {
                    let r = rng.random_range(0.3..0.5);
                    (
                        Shape::Sphere {
                            center: [0.0, 0.0, cfg.ground_z + r],
                            radius: r,
                        },
                        r,
                    )
                }
            };
            let mut placed = None;
            for _ in 0..30 {
                let front = rng.random::<f64>() < cfg.front_bias;
                let az = if front {
                    cfg.camera.yaw + rng.random_range(-half_fov..half_fov)
                } else {
                    rng.random_range(0.0..std::f64::consts::TAU)
                };
                let r = rng.random_range(min_r..max_r);
                let (x, y) = (r * az.cos(), r * az.sin());
                let clear = footprints.iter().all(|&(fx, fy, fr)| {
                    ((fx - x).powi(2) + (fy - y).powi(2)).sqrt() > fr + footprint + 0.3
                });
                if clear {
                    placed = Some((x, y));
                    break;
                }
            }
            let Some((x, y)) = placed else { continue };
            footprints.push((x, y, footprint));
            let shape = match shape {
                Shape::Box { center, half, yaw } => Shape::Box {
                    center: [x, y, center[2]],
                    half,
                    yaw,
                },
                Shape::Cylinder { radius, z0, z1, .. } => Shape::Cylinder {
                    x,
                    y,
                    radius,
                    z0,
                    z1,
                },
                Shape::Sphere { center, radius } => Shape::Sphere {
                    center: [x, y, center[2]],
                    radius,
                },
                g => g,
            };
            prims.push(Primitive {
                shape,
                class,
                instance: next_instance,
            });
            next_instance += 1;
        }
    }
    prims
}

/// Labels of the ray through the center of pixel `(px, py)`.
fn pixel_hit(
    prims: &[Primitive],
    calib: &Calibration,
    center: Vec3,
    px: usize,
    py: usize,
) -> Option<Hit> {
    let ray = calib.pixel_ray(px as f64 + 0.5, py as f64 + 0.5)?;
    cast(prims, center, ray)
}

fn render_mask(prims: &[Primitive], calib: &Calibration, center: Vec3) -> LabeledMask {
    let (w, h) = (calib.image_w, calib.image_h);
    let mut mask = LabeledMask::unlabeled(w, h);
    for py in 0..h {
        for px in 0..w {
            if let Some(hit) = pixel_hit(prims, calib, center, px, py) {
                mask.set(px, py, hit.class, hit.instance);
            }
        }
    }
    mask
}

/// Generates a scene. In-view points are the first surface hit by the ray
/// through a random pixel center, which is also the ray that renders that
/// pixel, so at zero mask noise every visible point's pixel carries its own
/// class and instance. Out-of-view points come from lidar-style rays from
/// the sensor origin that land outside the image.
pub fn gen_scene(cfg: &SceneConfig) -> Result<Scene> {
    cfg.validate()?;
    let calib = cfg.camera.calibration();
    let center = calib
        .camera_center()
        .ok_or_else(|| Error::Calibration("singular camera".into()))?;
    let mut geo_rng = stream(cfg.seed, 1);
    let prims = place_objects(cfg, &mut geo_rng);

    let n_out = (cfg.n_points as f64 * cfg.out_of_view_fraction).round() as usize;
    let n_in = cfg.n_points - n_out;
    let mut hits: Vec<(Vec3, Hit)> = Vec::with_capacity(cfg.n_points);
    let mut pt_rng = stream(cfg.seed, 2);
    let (w, h) = (calib.image_w, calib.image_h);
    let budget = 50 * cfg.n_points + 1000;
    let mut attempts = 0;
    while hits.len() < n_in && attempts < budget {
        attempts += 1;
        let (px, py) = (pt_rng.random_range(0..w), pt_rng.random_range(0..h));
        let ray = calib
            .pixel_ray(px as f64 + 0.5, py as f64 + 0.5)
            .expect("invertible");
        if let Some(hit) = cast(&prims, center, ray) {
            let p = [
                center[0] + hit.t * ray[0],
                center[1] + hit.t * ray[1],
                center[2] + hit.t * ray[2],
            ];
            hits.push((p, hit));
        }
    }
    if hits.is_empty() {
        return Err(Error::Generation(
            "camera sees no scene content (zero visible points)".into(),
        ));
    }
    let target_out = cfg.n_points - hits.len();
    let mut out_hits = Vec::with_capacity(target_out);
    attempts = 0;
    while out_hits.len() < target_out && attempts < budget {
        attempts += 1;
        let az = pt_rng.random_range(0.0..std::f64::consts::TAU);
        let el = pt_rng.random_range(-0.45f64..0.03);
        let dir = [el.cos() * az.cos(), el.cos() * az.sin(), el.sin()];
        if let Some(hit) = cast(&prims, [0.0; 3], dir) {
            let p = [hit.t * dir[0], hit.t * dir[1], hit.t * dir[2]];
            if !project_point(&calib, p).visible {
                out_hits.push((p, hit));
            }
        }
    }
    hits.extend(out_hits);
    hits.shuffle(&mut pt_rng);

    let mut attr_rng = stream(cfg.seed, 3);
    let jitter = Normal::new(0.0, cfg.intensity_jitter.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Config(e.to_string()))?;
    let mut values = Vec::with_capacity(hits.len() * 5);
    let mut labels = Vec::with_capacity(hits.len());
    let mut instances = Vec::with_capacity(hits.len());
    for (p, hit) in &hits {
        let mut intensity = INTENSITY_BASE[hit.class as usize];
        if cfg.intensity_jitter > 0.0 {
            intensity += jitter.sample(&mut attr_rng);
        }
        let mut t = attr_rng.random_range(0.0..0.1);
        if attr_rng.random::<f64>() < cfg.drop_rate {
            intensity = 0.0;
            t = 0.0;
        }
        values.extend_from_slice(&[p[0], p[1], p[2], intensity, t]);
        labels.push(hit.class as i64);
        instances.push(hit.instance as i64);
    }
    let cloud = PointCloud::new(AttributeSchema::lidar(), values)?.with_gt_labels(labels)?;

    let clean = render_mask(&prims, &calib, center);
    let mask = if cfg.mask_noise_rate > 0.0 {
        corrupt_mask(&clean, cfg.mask_noise_rate, cfg.seed.wrapping_add(0x5eed))?
    } else {
        clean
    };
    Ok(Scene {
        cloud,
        gt_instances: instances,
        mask,
        calib,
        classes: ClassSpace::synthetic(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{paint_with_mask, project_points};

    #[test]
    fn deterministic_in_seed() {
        let cfg = SceneConfig::with_seed(7);
        assert_eq!(gen_scene(&cfg).unwrap(), gen_scene(&cfg).unwrap());
        assert_ne!(
            gen_scene(&cfg).unwrap().cloud,
            gen_scene(&SceneConfig::with_seed(8)).unwrap().cloud
        );
    }

    #[test]
    fn ground_only_scene() {
        let cfg = SceneConfig {
            vehicles: (0, 0),
            poles: (0, 0),
            pedestrians: (0, 0),
            ..SceneConfig::with_seed(3)
        };
        let s = gen_scene(&cfg).unwrap();
        assert_eq!(s.cloud.len(), cfg.n_points);
        assert!(s.gt_labels().iter().all(|&l| l == GROUND as usize));
        assert!(s.mask.semantic().iter().all(|&v| v == -1 || v == GROUND));
        assert!(s.mask.semantic().contains(&-1));
    }

    #[test]
    fn sky_facing_camera_is_an_error() {
        let cfg = SceneConfig {
            camera: CameraSpec {
                pitch: 1.4,
                ..Default::default()
            },
            poles: (0, 0),
            ..SceneConfig::with_seed(1)
        };
        assert!(matches!(gen_scene(&cfg), Err(Error::Generation(_))));
    }

    #[test]
    fn all_classes_and_out_of_view_points_present() {
        let s = gen_scene(&SceneConfig::with_seed(11)).unwrap();
        let labels = s.gt_labels();
        for c in 0..NUM_CLASSES {
            assert!(labels.contains(&c), "class {c} missing");
        }
        let proj = project_points(&s.cloud, &s.calib).unwrap();
        let hidden = proj.points.iter().filter(|p| !p.visible).count();
        assert_eq!(hidden, 60);
    }

    #[test]
    fn oracle_painting_at_zero_noise() {
        for seed in 0..5 {
            let s = gen_scene(&SceneConfig::with_seed(seed)).unwrap();
            let proj = project_points(&s.cloud, &s.calib).unwrap();
            let painted = paint_with_mask(&s.cloud, &proj, &s.mask, NUM_CLASSES).unwrap();
            let gt = s.cloud.gt_labels().unwrap();
            for (i, p) in proj.points.iter().enumerate() {
                let row = painted.row(i);
                if p.visible {
                    assert_eq!(row[5], gt[i] as f64, "seed {seed} point {i}");
                    assert_eq!(row[6], s.gt_instances[i].max(-1) as f64);
                } else {
                    assert_eq!(&row[5..], &[-1.0, -1.0]);
                }
            }
        }
    }

    #[test]
    fn noise_only_touches_the_mask() {
        let clean = gen_scene(&SceneConfig::with_seed(4)).unwrap();
        let noisy = gen_scene(&SceneConfig {
            mask_noise_rate: 0.3,
            ..SceneConfig::with_seed(4)
        })
        .unwrap();
        assert_eq!(clean.cloud, noisy.cloud);
        assert_ne!(clean.mask, noisy.mask);
    }

    #[test]
    fn dropout_zeroes_intensity_and_time() {
        let s = gen_scene(&SceneConfig {
            drop_rate: 1.0,
            ..SceneConfig::with_seed(2)
        })
        .unwrap();
        assert!(s.cloud.column(3).iter().all(|&v| v == 0.0));
        assert!(s.cloud.column(4).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = SceneConfig {
            mask_noise_rate: 1.5,
            ..Default::default()
        };
        assert!(gen_scene(&cfg).is_err());
        let cfg = SceneConfig {
            n_points: 0,
            ..Default::default()
        };
        assert!(gen_scene(&cfg).is_err());
    }
}
