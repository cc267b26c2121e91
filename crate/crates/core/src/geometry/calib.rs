use nalgebra::{Matrix3, Matrix3x4, Matrix4, Rotation3, Unit, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Single-camera calibration: `p_img = P * R_rect * T_velo_cam * (x, y, z, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    /// Camera projection, 3x4.
    pub p: Matrix3x4<f64>,
    /// Homogeneous rectification, 4x4.
    pub r_rect: Matrix4<f64>,
    /// Homogeneous lidar to camera rigid transform, 4x4.
    pub t_velo_cam: Matrix4<f64>,
    pub image_w: usize,
    pub image_h: usize,
}

fn bottom_row_ok(m: &Matrix4<f64>) -> bool {
    m[(3, 0)] == 0.0 && m[(3, 1)] == 0.0 && m[(3, 2)] == 0.0 && m[(3, 3)] == 1.0
}

impl Calibration {
    pub fn new(
        p: Matrix3x4<f64>,
        r_rect: Matrix4<f64>,
        t_velo_cam: Matrix4<f64>,
        image_w: usize,
        image_h: usize,
    ) -> Result<Self> {
        let calib = Calibration {
            p,
            r_rect,
            t_velo_cam,
            image_w,
            image_h,
        };
        calib.validate()?;
        Ok(calib)
    }

    pub fn validate(&self) -> Result<()> {
        if !bottom_row_ok(&self.r_rect) {
            return Err(Error::Calibration(
                "R_rect bottom row must be (0,0,0,1)".into(),
            ));
        }
        if !bottom_row_ok(&self.t_velo_cam) {
            return Err(Error::Calibration(
                "T_velo_cam bottom row must be (0,0,0,1)".into(),
            ));
        }
        if (0..4).all(|j| self.p[(2, j)] == 0.0) {
            return Err(Error::Calibration("P depth row is all zero".into()));
        }
        if self.image_w == 0 || self.image_h == 0 {
            return Err(Error::Calibration("image extent must be positive".into()));
        }
        let all = self
            .p
            .iter()
            .chain(self.r_rect.iter())
            .chain(self.t_velo_cam.iter());
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("calibration".into()));
        }
        Ok(())
    }

    /// Pinhole camera with focal length `f` and principal point `(cx, cy)`,
    /// lidar axes (x forward, y left, z up) mapped onto camera axes
    /// (x right, y down, z forward), sensors co-located.
    pub fn pinhole(f: f64, cx: f64, cy: f64, image_w: usize, image_h: usize) -> Self {
        #[rustfmt::skip]
        let p = Matrix3x4::new(
            f, 0.0, cx, 0.0,
            0.0, f, cy, 0.0,
            0.0, 0.0, 1.0, 0.0,
        );
        #[rustfmt::skip]
        let t = Matrix4::new(
            0.0, -1.0, 0.0, 0.0,
            0.0, 0.0, -1.0, 0.0,
            1.0, 0.0, 0.0, 0.0,
            0.0, 0.0, 0.0, 1.0,
        );
        Calibration {
            p,
            r_rect: Matrix4::identity(),
            t_velo_cam: t,
            image_w,
            image_h,
        }
    }

    /// The composed 3x4 chain `P * R_rect * T_velo_cam`.
    pub fn chain(&self) -> Matrix3x4<f64> {
        self.p * self.r_rect * self.t_velo_cam
    }

    /// Homogeneous image coordinates of a lidar-frame point.
    pub fn project_h(&self, xyz: [f64; 3]) -> Vector3<f64> {
        let x = Vector4::new(xyz[0], xyz[1], xyz[2], 1.0);
        self.p * (self.r_rect * (self.t_velo_cam * x))
    }

    fn split_chain(&self) -> Option<(Matrix3<f64>, Vector3<f64>)> {
        let m = self.chain();
        let m3: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
        let inv = m3.try_inverse()?;
        Some((inv, m.column(3).into_owned()))
    }

    /// Lidar-frame point whose projection is `(u, v)` at `depth`.
    /// `None` if the left 3x3 block of the chain is singular.
    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Option<[f64; 3]> {
        let (inv, t) = self.split_chain()?;
        let x = inv * (Vector3::new(u * depth, v * depth, depth) - t);
        Some([x[0], x[1], x[2]])
    }

    /// Optical center in the lidar frame.
    pub fn camera_center(&self) -> Option<[f64; 3]> {
        let (inv, t) = self.split_chain()?;
        let c = -(inv * t);
        Some([c[0], c[1], c[2]])
    }

    /// Direction (lidar frame, unnormalized) of the ray through pixel
    /// coordinate `(u, v)`; moving one unit along it raises depth by one.
    pub fn pixel_ray(&self, u: f64, v: f64) -> Option<[f64; 3]> {
        let (inv, _) = self.split_chain()?;
        let d = inv * Vector3::new(u, v, 1.0);
        Some([d[0], d[1], d[2]])
    }
}

/// Perturbs the lidar to camera extrinsic by a rotation of exactly
/// `rot_noise_rad` about a seeded random axis and a translation of length
/// `trans_noise_m` along a seeded random direction, both in the camera frame.
pub fn perturb_calibration(
    calib: &Calibration,
    rot_noise_rad: f64,
    trans_noise_m: f64,
    seed: u64,
) -> Result<Calibration> {
    if !(rot_noise_rad >= 0.0 && trans_noise_m >= 0.0) {
        return Err(Error::Config("noise magnitudes must be >= 0".into()));
    }
    if rot_noise_rad == 0.0 && trans_noise_m == 0.0 {
        return Ok(calib.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let axis = random_unit(&mut rng);
    let dir = random_unit(&mut rng);
    Ok(perturb_with(
        calib,
        axis,
        rot_noise_rad,
        dir * trans_noise_m,
    ))
}

fn random_unit(rng: &mut impl Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

pub(crate) fn perturb_with(
    calib: &Calibration,
    axis: Vector3<f64>,
    angle: f64,
    translation: Vector3<f64>,
) -> Calibration {
    let rot = Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle);
    let mut delta = Matrix4::identity();
    delta.fixed_view_mut::<3, 3>(0, 0).copy_from(rot.matrix());
    delta.fixed_view_mut::<3, 1>(0, 3).copy_from(&translation);
    Calibration {
        t_velo_cam: delta * calib.t_velo_cam,
        ..calib.clone()
    }
}
