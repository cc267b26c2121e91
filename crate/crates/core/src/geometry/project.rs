use crate::cloud::PointCloud;
use crate::error::Result;

use super::calib::Calibration;

/// Depths with magnitude below this are never divided by.
pub const MIN_DEPTH: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedPoint {
    /// Pixel coordinates, unrounded. NaN when `|depth| < MIN_DEPTH`.
    pub u: f64,
    pub v: f64,
    /// Camera-frame z in meters.
    pub depth: f64,
    pub visible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub points: Vec<ProjectedPoint>,
    pub image_w: usize,
    pub image_h: usize,
}

impl Projection {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn visible_count(&self) -> usize {
        self.points.iter().filter(|p| p.visible).count()
    }
}

pub fn project_point(calib: &Calibration, xyz: [f64; 3]) -> ProjectedPoint {
    let h = calib.project_h(xyz);
    let depth = h[2];
    if depth.abs() < MIN_DEPTH {
        return ProjectedPoint {
            u: f64::NAN,
            v: f64::NAN,
            depth,
            visible: false,
        };
    }
    let u = h[0] / depth;
    let v = h[1] / depth;
    let visible =
        depth > 0.0 && u >= 0.0 && u < calib.image_w as f64 && v >= 0.0 && v < calib.image_h as f64;
    ProjectedPoint {
        u,
        v,
        depth,
        visible,
    }
}

/// Projects every point through `P * R_rect * T_velo_cam`.
pub fn project_points(cloud: &PointCloud, calib: &Calibration) -> Result<Projection> {
    let [ix, iy, iz] = cloud.schema().xyz()?;
    calib.validate()?;
    let points = cloud
        .rows()
        .take(cloud.len())
        .map(|r| project_point(calib, [r[ix], r[iy], r[iz]]))
        .collect();
    Ok(Projection {
        points,
        image_w: calib.image_w,
        image_h: calib.image_h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::{AttrDesc, AttributeSchema};
    use crate::error::Error;
    use nalgebra::{Matrix3x4, Matrix4};

    fn canonical(w: usize, h: usize) -> Calibration {
        Calibration::new(
            Matrix3x4::identity(),
            Matrix4::identity(),
            Matrix4::identity(),
            w,
            h,
        )
        .unwrap()
    }

    fn xyz_cloud(pts: &[[f64; 3]]) -> PointCloud {
        let schema = AttributeSchema::new(vec![
            AttrDesc::continuous("x", "m"),
            AttrDesc::continuous("y", "m"),
            AttrDesc::continuous("z", "m"),
        ])
        .unwrap();
        PointCloud::new(schema, pts.iter().flatten().copied().collect()).unwrap()
    }

    #[test]
    fn canonical_pinhole() {
        let p = project_points(&xyz_cloud(&[[0.0, 0.0, 2.0]]), &canonical(4, 4)).unwrap();
        let q = p.points[0];
        assert_eq!((q.u, q.v, q.depth), (0.0, 0.0, 2.0));
        assert!(q.visible);
    }

    #[test]
    fn behind_camera_is_invisible() {
        let p = project_points(&xyz_cloud(&[[0.0, 0.0, -1.0]]), &canonical(4, 4)).unwrap();
        assert!(!p.points[0].visible);
    }

    #[test]
    fn zero_depth_is_never_divided() {
        let p = project_points(&xyz_cloud(&[[1.0, 1.0, 0.0]]), &canonical(4, 4)).unwrap();
        assert!(!p.points[0].visible);
        assert!(p.points[0].u.is_nan());
    }

    #[test]
    fn border_is_half_open() {
        let c = canonical(4, 3);
        let p = project_points(
            &xyz_cloud(&[[4.0, 0.0, 1.0], [3.999, 2.999, 1.0], [0.0, 3.0, 1.0]]),
            &c,
        )
        .unwrap();
        let vis: Vec<bool> = p.points.iter().map(|q| q.visible).collect();
        assert_eq!(vis, vec![false, true, false]);
    }

    #[test]
    fn missing_xyz_is_an_error() {
        let schema = AttributeSchema::new(vec![AttrDesc::continuous("x", "m")]).unwrap();
        let cloud = PointCloud::new(schema, vec![1.0]).unwrap();
        assert!(matches!(
            project_points(&cloud, &canonical(2, 2)),
            Err(Error::MissingAttribute(_))
        ));
    }

    #[test]
    fn equivariant_under_permutation() {
        let c = Calibration::pinhole(100.0, 64.0, 32.0, 128, 64);
        let pts = [
            [5.0, 1.0, 0.2],
            [8.0, -2.0, -0.5],
            [-3.0, 0.0, 0.0],
            [12.0, 0.4, 1.0],
        ];
        let cloud = xyz_cloud(&pts);
        let perm = [2, 0, 3, 1];
        let a = project_points(&cloud, &c).unwrap();
        let b = project_points(&cloud.permute_points(&perm).unwrap(), &c).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            assert_eq!(b.points[i], a.points[p]);
        }
    }
}
