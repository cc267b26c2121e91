//! Analytic ray casting against the scene primitives.

pub type Vec3 = [f64; 3];

const T_MIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    /// Horizontal disk `z = height`, radius `radius` around the origin.
    Ground {
        height: f64,
        radius: f64,
    },
    /// Box resting on the ground, rotated by `yaw` about the vertical axis.
    Box {
        center: Vec3,
        half: Vec3,
        yaw: f64,
    },
    /// Vertical capped cylinder from `z0` to `z1`.
    Cylinder {
        x: f64,
        y: f64,
        radius: f64,
        z0: f64,
        z1: f64,
    },
    Sphere {
        center: Vec3,
        radius: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Primitive {
    pub shape: Shape,
    pub class: i32,
    /// `-1` for stuff classes.
    pub instance: i32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub class: i32,
    pub instance: i32,
}

fn smallest_positive(a: f64, b: f64) -> Option<f64> {
    [a, b]
        .into_iter()
        .filter(|t| *t > T_MIN)
        .min_by(|x, y| x.total_cmp(y))
}

/// Roots of `a t^2 + 2 b t + c = 0`.
fn quadratic(a: f64, b: f64, c: f64) -> Option<(f64, f64)> {
    if a == 0.0 {
        return None;
    }
    let disc = b * b - a * c;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    Some(((-b - s) / a, (-b + s) / a))
}

impl Shape {
    pub fn intersect(&self, o: Vec3, d: Vec3) -> Option<f64> {
        match *self {
            Shape::Ground { height, radius } => {
                if d[2] == 0.0 {
                    return None;
                }
                let t = (height - o[2]) / d[2];
                let (x, y) = (o[0] + t * d[0], o[1] + t * d[1]);
                (t > T_MIN && x * x + y * y <= radius * radius).then_some(t)
            }
            Shape::Sphere { center, radius } => {
                let oc = [o[0] - center[0], o[1] - center[1], o[2] - center[2]];
                let a = dot(d, d);
                let b = dot(oc, d);
                let c = dot(oc, oc) - radius * radius;
                let (t0, t1) = quadratic(a, b, c)?;
                smallest_positive(t0, t1)
            }
            Shape::Cylinder {
                x,
                y,
                radius,
                z0,
                z1,
            } => {
                let (ox, oy) = (o[0] - x, o[1] - y);
                let mut best: Option<f64> = None;
                let mut keep = |t: f64| {
                    if t > T_MIN && best.is_none_or(|b| t < b) {
                        best = Some(t);
                    }
                };
                if let Some((t0, t1)) = quadratic(
                    d[0] * d[0] + d[1] * d[1],
                    ox * d[0] + oy * d[1],
                    ox * ox + oy * oy - radius * radius,
                ) {
                    for t in [t0, t1] {
                        let z = o[2] + t * d[2];
                        if z >= z0 && z <= z1 {
                            keep(t);
                        }
                    }
                }
                if d[2] != 0.0 {
                    for zc in [z0, z1] {
                        let t = (zc - o[2]) / d[2];
                        let (px, py) = (ox + t * d[0], oy + t * d[1]);
                        if px * px + py * py <= radius * radius {
                            keep(t);
                        }
                    }
                }
                best
            }
            Shape::Box { center, half, yaw } => {
                // into the box frame
                let (s, c) = yaw.sin_cos();
                let rel = [o[0] - center[0], o[1] - center[1], o[2] - center[2]];
                let lo = [c * rel[0] + s * rel[1], -s * rel[0] + c * rel[1], rel[2]];
                let ld = [c * d[0] + s * d[1], -s * d[0] + c * d[1], d[2]];
                let mut tmin = f64::NEG_INFINITY;
                let mut tmax = f64::INFINITY;
                for k in 0..3 {
                    if ld[k] == 0.0 {
                        if lo[k].abs() > half[k] {
                            return None;
                        }
                        continue;
                    }
                    let a = (-half[k] - lo[k]) / ld[k];
                    let b = (half[k] - lo[k]) / ld[k];
                    tmin = tmin.max(a.min(b));
                    tmax = tmax.min(a.max(b));
                }
                if tmax < tmin {
                    return None;
                }
                smallest_positive(tmin, tmax)
            }
        }
    }
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Nearest hit along `o + t d` over all primitives; on exact ties the
/// earlier primitive wins.
pub fn cast(prims: &[Primitive], o: Vec3, d: Vec3) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    for p in prims {
        if let Some(t) = p.shape.intersect(o, d) {
            if best.is_none_or(|b| t < b.t) {
                best = Some(Hit {
                    t,
                    class: p.class,
                    instance: p.instance,
                });
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_front_face() {
        let s = Shape::Sphere {
            center: [5.0, 0.0, 0.0],
            radius: 1.0,
        };
        assert!((s.intersect([0.0; 3], [1.0, 0.0, 0.0]).unwrap() - 4.0).abs() < 1e-12);
        assert!(s.intersect([0.0; 3], [-1.0, 0.0, 0.0]).is_none());
        // from inside: the far wall
        assert!((s.intersect([5.0, 0.0, 0.0], [1.0, 0.0, 0.0]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ground_disk() {
        let g = Shape::Ground {
            height: -2.0,
            radius: 10.0,
        };
        let t = g.intersect([0.0; 3], [1.0, 0.0, -0.5]).unwrap();
        assert!((t - 4.0).abs() < 1e-12);
        assert!(g.intersect([0.0; 3], [1.0, 0.0, -0.1]).is_none()); // lands at x = 20
        assert!(g.intersect([0.0; 3], [1.0, 0.0, 0.1]).is_none());
    }

    #[test]
    fn rotated_box() {
        let b = Shape::Box {
            center: [10.0, 0.0, 0.0],
            half: [2.0, 1.0, 1.0],
            yaw: std::f64::consts::FRAC_PI_2,
        };
        // rotated 90 degrees, the box is 1 m deep along x
        let t = b.intersect([0.0; 3], [1.0, 0.0, 0.0]).unwrap();
        assert!((t - 9.0).abs() < 1e-12);
        assert!(b.intersect([0.0, 1.5, 0.0], [1.0, 0.0, 0.0]).is_some());
        assert!(b.intersect([0.0, 2.5, 0.0], [1.0, 0.0, 0.0]).is_none());
    }

    #[test]
    fn cylinder_side_and_cap() {
        let c = Shape::Cylinder {
            x: 5.0,
            y: 0.0,
            radius: 0.5,
            z0: -1.0,
            z1: 1.0,
        };
        assert!((c.intersect([0.0; 3], [1.0, 0.0, 0.0]).unwrap() - 4.5).abs() < 1e-12);
        assert!((c.intersect([5.0, 0.0, 5.0], [0.0, 0.0, -1.0]).unwrap() - 4.0).abs() < 1e-12);
        assert!(c.intersect([0.0, 0.0, 2.0], [1.0, 0.0, 0.0]).is_none());
    }

    #[test]
    fn nearest_primitive_wins() {
        let prims = vec![
            Primitive {
                shape: Shape::Sphere {
                    center: [8.0, 0.0, 0.0],
                    radius: 1.0,
                },
                class: 3,
                instance: 0,
            },
            Primitive {
                shape: Shape::Sphere {
                    center: [4.0, 0.0, 0.0],
                    radius: 1.0,
                },
                class: 2,
                instance: 1,
            },
        ];
        let h = cast(&prims, [0.0; 3], [1.0, 0.0, 0.0]).unwrap();
        assert_eq!((h.class, h.instance), (2, 1));
        assert!((h.t - 3.0).abs() < 1e-12);
    }
}
