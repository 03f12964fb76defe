//! Quadrature rules on unit balls and spheres in dimensions 1 to 3.

use std::f64::consts::PI;

use crate::Vec3;

/// Gauss–Legendre nodes and weights on `[-1, 1]` (Newton iteration on the
/// Legendre recurrence).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    if n == 1 {
        return (vec![0.0], vec![2.0]);
    }
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Gauss–Legendre on `[a, b]`.
pub fn gauss_interval(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let c = 0.5 * (a + b);
    let s = 0.5 * (b - a);
    (x.iter().map(|t| c + s * t).collect(), w.iter().map(|t| s * t).collect())
}

/// Composite midpoint rule on `[a, b]` with `n` cells.
pub fn midpoint_interval(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let h = (b - a) / n as f64;
    ((0..n).map(|i| a + (i as f64 + 0.5) * h).collect(), vec![h; n])
}

/// Radial node family used for ball rules.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RadialRule {
    Gauss,
    Midpoint,
}

/// Point set with weights.
#[derive(Clone, Debug, Default)]
pub struct Rule {
    pub points: Vec<Vec3>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(&Vec3) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(p, w)| w * f(p)).sum()
    }

    pub fn rotated(&self, rot: &crate::Mat3) -> Rule {
        Rule {
            points: self.points.iter().map(|p| rot * p).collect(),
            weights: self.weights.clone(),
        }
    }

    /// Rule for the ball or sphere of radius `r`, scaling weights by
    /// `r^power` (`dim` for balls, `dim - 1` for spheres).
    pub fn scaled(&self, r: f64, power: i32) -> Rule {
        let s = r.powi(power);
        Rule {
            points: self.points.iter().map(|p| p * r).collect(),
            weights: self.weights.iter().map(|w| w * s).collect(),
        }
    }
}

/// Rotation taking the last coordinate axis `e_dim` to the unit vector
/// `axis`. Rules rotated this way have the equator `{<y, axis> = 0}` on
/// nodes (2D, with an even number of angles) or on a Gauss panel edge (3D).
pub fn align_pole(dim: usize, axis: &Vec3) -> crate::Mat3 {
    match dim {
        2 => {
            let phi = axis[1].atan2(axis[0]) - 0.5 * PI;
            let (s, c) = phi.sin_cos();
            crate::Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
        }
        3 => {
            let ez = Vec3::z();
            nalgebra::Rotation3::rotation_between(&ez, axis)
                .unwrap_or_else(|| nalgebra::Rotation3::from_axis_angle(&Vec3::x_axis(), PI))
                .into_inner()
        }
        _ => crate::Mat3::identity(),
    }
}

/// Unit sphere `∂B_1` in dimension `dim` with `n_ang` nodes along each
/// angle (the counting measure of `{-1, 1}` in 1D; trapezoid in the angle in
/// 2D starting at angle 0; Gauss in `cos θ` times trapezoid in `φ` in 3D).
pub fn sphere_rule(dim: usize, n_ang: usize) -> Rule {
    match dim {
        1 => Rule {
            points: vec![Vec3::new(-1.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0)],
            weights: vec![1.0, 1.0],
        },
        2 => {
            let w = 2.0 * PI / n_ang as f64;
            Rule {
                points: (0..n_ang)
                    .map(|k| {
                        let t = w * k as f64;
                        Vec3::new(t.cos(), t.sin(), 0.0)
                    })
                    .collect(),
                weights: vec![w; n_ang],
            }
        }
        3 => {
            // Gauss in z = cos(theta) on each hemisphere separately, so that
            // integrands with a kink on the equator are resolved
            let n_phi = n_ang.max(4);
            let n_z = n_ang.div_ceil(4).max(2);
            let (mut zs, mut wz) = gauss_interval(n_z, -1.0, 0.0);
            let (zu, wu) = gauss_interval(n_z, 0.0, 1.0);
            zs.extend(zu);
            wz.extend(wu);
            let wp = 2.0 * PI / n_phi as f64;
            let mut rule = Rule::default();
            for (z, wzi) in zs.iter().zip(&wz) {
                let s = (1.0 - z * z).sqrt();
                for k in 0..n_phi {
                    let p = wp * k as f64;
                    rule.points.push(Vec3::new(s * p.cos(), s * p.sin(), *z));
                    rule.weights.push(wzi * wp);
                }
            }
            rule
        }
        _ => panic!("dimension {dim} not supported"),
    }
}

/// Unit ball `B_1` as a product of a radial rule with `n_rad` nodes and the
/// sphere rule. In 1D the two half intervals are integrated separately.
pub fn ball_rule(dim: usize, n_rad: usize, n_ang: usize, radial: RadialRule) -> Rule {
    let (rs, wr) = match radial {
        RadialRule::Gauss => gauss_interval(n_rad, 0.0, 1.0),
        RadialRule::Midpoint => midpoint_interval(n_rad, 0.0, 1.0),
    };
    let sphere = sphere_rule(dim, n_ang);
    let mut rule = Rule::default();
    for (r, w) in rs.iter().zip(&wr) {
        let jac = r.powi(dim as i32 - 1);
        for (p, ws) in sphere.points.iter().zip(&sphere.weights) {
            rule.points.push(p * *r);
            rule.weights.push(w * ws * jac);
        }
    }
    rule
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_integrates_polynomials_exactly() {
        for n in 1..12 {
            let (x, w) = gauss_legendre(n);
            for p in 0..(2 * n) {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p as i32)).sum();
                let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "n={n} p={p} {q} {exact}");
            }
        }
    }

    #[test]
    fn ball_and_sphere_measures() {
        for dim in 1..=3 {
            let b = ball_rule(dim, 6, 16, RadialRule::Gauss);
            let s = sphere_rule(dim, 16);
            let vol: f64 = b.weights.iter().sum();
            let area: f64 = s.weights.iter().sum();
            assert!((vol - crate::unit_ball_volume(dim)).abs() < 1e-12, "{dim}");
            assert!((area - crate::unit_sphere_area(dim)).abs() < 1e-12, "{dim}");
        }
    }

    #[test]
    fn second_moments() {
        // ∫_{B_1} y_1^2 = omega_n / (n + 2)
        for dim in 1..=3 {
            let b = ball_rule(dim, 6, 16, RadialRule::Gauss);
            let m = b.integrate(|y| y[0] * y[0]);
            let exact = crate::unit_ball_volume(dim) / (dim as f64 + 2.0);
            assert!((m - exact).abs() < 1e-12, "{dim}: {m} {exact}");
        }
    }

    #[test]
    fn scaling() {
        let b = ball_rule(2, 6, 32, RadialRule::Gauss).scaled(0.5, 2);
        let m = b.integrate(|y| y.norm_squared());
        assert!((m - PI * 0.5f64.powi(4) / 2.0).abs() < 1e-12);
    }
}
