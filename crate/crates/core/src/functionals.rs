//! Radial functionals of a solution around a base point, evaluated in the
//! normalized frame `x = x0 + L y`:
//!
//! * `E(r) = ∫_{B_r} <C ∇u_L, ∇u_L> + 2 f_L u_L`
//! * `H(r) = ∫_{∂B_r} mu u_L^2`
//! * `Phi(r) = r^{-n-2} E(r) - 2 r^{-n-3} H(r)`
//!
//! where `u_L(y) = u(x0 + L y)`, `C` is the transformed coefficient matrix and
//! `f_L` the forcing ratio. When `A(x0) = I` and `f(x0) = 1` the frame is the
//! identity and these are the physical quantities.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{arr, Error, Result};
use crate::field::{make_frame, op_norm, CoefficientField, Frame};
use crate::grid::{Domain, NodalField};
use crate::profile::HomogeneousProfile;
use crate::quadrature::{align_pole, ball_rule, sphere_rule, RadialRule, Rule};
use crate::{Mat3, Vec3};

/// Resolution limits for ball and sphere rules.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct QuadratureSettings {
    pub min_ang: usize,
    pub max_ang: usize,
    pub max_ang_3d: usize,
    pub min_rad: usize,
    pub max_rad: usize,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        Self {
            min_ang: 64,
            max_ang: 4096,
            max_ang_3d: 64,
            min_rad: 8,
            max_rad: 512,
        }
    }
}

impl QuadratureSettings {
    /// `(n_rad, n_ang)` for radius `r` at frame spacing `h`: about one node
    /// per grid cell, never fewer than the minimum.
    pub fn resolution(&self, dim: usize, r: f64, h: f64) -> (usize, usize) {
        let n_rad = ((r / h).ceil() as usize).clamp(self.min_rad, self.max_rad);
        let cap = if dim == 3 { self.max_ang_3d } else { self.max_ang };
        let n_ang = ((2.0 * std::f64::consts::PI * r / h).ceil() as usize).clamp(self.min_ang, cap);
        (n_rad, 2 * n_ang.div_ceil(2))
    }
}

/// Evaluator of the radial functionals of one field around one base point.
#[derive(Clone, Debug)]
pub struct Functionals<'a> {
    u: &'a NodalField,
    frame: Frame,
    h_frame: f64,
    rotation: Mat3,
    pub settings: QuadratureSettings,
}

impl<'a> Functionals<'a> {
    pub fn new(u: &'a NodalField, cf: &CoefficientField, x0: &Vec3) -> Result<Self> {
        let frame = make_frame(cf, x0)?;
        let h_frame = frame.frame_spacing(u.grid().h_max());
        Ok(Self {
            u,
            frame,
            h_frame,
            rotation: Mat3::identity(),
            settings: QuadratureSettings::default(),
        })
    }

    /// Aligns the quadrature equator with the plane orthogonal to the
    /// physical direction `normal` (a free-boundary normal estimate).
    pub fn with_orientation(mut self, normal: &Vec3) -> Self {
        let dim = self.frame.dim();
        let n = self.frame.l() * normal;
        if n.norm() > 0.0 && dim > 1 {
            self.rotation = align_pole(dim, &(n / n.norm()));
        }
        self
    }

    pub fn with_settings(mut self, settings: QuadratureSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn dim(&self) -> usize {
        self.frame.dim()
    }

    pub fn h_frame(&self) -> f64 {
        self.h_frame
    }

    pub fn domain(&self) -> &Domain {
        self.u.grid().domain()
    }

    pub fn check_ball(&self, r: f64) -> Result<()> {
        if !(r > 0.0) || !self.frame.ball_fits(self.domain(), r) {
            return Err(Error::BallOutOfDomain { center: arr(self.frame.base()), radius: r });
        }
        Ok(())
    }

    /// `u_L(y)` and its frame gradient.
    pub fn sample(&self, y: &Vec3) -> (f64, Vec3) {
        let (v, g) = self.u.value_grad(&self.frame.to_physical(y));
        (v, self.frame.grad_to_frame(&g))
    }

    fn ball(&self, r: f64) -> Rule {
        self.ball_with(r, RadialRule::Gauss)
    }

    fn ball_with(&self, r: f64, radial: RadialRule) -> Rule {
        let (nr, na) = self.settings.resolution(self.dim(), r, self.h_frame);
        ball_rule(self.dim(), nr, na, radial).rotated(&self.rotation).scaled(r, self.dim() as i32)
    }

    fn sphere(&self, r: f64) -> Rule {
        let (_, na) = self.settings.resolution(self.dim(), r, self.h_frame);
        sphere_rule(self.dim(), na).rotated(&self.rotation).scaled(r, self.dim() as i32 - 1)
    }

    /// Unit-sphere rule resolving the field at scale `r`.
    fn unit_sphere(&self, r: f64) -> Rule {
        let (_, na) = self.settings.resolution(self.dim(), r, self.h_frame);
        sphere_rule(self.dim(), na).rotated(&self.rotation)
    }

    fn energy_density(&self, y: &Vec3) -> f64 {
        let (v, g) = self.sample(y);
        g.dot(&(self.frame.coefficient(y) * g)) + 2.0 * self.frame.forcing_ratio(y) * v
    }

    /// `E(r)`.
    pub fn energy(&self, r: f64) -> Result<f64> {
        self.check_ball(r)?;
        Ok(self.ball(r).integrate(|y| self.energy_density(y)))
    }

    /// `H(r)`.
    pub fn mass(&self, r: f64) -> Result<f64> {
        self.check_ball(r)?;
        Ok(self.sphere(r).integrate(|y| self.frame.mu_or_one(y) * self.sample(y).0.powi(2)))
    }

    /// `Phi(r)`.
    pub fn phi(&self, r: f64) -> Result<f64> {
        let n = self.dim() as i32;
        Ok(self.energy(r)? / r.powi(n + 2) - 2.0 * self.mass(r)? / r.powi(n + 3))
    }

    /// `r^{n+2} ∫_{B_1} <C(r y) ∇u_r, ∇u_r> + 2 f_L(r y) u_r` with
    /// `u_r(y) = u_L(r y) / r^2`; equal to `E(r)` by change of variables.
    pub fn rescaled_energy(&self, r: f64) -> Result<f64> {
        self.check_ball(r)?;
        let (nr, na) = self.settings.resolution(self.dim(), r, self.h_frame);
        let rule = ball_rule(self.dim(), nr, na, RadialRule::Gauss).rotated(&self.rotation);
        let inner = rule.integrate(|z| {
            let y = z * r;
            let (v, g) = self.sample(&y);
            let (vr, gr) = (v / (r * r), g / r);
            gr.dot(&(self.frame.coefficient(&y) * gr)) + 2.0 * self.frame.forcing_ratio(&y) * vr
        });
        Ok(r.powi(self.dim() as i32 + 2) * inner)
    }

    /// `∫_{B_r} |∇u_L|^2 + 2 u_L`: the energy with coefficients frozen at
    /// the base point.
    pub fn frozen_energy(&self, r: f64) -> Result<f64> {
        self.check_ball(r)?;
        Ok(self.ball(r).integrate(|y| {
            let (v, g) = self.sample(y);
            g.norm_squared() + 2.0 * v
        }))
    }

    /// `u_{L,r}(y) = u_L(r y) / r^2`.
    pub fn rescaled_value(&self, r: f64, y: &Vec3) -> f64 {
        self.sample(&(y * r)).0 / (r * r)
    }

    /// `∫_{∂B_1} (u_{L,r} - v)^2`.
    pub fn monneau(&self, r: f64, v: &HomogeneousProfile) -> Result<f64> {
        self.check_ball(r)?;
        Ok(self.unit_sphere(r).integrate(|y| (self.rescaled_value(r, y) - v.value(y)).powi(2)))
    }

    /// `∫_{∂B_1} |u_{L,r} - v|`.
    pub fn sphere_deviation(&self, r: f64, v: &HomogeneousProfile) -> Result<f64> {
        self.check_ball(r)?;
        Ok(self.unit_sphere(r).integrate(|y| (self.rescaled_value(r, y) - v.value(y)).abs()))
    }

    /// Terms of the first-variation formula for `E'(r)` with the vector
    /// field `G(y) = mu^{-1}(y) C(y) y`:
    /// `[2∫_{∂B_r} mu^{-1}<Cν,∇u>^2, (1/r)∫ <C∇u,∇u> div G,
    ///   -(2/r)∫ f <G,∇u>, -(2/r)∫ <C∇u, ∇^T G ∇u>, 2∫_{∂B_r} f u]`.
    pub fn energy_derivative_terms(&self, r: f64) -> Result<[f64; 5]> {
        self.check_ball(r)?;
        let dim = self.dim();
        let sphere = self.sphere(r);
        let ball = self.ball(r);
        let mut t = [0.0; 5];
        for (y, w) in sphere.points.iter().zip(&sphere.weights) {
            let (v, g) = self.sample(y);
            let nu = y / r;
            let c = self.frame.coefficient(y);
            let mu = self.frame.mu_or_one(y);
            t[0] += w * 2.0 / mu * (c * nu).dot(&g).powi(2);
            t[4] += w * 2.0 * self.frame.forcing_ratio(y) * v;
        }
        let delta = 1e-5 * r.max(1e-3);
        for (y, w) in ball.points.iter().zip(&ball.weights) {
            let (_, g) = self.sample(y);
            let c = self.frame.coefficient(y);
            let jac = jacobian(dim, delta, y, |z| self.drift_field(z));
            let div = (0..dim).map(|k| jac[(k, k)]).sum::<f64>();
            let cg = c * g;
            t[1] += w / r * cg.dot(&g) * div;
            t[2] += -w * 2.0 / r * self.frame.forcing_ratio(y) * self.drift_field(y).dot(&g);
            t[3] += -w * 2.0 / r * cg.dot(&(jac * g));
        }
        Ok(t)
    }

    /// `G(y) = mu^{-1}(y) C(y) y` (zero at the origin).
    pub fn drift_field(&self, y: &Vec3) -> Vec3 {
        if y.norm() == 0.0 {
            return Vec3::zeros();
        }
        self.frame.coefficient(y) * y / self.frame.mu_or_one(y)
    }

    /// `∫_{∂B_r} u <C ν, ∇u>`.
    pub fn mass_flux(&self, r: f64) -> Result<f64> {
        self.check_ball(r)?;
        Ok(self.sphere(r).integrate(|y| {
            let (v, g) = self.sample(y);
            v * (self.frame.coefficient(y) * (y / r)).dot(&g)
        }))
    }
}

/// `J[(i, j)] = ∂_i F_j` by central differences.
pub fn jacobian(dim: usize, delta: f64, y: &Vec3, f: impl Fn(&Vec3) -> Vec3) -> Mat3 {
    let mut j = Mat3::zeros();
    for i in 0..dim {
        let mut e = Vec3::zeros();
        e[i] = delta;
        let d = (f(&(y + e)) - f(&(y - e))) / (2.0 * delta);
        for k in 0..dim {
            j[(i, k)] = d[k];
        }
    }
    j
}

/// `E(r)` around `x0`.
pub fn ball_energy(u: &NodalField, cf: &CoefficientField, x0: &Vec3, r: f64) -> Result<f64> {
    Functionals::new(u, cf, x0)?.energy(r)
}

/// `H(r)` around `x0`.
pub fn sphere_weighted_mass(u: &NodalField, cf: &CoefficientField, x0: &Vec3, r: f64) -> Result<f64> {
    Functionals::new(u, cf, x0)?.mass(r)
}

/// `Phi(r)` around `x0`.
pub fn weiss_phi(u: &NodalField, cf: &CoefficientField, x0: &Vec3, r: f64) -> Result<f64> {
    Functionals::new(u, cf, x0)?.phi(r)
}

/// Geometric ladder `r_k = r_max 2^{-k/4}` down to `r_min` (ascending).
///
/// `r_max = min(1, cap, max_radius / 2)` with `max_radius` the largest frame
/// radius whose ball fits in the domain; `r_min = 6 h |L^{-1}|`.
pub fn radius_ladder(frame: &Frame, domain: &Domain, h: f64, cap: f64) -> Vec<f64> {
    let r_max = 1f64.min(cap).min(0.5 * frame.max_radius(domain));
    let r_min = 6.0 * h * op_norm(frame.l_inv(), frame.dim());
    let mut out = Vec::new();
    let mut k = 0;
    loop {
        let r = r_max * 2f64.powf(-(k as f64) / 4.0);
        if r < r_min * (1.0 - 1e-12) || k > 400 {
            break;
        }
        out.push(r);
        k += 1;
    }
    out.reverse();
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MonotonicityTrace {
    pub base: [f64; 3],
    pub frame: [[f64; 3]; 3],
    pub h: f64,
    pub h_frame: f64,
    pub radii: Vec<f64>,
    pub energy: Vec<f64>,
    pub mass: Vec<f64>,
    pub phi: Vec<f64>,
    pub monneau: Option<Vec<f64>>,
    /// `Psi_v(1)` of the profile used for the Monneau values.
    pub psi: Option<f64>,
}

impl MonotonicityTrace {
    /// Quadrature tolerance on `Phi` at each radius: `(h/r)^2 |Phi(r)|`.
    pub fn phi_tolerances(&self) -> Vec<f64> {
        self.radii
            .iter()
            .zip(&self.phi)
            .map(|(r, p)| (self.h_frame / r).powi(2) * p.abs())
            .collect()
    }
}

/// Evaluates `E`, `H`, `Phi` (and optionally the Monneau distance to `v`)
/// on increasing radii, in parallel over radii.
pub fn monotonicity_trace(fx: &Functionals<'_>, radii: &[f64], v: Option<&HomogeneousProfile>) -> Result<MonotonicityTrace> {
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidOption("radii must be strictly increasing".into()));
    }
    let n = fx.dim() as i32;
    let rows: Vec<(f64, f64, Option<f64>)> = radii
        .par_iter()
        .map(|&r| -> Result<_> {
            let e = fx.energy(r)?;
            let hm = fx.mass(r)?;
            let m = match v {
                Some(p) => Some(fx.monneau(r, p)?),
                None => None,
            };
            Ok((e, hm, m))
        })
        .collect::<Result<_>>()?;
    let l = fx.frame().l();
    let mut frame = [[0.0; 3]; 3];
    for (i, row) in frame.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            *x = l[(i, j)];
        }
    }
    Ok(MonotonicityTrace {
        base: arr(fx.frame().base()),
        frame,
        h: fx.u.grid().h_max(),
        h_frame: fx.h_frame(),
        radii: radii.to_vec(),
        phi: radii
            .iter()
            .zip(&rows)
            .map(|(r, (e, hm, _))| e / r.powi(n + 2) - 2.0 * hm / r.powi(n + 3))
            .collect(),
        energy: rows.iter().map(|x| x.0).collect(),
        mass: rows.iter().map(|x| x.1).collect(),
        monneau: v.map(|_| rows.iter().map(|x| x.2.unwrap_or(0.0)).collect()),
        psi: v.map(|p| crate::profile::psi(p, Default::default())),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DerivativeReport {
    pub radii: Vec<f64>,
    /// `|E' - Σ terms| / E` per radius.
    pub energy_ratio: Vec<f64>,
    /// `|H' - (n-1) H / r - 2 ∫ u <Cν,∇u>| / H` per radius.
    pub mass_ratio: Vec<f64>,
    pub c1: f64,
    pub c2: f64,
}

/// Finite-difference check of the first-variation formulas for `E'` and
/// `H'`. Derivatives are central differences at `r (1 ± 1e-3)` with the
/// quadrature resolution of `r` held fixed.
pub fn derivative_identities_check(fx: &Functionals<'_>, radii: &[f64]) -> Result<DerivativeReport> {
    if radii.len() < 16 {
        return Err(Error::TooFewRadii { needed: 16, got: radii.len() });
    }
    let dim = fx.dim();
    let rows: Vec<(f64, f64)> = radii
        .par_iter()
        .map(|&r| -> Result<(f64, f64)> {
            let mut fixed = fx.clone();
            let (nr, na) = fx.settings.resolution(dim, r, fx.h_frame());
            fixed.settings = QuadratureSettings {
                min_ang: na,
                max_ang: na,
                max_ang_3d: na,
                min_rad: nr,
                max_rad: nr,
            };
            let d = 1e-3 * r;
            let (rp, rm) = (r + d, r - d);
            fixed.check_ball(rp)?;
            let de = (fixed.energy(rp)? - fixed.energy(rm)?) / (2.0 * d);
            let dh = (fixed.mass(rp)? - fixed.mass(rm)?) / (2.0 * d);
            let e = fixed.energy(r)?;
            let h = fixed.mass(r)?;
            let terms = fixed.energy_derivative_terms(r)?;
            let eps = de - terms.iter().sum::<f64>();
            let hres = dh - (dim as f64 - 1.0) * h / r - 2.0 * fixed.mass_flux(r)?;
            let er = if e.abs() > 0.0 { eps.abs() / e.abs() } else { 0.0 };
            let hr = if h.abs() > 0.0 { hres.abs() / h.abs() } else { 0.0 };
            Ok((er, hr))
        })
        .collect::<Result<_>>()?;
    let energy_ratio: Vec<f64> = rows.iter().map(|x| x.0).collect();
    let mass_ratio: Vec<f64> = rows.iter().map(|x| x.1).collect();
    Ok(DerivativeReport {
        radii: radii.to_vec(),
        c1: energy_ratio.iter().cloned().fold(0.0, f64::max),
        c2: mass_ratio.iter().cloned().fold(0.0, f64::max),
        energy_ratio,
        mass_ratio,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PwReport {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

/// Both sides of the Rellich–Nečas/Payne–Weinberger identity on `B_r(0)`:
///
/// `∫_{∂B_r} <A∇w,∇w><F,ν> - 2<Aν,∇w><F,∇w>
///  = ∫_{B_r} <A∇w,∇w> div F - 2<F,∇w> div(A∇w) + ∇A : F⊗∇w⊗∇w
///            - 2<A∇w, ∇^T F ∇w>`.
///
/// `w` is sampled on a grid of spacing `h` and differentiated through the
/// cubic interpolant; `div(A∇w)` and the derivatives of `A` and `F` are
/// central differences with step `h`. Radial midpoint and angular trapezoid
/// rules with about one node per cell make the result second order in `h`.
pub fn payne_weinberger_check(
    cf: &CoefficientField,
    w: impl Fn(&Vec3) -> f64,
    f: impl Fn(&Vec3) -> Vec3 + Sync,
    r: f64,
    h: f64,
) -> Result<PwReport> {
    let dim = cf.dim();
    let half = r + 4.0 * h;
    let count = (2.0 * half / h).round() as usize + 1;
    let domain = Domain::centered_cube(dim, 0.5 * (count - 1) as f64 * h)?;
    let grid = crate::grid::Grid::new(domain, &vec![count; dim])?;
    let wf = NodalField::from_fn(grid, w);
    let grad = |x: &Vec3| wf.value_grad(x).1;
    let flux = |x: &Vec3| cf.matrix(x) * grad(x);
    let n_rad = ((r / h).ceil() as usize).max(1);
    let n_ang = ((2.0 * std::f64::consts::PI * r / h).ceil() as usize).max(64);
    let sphere = sphere_rule(dim, n_ang).scaled(r, dim as i32 - 1);
    let ball = ball_rule(dim, n_rad, n_ang, RadialRule::Midpoint).scaled(r, dim as i32);

    let lhs = sphere.integrate(|x| {
        let nu = x / r;
        let g = grad(x);
        let a = cf.matrix(x);
        (a * g).dot(&g) * f(x).dot(&nu) - 2.0 * (a * nu).dot(&g) * f(x).dot(&g)
    });
    // collected before summing so the result does not depend on the thread count
    let terms: Vec<f64> = ball
        .points
        .par_iter()
        .zip(&ball.weights)
        .map(|(x, wt)| {
            let g = grad(x);
            let a = cf.matrix(x);
            let fx = f(x);
            let jf = jacobian(dim, h, x, &f);
            let div_f: f64 = (0..dim).map(|k| jf[(k, k)]).sum();
            let div_flux: f64 = (0..dim)
                .map(|k| {
                    let mut e = Vec3::zeros();
                    e[k] = h;
                    (flux(&(x + e))[k] - flux(&(x - e))[k]) / (2.0 * h)
                })
                .sum();
            // ∇A : F⊗∇w⊗∇w = Σ_k F_k <∂_k A ∇w, ∇w>
            let grad_a: f64 = (0..dim)
                .map(|k| {
                    let mut e = Vec3::zeros();
                    e[k] = h;
                    let da = (cf.matrix(&(x + e)) - cf.matrix(&(x - e))) / (2.0 * h);
                    fx[k] * (da * g).dot(&g)
                })
                .sum();
            let ag = a * g;
            wt * (ag.dot(&g) * div_f - 2.0 * fx.dot(&g) * div_flux + grad_a - 2.0 * ag.dot(&(jf * g)))
        })
        .collect();
    let rhs: f64 = terms.iter().sum();
    Ok(PwReport { lhs, rhs, residual: (lhs - rhs).abs() })
}
