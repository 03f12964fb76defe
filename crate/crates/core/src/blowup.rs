//! Blow-ups at free-boundary points: rescaling, profile extraction,
//! regular/singular classification, decay of the rescalings towards the
//! profile and stratification of the free boundary.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{arr, Error, Result};
use crate::field::{op_norm, CoefficientField};
use crate::free_boundary::FreeBoundarySet;
use crate::functionals::{monotonicity_trace, radius_ladder, Functionals};
use crate::grid::{Domain, Grid, NodalField};
use crate::profile::{HomogeneousProfile, ProfileKind};
use crate::quadrature::{ball_rule, sphere_rule, RadialRule, Rule};
use crate::solver::ObstacleSolution;
use crate::{theta, Mat3, Vec3};

/// `u_{L,r}(y) = u(x0 + r L y) / r^2` sampled on a reference grid over
/// `[-2, 2]^n` (the ball `B_2` and its bounding box).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RescaledField {
    pub base: Vec3,
    pub radius: f64,
    pub frame: Mat3,
    pub field: NodalField,
    pub gradients: Vec<Vec3>,
    /// `|u_{L,r}(0)|`.
    pub value_at_origin: f64,
    /// `|∇u_{L,r}(0)|`.
    pub grad_at_origin: f64,
    /// `sup_{B_1} |u_{L,r}| + |∇u_{L,r}|`.
    pub c1_norm: f64,
    /// Most negative value in `B_2` (zero if none).
    pub min_value: f64,
}

impl RescaledField {
    /// Largest difference to `other` over reference nodes in `B_1`.
    pub fn sup_distance(&self, other: &RescaledField) -> f64 {
        let g = self.field.grid();
        let b = other.field.grid();
        if g != b {
            return (0..g.len())
                .filter(|&i| g.coord(i).norm() <= 1.0)
                .map(|i| (self.field.values()[i] - other.field.value(&g.coord(i))).abs())
                .fold(0.0, f64::max);
        }
        (0..g.len())
            .filter(|&i| g.coord(i).norm() <= 1.0)
            .map(|i| (self.field.values()[i] - other.field.values()[i]).abs())
            .fold(0.0, f64::max)
    }
}

/// Reference grids never exceed this many nodes per axis.
fn reference_cap(dim: usize) -> usize {
    match dim {
        1 => 1025,
        2 => 129,
        _ => 33,
    }
}

/// Reference grid over `[-2, 2]^n` with spacing `h_frame / r` (coarsened to
/// the per-axis cap).
fn reference_grid(dim: usize, h_frame: f64, r: f64) -> Result<Grid> {
    let cap = reference_cap(dim);
    let want = (4.0 * r / h_frame).ceil() as usize + 1;
    let n = want.clamp(9, cap);
    let n = if n.is_multiple_of(2) { n + 1 } else { n };
    Grid::new(Domain::centered_cube(dim, 2.0)?, &vec![n; dim])
}

/// Rescaling of `u` at `x0` in the frame of `cf`.
pub fn rescale(u: &NodalField, cf: &CoefficientField, x0: &Vec3, r: f64) -> Result<RescaledField> {
    let fx = Functionals::new(u, cf, x0)?;
    rescale_with(&fx, r)
}

pub(crate) fn rescale_with(fx: &Functionals<'_>, r: f64) -> Result<RescaledField> {
    let frame = fx.frame();
    if !(r > 0.0) || !frame.ball_fits(fx.domain(), 2.0 * r) {
        return Err(Error::FrameOverflow { center: arr(frame.base()), radius: r });
    }
    let dim = fx.dim();
    let grid = reference_grid(dim, fx.h_frame(), r)?;
    let samples: Vec<(f64, Vec3)> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let y = grid.coord(i);
            let (v, g) = fx.sample(&(y * r));
            (v / (r * r), g / r)
        })
        .collect();
    let (v0, g0) = fx.sample(&Vec3::zeros());
    let mut c1 = 0.0f64;
    let mut min_value = 0.0f64;
    for (i, (v, g)) in samples.iter().enumerate() {
        let n = grid.coord(i).norm();
        if n <= 1.0 {
            c1 = c1.max(v.abs() + g.norm());
        }
        if n <= 2.0 {
            min_value = min_value.min(*v);
        }
    }
    let values = samples.iter().map(|s| s.0).collect();
    Ok(RescaledField {
        base: *frame.base(),
        radius: r,
        frame: *frame.l(),
        field: NodalField::new(grid, values)?,
        gradients: samples.into_iter().map(|s| s.1).collect(),
        value_at_origin: v0.abs() / (r * r),
        grad_at_origin: g0.norm() / r,
        c1_norm: c1,
        min_value,
    })
}

/// Convergence diagnostics of a blow-up extraction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlowupFit {
    /// Profile in frame coordinates.
    pub profile: HomogeneousProfile,
    /// Radii used (descending).
    pub radii: Vec<f64>,
    /// `sup_{B_1} |u_{L,r_k} - u_{L,r_{k+1}}|` along the descending ladder.
    pub cauchy: Vec<f64>,
    /// Interpolation floor below which Cauchy differences are noise.
    pub cauchy_floor: f64,
    /// `L^2(B_1)` distance to the best half-space profile.
    pub residual_half_space: f64,
    /// `L^2(B_1)` distance to the best polynomial profile.
    pub residual_polynomial: f64,
    pub half_space_normal: Vec3,
    pub polynomial_matrix: Mat3,
    /// `|w(y) - w(y/2) 4|_{L^2(B_1)} / |w|_{L^2(B_1)}` for the averaged rescaling `w`.
    pub homogeneity_defect: f64,
    /// Largest `C^1(B_1)` norm over the ladder.
    pub c1_bound: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BlowupOptions {
    /// Upper cap of the radius ladder.
    pub ladder_cap: f64,
    /// Relative residual gap below which the profile is ambiguous.
    pub ambiguity: f64,
    /// Largest accepted relative homogeneity defect.
    pub homogeneity_tol: f64,
    /// Minimum number of ladder rungs.
    pub min_rungs: usize,
}

impl Default for BlowupOptions {
    fn default() -> Self {
        Self {
            ladder_cap: 0.5,
            ambiguity: 0.1,
            homogeneity_tol: 0.25,
            min_rungs: 6,
        }
    }
}

/// Fit rules on `B_1` / `∂B_1` for profile fitting.
fn fit_rules(dim: usize) -> (Rule, Rule) {
    let na = match dim {
        3 => 32,
        _ => 256,
    };
    (ball_rule(dim, 16, na, RadialRule::Gauss), sphere_rule(dim, na))
}

fn check_ladder(fx: &Functionals<'_>, ladder: &[f64], min_rungs: usize) -> Result<()> {
    if ladder.len() < min_rungs {
        return Err(Error::TooFewRadii { needed: min_rungs, got: ladder.len() });
    }
    if ladder.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidOption("radius ladder must be strictly increasing".into()));
    }
    let r_min = 6.0 * fx.h_frame();
    if ladder[0] < r_min * (1.0 - 1e-9) {
        return Err(Error::InvalidOption(format!(
            "smallest rung {} below the resolvable radius {r_min}",
            ladder[0]
        )));
    }
    Ok(())
}

/// Blow-up profile at `x0` from an ascending radius ladder.
///
/// The two smallest rescalings are averaged and compared against the best
/// half-space profile (direction maximizing `∫_{∂B_1} w <y,ν>_+^2`) and the
/// best polynomial (constrained least squares for `B`, then projection onto
/// `{B >= 0, Tr B = 1/2}`); the smaller `L^2(B_1)` residual wins.
pub fn extract_blowup(u: &NodalField, cf: &CoefficientField, x0: &Vec3, ladder: &[f64]) -> Result<BlowupFit> {
    let fx = Functionals::new(u, cf, x0)?;
    extract_with(&fx, ladder, &BlowupOptions::default())
}

pub fn extract_with(fx: &Functionals<'_>, ladder: &[f64], opts: &BlowupOptions) -> Result<BlowupFit> {
    check_ladder(fx, ladder, opts.min_rungs)?;
    let dim = fx.dim();
    let mut radii = ladder.to_vec();
    radii.reverse();
    let fields: Vec<RescaledField> = radii.par_iter().map(|&r| rescale_with(fx, r)).collect::<Result<_>>()?;
    let cauchy: Vec<f64> = fields.windows(2).map(|w| w[0].sup_distance(&w[1])).collect();
    let c1_bound = fields.iter().map(|f| f.c1_norm).fold(0.0, f64::max);
    let r_small = radii[radii.len() - 1];
    let scale = fields.last().map(|f| f.c1_norm).unwrap_or(1.0).max(1.0);
    let cauchy_floor = 0.25 * (fx.h_frame() / r_small).powi(2) * scale;
    let first = cauchy.first().copied().unwrap_or(0.0);
    let last = cauchy.last().copied().unwrap_or(0.0);
    if last > cauchy_floor && last > 2.0 * first.max(cauchy_floor) {
        return Err(Error::NoConvergence { first, last });
    }

    let (r1, r2) = (radii[radii.len() - 1], radii[radii.len() - 2]);
    let w = |y: &Vec3| 0.5 * (fx.rescaled_value(r1, y) + fx.rescaled_value(r2, y));
    let (ball, sphere) = fit_rules(dim);
    let wb: Vec<f64> = ball.points.par_iter().map(w).collect();
    let ws: Vec<f64> = sphere.points.par_iter().map(w).collect();
    let norm = l2(&ball, &wb, |_| 0.0);

    // homogeneity of the averaged rescaling at s = 1/2
    let half: Vec<f64> = ball.points.par_iter().map(|y| 4.0 * w(&(y * 0.5))).collect();
    let defect = if norm > 0.0 {
        ball.weights
            .iter()
            .zip(wb.iter().zip(&half))
            .map(|(q, (a, b))| q * (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
            / norm
    } else {
        0.0
    };

    let nu = fit_normal(dim, &sphere, &ws);
    let hs = HomogeneousProfile::half_space(dim, nu)?;
    let ra = l2(&ball, &wb, |y| hs.value(y));
    let b = fit_matrix(dim, &ball, &wb)?;
    let pb = HomogeneousProfile::polynomial(dim, b)?;
    let rb = l2(&ball, &wb, |y| pb.value(y));

    if norm <= 1e-12 {
        return Err(Error::AmbiguousProfile("rescalings vanish on B_1".into()));
    }
    if defect > opts.homogeneity_tol {
        return Err(Error::NotHomogeneous { defect });
    }
    if (ra - rb).abs() <= opts.ambiguity * ra.max(rb) {
        return Err(Error::AmbiguousProfile(format!(
            "half-space residual {ra:.3e} vs polynomial residual {rb:.3e}"
        )));
    }
    Ok(BlowupFit {
        profile: if ra < rb { hs } else { pb },
        radii,
        cauchy,
        cauchy_floor,
        residual_half_space: ra,
        residual_polynomial: rb,
        half_space_normal: nu,
        polynomial_matrix: b,
        homogeneity_defect: defect,
        c1_bound,
    })
}

fn l2(rule: &Rule, vals: &[f64], v: impl Fn(&Vec3) -> f64) -> f64 {
    rule.points
        .iter()
        .zip(&rule.weights)
        .zip(vals)
        .map(|((y, q), a)| q * (a - v(y)).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Unit `ν` maximizing `∫_{∂B_1} w <y,ν>_+^2`: scan of candidate directions
/// followed by a pattern search on the sphere.
fn fit_normal(dim: usize, sphere: &Rule, ws: &[f64]) -> Vec3 {
    let objective = |nu: &Vec3| -> f64 {
        sphere
            .points
            .iter()
            .zip(&sphere.weights)
            .zip(ws)
            .map(|((y, q), w)| q * w * y.dot(nu).max(0.0).powi(2))
            .sum()
    };
    let candidates: Vec<Vec3> = match dim {
        1 => vec![Vec3::new(1.0, 0.0, 0.0), Vec3::new(-1.0, 0.0, 0.0)],
        2 => (0..720)
            .map(|k| {
                let t = std::f64::consts::PI * k as f64 / 360.0;
                Vec3::new(t.cos(), t.sin(), 0.0)
            })
            .collect(),
        _ => fibonacci_sphere(2000),
    };
    let mut best = candidates[0];
    let mut best_val = f64::NEG_INFINITY;
    for c in &candidates {
        let v = objective(c);
        if v > best_val {
            best_val = v;
            best = *c;
        }
    }
    if dim == 1 {
        return best;
    }
    let mut step = 0.02;
    while step > 1e-10 {
        let mut improved = false;
        for t in tangent_basis(dim, &best) {
            for s in [-1.0, 1.0] {
                let mut cand = best + t * (s * step);
                cand /= cand.norm();
                let v = objective(&cand);
                if v > best_val {
                    best_val = v;
                    best = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    best
}

fn tangent_basis(dim: usize, n: &Vec3) -> Vec<Vec3> {
    if dim == 2 {
        return vec![Vec3::new(-n[1], n[0], 0.0)];
    }
    let a = if n[0].abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let t1 = n.cross(&a).normalize();
    vec![t1, n.cross(&t1)]
}

fn fibonacci_sphere(n: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|k| {
            let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
            let s = (1.0 - z * z).sqrt();
            let p = golden * k as f64;
            Vec3::new(s * p.cos(), s * p.sin(), z)
        })
        .collect()
}

/// Least squares `w ≈ <B y, y>` over `rule` subject to `Tr B = 1/2`,
/// projected onto positive semidefinite matrices with trace `1/2`.
fn fit_matrix(dim: usize, rule: &Rule, vals: &[f64]) -> Result<Mat3> {
    let pairs: Vec<(usize, usize)> = (0..dim).flat_map(|i| (i..dim).map(move |j| (i, j))).collect();
    let m = pairs.len();
    let basis = |y: &Vec3| -> Vec<f64> {
        pairs
            .iter()
            .map(|&(i, j)| if i == j { y[i] * y[i] } else { 2.0 * y[i] * y[j] })
            .collect()
    };
    let mut kkt = DMatrix::<f64>::zeros(m + 1, m + 1);
    let mut rhs = DVector::<f64>::zeros(m + 1);
    for ((y, q), w) in rule.points.iter().zip(&rule.weights).zip(vals) {
        let phi = basis(y);
        for a in 0..m {
            rhs[a] += q * phi[a] * w;
            for b in 0..m {
                kkt[(a, b)] += q * phi[a] * phi[b];
            }
        }
    }
    for (a, &(i, j)) in pairs.iter().enumerate() {
        if i == j {
            kkt[(a, m)] = 1.0;
            kkt[(m, a)] = 1.0;
        }
    }
    rhs[m] = 0.5;
    let sol = kkt
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::AmbiguousProfile("singular least-squares system".into()))?;
    let mut b = Mat3::zeros();
    for (a, &(i, j)) in pairs.iter().enumerate() {
        b[(i, j)] = sol[a];
        b[(j, i)] = sol[a];
    }
    Ok(project_psd_trace(dim, &b, 0.5))
}

/// Frobenius projection onto `{B >= 0, Tr B = t}`: eigenvalues projected
/// onto the scaled simplex.
fn project_psd_trace(dim: usize, b: &Mat3, t: f64) -> Mat3 {
    let block = DMatrix::from_fn(dim, dim, |i, j| b[(i, j)]);
    let eig = nalgebra::SymmetricEigen::new(block);
    let lam: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let proj = simplex_projection(&lam, t);
    let mut out = Mat3::zeros();
    for k in 0..dim {
        let v = eig.eigenvectors.column(k);
        for i in 0..dim {
            for j in 0..dim {
                out[(i, j)] += proj[k] * v[i] * v[j];
            }
        }
    }
    let out = (out + out.transpose()) * 0.5;
    // exact trace after rounding
    let tr = out.trace();
    if tr > 0.0 {
        out * (t / tr)
    } else {
        out
    }
}

fn simplex_projection(x: &[f64], t: f64) -> Vec<f64> {
    let mut s = x.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut shift = 0.0;
    for (k, v) in s.iter().enumerate() {
        acc += v;
        let cand = (acc - t) / (k as f64 + 1.0);
        if v - cand > 0.0 {
            shift = cand;
        }
    }
    x.iter().map(|v| (v - shift).max(0.0)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PointLabel {
    Regular,
    Singular,
}

/// Deviation of the rescalings from the profile along the ladder.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecayEstimate {
    /// Ascending radii.
    pub radii: Vec<f64>,
    /// `∫_{∂B_1} |u_{L,r} - v|`.
    pub deviation: Vec<f64>,
    /// Tolerance per radius, `0.1 |∂B_1| h / r`.
    pub tolerance: Vec<f64>,
    /// Deviation below tolerance at every radius.
    pub exact: bool,
    /// Fitted log-log slope (regular points, non-exact).
    pub slope: Option<f64>,
    /// Non-increasing as `r` decreases up to tolerance (singular points).
    pub monotone: Option<bool>,
    /// Positive slope (regular) or monotone sequence (singular).
    pub pass: bool,
}

/// Fits the decay of `r -> ∫_{∂B_1} |u_{L,r} - v|`.
///
/// Regular points must show a positive log-log slope over the radii where
/// the deviation exceeds its tolerance (errors with `InsufficientDecay`
/// otherwise); for singular points only monotonicity of the sequence is
/// checked.
pub fn estimate_decay_rate(fx: &Functionals<'_>, profile: &HomogeneousProfile, ladder: &[f64]) -> Result<DecayEstimate> {
    let out = decay_profile(fx, profile, ladder)?;
    match out.slope {
        Some(slope) if slope <= 0.0 => Err(Error::InsufficientDecay { slope }),
        _ => Ok(out),
    }
}

fn decay_profile(fx: &Functionals<'_>, profile: &HomogeneousProfile, ladder: &[f64]) -> Result<DecayEstimate> {
    let dim = fx.dim();
    let deviation: Vec<f64> = ladder
        .par_iter()
        .map(|&r| fx.sphere_deviation(r, profile))
        .collect::<Result<_>>()?;
    let area = crate::unit_sphere_area(dim);
    // the discrete free boundary is located to O(h), which shifts the
    // rescaled profile by O(h/r)
    let tolerance: Vec<f64> = ladder.iter().map(|r| 0.1 * area * fx.h_frame() / r).collect();
    let exact = deviation.iter().zip(&tolerance).all(|(d, t)| d <= t);
    let mut out = DecayEstimate {
        radii: ladder.to_vec(),
        deviation,
        tolerance,
        exact,
        slope: None,
        monotone: None,
        pass: true,
    };
    if exact {
        return Ok(out);
    }
    if profile.is_half_space() {
        let pts: Vec<(f64, f64)> = out
            .radii
            .iter()
            .zip(&out.deviation)
            .zip(&out.tolerance)
            .filter(|((_, d), t)| **d > **t)
            .map(|((r, d), _)| (r.ln(), d.ln()))
            .collect();
        // fewer than three resolved radii carry no slope information
        if pts.len() >= 3 {
            let slope = linear_fit(&pts).1;
            out.slope = Some(slope);
            out.pass = slope > 0.0;
        }
    } else {
        let ok = (1..out.radii.len()).all(|k| out.deviation[k - 1] <= out.deviation[k] + out.tolerance[k - 1]);
        out.monotone = Some(ok);
        out.pass = ok;
    }
    Ok(out)
}

/// Least squares `y = a + b x`; returns `(a, b)`.
pub fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - b * mx, b)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlowupReport {
    pub x0: Vec3,
    pub label: PointLabel,
    pub fit: BlowupFit,
    /// `Phi(0+)` from a linear fit of `Phi` against `r` over the ladder.
    pub phi0: f64,
    pub ladder: Vec<f64>,
    pub phi: Vec<f64>,
    /// Decay of the rescalings towards the profile (not enforced here; see
    /// `estimate_decay_rate`).
    pub decay: DecayEstimate,
    /// `n - rank(B)` for singular points.
    pub stratum: Option<usize>,
    pub rank_tol: f64,
    /// Frame matrix `L(x0)`.
    pub frame: Mat3,
}

impl BlowupReport {
    pub fn profile(&self) -> &HomogeneousProfile {
        &self.fit.profile
    }

    /// Free-boundary normal in physical coordinates (regular points).
    pub fn physical_normal(&self) -> Option<Vec3> {
        match self.fit.profile.kind() {
            ProfileKind::HalfSpace { normal } => {
                let l_inv = self.frame.try_inverse()?;
                let n = l_inv * normal;
                Some(n / n.norm())
            }
            ProfileKind::Polynomial { .. } => None,
        }
    }
}

/// Classifies `x0` on the free boundary of `u` as regular or singular.
///
/// `Phi(0+)` below `1.5 theta` means regular; the extracted profile kind must
/// agree (half-space for regular points) or the point is reported as
/// ambiguous.
pub fn classify_point(u: &NodalField, cf: &CoefficientField, x0: &Vec3, opts: &BlowupOptions) -> Result<BlowupReport> {
    let fx = Functionals::new(u, cf, x0)?;
    classify_with(fx, None, opts)
}

fn classify_with(fx: Functionals<'_>, normal: Option<Vec3>, opts: &BlowupOptions) -> Result<BlowupReport> {
    let dim = fx.dim();
    let h = fx.h_frame();
    let (v0, _) = fx.sample(&Vec3::zeros());
    let scale = fx.frame().base_forcing();
    if v0.abs() > 4.0 * h * h * scale.max(1.0) {
        return Err(Error::NotOnFreeBoundary { at: arr(fx.frame().base()), value: v0 });
    }
    let grid_h = h / op_norm(fx.frame().l_inv(), dim).max(1e-300);
    let ladder = radius_ladder(fx.frame(), fx.domain(), grid_h, opts.ladder_cap);
    check_ladder(&fx, &ladder, opts.min_rungs)?;
    let fit = extract_with(&fx, &ladder, opts)?;
    let fx = match (normal, fit.profile.kind()) {
        (Some(n), _) => fx.with_orientation(&n),
        (None, ProfileKind::HalfSpace { normal }) => {
            let phys = fx.frame().l_inv() * normal;
            fx.with_orientation(&phys)
        }
        _ => fx,
    };
    let trace = monotonicity_trace(&fx, &ladder, None)?;
    let pts: Vec<(f64, f64)> = trace.radii.iter().copied().zip(trace.phi.iter().copied()).collect();
    let phi0 = linear_fit(&pts).0;
    let label = if phi0 < 1.5 * theta(dim) {
        PointLabel::Regular
    } else {
        PointLabel::Singular
    };
    if (label == PointLabel::Regular) != fit.profile.is_half_space() {
        return Err(Error::AmbiguousProfile(format!(
            "Phi(0+) = {phi0:.5} disagrees with the extracted profile kind"
        )));
    }
    let decay = decay_profile(&fx, &fit.profile, &ladder)?;
    let rank_tol = 10.0 * h * h * 0.5;
    let stratum = fit.profile.rank(rank_tol).map(|k| dim - k);
    Ok(BlowupReport {
        x0: *fx.frame().base(),
        label,
        phi0,
        phi: trace.phi,
        ladder,
        decay,
        stratum,
        rank_tol,
        frame: *fx.frame().l(),
        fit,
    })
}

/// Classification of one point with the free-boundary normal estimate used
/// to orient the quadrature.
pub fn classify_point_oriented(
    u: &NodalField,
    cf: &CoefficientField,
    x0: &Vec3,
    normal: &Vec3,
    opts: &BlowupOptions,
) -> Result<BlowupReport> {
    let fx = Functionals::new(u, cf, x0)?;
    let n = if normal.norm() > 0.0 { Some(*normal) } else { None };
    classify_with(fx, n, opts)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum PointOutcome {
    Classified(Box<BlowupReport>),
    Ambiguous(String),
    /// Not classified (too close to the boundary, no convergence, ...).
    Skipped(String),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StratumPoint {
    /// Index into the free-boundary set.
    pub index: usize,
    pub x: Vec3,
    pub outcome: PointOutcome,
}

impl StratumPoint {
    pub fn label(&self) -> Option<PointLabel> {
        match &self.outcome {
            PointOutcome::Classified(r) => Some(r.label),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct StratifyOptions {
    /// Classify every `stride`-th free-boundary point.
    pub stride: usize,
    /// Offset of the subsample is `seed % stride`.
    pub seed: u64,
    /// Hölder exponent of the normal-field quotient.
    pub beta: f64,
    /// Neighborhood radius for openness and Hölder checks, in grid spacings.
    pub eta_cells: f64,
    pub blowup: BlowupOptions,
}

impl Default for StratifyOptions {
    fn default() -> Self {
        Self {
            stride: 8,
            seed: 0,
            beta: 0.5,
            eta_cells: 16.0,
            blowup: BlowupOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StratificationReport {
    pub points: Vec<StratumPoint>,
    pub regular: usize,
    /// `strata[d]` counts singular points with `n - rank(B) = d`.
    pub strata: Vec<usize>,
    pub ambiguous: usize,
    pub skipped: usize,
    /// `sup |L^{-1}(x) ν(x) - L^{-1}(z) ν(z)| / |x - z|^beta` over regular
    /// pairs closer than `eta`.
    pub holder_quotient: Option<f64>,
    pub beta: f64,
    pub eta: f64,
    /// Every classified neighbor within `eta` of a regular point is regular.
    pub regular_open: bool,
}

/// Classifies a subsample of the free boundary and partitions it into
/// regular points and singular strata.
pub fn stratify(
    sol: &ObstacleSolution,
    cf: &CoefficientField,
    fbs: &FreeBoundarySet,
    opts: &StratifyOptions,
) -> Result<StratificationReport> {
    if fbs.is_empty() {
        return Err(Error::EmptyInterior);
    }
    let stride = opts.stride.max(1);
    let offset = (opts.seed % stride as u64) as usize;
    let chosen: Vec<usize> = (offset.min(fbs.len() - 1)..fbs.len()).step_by(stride).collect();
    let u = sol.field();
    let points: Vec<StratumPoint> = chosen
        .par_iter()
        .map(|&i| {
            let p = &fbs.points[i];
            let outcome = match classify_point_oriented(u, cf, &p.x, &p.normal, &opts.blowup) {
                Ok(r) => PointOutcome::Classified(Box::new(r)),
                Err(Error::AmbiguousProfile(m)) => PointOutcome::Ambiguous(m),
                Err(e) => PointOutcome::Skipped(e.to_string()),
            };
            StratumPoint { index: i, x: p.x, outcome }
        })
        .collect();
    let dim = sol.grid().dim();
    let mut strata = vec![0; dim + 1];
    let (mut regular, mut ambiguous, mut skipped) = (0, 0, 0);
    for p in &points {
        match &p.outcome {
            PointOutcome::Classified(r) => match r.label {
                PointLabel::Regular => regular += 1,
                PointLabel::Singular => strata[r.stratum.unwrap_or(0)] += 1,
            },
            PointOutcome::Ambiguous(_) => ambiguous += 1,
            PointOutcome::Skipped(_) => skipped += 1,
        }
    }
    let eta = opts.eta_cells * sol.grid().h_max();
    let conormal = |r: &BlowupReport| -> Option<Vec3> {
        match r.profile().kind() {
            ProfileKind::HalfSpace { normal } => r.frame.try_inverse().map(|l| l * normal),
            _ => None,
        }
    };
    let mut quotient: Option<f64> = None;
    let mut open = true;
    for (a, pa) in points.iter().enumerate() {
        let PointOutcome::Classified(ra) = &pa.outcome else { continue };
        if ra.label != PointLabel::Regular {
            continue;
        }
        for (b, pb) in points.iter().enumerate() {
            if a == b {
                continue;
            }
            let d = (pa.x - pb.x).norm();
            if d > eta || d == 0.0 {
                continue;
            }
            match &pb.outcome {
                PointOutcome::Classified(rb) if rb.label == PointLabel::Regular => {
                    if let (Some(na), Some(nb)) = (conormal(ra), conormal(rb)) {
                        let q = (na - nb).norm() / d.powf(opts.beta);
                        quotient = Some(quotient.map_or(q, |m: f64| m.max(q)));
                    }
                }
                PointOutcome::Classified(_) => open = false,
                _ => {}
            }
        }
    }
    Ok(StratificationReport {
        points,
        regular,
        strata,
        ambiguous,
        skipped,
        holder_quotient: quotient,
        beta: opts.beta,
        eta,
        regular_open: open,
    })
}

/// Homogeneity defect `sup |v(s y) / s^2 - v(y)|` over sample points of `B_1`.
pub fn homogeneity_defect(profile: &HomogeneousProfile, s: f64) -> f64 {
    let (ball, _) = fit_rules(profile.dim());
    ball.points
        .iter()
        .map(|y| (profile.value(&(y * s)) / (s * s) - profile.value(y)).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{assemble, sample, solve_field, SolveOptions};
    use std::f64::consts::PI;

    fn nodal(dim: usize, n: usize, f: impl Fn(&Vec3) -> f64) -> NodalField {
        let g = Grid::new(Domain::centered_cube(dim, 1.0).unwrap(), &vec![n; dim]).unwrap();
        NodalField::from_fn(g, f)
    }

    fn half_space(x: &Vec3) -> f64 {
        0.5 * x[1].max(0.0).powi(2)
    }

    #[test]
    fn one_dimensional_rescaling_is_exact() {
        let u = nodal(1, 257, |x| 0.5 * x[0] * x[0]);
        let cf = CoefficientField::identity(1);
        for r in [0.05, 0.2, 0.4] {
            let rf = rescale(&u, &cf, &Vec3::zeros(), r).unwrap();
            let g = rf.field.grid();
            for i in 0..g.len() {
                let y = g.coord(i);
                assert!((rf.field.values()[i] - 0.5 * y[0] * y[0]).abs() < 1e-12);
            }
        }
        assert!(matches!(
            rescale(&u, &cf, &Vec3::zeros(), 0.6),
            Err(Error::FrameOverflow { .. })
        ));
    }

    #[test]
    fn half_space_rescaling_along_gamma() {
        let u = nodal(2, 129, half_space);
        let cf = CoefficientField::identity(2);
        let rf = rescale(&u, &cf, &Vec3::new(0.3, 0.0, 0.0), 0.1).unwrap();
        let g = rf.field.grid();
        let err = (0..g.len())
            .filter(|&i| g.coord(i).norm() <= 2.0)
            .map(|i| (rf.field.values()[i] - half_space(&g.coord(i))).abs())
            .fold(0.0, f64::max);
        assert!(err < 5e-3, "{err}");
        assert!(rf.value_at_origin < 1e-12);
    }

    #[test]
    fn exact_profiles_are_recovered() {
        let cf = CoefficientField::identity(2);
        let u = nodal(2, 257, half_space);
        let ladder = radius_ladder(&crate::make_frame(&cf, &Vec3::zeros()).unwrap(), u.grid().domain(), 2.0 / 256.0, 0.5);
        let fit = extract_blowup(&u, &cf, &Vec3::zeros(), &ladder).unwrap();
        match fit.profile.kind() {
            ProfileKind::HalfSpace { normal } => assert!((normal - Vec3::y()).norm() < 1e-6, "{normal}"),
            k => panic!("{k:?}"),
        }
        let u = nodal(2, 257, |x| 0.25 * x.norm_squared());
        let fit = extract_blowup(&u, &cf, &Vec3::zeros(), &ladder).unwrap();
        match fit.profile.kind() {
            ProfileKind::Polynomial { matrix } => assert!((matrix - Mat3::from_diagonal(&Vec3::new(0.25, 0.25, 0.0))).norm() < 1e-9),
            k => panic!("{k:?}"),
        }
        assert!(fit.residual_polynomial < 1e-9);
        assert!(extract_blowup(&u, &cf, &Vec3::zeros(), &ladder[..4]).is_err());
    }

    #[test]
    fn anisotropic_polynomial_matrix_and_stratum() {
        let cf = CoefficientField::identity(2);
        let b = Mat3::from_diagonal(&Vec3::new(0.4, 0.1, 0.0));
        let u = nodal(2, 257, |x| x.dot(&(b * x)));
        let rep = classify_point(&u, &cf, &Vec3::zeros(), &BlowupOptions::default()).unwrap();
        assert_eq!(rep.label, PointLabel::Singular);
        match rep.profile().kind() {
            ProfileKind::Polynomial { matrix } => {
                for i in 0..2 {
                    for j in 0..2 {
                        assert!((matrix[(i, j)] - b[(i, j)]).abs() < 1e-3);
                    }
                }
            }
            k => panic!("{k:?}"),
        }
        assert_eq!(rep.stratum, Some(0));
        assert!(rep.decay.exact);
        let b = Mat3::from_diagonal(&Vec3::new(0.5, 0.0, 0.0));
        let u = nodal(2, 257, |x| x.dot(&(b * x)));
        let rep = classify_point(&u, &cf, &Vec3::new(0.0, 0.2, 0.0), &BlowupOptions::default()).unwrap();
        assert_eq!(rep.stratum, Some(1));
    }

    #[test]
    fn energy_gap_classification() {
        let cf = CoefficientField::identity(2);
        let opts = BlowupOptions::default();
        let u = nodal(2, 257, half_space);
        let rep = classify_point(&u, &cf, &Vec3::new(0.1, 0.0, 0.0), &opts).unwrap();
        assert_eq!(rep.label, PointLabel::Regular);
        assert!((rep.phi0 - PI / 16.0).abs() < 0.02 * PI / 16.0, "{}", rep.phi0);
        assert!(rep.decay.exact);
        assert!(rep.physical_normal().is_some());
        let u = nodal(2, 257, |x| 0.25 * x.norm_squared());
        let rep = classify_point(&u, &cf, &Vec3::zeros(), &opts).unwrap();
        assert_eq!(rep.label, PointLabel::Singular);
        assert!((rep.phi0 - PI / 8.0).abs() < 0.02 * PI / 8.0, "{}", rep.phi0);
        assert!(matches!(
            classify_point(&u, &cf, &Vec3::new(0.5, 0.0, 0.0), &opts),
            Err(Error::NotOnFreeBoundary { .. })
        ));
    }

    #[test]
    fn one_dimensional_two_sided_contact_is_singular() {
        let cf = CoefficientField::identity(1);
        let u = nodal(1, 513, |x| 0.5 * x[0] * x[0]);
        let rep = classify_point(&u, &cf, &Vec3::zeros(), &BlowupOptions::default()).unwrap();
        assert_eq!(rep.label, PointLabel::Singular);
        assert!((rep.phi0 - 1.0 / 3.0).abs() < 1e-3, "{}", rep.phi0);
        let u = nodal(1, 513, |x| 0.5 * (x[0] - 0.1).max(0.0).powi(2));
        let rep = classify_point(&u, &cf, &Vec3::new(0.1, 0.0, 0.0), &BlowupOptions::default()).unwrap();
        assert_eq!(rep.label, PointLabel::Regular);
    }

    #[test]
    fn classification_invariant_under_scaling() {
        let cf = CoefficientField::anisotropic(2, 0.4).with_boundary(|_| 0.0);
        let scaled = cf.scaled(3.0);
        let b = Mat3::from_diagonal(&Vec3::new(0.4, 0.1, 0.0));
        let u = nodal(2, 129, |x| x.dot(&(b * x)));
        let a = classify_point(&u, &cf, &Vec3::zeros(), &BlowupOptions::default());
        let c = classify_point(&u, &scaled, &Vec3::zeros(), &BlowupOptions::default());
        match (a, c) {
            (Ok(a), Ok(c)) => {
                assert_eq!(a.label, c.label);
                assert_eq!(a.profile().is_half_space(), c.profile().is_half_space());
                assert!((a.phi0 - c.phi0).abs() < 1e-9);
            }
            (a, c) => assert_eq!(a.is_ok(), c.is_ok()),
        }
    }

    #[test]
    fn projection_onto_trace_simplex() {
        let p = simplex_projection(&[0.7, -0.1], 0.5);
        assert!((p[0] - 0.5).abs() < 1e-15 && p[1] == 0.0);
        let p = simplex_projection(&[0.3, 0.2], 0.5);
        assert!((p[0] - 0.3).abs() < 1e-15 && (p[1] - 0.2).abs() < 1e-15);
        let b = project_psd_trace(2, &Mat3::new(0.6, 0.0, 0.0, 0.0, -0.1, 0.0, 0.0, 0.0, 0.0), 0.5);
        assert!((b.trace() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn solved_half_space_stratifies_as_regular() {
        let cf = CoefficientField::identity(2).with_boundary(half_space);
        let g = Grid::new(Domain::centered_cube(2, 1.0).unwrap(), &[129, 129]).unwrap();
        let sol = solve_field(&cf, &g, &SolveOptions::default()).unwrap();
        let fbs = crate::free_boundary::extract(&sol).unwrap();
        let rep = stratify(&sol, &cf, &fbs, &StratifyOptions { stride: 8, ..Default::default() }).unwrap();
        assert!(rep.regular > 0);
        assert_eq!(rep.ambiguous, 0);
        assert!(rep.strata.iter().all(|c| *c == 0));
        assert!(rep.regular_open);
        assert!(rep.holder_quotient.unwrap() < 1e-3);
    }

    #[test]
    fn decay_of_exact_field_is_exact() {
        let cf = CoefficientField::identity(2);
        let de = assemble(&cf, &Grid::new(Domain::centered_cube(2, 1.0).unwrap(), &[65, 65]).unwrap()).unwrap();
        let sol = ObstacleSolution::from_values(&de, sample(de.grid(), |x| 0.25 * x.norm_squared()), 1e-10).unwrap();
        let fx = Functionals::new(sol.field(), &cf, &Vec3::zeros()).unwrap();
        let v = HomogeneousProfile::polynomial(2, Mat3::identity() * 0.25).unwrap();
        let ladder: Vec<f64> = (0..8).map(|k| 0.2 * 2f64.powf(k as f64 / 4.0)).collect();
        let d = estimate_decay_rate(&fx, &v, &ladder).unwrap();
        assert!(d.exact);
        assert!(d.deviation.iter().all(|x| *x < 1e-12));
    }

    #[test]
    fn extracted_profiles_are_homogeneous() {
        let p = HomogeneousProfile::half_space(2, Vec3::new(0.6, 0.8, 0.0)).unwrap();
        for s in [0.25, 0.5, 0.75] {
            assert!(homogeneity_defect(&p, s) < 1e-12);
        }
    }
}
