//! Fitting of drift constants that make sampled quasi-monotone quantities
//! nondecreasing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::MonotonicityTrace;
use crate::quadrature::gauss_interval;

/// Largest admissible drift constant.
pub const DEFAULT_CAP: f64 = 1e3;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DriftVerdict {
    /// Fitted constants: `[C3, C4]` for Weiss, `[C5]` for Monneau.
    pub constants: Vec<f64>,
    /// Compensated quantity at each radius.
    pub compensated: Vec<f64>,
    /// Largest decrease of the compensated quantity beyond the tolerance
    /// (zero when the fit succeeded).
    pub residual_violation: f64,
    /// Largest decrease of the uncompensated quantity beyond the tolerance.
    pub raw_violation: f64,
    pub cap: f64,
    pub pass: bool,
    /// Right-hand-side check (Monneau only): largest r-weighted violation.
    pub rhs_violation: Option<f64>,
}

/// `∫_0^r e^{c t} t^{alpha - 1} dt`, computed as
/// `(1/alpha) ∫_0^{r^alpha} e^{c s^{1/alpha}} ds` (smooth integrand).
pub fn weighted_exp_integral(c: f64, alpha: f64, r: f64) -> f64 {
    let (s, w) = gauss_interval(24, 0.0, r.powf(alpha));
    s.iter().zip(&w).map(|(s, w)| w * (c * s.powf(1.0 / alpha)).exp()).sum::<f64>() / alpha
}

fn max_decrease(values: &[f64], tol: &[f64]) -> f64 {
    values
        .windows(2)
        .zip(tol)
        .map(|(w, t)| (w[0] - w[1] - t).max(0.0))
        .fold(0.0, f64::max)
}

/// Smallest `C4 >= 0` making `e^{C3 r} Phi + C4 I(C3, r)` nondecreasing up
/// to `tol` on consecutive samples (closed form).
fn min_c4(radii: &[f64], phi: &[f64], tol: &[f64], alpha: f64, c3: f64) -> f64 {
    let mut c4 = 0.0f64;
    for k in 0..radii.len() - 1 {
        let (a, b) = (radii[k], radii[k + 1]);
        let dg = (c3 * b).exp() * phi[k + 1] - (c3 * a).exp() * phi[k];
        let di = weighted_exp_integral(c3, alpha, b) - weighted_exp_integral(c3, alpha, a);
        let need = -tol[k] - dg;
        if need > 0.0 {
            c4 = c4.max(need / di);
        }
    }
    c4
}

/// Smallest `C3 + C4` with `C3, C4 >= 0` such that
/// `r -> e^{C3 r} Phi(r) + C4 ∫_0^r e^{C3 t} t^{alpha-1} dt` is nondecreasing
/// across the samples, ignoring decreases below `tol[k]` between samples
/// `k` and `k + 1`.
///
/// `C4` is explicit for fixed `C3`; `C3` is scanned over `{0}` and a
/// log-spaced grid on `[1e-3, cap]`, then refined by golden-section search.
pub fn fit_weiss(radii: &[f64], phi: &[f64], tol: &[f64], alpha: f64, cap: f64) -> Result<DriftVerdict> {
    if radii.len() < 8 {
        return Err(Error::TooFewRadii { needed: 8, got: radii.len() });
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidOption(format!("alpha must lie in (0, 1] (got {alpha})")));
    }
    let cost = |c3: f64| c3 + min_c4(radii, phi, tol, alpha, c3);
    let mut grid = vec![0.0];
    let steps = 120;
    for i in 0..=steps {
        grid.push(1e-3 * (cap / 1e-3).powf(i as f64 / steps as f64));
    }
    let costs: Vec<f64> = grid.iter().map(|c| cost(*c)).collect();
    let (mut best_i, mut best) = (0, costs[0]);
    for (i, c) in costs.iter().enumerate() {
        if *c < best - 1e-15 {
            best = *c;
            best_i = i;
        }
    }
    let mut c3 = grid[best_i];
    if best > 0.0 && best_i > 0 {
        let lo = grid[best_i - 1];
        let hi = grid[(best_i + 1).min(grid.len() - 1)];
        let (mut a, mut b) = (lo, hi);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let mut x1 = b - g * (b - a);
        let mut x2 = a + g * (b - a);
        let (mut f1, mut f2) = (cost(x1), cost(x2));
        for _ in 0..60 {
            if f1 <= f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - g * (b - a);
                f1 = cost(x1);
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + g * (b - a);
                f2 = cost(x2);
            }
        }
        let cand = 0.5 * (a + b);
        if cost(cand) < best {
            c3 = cand;
        }
    }
    let c4 = min_c4(radii, phi, tol, alpha, c3);
    if c3 > cap || c4 > cap {
        return Err(Error::NoFiniteConstants { cap });
    }
    let compensated: Vec<f64> = radii
        .iter()
        .zip(phi)
        .map(|(r, p)| (c3 * r).exp() * p + c4 * weighted_exp_integral(c3, alpha, *r))
        .collect();
    let residual = max_decrease(&compensated, tol);
    Ok(DriftVerdict {
        constants: vec![c3, c4],
        raw_violation: max_decrease(phi, tol),
        residual_violation: residual,
        compensated,
        cap,
        pass: residual <= 1e-12 * phi.iter().fold(1.0f64, |m, p| m.max(p.abs())),
        rhs_violation: None,
    })
}

/// Weiss drift test on a trace with the quadrature tolerance
/// `(h/r)^2 |Phi(r)|`.
pub fn weiss_drift_test(trace: &MonotonicityTrace, alpha: f64) -> Result<DriftVerdict> {
    let tol = pair_tolerances(&trace.phi_tolerances());
    fit_weiss(&trace.radii, &trace.phi, &tol, alpha, DEFAULT_CAP)
}

fn pair_tolerances(per_radius: &[f64]) -> Vec<f64> {
    per_radius.windows(2).map(|w| w[0].max(w[1])).collect()
}

/// Monneau variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MonneauVariant {
    /// `M(r) + C5 (r + r^alpha)`.
    Standard,
    /// `e^r M(r) + C5 ∫_0^r e^t (t^{alpha-1} + 1) dt`.
    Exponential,
}

/// Smallest `C5 >= 0` making the Monneau quantity nondecreasing up to `tol`.
pub fn fit_monneau(
    radii: &[f64],
    m: &[f64],
    tol: &[f64],
    alpha: f64,
    variant: MonneauVariant,
    cap: f64,
) -> Result<DriftVerdict> {
    if radii.len() < 8 {
        return Err(Error::TooFewRadii { needed: 8, got: radii.len() });
    }
    let (base, comp): (Vec<f64>, Vec<f64>) = match variant {
        MonneauVariant::Standard => (m.to_vec(), radii.iter().map(|r| r + r.powf(alpha)).collect()),
        MonneauVariant::Exponential => (
            radii.iter().zip(m).map(|(r, m)| r.exp() * m).collect(),
            radii
                .iter()
                .map(|r| weighted_exp_integral(1.0, alpha, *r) + r.exp() - 1.0)
                .collect(),
        ),
    };
    let mut c5 = 0.0f64;
    for k in 0..radii.len() - 1 {
        let need = -tol[k] - (base[k + 1] - base[k]);
        if need > 0.0 {
            c5 = c5.max(need / (comp[k + 1] - comp[k]));
        }
    }
    if c5 > cap {
        return Err(Error::NoFiniteConstants { cap });
    }
    let compensated: Vec<f64> = base.iter().zip(&comp).map(|(b, c)| b + c5 * c).collect();
    let residual = max_decrease(&compensated, tol);
    Ok(DriftVerdict {
        constants: vec![c5],
        raw_violation: max_decrease(&base, tol),
        residual_violation: residual,
        compensated,
        cap,
        pass: residual <= 1e-12 * base.iter().fold(1.0f64, |a, b| a.max(b.abs())),
        rhs_violation: None,
    })
}

/// Monneau drift test on a trace carrying Monneau values. The tolerance on
/// `M` is `(h/r)^2 max(M(r), floor)` with `floor` the quadrature floor of
/// the squared distance; also reports the largest r-weighted violation of
/// `dM/dr >= 2 (Phi - Psi_v) / r - C5 alpha r^{alpha - 1}` between samples.
pub fn monneau_drift_test(trace: &MonotonicityTrace, alpha: f64, variant: MonneauVariant) -> Result<DriftVerdict> {
    let m = trace
        .monneau
        .as_ref()
        .ok_or_else(|| Error::InvalidOption("trace carries no Monneau values".into()))?;
    let psi = trace.psi.unwrap_or(0.0);
    let per: Vec<f64> = trace
        .radii
        .iter()
        .zip(m)
        .map(|(r, v)| (trace.h_frame / r).powi(2) * v.abs() + 1e-14)
        .collect();
    let tol = pair_tolerances(&per);
    let mut verdict = fit_monneau(&trace.radii, m, &tol, alpha, variant, DEFAULT_CAP)?;
    let c5 = verdict.constants[0];
    let mut worst = 0.0f64;
    for k in 0..trace.radii.len() - 1 {
        let (a, b) = (trace.radii[k], trace.radii[k + 1]);
        let mid = (a * b).sqrt();
        let dm = (m[k + 1] - m[k]) / (b - a);
        let phi = 0.5 * (trace.phi[k] + trace.phi[k + 1]);
        let rhs = 2.0 * (phi - psi) / mid - c5 * alpha * mid.powf(alpha - 1.0);
        worst = worst.max((rhs - dm).max(0.0) * mid);
    }
    verdict.rhs_violation = Some(worst);
    Ok(verdict)
}

/// Relative stability of two fitted constants: `|a - b| <= rel max(|a|,|b|)`
/// or both at most `floor`.
pub fn stable(a: f64, b: f64, rel: f64, floor: f64) -> bool {
    (a.abs() <= floor && b.abs() <= floor) || (a - b).abs() <= rel * a.abs().max(b.abs())
}
