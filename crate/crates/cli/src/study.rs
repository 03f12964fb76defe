//! Refinement studies: a scenario rerun at `h, h/2, ...` with observed
//! orders, and the divergence-identity residuals under refinement.

use std::fmt;

use obslab_core::field::mu;
use obslab_core::functionals::payne_weinberger_check;
use obslab_core::io::{num, CsvTable, Provenance};
use obslab_core::{CoefficientField, Result, Vec3};
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::config::{Analysis, ScenarioConfig};
use crate::runner::compute_level;

/// Observed convergence order between two levels, or `Floor` when both
/// errors already sit at the solver/quadrature floor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Order {
    Value(f64),
    Floor,
}

impl Order {
    pub fn between(coarse: f64, fine: f64, floor: f64) -> Self {
        if coarse <= floor && fine <= floor {
            Order::Floor
        } else {
            Order::Value((coarse / fine).log2())
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Order::Value(v) => Some(*v),
            Order::Floor => None,
        }
    }
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Order::Value(v) => write!(f, "{v:.3}"),
            Order::Floor => f.write_str("floor"),
        }
    }
}

impl Serialize for Order {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Order::Value(v) => s.serialize_f64(*v),
            Order::Floor => s.serialize_str("floor"),
        }
    }
}

/// One identity check `(w, A, F, r)` evaluated at several spacings.
#[derive(Clone, Debug, Serialize)]
pub struct PwTriple {
    pub name: String,
    pub resolutions: Vec<usize>,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub residuals: Vec<f64>,
    pub orders: Vec<Order>,
    pub pass: bool,
}

impl PwTriple {
    pub fn min_order(&self) -> Option<f64> {
        self.orders.iter().filter_map(Order::value).reduce(f64::min)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PwStudy {
    pub triples: Vec<PwTriple>,
}

/// Residual below which the identity counts as exact (all integrands of
/// the linear case are constant).
pub const PW_FLOOR: f64 = 1e-10;
/// Smallest accepted observed order.
pub const PW_MIN_ORDER: f64 = 1.8;

/// The divergence identity on `B_r` for three fields:
///
/// * `linear`: `w = 2 x1 - x2`, `A = I`, `F = x / r`, `r = 0.7`;
/// * `quadratic`: `w = |x|^2`, `A = I`, `F = x`, `r = 1`;
/// * `lipschitz`: `w = x1 x2`, `A = (1 + 0.3|x|) I`, `F = A x / (r mu)`, `r = 0.5`.
///
/// Spacing `1 / N` for each `N` in `resolutions`. A triple passes when all
/// residuals are at the floor, or when every observed order is at least
/// [`PW_MIN_ORDER`].
pub fn pw_study(resolutions: &[usize]) -> Result<PwStudy> {
    let ident = CoefficientField::identity(2);
    let lip = CoefficientField::radial_lipschitz(2, 0.3, 2.0);
    type Case<'a> = (&'a str, &'a CoefficientField, f64);
    let cases: [Case; 3] = [("linear", &ident, 0.7), ("quadratic", &ident, 1.0), ("lipschitz", &lip, 0.5)];
    let jobs: Vec<(usize, usize)> = (0..cases.len()).flat_map(|c| resolutions.iter().map(move |&n| (c, n))).collect();
    let reports = jobs
        .par_iter()
        .map(|&(c, n)| {
            let (name, cf, r) = cases[c];
            let h = 1.0 / n as f64;
            match name {
                "linear" => payne_weinberger_check(cf, |x| 2.0 * x[0] - x[1], move |x| x / r, r, h),
                "quadratic" => payne_weinberger_check(cf, |x| x.norm_squared(), |x| *x, r, h),
                _ => payne_weinberger_check(
                    cf,
                    |x| x[0] * x[1],
                    move |x: &Vec3| cf.matrix(x) * x / (r * mu(cf, x).unwrap_or(1.0)),
                    r,
                    h,
                ),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let triples = cases
        .iter()
        .enumerate()
        .map(|(c, (name, _, _))| {
            let rs: Vec<_> = reports[c * resolutions.len()..(c + 1) * resolutions.len()].to_vec();
            let residuals: Vec<f64> = rs.iter().map(|p| p.residual).collect();
            let orders: Vec<Order> = residuals.windows(2).map(|w| Order::between(w[0], w[1], PW_FLOOR)).collect();
            let at_floor = residuals.iter().all(|r| *r <= PW_FLOOR);
            let pass = at_floor || orders.iter().all(|o| o.value().is_some_and(|v| v >= PW_MIN_ORDER));
            PwTriple {
                name: name.to_string(),
                resolutions: resolutions.to_vec(),
                lhs: rs.iter().map(|p| p.lhs).collect(),
                rhs: rs.iter().map(|p| p.rhs).collect(),
                residuals,
                orders,
                pass,
            }
        })
        .collect();
    Ok(PwStudy { triples })
}

#[derive(Clone, Debug, Serialize)]
pub struct LevelRow {
    pub resolution: usize,
    pub h: f64,
    pub error: Option<f64>,
    pub pde_residual: Option<f64>,
    pub gamma_points: usize,
    pub theta_min: Option<f64>,
    pub phi0: Option<f64>,
    pub c3: Option<f64>,
    pub c4: Option<f64>,
    pub c5: Option<f64>,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceTable {
    pub scenario: String,
    pub rows: Vec<LevelRow>,
    /// Observed orders of the L-infinity error between consecutive levels.
    pub error_orders: Vec<Order>,
    /// Errors at or below this are reported as `floor`.
    pub floor: f64,
}

impl ConvergenceTable {
    /// Smallest observed error order (`None` when all are at the floor or
    /// the scenario has no exact solution).
    pub fn min_order(&self) -> Option<f64> {
        self.error_orders.iter().filter_map(Order::value).reduce(f64::min)
    }

    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&[
            "resolution",
            "h",
            "error",
            "order",
            "pde_residual",
            "gamma_points",
            "theta_min",
            "phi0",
            "c3",
            "c4",
            "c5",
        ]);
        let opt = |v: Option<f64>| v.map_or(String::new(), num);
        for (k, r) in self.rows.iter().enumerate() {
            let order = if k == 0 { String::new() } else { self.error_orders.get(k - 1).map_or(String::new(), |o| o.to_string()) };
            t.push(vec![
                r.resolution.to_string(),
                num(r.h),
                opt(r.error),
                order,
                opt(r.pde_residual),
                r.gamma_points.to_string(),
                opt(r.theta_min),
                opt(r.phi0),
                opt(r.c3),
                opt(r.c4),
                opt(r.c5),
            ]);
        }
        t
    }

    pub fn render_csv(&self, prov: &Provenance) -> Result<String> {
        self.to_csv().render(prov)
    }
}

/// Error floor of a study: ten times the solver tolerance (the discrete
/// solution is only converged to that level).
pub fn error_floor(cfg: &ScenarioConfig) -> f64 {
    10.0 * cfg.solver.tol
}

/// Reruns `cfg` at `N0, 2 N0, ..., 2^(levels-1) N0` with `N0` the first
/// configured resolution. Stratification, derivative and identity checks
/// are not repeated.
pub fn refinement_study(cfg: &ScenarioConfig, levels: usize) -> anyhow::Result<ConvergenceTable> {
    anyhow::ensure!(levels >= 2, "a refinement study needs at least 2 levels (got {levels})");
    let n0 = cfg.resolutions[0];
    let analyses: Vec<Analysis> = cfg
        .analyses
        .iter()
        .copied()
        .filter(|a| !matches!(a, Analysis::Stratify | Analysis::Derivatives | Analysis::PwCheck))
        .collect();
    let mut rows = Vec::new();
    for k in 0..levels {
        let n = n0 << k;
        let t = std::time::Instant::now();
        let level = compute_level(cfg, n, &analyses)?;
        let traces = level.traces.as_ref().and_then(|t| t.as_ref().ok());
        let weiss = traces.and_then(|t| t.weiss.as_ref().ok());
        let monneau = traces.and_then(|t| t.monneau.as_ref()).and_then(|m| m.as_ref().ok());
        rows.push(LevelRow {
            resolution: n,
            h: level.grid.h_max(),
            error: level.error,
            pde_residual: level.residuals.as_ref().map(|r| r.pde_max),
            gamma_points: level.gamma.as_ref().map_or(0, |g| g.len()),
            theta_min: level.growth.as_ref().and_then(|g| g.as_ref().ok()).map(|g| g.theta_min),
            phi0: level.blowup.as_ref().and_then(|b| b.as_ref().ok()).map(|b| b.phi0),
            c3: weiss.map(|w| w.constants[0]),
            c4: weiss.map(|w| w.constants[1]),
            c5: monneau.map(|m| m.constants[0]),
            seconds: t.elapsed().as_secs_f64(),
        });
    }
    let floor = error_floor(cfg);
    let error_orders = rows
        .windows(2)
        .filter_map(|w| Some(Order::between(w[0].error?, w[1].error?, floor)))
        .collect();
    Ok(ConvergenceTable {
        scenario: cfg.name.clone(),
        rows,
        error_orders,
        floor,
    })
}
