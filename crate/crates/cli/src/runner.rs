//! Runs the analyses of a scenario at one resolution and writes artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use obslab_core::blowup::{
    classify_point, classify_point_oriented, homogeneity_defect, stratify, BlowupOptions, BlowupReport, PointLabel,
    PointOutcome, StratificationReport, StratifyOptions,
};
use obslab_core::drift::{monneau_drift_test, weiss_drift_test, DriftVerdict, MonneauVariant};
use obslab_core::free_boundary::{extract, quadratic_growth_check, FreeBoundarySet, GrowthReport};
use obslab_core::functionals::{
    derivative_identities_check, monotonicity_trace, radius_ladder, DerivativeReport, Functionals, MonotonicityTrace,
};
use obslab_core::io::{num, write_json, write_solution, CsvTable, Provenance};
use obslab_core::profile::ProfileKind;
use obslab_core::solver::{pde_residual, solve_field, ResidualReport, SolveOptions};
use obslab_core::{CoefficientField, Error, Grid, ObstacleSolution, Vec3};
use serde::Serialize;

use crate::config::{to_mat3, to_vec3, Analysis, ScenarioConfig};
use crate::study::{pw_study, PwStudy};
use crate::svg;

/// Exit status when every verdict passes.
pub const EXIT_PASS: i32 = 0;
/// Exit status when a verdict fails or an analysis errors.
pub const EXIT_FAIL: i32 = 1;
/// Exit status for configuration errors.
pub const EXIT_CONFIG: i32 = 2;

/// Point where the radial functionals and the blow-up are evaluated.
#[derive(Clone, Debug, Serialize)]
pub struct BasePoint {
    pub x: Vec3,
    /// Free-boundary normal estimate (zero when unknown).
    pub normal: Vec3,
    /// `"config"` or `"free-boundary"`.
    pub source: &'static str,
}

/// Weiss trace (with Monneau values when a polynomial profile is known) and
/// the fitted drift verdicts.
#[derive(Clone, Debug)]
pub struct Traces {
    pub trace: MonotonicityTrace,
    pub weiss: Result<DriftVerdict, String>,
    pub monneau: Option<Result<DriftVerdict, String>>,
}

/// In-memory results of one scenario at one resolution.
pub struct Level {
    pub n: usize,
    pub grid: Grid,
    pub field: CoefficientField,
    pub solution: ObstacleSolution,
    /// `max |u - g|` over nodes when the boundary data is exact.
    pub error: Option<f64>,
    pub residuals: Option<ResidualReport>,
    pub gamma: Result<FreeBoundarySet, String>,
    pub base: Option<BasePoint>,
    pub growth: Option<Result<GrowthReport, String>>,
    pub blowup: Option<Result<BlowupReport, String>>,
    pub traces: Option<Result<Traces, String>>,
    pub stratify: Option<Result<StratificationReport, String>>,
    pub derivatives: Option<Result<DerivativeReport, String>>,
    pub pw: Option<Result<PwStudy, String>>,
    pub timings: BTreeMap<&'static str, f64>,
}

fn timed<T>(timings: &mut BTreeMap<&'static str, f64>, key: &'static str, f: impl FnOnce() -> T) -> T {
    let t = Instant::now();
    let out = f();
    *timings.entry(key).or_insert(0.0) += t.elapsed().as_secs_f64();
    out
}

fn solve_options(cfg: &ScenarioConfig) -> SolveOptions {
    SolveOptions {
        tol: cfg.solver.tol,
        max_iter: cfg.solver.max_iter,
        omega: cfg.solver.omega,
        ..Default::default()
    }
}

pub fn blowup_options(cfg: &ScenarioConfig) -> BlowupOptions {
    BlowupOptions {
        ladder_cap: cfg.analysis.ladder_cap,
        ..Default::default()
    }
}

/// Geometric radii from `4h` to `r_max` (8 samples).
pub fn growth_radii(h: f64, r_max: f64) -> Vec<f64> {
    let lo = 4.0 * h;
    if lo >= r_max {
        return vec![r_max];
    }
    (0..8).map(|k| lo * (r_max / lo).powf(k as f64 / 7.0)).collect()
}

fn base_point(cfg: &ScenarioConfig, grid: &Grid, gamma: &Result<FreeBoundarySet, String>) -> Option<BasePoint> {
    if let Some(p) = &cfg.analysis.base_point {
        return Some(BasePoint { x: to_vec3(p), normal: Vec3::zeros(), source: "config" });
    }
    let fbs = gamma.as_ref().ok()?;
    let c = grid.domain().center();
    // first minimizer in index order, so ties resolve deterministically
    let mut best: Option<(f64, usize)> = None;
    for (i, p) in fbs.points.iter().enumerate() {
        let d = (p.x - c).norm();
        if best.is_none_or(|(b, _)| d < b) {
            best = Some((d, i));
        }
    }
    best.map(|(_, i)| BasePoint {
        x: fbs.points[i].x,
        normal: fbs.points[i].normal,
        source: "free-boundary",
    })
}

fn err_string(e: Error) -> String {
    e.to_string()
}

/// Solves the scenario at resolution `n` and runs the analyses listed in
/// `analyses` (in dependency order).
pub fn compute_level(cfg: &ScenarioConfig, n: usize, analyses: &[Analysis]) -> anyhow::Result<Level> {
    let has = |a: Analysis| analyses.contains(&a);
    let mut timings = BTreeMap::new();
    let grid = cfg.grid_at(n).map_err(anyhow::Error::msg)?;
    let field = cfg.field();
    let h = grid.h_max();
    let solution = timed(&mut timings, "solve", || solve_field(&field, &grid, &solve_options(cfg)))
        .with_context(|| format!("solving {} at resolution {n}", cfg.name))?;
    let error = cfg.exact.then(|| {
        (0..grid.len())
            .map(|i| (solution.values()[i] - field.boundary(&grid.coord(i))).abs())
            .fold(0.0, f64::max)
    });
    let residuals = if has(Analysis::Residuals) {
        Some(timed(&mut timings, "residuals", || pde_residual(&solution, &field))?)
    } else {
        None
    };
    let gamma = timed(&mut timings, "free-boundary", || extract(&solution).map_err(err_string));
    let base = base_point(cfg, &grid, &gamma);
    let growth = has(Analysis::Growth).then(|| {
        timed(&mut timings, "growth", || {
            let fbs = gamma.as_ref().map_err(Clone::clone)?;
            let radii = growth_radii(h, cfg.analysis.growth_max_radius);
            quadratic_growth_check(&solution, fbs, &radii, cfg.analysis.growth_floor).map_err(err_string)
        })
    });
    let bopts = blowup_options(cfg);
    let u = solution.field();
    let blowup = has(Analysis::Blowup).then(|| {
        timed(&mut timings, "blowup", || {
            let b = base.as_ref().ok_or("no base point: the free boundary is empty")?;
            if b.normal.norm() > 0.0 {
                classify_point_oriented(u, &field, &b.x, &b.normal, &bopts).map_err(err_string)
            } else {
                classify_point(u, &field, &b.x, &bopts).map_err(err_string)
            }
        })
    });
    let traces = (has(Analysis::Weiss) || has(Analysis::Monneau)).then(|| {
        timed(&mut timings, "traces", || -> Result<Traces, String> {
            let b = base.as_ref().ok_or("no base point: the free boundary is empty")?;
            let report = blowup.as_ref().and_then(|r| r.as_ref().ok());
            let normal = report.and_then(|r| r.physical_normal()).unwrap_or(b.normal);
            let mut fx = Functionals::new(u, &field, &b.x).map_err(err_string)?;
            if normal.norm() > 0.0 {
                fx = fx.with_orientation(&normal);
            }
            let ladder = radius_ladder(fx.frame(), fx.domain(), h, cfg.analysis.ladder_cap);
            let profile = report.map(|r| r.profile()).filter(|p| !p.is_half_space());
            let monneau_profile = if has(Analysis::Monneau) { profile } else { None };
            let trace = monotonicity_trace(&fx, &ladder, monneau_profile).map_err(err_string)?;
            let weiss = weiss_drift_test(&trace, cfg.analysis.alpha).map_err(err_string);
            let monneau = has(Analysis::Monneau).then(|| {
                if trace.monneau.is_none() {
                    return Err(match blowup.as_ref() {
                        Some(Err(e)) => format!("no blow-up profile: {e}"),
                        _ => Error::NotSingularPoint.to_string(),
                    });
                }
                monneau_drift_test(&trace, cfg.analysis.alpha, MonneauVariant::Standard).map_err(err_string)
            });
            Ok(Traces { trace, weiss, monneau })
        })
    });
    let stratify = has(Analysis::Stratify).then(|| {
        timed(&mut timings, "stratify", || {
            let fbs = gamma.as_ref().map_err(Clone::clone)?;
            let opts = StratifyOptions {
                stride: cfg.analysis.stride,
                seed: cfg.seed,
                blowup: bopts,
                ..Default::default()
            };
            stratify(&solution, &field, fbs, &opts).map_err(err_string)
        })
    });
    let derivatives = has(Analysis::Derivatives).then(|| {
        timed(&mut timings, "derivatives", || {
            let b = base.as_ref().ok_or("no base point: the free boundary is empty")?;
            let mut fx = Functionals::new(u, &field, &b.x).map_err(err_string)?;
            if b.normal.norm() > 0.0 {
                fx = fx.with_orientation(&b.normal);
            }
            let ladder = radius_ladder(fx.frame(), fx.domain(), h, cfg.analysis.ladder_cap);
            let top = 0.98 * ladder.last().copied().ok_or("empty radius ladder")?;
            let lo = (0.4 * top).max(ladder[0]);
            let radii: Vec<f64> = (0..16).map(|k| lo + (top - lo) * k as f64 / 15.0).collect();
            derivative_identities_check(&fx, &radii).map_err(err_string)
        })
    });
    let pw = has(Analysis::PwCheck)
        .then(|| timed(&mut timings, "pw-check", || pw_study(&cfg.resolutions).map_err(err_string)));
    Ok(Level {
        n,
        grid,
        field,
        solution,
        error,
        residuals,
        gamma,
        base,
        growth,
        blowup,
        traces,
        stratify,
        derivatives,
        pw,
        timings,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub analysis: String,
    pub pass: bool,
    pub detail: String,
    pub metrics: BTreeMap<String, f64>,
}

impl Verdict {
    fn new(a: Analysis) -> Self {
        Self {
            analysis: a.name().into(),
            pass: true,
            detail: String::new(),
            metrics: BTreeMap::new(),
        }
    }

    fn metric(&mut self, k: &str, v: f64) {
        self.metrics.insert(k.into(), v);
    }

    /// Records a failed check; the first failure becomes the detail.
    fn fail(&mut self, why: impl Into<String>) {
        let why = why.into();
        if self.pass {
            self.detail = why;
        } else {
            self.detail = format!("{}; {why}", self.detail);
        }
        self.pass = false;
    }

    fn error(a: Analysis, e: &str) -> Self {
        let mut v = Self::new(a);
        v.fail(e.to_string());
        v
    }
}

fn within(actual: f64, expected: f64, rel: f64) -> bool {
    (actual - expected).abs() <= rel * expected.abs()
}

/// Pass/fail verdicts for the configured analyses of a computed level.
pub fn verdicts(cfg: &ScenarioConfig, level: &Level) -> Vec<Verdict> {
    let mut out = Vec::new();
    let a = &cfg.analysis;
    for &an in &cfg.analyses {
        let v = match an {
            Analysis::Solve => {
                let mut v = Verdict::new(an);
                let s = &level.solution;
                v.metric("iterations", s.iterations as f64);
                v.metric("warm_iterations", s.warm_iterations as f64);
                v.metric("projected_residual", s.projected_residual);
                v.metric("energy", s.energy);
                if !s.converged {
                    v.fail("solver did not converge");
                }
                v
            }
            Analysis::Residuals => {
                let mut v = Verdict::new(an);
                if let Some(r) = &level.residuals {
                    v.metric("pde_max", r.pde_max);
                    v.metric("coincidence_max", r.coincidence_max);
                    if r.pde_max > a.residual_tol {
                        v.fail(format!("PDE residual {:.3e} above {:.1e}", r.pde_max, a.residual_tol));
                    }
                    if r.coincidence_max > level.solution.u_pos_threshold {
                        v.fail(format!("coincidence residual {:.3e}", r.coincidence_max));
                    }
                }
                if let Some(e) = level.error {
                    v.metric("linf_error", e);
                    if e > a.error_tol {
                        v.fail(format!("L-infinity error {e:.3e} above {:.1e}", a.error_tol));
                    }
                }
                v
            }
            Analysis::Growth => match &level.growth {
                Some(Ok(g)) => {
                    let mut v = Verdict::new(an);
                    v.metric("theta_min", g.theta_min);
                    v.metric("theta_max", g.theta_max);
                    v.metric("radius_spread", g.radius_spread);
                    v.metric("tested_points", g.tested.len() as f64);
                    if !g.pass {
                        v.fail(format!("minimum growth ratio {:.4} below {}", g.theta_min, g.floor));
                    }
                    if let Some(e) = cfg.expect.growth_ratio {
                        if !(within(g.theta_min, e, 0.05) && within(g.theta_max, e, 0.05)) {
                            v.fail(format!("growth ratios [{:.4}, {:.4}] not within 5% of {e}", g.theta_min, g.theta_max));
                        }
                        if g.radius_spread > 0.1 {
                            v.fail(format!("growth ratio varies by {:.3} across radii", g.radius_spread));
                        }
                    }
                    v
                }
                Some(Err(e)) => Verdict::error(an, e),
                None => continue,
            },
            Analysis::Blowup => match &level.blowup {
                Some(Ok(r)) => blowup_verdict(cfg, r),
                Some(Err(e)) => Verdict::error(an, e),
                None => continue,
            },
            Analysis::Weiss => match &level.traces {
                Some(Ok(t)) => match &t.weiss {
                    Ok(w) => {
                        let mut v = Verdict::new(an);
                        v.metric("c3", w.constants[0]);
                        v.metric("c4", w.constants[1]);
                        v.metric("raw_violation", w.raw_violation);
                        v.metric("residual_violation", w.residual_violation);
                        v.metric("radii", t.trace.radii.len() as f64);
                        if !w.pass {
                            v.fail(format!("residual monotonicity violation {:.3e}", w.residual_violation));
                        }
                        if w.constants.iter().any(|c| *c > a.max_constant) {
                            v.fail(format!("drift constants {:?} above {}", w.constants, a.max_constant));
                        }
                        v
                    }
                    Err(e) => Verdict::error(an, e),
                },
                Some(Err(e)) => Verdict::error(an, e),
                None => continue,
            },
            Analysis::Monneau => match &level.traces {
                Some(Ok(t)) => match &t.monneau {
                    Some(Ok(m)) => {
                        let mut v = Verdict::new(an);
                        v.metric("c5", m.constants[0]);
                        v.metric("raw_violation", m.raw_violation);
                        v.metric("rhs_violation", m.rhs_violation.unwrap_or(0.0));
                        let mmax = t.trace.monneau.as_ref().map_or(0.0, |m| m.iter().cloned().fold(0.0, f64::max));
                        v.metric("m_max", mmax);
                        if !m.pass {
                            v.fail(format!("residual monotonicity violation {:.3e}", m.residual_violation));
                        }
                        if m.constants[0] > a.max_constant {
                            v.fail(format!("drift constant {} above {}", m.constants[0], a.max_constant));
                        }
                        v
                    }
                    Some(Err(e)) => Verdict::error(an, e),
                    None => Verdict::error(an, "no Monneau values"),
                },
                Some(Err(e)) => Verdict::error(an, e),
                None => continue,
            },
            Analysis::Stratify => match &level.stratify {
                Some(Ok(s)) => {
                    let mut v = Verdict::new(an);
                    v.metric("points", s.points.len() as f64);
                    v.metric("regular", s.regular as f64);
                    v.metric("singular", s.strata.iter().sum::<usize>() as f64);
                    v.metric("ambiguous", s.ambiguous as f64);
                    v.metric("skipped", s.skipped as f64);
                    if let Some(q) = s.holder_quotient {
                        v.metric("holder_quotient", q);
                    }
                    if s.ambiguous > 0 {
                        v.fail(format!("{} ambiguous points", s.ambiguous));
                    }
                    if !s.regular_open {
                        v.fail("singular point within the neighborhood of a regular point");
                    }
                    if s.points.len() == s.skipped {
                        v.fail("no point could be classified");
                    }
                    if cfg.expect.label.as_deref() == Some("regular") && s.regular == 0 {
                        v.fail("no regular points found");
                    }
                    v
                }
                Some(Err(e)) => Verdict::error(an, e),
                None => continue,
            },
            Analysis::Derivatives => match &level.derivatives {
                Some(Ok(d)) => {
                    let mut v = Verdict::new(an);
                    v.metric("c1", d.c1);
                    v.metric("c2", d.c2);
                    if !(d.c1.is_finite() && d.c2.is_finite()) || d.c1.max(d.c2) > a.max_constant {
                        v.fail(format!("derivative constants ({:.3e}, {:.3e}) not bounded", d.c1, d.c2));
                    }
                    v
                }
                Some(Err(e)) => Verdict::error(an, e),
                None => continue,
            },
            Analysis::PwCheck => match &level.pw {
                Some(Ok(p)) => {
                    let mut v = Verdict::new(an);
                    for t in &p.triples {
                        v.metric(&format!("{}_residual", t.name), t.residuals.last().copied().unwrap_or(0.0));
                        if let Some(o) = t.min_order() {
                            v.metric(&format!("{}_order", t.name), o);
                        }
                        if !t.pass {
                            v.fail(format!("{} identity residuals {:?}", t.name, t.residuals));
                        }
                    }
                    v
                }
                Some(Err(e)) => Verdict::error(an, e),
                None => continue,
            },
        };
        out.push(v);
    }
    out
}

fn blowup_verdict(cfg: &ScenarioConfig, r: &BlowupReport) -> Verdict {
    let mut v = Verdict::new(Analysis::Blowup);
    let label = match r.label {
        PointLabel::Regular => "regular",
        PointLabel::Singular => "singular",
    };
    v.detail = label.into();
    v.metric("phi0", r.phi0);
    v.metric("residual_half_space", r.fit.residual_half_space);
    v.metric("residual_polynomial", r.fit.residual_polynomial);
    v.metric("decay_pass", if r.decay.pass { 1.0 } else { 0.0 });
    if let Some(s) = r.decay.slope {
        v.metric("decay_slope", s);
    }
    if let Some(d) = r.stratum {
        v.metric("stratum", d as f64);
    }
    let hom = [0.25, 0.5, 0.75]
        .iter()
        .map(|s| homogeneity_defect(r.profile(), *s))
        .fold(0.0, f64::max);
    v.metric("profile_homogeneity_defect", hom);
    if hom > 1e-9 {
        v.fail(format!("profile homogeneity defect {hom:.3e}"));
    }
    if let Some(want) = &cfg.expect.label {
        if want != label {
            v.fail(format!("labeled {label}, expected {want}"));
        }
    }
    if let Some(p) = cfg.expect.phi0 {
        if !within(r.phi0, p, 0.1) {
            v.fail(format!("Phi(0+) = {:.5} not within 10% of {p:.5}", r.phi0));
        }
    }
    if let Some(d) = cfg.expect.stratum {
        if r.stratum != Some(d) {
            v.fail(format!("stratum {:?}, expected {d}", r.stratum));
        }
    }
    if let Some(m) = &cfg.expect.matrix {
        let want = to_mat3(m);
        match r.profile().kind() {
            ProfileKind::Polynomial { matrix } => {
                let err = (matrix - want).abs().max();
                v.metric("matrix_error", err);
                if err > 1e-3 {
                    v.fail(format!("blow-up matrix off by {err:.3e}"));
                }
            }
            ProfileKind::HalfSpace { .. } => v.fail("expected a polynomial blow-up"),
        }
    }
    v
}

/// Outcome of [`run_scenario`].
#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub provenance: Provenance,
    pub scenario: String,
    pub resolution: usize,
    pub status: i32,
    pub base_point: Option<Vec<f64>>,
    pub verdicts: Vec<Verdict>,
    /// `(analysis, reason)` for every failed verdict.
    pub failures: Vec<Failure>,
    pub files: Vec<String>,
    pub timings: BTreeMap<&'static str, f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Failure {
    pub analysis: String,
    pub reason: String,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.status == EXIT_PASS
    }

    pub fn verdict(&self, a: Analysis) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.analysis == a.name())
    }
}

pub fn provenance(cfg: &ScenarioConfig, grid: &Grid) -> Provenance {
    Provenance::new(cfg.hash(), cfg.name.clone(), grid, cfg.solver.tol, cfg.seed)
}

/// Runs the configured analyses at the working resolution and writes all
/// artifacts into `out`. A solver failure is reported as a failed `solve`
/// verdict.
pub fn run_scenario(cfg: &ScenarioConfig, out: &Path) -> anyhow::Result<RunReport> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let n = cfg.working_resolution();
    let grid = cfg.grid_at(n).map_err(anyhow::Error::msg)?;
    let prov = provenance(cfg, &grid);
    let level = match compute_level(cfg, n, &cfg.analyses) {
        Ok(l) => l,
        Err(e) => {
            let v = Verdict::error(Analysis::Solve, &format!("{e:#}"));
            return finish(cfg, out, prov, n, None, vec![v], Vec::new(), BTreeMap::new());
        }
    };
    let files = write_artifacts(cfg, &level, &prov, out)?;
    let v = verdicts(cfg, &level);
    let base = level.base.as_ref().map(|b| (0..grid.dim()).map(|k| b.x[k]).collect());
    finish(cfg, out, prov, n, base, v, files, level.timings)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    cfg: &ScenarioConfig,
    out: &Path,
    provenance: Provenance,
    resolution: usize,
    base_point: Option<Vec<f64>>,
    verdicts: Vec<Verdict>,
    mut files: Vec<String>,
    timings: BTreeMap<&'static str, f64>,
) -> anyhow::Result<RunReport> {
    let failures: Vec<Failure> = verdicts
        .iter()
        .filter(|v| !v.pass)
        .map(|v| Failure { analysis: v.analysis.clone(), reason: v.detail.clone() })
        .collect();
    files.push("report.json".into());
    let report = RunReport {
        provenance,
        scenario: cfg.name.clone(),
        resolution,
        status: if failures.is_empty() { EXIT_PASS } else { EXIT_FAIL },
        base_point,
        verdicts,
        failures,
        files,
        timings,
    };
    write_json(&out.join("report.json"), &report)?;
    Ok(report)
}

fn coords(x: &Vec3, dim: usize) -> Vec<String> {
    (0..dim).map(|k| num(x[k])).collect()
}

fn axis_names(prefix: &str, dim: usize) -> Vec<String> {
    (1..=dim).map(|k| format!("{prefix}{k}")).collect()
}

fn table(cols: Vec<String>) -> CsvTable {
    CsvTable::new(&cols.iter().map(String::as_str).collect::<Vec<_>>())
}

/// Writes the solution, CSV tables and SVG plots; returns the file names.
pub fn write_artifacts(cfg: &ScenarioConfig, level: &Level, prov: &Provenance, out: &Path) -> anyhow::Result<Vec<String>> {
    let dim = level.grid.dim();
    let mut files = Vec::new();
    let mut put = |name: &str, text: String| -> anyhow::Result<()> {
        let p: PathBuf = out.join(name);
        fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?;
        files.push(name.to_string());
        Ok(())
    };
    write_solution(out, &level.solution, prov)?;

    let gamma_pts: Vec<Vec3> = level.gamma.as_ref().map(|g| g.points.iter().map(|p| p.x).collect()).unwrap_or_default();
    if let Ok(fbs) = &level.gamma {
        let mut cols = axis_names("x", dim);
        cols.extend(axis_names("n", dim));
        cols.push("growth_min".into());
        let mut t = table(cols);
        let mut growth_min = vec![f64::NAN; fbs.len()];
        if let Some(Ok(g)) = &level.growth {
            let h = level.grid.h_max();
            for s in g.samples.iter().filter(|s| s.radius >= 4.0 * h * (1.0 - 1e-12)) {
                let m = &mut growth_min[s.point];
                *m = if m.is_nan() { s.ratio } else { m.min(s.ratio) };
            }
        }
        for (p, gm) in fbs.points.iter().zip(&growth_min) {
            let mut row = coords(&p.x, dim);
            row.extend(coords(&p.normal, dim));
            row.push(if gm.is_nan() { String::new() } else { num(*gm) });
            t.push(row);
        }
        put("gamma.csv", t.render(prov)?)?;
    }
    put("u.svg", svg::heatmap(prov, &format!("{}: u and free boundary", cfg.name), level.solution.field(), &gamma_pts))?;

    if let Some(Ok(tr)) = &level.traces {
        let trace = &tr.trace;
        let tol = trace.phi_tolerances();
        let (c3, c4, comp) = match &tr.weiss {
            Ok(w) => (num(w.constants[0]), num(w.constants[1]), Some(&w.compensated)),
            Err(_) => (String::new(), String::new(), None),
        };
        let mut t = CsvTable::new(&["r", "energy", "mass", "phi", "phi_compensated", "phi_tolerance", "c3", "c4"]);
        for k in 0..trace.radii.len() {
            t.push(vec![
                num(trace.radii[k]),
                num(trace.energy[k]),
                num(trace.mass[k]),
                num(trace.phi[k]),
                comp.map_or(String::new(), |c| num(c[k])),
                num(tol[k]),
                c3.clone(),
                c4.clone(),
            ]);
        }
        put("trace_weiss.csv", t.render(prov)?)?;
        let pts = |v: &[f64]| trace.radii.iter().copied().zip(v.iter().copied()).collect::<Vec<_>>();
        let mut series = vec![svg::Series::new("Phi(r)", "#1f77b4", pts(&trace.phi))];
        if let Some(c) = comp {
            series.push(svg::Series::new("compensated", "#d62728", pts(c)).dashed());
        }
        put("phi.svg", svg::line_plot(prov, &format!("{}: Weiss energy", cfg.name), "r", "Phi", &series))?;

        if let (Some(m), Some(Ok(mv))) = (&trace.monneau, &tr.monneau) {
            let mut t = CsvTable::new(&["r", "monneau", "monneau_compensated", "c5"]);
            for ((r, mk), ck) in trace.radii.iter().zip(m).zip(&mv.compensated) {
                t.push(vec![num(*r), num(*mk), num(*ck), num(mv.constants[0])]);
            }
            put("trace_monneau.csv", t.render(prov)?)?;
            let series = vec![
                svg::Series::new("M(r)", "#1f77b4", pts(m)),
                svg::Series::new("compensated", "#d62728", pts(&mv.compensated)).dashed(),
            ];
            put("monneau.svg", svg::line_plot(prov, &format!("{}: Monneau distance", cfg.name), "r", "M", &series))?;
        }
    }

    if let Some(Ok(s)) = &level.stratify {
        let mut cols = vec!["index".to_string()];
        cols.extend(axis_names("x", dim));
        cols.extend(["label", "stratum", "phi0"].map(String::from));
        cols.extend(axis_names("n", dim));
        cols.push("detail".into());
        let mut t = table(cols);
        let mut marks = Vec::new();
        for p in &s.points {
            let mut row = vec![p.index.to_string()];
            row.extend(coords(&p.x, dim));
            let (label, stratum, phi0, normal, detail, mark) = match &p.outcome {
                PointOutcome::Classified(r) => {
                    let (label, mark) = match r.label {
                        PointLabel::Regular => ("regular", 0),
                        PointLabel::Singular => ("singular", 1),
                    };
                    (
                        label,
                        r.stratum.map_or(String::new(), |d| d.to_string()),
                        num(r.phi0),
                        r.physical_normal(),
                        String::new(),
                        mark,
                    )
                }
                PointOutcome::Ambiguous(m) => ("ambiguous", String::new(), String::new(), None, m.clone(), 2),
                PointOutcome::Skipped(m) => ("skipped", String::new(), String::new(), None, m.clone(), 3),
            };
            row.extend([label.to_string(), stratum, phi0]);
            match normal {
                Some(n) => row.extend(coords(&n, dim)),
                None => row.extend(std::iter::repeat_n(String::new(), dim)),
            }
            row.push(detail);
            t.push(row);
            marks.push((p.x, mark));
        }
        put("strata.csv", t.render(prov)?)?;
        if dim >= 2 {
            let d = level.grid.domain();
            put(
                "strata.svg",
                svg::point_map(
                    prov,
                    &format!("{}: free-boundary labels", cfg.name),
                    [d.lower(0), d.lower(1)],
                    [d.upper(0), d.upper(1)],
                    &marks,
                    &[("regular", "#2ca02c"), ("singular", "#d62728"), ("ambiguous", "#ff7f0e"), ("skipped", "#999999")],
                ),
            )?;
        }
    }
    let mut all = vec!["solution.bin".to_string(), "solution.json".to_string()];
    all.extend(files);
    Ok(all)
}
