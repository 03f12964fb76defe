//! Acceptance suite: runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line per criterion. Exits nonzero if any criterion fails.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::rc::Rc;
use std::time::Instant;

use obslab_cli::config::{Analysis, ScenarioConfig};
use obslab_cli::registry::Registry;
use obslab_cli::runner::{compute_level, run_scenario, Level};
use obslab_cli::study::{pw_study, refinement_study};
use obslab_core::blowup::{homogeneity_defect, BlowupReport, PointLabel, PointOutcome};
use obslab_core::drift::stable;
use obslab_core::functionals::Functionals;
use obslab_core::profile::{psi, ProfileKind};
use obslab_core::{CoefficientField, Domain, Grid, HomogeneousProfile, Mat3, NodalField, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = (bool, String);

struct Suite {
    registry: Registry,
    levels: HashMap<(String, usize), Rc<Level>>,
}

impl Suite {
    fn cfg(&self, name: &str) -> ScenarioConfig {
        self.registry.lookup(name).expect("builtin scenario")
    }

    /// Scenario solved at `n` with its configured analyses (the
    /// resolution-independent identity and derivative checks are skipped).
    fn level(&mut self, name: &str, n: usize) -> Rc<Level> {
        let key = (name.to_string(), n);
        if let Some(l) = self.levels.get(&key) {
            return l.clone();
        }
        let cfg = self.cfg(name);
        let analyses: Vec<Analysis> = cfg
            .analyses
            .iter()
            .copied()
            .filter(|a| !matches!(a, Analysis::PwCheck | Analysis::Derivatives))
            .collect();
        let l = Rc::new(compute_level(&cfg, n, &analyses).expect("scenario solves"));
        self.levels.insert(key, l.clone());
        l
    }

    fn working(&mut self, name: &str) -> Rc<Level> {
        let n = self.cfg(name).working_resolution();
        self.level(name, n)
    }
}

fn blowup(l: &Level) -> Result<&BlowupReport, String> {
    match &l.blowup {
        Some(Ok(r)) => Ok(r),
        Some(Err(e)) => Err(e.clone()),
        None => Err("blow-up not computed".into()),
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn c1_solver_1d(s: &mut Suite) -> Outcome {
    let cfg = s.cfg("halfspace-1d");
    let t = Instant::now();
    let table = refinement_study(&cfg, 3).expect("study runs");
    let secs = t.elapsed().as_secs_f64();
    let last = table.rows.last().expect("three levels");
    let err = last.error.expect("exact solution");
    let order = table.min_order().unwrap_or(f64::NAN);
    let pass = last.resolution == 256 && err <= 5e-4 && order >= 1.9 && secs <= 1.0;
    let orders: Vec<String> = table.error_orders.iter().map(|o| o.to_string()).collect();
    (pass, format!("L-inf error {err:.3e} at h=1/256 (<= 5e-4), orders [{}] (>= 1.9), {secs:.2} s (<= 1 s)", orders.join(", ")))
}

fn c2_solver_2d(s: &mut Suite) -> Outcome {
    let t = Instant::now();
    let l = s.level("radial-2d", 256);
    let secs = t.elapsed().as_secs_f64();
    let err = l.error.expect("exact solution");
    let solve = l.timings.get("solve").copied().unwrap_or(f64::NAN);
    (
        err <= 1e-3 && solve <= 60.0,
        format!("L-inf error {err:.3e} at h=1/256 (<= 1e-3), solve {solve:.1} s (<= 60 s), all analyses {secs:.1} s"),
    )
}

/// `Phi(r)` of the half-space solution by polar midpoint integration.
fn phi_half_space_polar(r: f64) -> f64 {
    let (nr, nt) = (2000, 4000);
    let (dr, dt) = (r / nr as f64, 2.0 * PI / nt as f64);
    let mut e = 0.0;
    for i in 0..nr {
        let rho = (i as f64 + 0.5) * dr;
        for j in 0..nt {
            let s = (rho * ((j as f64 + 0.5) * dt).sin()).max(0.0);
            // |∇u|^2 + 2u = s^2 + s^2
            e += 2.0 * s * s * rho * dr * dt;
        }
    }
    let mut h = 0.0;
    for j in 0..nt {
        let s = (r * ((j as f64 + 0.5) * dt).sin()).max(0.0);
        h += (0.5 * s * s).powi(2) * r * dt;
    }
    e / r.powi(4) - 2.0 * h / r.powi(5)
}

fn c3_weiss_constancy(_: &mut Suite) -> Outcome {
    let g = Grid::new(Domain::centered_cube(2, 1.0).expect("domain"), &[513, 513]).expect("grid");
    let u = NodalField::from_fn(g, |x| 0.5 * x[1].max(0.0).powi(2));
    let cf = CoefficientField::identity(2);
    let fx = Functionals::new(&u, &cf, &Vec3::zeros())
        .expect("frame")
        .with_orientation(&Vec3::new(0.0, 1.0, 0.0));
    let radii: Vec<f64> = (0..16).map(|k| 0.05 * 10f64.powf(k as f64 / 15.0)).collect();
    let phi: Vec<f64> = radii.iter().map(|r| fx.phi(*r).expect("ball inside")).collect();
    let (lo, hi) = phi.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(*p), b.max(*p)));
    let mean = phi.iter().sum::<f64>() / phi.len() as f64;
    let oracle = phi_half_space_polar(0.3);
    let spread = (hi - lo) / mean;
    let off = rel(mean, oracle);
    (
        spread <= 0.01 && off <= 0.02 && rel(oracle, PI / 16.0) < 1e-4,
        format!("Phi spread {spread:.2e} over r in [0.05, 0.5] (<= 1%), mean {mean:.5} vs polar oracle {oracle:.5} (off {off:.2e} <= 2%)"),
    )
}

fn c4_energy_gap(s: &mut Suite) -> Outcome {
    let hs = s.working("halfspace-2d");
    let rad = s.working("radial-2d");
    let mut pass = true;
    let mut msg = Vec::new();
    for (name, l, label, target) in [
        ("halfspace-2d", &hs, PointLabel::Regular, PI / 16.0),
        ("radial-2d", &rad, PointLabel::Singular, PI / 8.0),
    ] {
        match blowup(l) {
            Ok(r) => {
                let ok = r.label == label && rel(r.phi0, target) <= 0.1;
                pass &= ok;
                msg.push(format!("{name}: {:?} Phi(0+) {:.5} vs {target:.5}", r.label, r.phi0));
            }
            Err(e) => {
                pass = false;
                msg.push(format!("{name}: {e}"));
            }
        }
    }
    let ambiguous = match &hs.stratify {
        Some(Ok(st)) => st.ambiguous,
        _ => usize::MAX,
    };
    pass &= ambiguous == 0;
    msg.push(format!("ambiguous profiles on halfspace-2d sweep: {ambiguous}"));
    (pass, msg.join("; "))
}

fn weiss_constants(l: &Level) -> Result<(Vec<f64>, bool), String> {
    match &l.traces {
        Some(Ok(t)) => t.weiss.as_ref().map(|w| (w.constants.clone(), w.pass)).map_err(Clone::clone),
        Some(Err(e)) => Err(e.clone()),
        None => Err("no trace".into()),
    }
}

fn c5_weiss_perturbed(s: &mut Suite) -> Outcome {
    let t = Instant::now();
    let coarse = s.level("lipschitz-perturbed-2d", 128);
    let fine = s.level("lipschitz-perturbed-2d", 256);
    let secs = t.elapsed().as_secs_f64();
    match (weiss_constants(&coarse), weiss_constants(&fine)) {
        (Ok((a, pa)), Ok((b, pb))) => {
            let bounded = a.iter().chain(&b).all(|c| c.is_finite() && *c <= 100.0);
            let steady = a.iter().zip(&b).all(|(x, y)| stable(*x, *y, 0.2, 1e-3));
            (
                bounded && steady && pa && pb && secs <= 300.0,
                format!(
                    "(C3, C4) = ({:.4}, {:.4}) at h=1/128, ({:.4}, {:.4}) at h=1/256 (<= 100, within 20%), no residual violation: {}, {secs:.1} s (<= 300 s)",
                    a[0],
                    a[1],
                    b[0],
                    b[1],
                    pa && pb
                ),
            )
        }
        (a, b) => (false, format!("fit failed: {:?} / {:?}", a.err(), b.err())),
    }
}

fn monneau_c5(l: &Level) -> Result<f64, String> {
    match &l.traces {
        Some(Ok(t)) => match &t.monneau {
            Some(Ok(m)) => Ok(m.constants[0]),
            Some(Err(e)) => Err(e.clone()),
            None => Err("no Monneau fit".into()),
        },
        Some(Err(e)) => Err(e.clone()),
        None => Err("no trace".into()),
    }
}

fn c6_monneau(s: &mut Suite) -> Outcome {
    let rad = s.working("radial-2d");
    let m_max = match &rad.traces {
        Some(Ok(t)) => t.trace.monneau.as_ref().map_or(f64::INFINITY, |m| m.iter().fold(0.0, |a, v| a.max(v.abs()))),
        _ => f64::INFINITY,
    };
    let coarse = s.level("radial-perturbed-2d", 128);
    let fine = s.level("radial-perturbed-2d", 256);
    match (monneau_c5(&coarse), monneau_c5(&fine)) {
        (Ok(a), Ok(b)) => (
            m_max <= 1e-8 && a.is_finite() && b.is_finite() && stable(a, b, 0.2, 1e-3),
            format!("radial-2d max |M(r)| {m_max:.2e} (<= 1e-8); perturbed C5 {a:.4} at h=1/128, {b:.4} at h=1/256 (within 20%)"),
        ),
        (a, b) => (false, format!("max |M| {m_max:.2e}; C5 fit failed: {:?} / {:?}", a.err(), b.err())),
    }
}

fn c7_payne_weinberger(_: &mut Suite) -> Outcome {
    let study = pw_study(&[64, 128, 256]).expect("identity check runs");
    let pass = study.triples.iter().all(|t| t.pass);
    let parts: Vec<String> = study
        .triples
        .iter()
        .map(|t| {
            let orders: Vec<String> = t.orders.iter().map(|o| o.to_string()).collect();
            format!("{}: residual {:.2e}, orders [{}]", t.name, t.residuals.last().copied().unwrap_or(f64::NAN), orders.join(", "))
        })
        .collect();
    (pass, parts.join("; "))
}

fn c8_quadratic_growth(s: &mut Suite) -> Outcome {
    let names: Vec<String> = s.registry.list().into_iter().map(|(n, _)| n).collect();
    let mut pass = true;
    let mut parts = Vec::new();
    let mut worst = f64::INFINITY;
    for name in &names {
        let cfg = s.cfg(name);
        let l = s.working(name);
        let Some(Ok(g)) = &l.growth else {
            pass = false;
            parts.push(format!("{name}: growth check missing or failed"));
            continue;
        };
        worst = worst.min(g.theta_min);
        pass &= g.theta_min >= 0.05;
        if let Some(e) = cfg.expect.growth_ratio {
            let ok = g.radius_spread <= 0.1 && rel(g.theta_min, e) <= 0.05 && rel(g.theta_max, e) <= 0.05;
            pass &= ok;
            parts.push(format!("{name} [{:.4}, {:.4}] vs {e}", g.theta_min, g.theta_max));
        }
    }
    (pass, format!("min ratio {worst:.4} over {} scenarios (>= 0.05); closed forms: {}", names.len(), parts.join(", ")))
}

fn unit_ball_volume(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => PI,
        _ => 4.0 * PI / 3.0,
    }
}

fn c9_psi(_: &mut Suite) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for dim in [2usize, 3] {
        // ∫_{B_1} <B y, y> = Tr B ω_n / (n + 2) and ∫_{B_1} (<y,ν>_+)^2 / 2 = ω_n / (4 (n + 2))
        let poly_exact = 0.5 * unit_ball_volume(dim) / (dim as f64 + 2.0);
        let half_exact = unit_ball_volume(dim) / (4.0 * (dim as f64 + 2.0));
        for _ in 0..20 {
            let mut m = Mat3::zeros();
            for i in 0..dim {
                for j in 0..dim {
                    m[(i, j)] = rng.random_range(-1.0..1.0);
                }
            }
            let b = m * m.transpose();
            let b = b * (0.5 / b.trace());
            let v = HomogeneousProfile::polynomial(dim, b).expect("valid matrix");
            worst = worst.max((psi(&v, Default::default()) - poly_exact).abs());
            let mut nu = Vec3::zeros();
            for k in 0..dim {
                nu[k] = rng.random_range(-1.0..1.0);
            }
            let v = HomogeneousProfile::half_space(dim, nu / nu.norm()).expect("unit normal");
            worst = worst.max((psi(&v, Default::default()) - half_exact).abs());
            count += 2;
        }
    }
    (worst <= 1e-6, format!("{count} random profiles in 2D and 3D, max |Psi - ∫v| {worst:.2e} (<= 1e-6)"))
}

fn c10_blowup_recovery(s: &mut Suite) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, want, stratum) in [
        ("synthetic-polynomial", [0.4, 0.1], 0usize),
        ("synthetic-polynomial-degenerate", [0.5, 0.0], 1),
    ] {
        let l = s.working(name);
        match blowup(&l) {
            Ok(r) => {
                let err = match r.profile().kind() {
                    ProfileKind::Polynomial { matrix } => {
                        let mut w = Mat3::zeros();
                        w[(0, 0)] = want[0];
                        w[(1, 1)] = want[1];
                        (matrix - w).abs().max()
                    }
                    ProfileKind::HalfSpace { .. } => f64::INFINITY,
                };
                let ok = err <= 1e-3 && r.stratum == Some(stratum);
                pass &= ok;
                parts.push(format!("{name}: matrix error {err:.2e} (<= 1e-3), stratum {:?} (want {stratum})", r.stratum));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{name}: {e}"));
            }
        }
    }
    (pass, parts.join("; "))
}

fn c11_homogeneity(s: &mut Suite) -> Outcome {
    let mut profiles: Vec<HomogeneousProfile> = Vec::new();
    for l in s.levels.values() {
        if let Ok(r) = blowup(l) {
            profiles.push(r.profile().clone());
        }
        if let Some(Ok(st)) = &l.stratify {
            for p in &st.points {
                if let PointOutcome::Classified(r) = &p.outcome {
                    profiles.push(r.profile().clone());
                }
            }
        }
    }
    let worst = profiles
        .iter()
        .flat_map(|p| [0.25, 0.5, 0.75].map(|s| homogeneity_defect(p, s)))
        .fold(0.0, f64::max);
    (
        !profiles.is_empty() && worst <= 1e-9,
        format!("{} extracted profiles, max |v(sy)/s^2 - v(y)| {worst:.2e} for s in {{1/4, 1/2, 3/4}} (<= 1e-9)", profiles.len()),
    )
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .expect("output directory")
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "csv"))
        .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).expect("csv readable")))
        .collect();
    out.sort();
    out
}

fn c12_determinism(s: &mut Suite) -> Outcome {
    let tmp = tempfile::tempdir().expect("temp dir");
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("pool");
    let mut pass = true;
    let mut files = 0;
    let mut differing = Vec::new();
    for (name, _) in s.registry.list() {
        let mut cfg = s.cfg(&name);
        cfg.resolutions.truncate(1);
        let a = tmp.path().join(format!("{name}-a"));
        let b = tmp.path().join(format!("{name}-b"));
        run_scenario(&cfg, &a).expect("first run");
        single.install(|| run_scenario(&cfg, &b)).expect("second run");
        let (fa, fb) = (csv_files(&a), csv_files(&b));
        if fa.is_empty() || fa != fb {
            pass = false;
            differing.push(name.clone());
        }
        files += fa.len();
    }
    (
        pass,
        format!("{files} CSV files from every builtin scenario byte-identical across two runs (all threads vs one){}", if differing.is_empty() { String::new() } else { format!("; differing: {differing:?}") }),
    )
}

type Criterion = fn(&mut Suite) -> Outcome;

fn main() {
    // `cargo test` passes filter arguments; this suite always runs in full.
    let mut suite = Suite { registry: Registry::builtin(), levels: HashMap::new() };
    let criteria: [(&str, Criterion); 12] = [
        ("solver correctness (1D)", c1_solver_1d),
        ("solver correctness (2D)", c2_solver_2d),
        ("Weiss energy constancy", c3_weiss_constancy),
        ("energy gap classification", c4_energy_gap),
        ("Weiss quasi-monotonicity, Lipschitz perturbation", c5_weiss_perturbed),
        ("Monneau quasi-monotonicity", c6_monneau),
        ("divergence identity under refinement", c7_payne_weinberger),
        ("quadratic growth", c8_quadratic_growth),
        ("Psi consistency", c9_psi),
        ("blow-up recovery", c10_blowup_recovery),
        ("profile homogeneity", c11_homogeneity),
        ("determinism", c12_determinism),
    ];
    let mut failed = Vec::new();
    for (k, (title, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let (pass, detail) = catch_unwind(AssertUnwindSafe(|| f(&mut suite)))
            .unwrap_or_else(|e| {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            });
        println!(
            "criterion {:>2} [{}] {title} ({:.1} s): {detail}",
            k + 1,
            if pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
        if !pass {
            failed.push(k + 1);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all 12 criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
