//! Scenario configuration (JSON) and its validation.
//!
//! ```json
//! {
//!   "name": "radial-2d",
//!   "domain": { "lower": [-1, -1], "upper": [1, 1] },
//!   "coefficients": "identity",
//!   "boundary": { "kind": "quadratic", "matrix": [[0.25, 0], [0, 0.25]] },
//!   "exact": true,
//!   "resolutions": [64, 128, 256],
//!   "analyses": ["solve", "residuals", "growth", "weiss", "blowup"]
//! }
//! ```
//!
//! `resolutions` are nodes per unit length (`h = 1 / N`); the last entry is
//! the working resolution and the full list drives refinement studies.

use std::fmt;
use std::sync::Arc;

use obslab_core::field::CoefficientField;
use obslab_core::grid::{Domain, Grid};
use obslab_core::{Mat3, Vec3};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// Dotted path of the offending key (`"."` for the whole document).
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error at '{}': {}", self.path, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { path: path.into(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Analysis {
    Solve,
    Residuals,
    Growth,
    Weiss,
    Monneau,
    Blowup,
    Stratify,
    PwCheck,
    Derivatives,
}

impl Analysis {
    pub fn name(&self) -> &'static str {
        match self {
            Analysis::Solve => "solve",
            Analysis::Residuals => "residuals",
            Analysis::Growth => "growth",
            Analysis::Weiss => "weiss",
            Analysis::Monneau => "monneau",
            Analysis::Blowup => "blowup",
            Analysis::Stratify => "stratify",
            Analysis::PwCheck => "pw-check",
            Analysis::Derivatives => "derivatives",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Closed-form scalar field used as boundary data (and as the exact
/// solution when `exact` is set).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldSpec {
    Zero,
    /// `((<x, normal> - offset)_+)^2 / 2`.
    HalfSpace { normal: Vec<f64>, offset: f64 },
    /// `<B (x - c), x - c>`.
    Quadratic {
        matrix: Vec<Vec<f64>>,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
    /// Radial solution for `A = (1 + eps |x|) I`, `f = 1`:
    /// `(1/n) (|x|/eps - ln(1 + eps |x|)/eps^2)`.
    RadialLipschitz { eps: f64 },
}

impl FieldSpec {
    pub fn build(&self, dim: usize) -> Arc<dyn Fn(&Vec3) -> f64 + Send + Sync> {
        match self.clone() {
            FieldSpec::Zero => Arc::new(|_| 0.0),
            FieldSpec::HalfSpace { normal, offset } => {
                let nu = to_vec3(&normal);
                Arc::new(move |x| 0.5 * (x.dot(&nu) - offset).max(0.0).powi(2))
            }
            FieldSpec::Quadratic { matrix, center } => {
                let b = to_mat3(&matrix);
                let c = center.as_deref().map(to_vec3).unwrap_or_else(Vec3::zeros);
                Arc::new(move |x| {
                    let d = x - c;
                    d.dot(&(b * d))
                })
            }
            FieldSpec::RadialLipschitz { eps } => {
                let n = dim as f64;
                Arc::new(move |x| {
                    let r = x.norm();
                    if eps == 0.0 {
                        r * r / (2.0 * n)
                    } else {
                        (r / eps - (1.0 + eps * r).ln() / (eps * eps)) / n
                    }
                })
            }
        }
    }

    fn validate(&self, dim: usize, path: &str) -> Result<(), ConfigError> {
        match self {
            FieldSpec::Zero => Ok(()),
            FieldSpec::HalfSpace { normal, offset } => {
                if normal.len() != dim {
                    return Err(err(&format!("{path}.normal"), format!("expected {dim} components")));
                }
                let n: f64 = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
                if (n - 1.0).abs() > 1e-9 {
                    return Err(err(&format!("{path}.normal"), "must be a unit vector"));
                }
                if !offset.is_finite() {
                    return Err(err(&format!("{path}.offset"), "must be finite"));
                }
                Ok(())
            }
            FieldSpec::Quadratic { matrix, center } => {
                if matrix.len() != dim || matrix.iter().any(|r| r.len() != dim) {
                    return Err(err(&format!("{path}.matrix"), format!("expected a {dim}x{dim} matrix")));
                }
                if let Some(c) = center {
                    if c.len() != dim {
                        return Err(err(&format!("{path}.center"), format!("expected {dim} components")));
                    }
                }
                Ok(())
            }
            FieldSpec::RadialLipschitz { eps } => {
                if !(eps.is_finite() && *eps >= 0.0) {
                    return Err(err(&format!("{path}.eps"), "must be finite and non-negative"));
                }
                Ok(())
            }
        }
    }
}

pub fn to_vec3(v: &[f64]) -> Vec3 {
    let mut out = Vec3::zeros();
    for (k, x) in v.iter().take(3).enumerate() {
        out[k] = *x;
    }
    out
}

pub fn to_mat3(m: &[Vec<f64>]) -> Mat3 {
    let mut out = Mat3::zeros();
    for (i, row) in m.iter().take(3).enumerate() {
        for (j, x) in row.iter().take(3).enumerate() {
            out[(i, j)] = *x;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSpec {
    pub tol: f64,
    pub max_iter: usize,
    pub omega: f64,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 200_000, omega: 1.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSpec {
    /// Base point for the radial functionals and blow-up (default: the
    /// free-boundary point nearest to the domain center).
    pub base_point: Option<Vec<f64>>,
    /// Upper cap of the radius ladder.
    pub ladder_cap: f64,
    /// Hölder exponent of the drift compensators.
    pub alpha: f64,
    /// Largest accepted fitted drift constant.
    pub max_constant: f64,
    /// Floor of the quadratic growth ratio.
    pub growth_floor: f64,
    /// Largest radius of the growth check.
    pub growth_max_radius: f64,
    /// Largest accepted `max |div(A∇u) - f|` away from the contact set.
    pub residual_tol: f64,
    /// Largest accepted L∞ error against the exact solution.
    pub error_tol: f64,
    /// Classify every `stride`-th free-boundary point.
    pub stride: usize,
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        Self {
            base_point: None,
            ladder_cap: 0.5,
            alpha: 1.0,
            max_constant: 100.0,
            growth_floor: 0.05,
            growth_max_radius: 0.2,
            residual_tol: 1e-6,
            error_tol: 1e-3,
            stride: 8,
        }
    }
}

/// Known answers checked by the runner when present.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Expectations {
    /// `"regular"` or `"singular"` at the base point.
    pub label: Option<String>,
    /// `Phi(0+)` at the base point (checked within 10%).
    pub phi0: Option<f64>,
    /// Exact `sup_{∂B_r} u / r^2` at free-boundary points.
    pub growth_ratio: Option<f64>,
    /// Blow-up matrix at the base point.
    pub matrix: Option<Vec<Vec<f64>>>,
    pub stratum: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub domain: DomainSpec,
    /// Coefficient preset (`identity`, `radial-lipschitz:<eps>`,
    /// `anisotropic:<theta>`).
    pub coefficients: String,
    pub boundary: FieldSpec,
    /// The boundary field is the exact solution.
    #[serde(default)]
    pub exact: bool,
    pub resolutions: Vec<usize>,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub analysis: AnalysisSpec,
    pub analyses: Vec<Analysis>,
    #[serde(default)]
    pub expect: Expectations,
    #[serde(default)]
    pub seed: u64,
    /// Output directory (not part of the configuration hash).
    #[serde(default)]
    pub out: Option<String>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            err(&path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn dim(&self) -> usize {
        self.domain.lower.len()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let dim = self.dim();
        if self.name.trim().is_empty() {
            return Err(err("name", "must not be empty"));
        }
        if !(1..=3).contains(&dim) {
            return Err(err("domain.lower", "dimension must be 1, 2 or 3"));
        }
        if self.domain.upper.len() != dim {
            return Err(err("domain.upper", format!("expected {dim} components")));
        }
        for k in 0..dim {
            if self.domain.upper[k].partial_cmp(&self.domain.lower[k]) != Some(std::cmp::Ordering::Greater) {
                return Err(err(&format!("domain.upper[{k}]"), "must exceed the lower bound"));
            }
        }
        CoefficientField::preset(&self.coefficients, dim, 1.0).map_err(|e| err("coefficients", e.to_string()))?;
        self.boundary.validate(dim, "boundary")?;
        if self.resolutions.is_empty() {
            return Err(err("resolutions", "must not be empty"));
        }
        if self.resolutions.windows(2).any(|w| w[1] <= w[0]) {
            return Err(err("resolutions", "must be strictly increasing"));
        }
        for (i, n) in self.resolutions.iter().enumerate() {
            self.grid_at(*n).map_err(|e| err(&format!("resolutions[{i}]"), e))?;
        }
        let positive = |v: f64, path: &str| -> Result<(), ConfigError> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(err(path, format!("must be positive (got {v})")))
            }
        };
        positive(self.solver.tol, "solver.tol")?;
        positive(self.solver.omega, "solver.omega")?;
        if self.solver.omega >= 2.0 {
            return Err(err("solver.omega", "must be below 2"));
        }
        if self.solver.max_iter == 0 {
            return Err(err("solver.max_iter", "must be positive"));
        }
        let a = &self.analysis;
        positive(a.ladder_cap, "analysis.ladder_cap")?;
        positive(a.alpha, "analysis.alpha")?;
        if a.alpha > 1.0 {
            return Err(err("analysis.alpha", "must lie in (0, 1]"));
        }
        positive(a.max_constant, "analysis.max_constant")?;
        positive(a.growth_floor, "analysis.growth_floor")?;
        positive(a.growth_max_radius, "analysis.growth_max_radius")?;
        positive(a.residual_tol, "analysis.residual_tol")?;
        positive(a.error_tol, "analysis.error_tol")?;
        if a.stride == 0 {
            return Err(err("analysis.stride", "must be positive"));
        }
        if let Some(p) = &a.base_point {
            if p.len() != dim {
                return Err(err("analysis.base_point", format!("expected {dim} components")));
            }
        }
        if let Some(l) = &self.expect.label {
            if l != "regular" && l != "singular" {
                return Err(err("expect.label", "must be 'regular' or 'singular'"));
            }
        }
        if let Some(m) = &self.expect.matrix {
            if m.len() != dim || m.iter().any(|r| r.len() != dim) {
                return Err(err("expect.matrix", format!("expected a {dim}x{dim} matrix")));
            }
        }
        if self.analyses.is_empty() {
            return Err(err("analyses", "must not be empty"));
        }
        if self.analyses.contains(&Analysis::Monneau) && !self.analyses.contains(&Analysis::Blowup) {
            return Err(err("analyses", "monneau needs the blowup profile; add 'blowup'"));
        }
        Ok(())
    }

    pub fn domain(&self) -> Domain {
        Domain::new(&self.domain.lower, &self.domain.upper, self.name.clone()).expect("validated domain")
    }

    /// Grid with spacing `1 / n` (each extent must be a multiple of it).
    pub fn grid_at(&self, n: usize) -> Result<Grid, String> {
        let domain = Domain::new(&self.domain.lower, &self.domain.upper, self.name.clone()).map_err(|e| e.to_string())?;
        let mut counts = Vec::new();
        for k in 0..domain.dim() {
            let cells = domain.extent(k) * n as f64;
            if (cells - cells.round()).abs() > 1e-9 * cells.max(1.0) || cells.round() < 4.0 {
                return Err(format!(
                    "extent {} of axis {k} is not a multiple of 1/{n} with at least 4 cells",
                    domain.extent(k)
                ));
            }
            counts.push(cells.round() as usize + 1);
        }
        Grid::new(domain, &counts).map_err(|e| e.to_string())
    }

    /// Coefficient field with the boundary data attached.
    pub fn field(&self) -> CoefficientField {
        let dim = self.dim();
        let extent = (0..dim)
            .map(|k| self.domain.lower[k].abs().max(self.domain.upper[k].abs()))
            .fold(0.0, f64::max);
        CoefficientField::preset(&self.coefficients, dim, extent)
            .expect("validated preset")
            .with_boundary_fn(self.boundary.build(dim))
    }

    pub fn working_resolution(&self) -> usize {
        *self.resolutions.last().expect("validated resolutions")
    }

    /// Hex SHA-256 of the canonical JSON with `out` cleared, so identical
    /// experiments written to different directories share a hash.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut c = self.clone();
        c.out = None;
        hex::encode(Sha256::digest(serde_json::to_vec(&c).expect("config serializes")))
    }

    pub fn has(&self, a: Analysis) -> bool {
        self.analyses.contains(&a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "name": "t",
        "domain": {"lower": [-1, -1], "upper": [1, 1]},
        "coefficients": "identity",
        "boundary": {"kind": "half-space", "normal": [0, 1], "offset": 0},
        "resolutions": [16, 32],
        "analyses": ["solve"]
    }"#;

    #[test]
    fn parses_minimal_config() {
        let c = ScenarioConfig::from_json(BASE).unwrap();
        assert_eq!(c.dim(), 2);
        assert_eq!(c.solver.tol, 1e-8);
        assert_eq!(c.grid_at(32).unwrap().counts(), &[65, 65]);
    }

    #[test]
    fn negative_tolerance_names_the_key() {
        let text = BASE.replace("\"analyses\"", "\"solver\": {\"tol\": -1e-8}, \"analyses\"");
        let e = ScenarioConfig::from_json(&text).unwrap_err();
        assert_eq!(e.path, "solver.tol");
    }

    #[test]
    fn unknown_and_mistyped_keys_are_located() {
        let text = BASE.replace("\"analyses\"", "\"solver\": {\"tolerance\": 1}, \"analyses\"");
        let e = ScenarioConfig::from_json(&text).unwrap_err();
        assert!(e.path.starts_with("solver"), "{e}");
        let text = BASE.replace("[16, 32]", "[16, \"x\"]");
        let e = ScenarioConfig::from_json(&text).unwrap_err();
        assert_eq!(e.path, "resolutions[1]");
        let text = BASE.replace("[16, 32]", "[32, 16]");
        assert_eq!(ScenarioConfig::from_json(&text).unwrap_err().path, "resolutions");
        let text = BASE.replace("\"solve\"", "\"solve\", \"bogus\"");
        assert!(ScenarioConfig::from_json(&text).unwrap_err().path.starts_with("analyses"));
    }

    #[test]
    fn radial_lipschitz_field_solves_its_ode() {
        // (r a phi')' = r with a = 1 + eps r, checked by differences
        let f = FieldSpec::RadialLipschitz { eps: 0.3 }.build(2);
        let phi = |r: f64| f(&Vec3::new(r, 0.0, 0.0));
        let d = 1e-4;
        for r in [0.2, 0.5, 0.9] {
            let flux = |s: f64| s * (1.0 + 0.3 * s) * (phi(s + d) - phi(s - d)) / (2.0 * d);
            let lhs = (flux(r + d) - flux(r - d)) / (2.0 * d);
            assert!((lhs - r).abs() < 1e-5, "{lhs} {r}");
        }
    }
}
