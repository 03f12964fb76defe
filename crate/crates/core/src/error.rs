use thiserror::Error;

use crate::solver::ObstacleSolution;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("coefficient matrix not symmetric at {at:?} (asymmetry {asymmetry:.3e})")]
    NonSymmetric { at: [f64; 3], asymmetry: f64 },
    #[error("ellipticity violated at {at:?}: eigenvalues in [{min_eig:.4}, {max_eig:.4}], lambda = {lambda}")]
    EllipticityViolation {
        at: [f64; 3],
        min_eig: f64,
        max_eig: f64,
        lambda: f64,
    },
    #[error("forcing {value} below lower bound c0 = {c0} at {at:?}")]
    ForcingBelowC0 { at: [f64; 3], value: f64, c0: f64 },
    #[error("mu evaluated at the frame base point (value 1 by convention)")]
    OriginEvaluation,
    #[error("matrix square root failed: smallest eigenvalue {min_eig:.3e}")]
    SquareRootFailure { min_eig: f64 },

    #[error("grid too coarse: axis {axis} has {interior} interior nodes (need >= 3)")]
    GridTooCoarse { axis: usize, interior: usize },
    #[error("boundary data negative ({value:.3e}) at {at:?}")]
    InfeasibleBoundary { at: [f64; 3], value: f64 },
    #[error("projected relaxation did not converge in {} sweeps (residual {:.3e})", .solution.iterations, .solution.projected_residual)]
    MaxIterExceeded { solution: Box<ObstacleSolution> },
    #[error("invalid solver option: {0}")]
    InvalidOption(String),

    #[error("domain has no interior nodes")]
    EmptyInterior,
    #[error("no free-boundary point admits radius {radius} inside the domain")]
    RadiusOutOfDomain { radius: f64 },
    #[error("ball of radius {radius} around {center:?} leaves the domain")]
    BallOutOfDomain { center: [f64; 3], radius: f64 },
    #[error("point {at:?} is not on the free boundary (u = {value:.3e})")]
    NotOnFreeBoundary { at: [f64; 3], value: f64 },

    #[error("need at least {needed} radii, got {got}")]
    TooFewRadii { needed: usize, got: usize },
    #[error("no drift constants below the cap {cap} restore monotonicity")]
    NoFiniteConstants { cap: f64 },
    #[error("invalid homogeneous profile: {0}")]
    InvalidProfile(String),
    #[error("base point is not singular: profile is a half-space solution")]
    NotSingularPoint,

    #[error("rescaled ball of radius {radius} around {center:?} leaves the domain")]
    FrameOverflow { center: [f64; 3], radius: f64 },
    #[error("rescalings do not converge (Cauchy differences {first:.3e} -> {last:.3e})")]
    NoConvergence { first: f64, last: f64 },
    #[error("ambiguous blow-up profile: {0}")]
    AmbiguousProfile(String),
    #[error("rescalings are not 2-homogeneous (relative defect {defect:.3e})")]
    NotHomogeneous { defect: f64 },
    #[error("regular point with non-positive decay slope {slope:.3}")]
    InsufficientDecay { slope: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn arr(v: &crate::Vec3) -> [f64; 3] {
    [v[0], v[1], v[2]]
}
