//! Numerical laboratory for the obstacle problem with Lipschitz matrix
//! coefficients: discretization and solver, free-boundary extraction,
//! Weiss/Monneau functionals and blow-up classification.

// Index loops mirror the stencil formulas; `!(x > 0.0)` also rejects NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod blowup;
pub mod drift;
pub mod error;
pub mod field;
pub mod free_boundary;
pub mod functionals;
pub mod grid;
pub mod io;
pub mod profile;
pub mod quadrature;
pub mod solver;
pub mod sparse;

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;

pub use error::{Error, Result};
pub use field::{make_frame, mu, validate_field, CoefficientField, Frame, ValidationReport};
pub use grid::{Domain, Grid, NodalField};
pub use profile::HomogeneousProfile;
pub use solver::{assemble, solve, DiscreteEnergy, ObstacleSolution, SolveOptions, WarmStart};

/// `omega_n / (4 (n + 2))`: the Weiss energy of a half-space profile.
pub fn theta(dim: usize) -> f64 {
    unit_ball_volume(dim) / (4.0 * (dim as f64 + 2.0))
}

pub fn unit_ball_volume(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI / 3.0,
        _ => panic!("dimension {dim} not supported"),
    }
}

pub fn unit_sphere_area(dim: usize) -> f64 {
    dim as f64 * unit_ball_volume(dim)
}
