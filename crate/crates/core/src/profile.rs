//! Two-homogeneous global profiles: half-space solutions and quadratic
//! polynomials with trace one half.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{align_pole, ball_rule, sphere_rule, RadialRule};
use crate::{Mat3, Vec3};

/// Tolerance on `|nu| = 1` and `Tr B = 1/2`.
pub const PROFILE_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ProfileKind {
    /// `v(y) = (max(<y, nu>, 0))^2 / 2`.
    HalfSpace { normal: Vec3 },
    /// `v(y) = <B y, y>`.
    Polynomial { matrix: Mat3 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomogeneousProfile {
    dim: usize,
    kind: ProfileKind,
}

impl HomogeneousProfile {
    pub fn half_space(dim: usize, normal: Vec3) -> Result<Self> {
        check_dim(dim)?;
        if (dim..3).any(|k| normal[k] != 0.0) {
            return Err(Error::InvalidProfile("normal has components beyond the dimension".into()));
        }
        if ((normal.norm() - 1.0).abs()) > PROFILE_TOL {
            return Err(Error::InvalidProfile(format!("|nu| = {} is not 1", normal.norm())));
        }
        Ok(Self { dim, kind: ProfileKind::HalfSpace { normal } })
    }

    /// Symmetric PSD `B` (leading `dim` block) with `Tr B = 1/2`.
    pub fn polynomial(dim: usize, matrix: Mat3) -> Result<Self> {
        check_dim(dim)?;
        let mut b = Mat3::zeros();
        for i in 0..dim {
            for j in 0..dim {
                b[(i, j)] = matrix[(i, j)];
            }
        }
        if (b - b.transpose()).norm() > PROFILE_TOL {
            return Err(Error::InvalidProfile("matrix is not symmetric".into()));
        }
        let tr = b.trace();
        if (tr - 0.5).abs() > PROFILE_TOL {
            return Err(Error::InvalidProfile(format!("trace {tr} differs from 1/2")));
        }
        let min_eig = eigenvalues(dim, &b).into_iter().fold(f64::INFINITY, f64::min);
        if min_eig < -PROFILE_TOL {
            return Err(Error::InvalidProfile(format!("smallest eigenvalue {min_eig} is negative")));
        }
        Ok(Self { dim, kind: ProfileKind::Polynomial { matrix: b } })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &ProfileKind {
        &self.kind
    }

    pub fn is_half_space(&self) -> bool {
        matches!(self.kind, ProfileKind::HalfSpace { .. })
    }

    pub fn value(&self, y: &Vec3) -> f64 {
        match &self.kind {
            ProfileKind::HalfSpace { normal } => 0.5 * y.dot(normal).max(0.0).powi(2),
            ProfileKind::Polynomial { matrix } => y.dot(&(matrix * y)),
        }
    }

    pub fn grad(&self, y: &Vec3) -> Vec3 {
        match &self.kind {
            ProfileKind::HalfSpace { normal } => normal * y.dot(normal).max(0.0),
            ProfileKind::Polynomial { matrix } => matrix * y * 2.0,
        }
    }

    /// Eigenvalues of `B` (ascending), empty for half-space profiles.
    pub fn eigenvalues(&self) -> Vec<f64> {
        match &self.kind {
            ProfileKind::HalfSpace { .. } => Vec::new(),
            ProfileKind::Polynomial { matrix } => eigenvalues(self.dim, matrix),
        }
    }

    /// Number of eigenvalues of `B` above `rank_tol`; `None` for half-spaces.
    pub fn rank(&self, rank_tol: f64) -> Option<usize> {
        match self.kind {
            ProfileKind::HalfSpace { .. } => None,
            ProfileKind::Polynomial { .. } => Some(self.eigenvalues().iter().filter(|e| **e > rank_tol).count()),
        }
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if !(1..=3).contains(&dim) {
        return Err(Error::InvalidProfile(format!("dimension {dim} not supported")));
    }
    Ok(())
}

pub(crate) fn eigenvalues(dim: usize, m: &Mat3) -> Vec<f64> {
    let block = nalgebra::DMatrix::from_fn(dim, dim, |i, j| m[(i, j)]);
    let mut e: Vec<f64> = nalgebra::SymmetricEigen::new(block).eigenvalues.iter().copied().collect();
    e.sort_by(|a, b| a.total_cmp(b));
    e
}

/// Resolution of the reference quadrature used for profile integrals.
#[derive(Clone, Copy, Debug)]
pub struct ProfileQuadrature {
    pub n_rad: usize,
    pub n_ang: usize,
}

impl Default for ProfileQuadrature {
    fn default() -> Self {
        Self { n_rad: 24, n_ang: 256 }
    }
}

/// Rotation aligning the quadrature equator with the kink of a half-space
/// profile (identity for polynomials).
fn orientation(profile: &HomogeneousProfile) -> Mat3 {
    match profile.kind() {
        ProfileKind::HalfSpace { normal } => align_pole(profile.dim(), normal),
        ProfileKind::Polynomial { .. } => Mat3::identity(),
    }
}

/// `∫_{B_1} (|∇v|^2 + 2 v) - 2 ∫_{∂B_1} v^2`, evaluated by quadrature.
pub fn psi(profile: &HomogeneousProfile, q: ProfileQuadrature) -> f64 {
    let dim = profile.dim();
    let rot = orientation(profile);
    let ball = ball_rule(dim, q.n_rad, 2 * q.n_ang.div_ceil(2), RadialRule::Gauss).rotated(&rot);
    let sphere = sphere_rule(dim, 2 * q.n_ang.div_ceil(2)).rotated(&rot);
    ball.integrate(|y| profile.grad(y).norm_squared() + 2.0 * profile.value(y))
        - 2.0 * sphere.integrate(|y| profile.value(y).powi(2))
}

/// `∫_{B_1} v` by quadrature.
pub fn ball_mass(profile: &HomogeneousProfile, q: ProfileQuadrature) -> f64 {
    ball_rule(profile.dim(), q.n_rad, 2 * q.n_ang.div_ceil(2), RadialRule::Gauss)
        .rotated(&orientation(profile))
        .integrate(|y| profile.value(y))
}
