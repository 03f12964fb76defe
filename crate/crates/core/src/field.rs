//! Coefficient data (matrix field, forcing, boundary trace) and the affine
//! frame that normalizes the frozen coefficients at a base point.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{arr, Error, Result};
use crate::grid::{Grid, NodalField};
use crate::{Mat3, Vec3};

pub type MatrixFn = Arc<dyn Fn(&Vec3) -> Mat3 + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(&Vec3) -> f64 + Send + Sync>;

/// Relative tolerance for the symmetry test of sampled coefficient matrices.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Eigenvalue floor below which a matrix square root is refused.
pub const SQRT_EIGEN_TOL: f64 = 1e-10;

/// Matrix field `A`, forcing `f`, boundary trace `g` and the structural
/// constants that go with them.
#[derive(Clone)]
pub struct CoefficientField {
    dim: usize,
    matrix: MatrixFn,
    forcing: ScalarFn,
    boundary: ScalarFn,
    pub lambda: f64,
    pub lip_a: f64,
    pub alpha: f64,
    pub holder_f: f64,
    pub c0: f64,
    pub name: String,
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientField")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("lambda", &self.lambda)
            .field("lip_a", &self.lip_a)
            .field("alpha", &self.alpha)
            .field("c0", &self.c0)
            .finish()
    }
}

/// Pads the unused trailing block with the identity so that padded
/// matrices stay symmetric positive definite.
pub fn pad(dim: usize, m: Mat3) -> Mat3 {
    let mut out = Mat3::identity();
    for i in 0..dim {
        for j in 0..dim {
            out[(i, j)] = m[(i, j)];
        }
    }
    out
}

fn leading_block(dim: usize, m: &Mat3) -> DMatrix<f64> {
    DMatrix::from_fn(dim, dim, |i, j| m[(i, j)])
}

impl CoefficientField {
    pub fn new(
        dim: usize,
        matrix: impl Fn(&Vec3) -> Mat3 + Send + Sync + 'static,
        forcing: impl Fn(&Vec3) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            matrix: Arc::new(matrix),
            forcing: Arc::new(forcing),
            boundary: Arc::new(|_| 0.0),
            lambda: 1.0,
            lip_a: 0.0,
            alpha: 1.0,
            holder_f: 0.0,
            c0: 1.0,
            name: "custom".into(),
        }
    }

    /// `A = I`, `f = 1`.
    pub fn identity(dim: usize) -> Self {
        let mut cf = Self::new(dim, |_| Mat3::identity(), |_| 1.0);
        cf.name = "identity".into();
        cf
    }

    /// `A(x) = (1 + eps |x|) I`, `f = 1`; Lipschitz but not differentiable at 0.
    /// `lambda` is sized for the box `[-extent, extent]^dim`.
    pub fn radial_lipschitz(dim: usize, eps: f64, extent: f64) -> Self {
        let mut cf = Self::new(dim, move |x| Mat3::identity() * (1.0 + eps * x.norm()), |_| 1.0);
        let amax = 1.0 + eps.abs() * extent * (dim as f64).sqrt();
        let amin = (1.0 - eps.abs() * extent * (dim as f64).sqrt()).max(f64::MIN_POSITIVE);
        cf.lambda = amax.max(1.0 / amin);
        cf.lip_a = eps.abs() * (dim as f64).sqrt();
        cf.name = format!("radial-lipschitz:{eps}");
        cf
    }

    /// Constant anisotropic matrix `R(theta) diag(2, 1/2) R(theta)^T` in the
    /// (x1, x2) plane (identity in any further axis), `f = 1`.
    pub fn anisotropic(dim: usize, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        let mut m = Mat3::identity();
        if dim >= 2 {
            m[(0, 0)] = 2.0 * c * c + 0.5 * s * s;
            m[(1, 1)] = 2.0 * s * s + 0.5 * c * c;
            m[(0, 1)] = 1.5 * s * c;
            m[(1, 0)] = 1.5 * s * c;
        } else {
            m[(0, 0)] = 2.0;
        }
        let mut cf = Self::new(dim, move |_| m, |_| 1.0);
        cf.lambda = 2.0;
        cf.name = format!("anisotropic:{theta}");
        cf
    }

    /// Coefficients given as nodal tables, interpolated multilinearly.
    pub fn tabulated(grid: Grid, matrices: Vec<Mat3>, forcing: Vec<f64>) -> Result<Self> {
        if matrices.len() != grid.len() || forcing.len() != grid.len() {
            return Err(Error::InvalidGrid("table size does not match grid".into()));
        }
        let dim = grid.dim();
        let g = Arc::new(grid);
        let gm = g.clone();
        let mats = Arc::new(matrices);
        let forc = Arc::new(forcing);
        let matrix = move |x: &Vec3| {
            let mut out = Mat3::zeros();
            for (i, w) in multilinear_weights(&gm, x) {
                out += mats[i] * w;
            }
            out
        };
        let forcing = move |x: &Vec3| multilinear_weights(&g, x).into_iter().map(|(i, w)| forc[i] * w).sum();
        let mut cf = Self::new(dim, matrix, forcing);
        cf.name = "tabulated".into();
        Ok(cf)
    }

    /// Registered presets: `identity`, `radial-lipschitz:<eps>`,
    /// `anisotropic:<theta>`.
    pub fn preset(spec: &str, dim: usize, extent: f64) -> Result<Self> {
        let (name, param) = match spec.split_once(':') {
            Some((n, p)) => (n, Some(p)),
            None => (spec, None),
        };
        let parse = |p: Option<&str>, default: f64| -> Result<f64> {
            match p {
                None => Ok(default),
                Some(s) => s
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidOption(format!("bad preset parameter '{s}'"))),
            }
        };
        match name {
            "identity" => Ok(Self::identity(dim)),
            "radial-lipschitz" => Ok(Self::radial_lipschitz(dim, parse(param, 0.3)?, extent)),
            "anisotropic" => Ok(Self::anisotropic(dim, parse(param, 0.0)?)),
            other => Err(Error::InvalidOption(format!("unknown coefficient preset '{other}'"))),
        }
    }

    pub fn preset_names() -> &'static [&'static str] {
        &["anisotropic:theta", "identity", "radial-lipschitz:eps"]
    }

    pub fn with_boundary(mut self, g: impl Fn(&Vec3) -> f64 + Send + Sync + 'static) -> Self {
        self.boundary = Arc::new(g);
        self
    }

    pub fn with_boundary_fn(mut self, g: ScalarFn) -> Self {
        self.boundary = g;
        self
    }

    /// Multiplies both `A` and `f` by `c > 0` (the solution is unchanged).
    pub fn scaled(&self, c: f64) -> Self {
        let m = self.matrix.clone();
        let f = self.forcing.clone();
        let mut out = self.clone();
        out.matrix = Arc::new(move |x| m(x) * c);
        out.forcing = Arc::new(move |x| f(x) * c);
        out.lambda = self.lambda * c.max(1.0 / c);
        out.c0 = self.c0 * c;
        out.lip_a = self.lip_a * c;
        out.holder_f = self.holder_f * c;
        out.name = format!("{}*{c}", self.name);
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `A(x)`, padded with the identity beyond `dim`.
    pub fn matrix(&self, x: &Vec3) -> Mat3 {
        pad(self.dim, (self.matrix)(x))
    }

    pub fn forcing(&self, x: &Vec3) -> f64 {
        (self.forcing)(x)
    }

    pub fn boundary(&self, x: &Vec3) -> f64 {
        (self.boundary)(x)
    }

    pub fn boundary_fn(&self) -> ScalarFn {
        self.boundary.clone()
    }
}

fn multilinear_weights(grid: &Grid, x: &Vec3) -> Vec<(usize, f64)> {
    let dim = grid.dim();
    let mut base = [0usize; 3];
    let mut frac = [0.0; 3];
    for k in 0..dim {
        let t = (x[k] - grid.domain().lower(k)) / grid.spacing(k);
        let i = (t.floor() as isize).clamp(0, grid.count(k) as isize - 2) as usize;
        base[k] = i;
        frac[k] = t - i as f64;
    }
    (0..1usize << dim)
        .map(|c| {
            let mut m = base;
            let mut w = 1.0;
            for k in 0..dim {
                if c >> k & 1 == 1 {
                    m[k] += 1;
                    w *= frac[k];
                } else {
                    w *= 1.0 - frac[k];
                }
            }
            (grid.index(m), w)
        })
        .collect()
}

/// Measured structural constants of a coefficient field on a grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidationReport {
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    /// Empirical Lipschitz constant of `A` (Frobenius norm, axis-adjacent
    /// node pairs only: a lower bound of the true constant).
    pub lip_a: f64,
    /// Empirical Hölder constant of `f` with exponent `alpha`.
    pub holder_f: f64,
    pub min_f: f64,
    pub max_f: f64,
    pub min_boundary: f64,
    pub negative_boundary: bool,
}

/// Checks symmetry, ellipticity and the forcing bound at every node and
/// measures empirical Lipschitz/Hölder constants.
pub fn validate_field(cf: &CoefficientField, grid: &Grid) -> Result<ValidationReport> {
    let dim = cf.dim();
    if grid.dim() != dim {
        return Err(Error::InvalidGrid(format!(
            "grid dimension {} does not match field dimension {dim}",
            grid.dim()
        )));
    }
    let n = grid.len();
    let mats: Vec<Mat3> = (0..n).map(|i| cf.matrix(&grid.coord(i))).collect();
    let fs: Vec<f64> = (0..n).map(|i| cf.forcing(&grid.coord(i))).collect();
    let mut min_eig = f64::INFINITY;
    let mut max_eig = f64::NEG_INFINITY;
    for (i, m) in mats.iter().enumerate() {
        let x = grid.coord(i);
        let asym = (m - m.transpose()).norm();
        if asym > SYMMETRY_TOL * m.norm().max(1.0) {
            return Err(Error::NonSymmetric { at: arr(&x), asymmetry: asym });
        }
        let eig = SymmetricEigen::new(leading_block(dim, m)).eigenvalues;
        let lo = eig.min();
        let hi = eig.max();
        if lo < 1.0 / cf.lambda * (1.0 - 1e-12) || hi > cf.lambda * (1.0 + 1e-12) {
            return Err(Error::EllipticityViolation {
                at: arr(&x),
                min_eig: lo,
                max_eig: hi,
                lambda: cf.lambda,
            });
        }
        min_eig = min_eig.min(lo);
        max_eig = max_eig.max(hi);
        if fs[i] < cf.c0 * (1.0 - 1e-12) {
            return Err(Error::ForcingBelowC0 { at: arr(&x), value: fs[i], c0: cf.c0 });
        }
    }
    let mut lip = 0.0f64;
    let mut hol = 0.0f64;
    for i in 0..n {
        let m = grid.multi_index(i);
        for k in 0..dim {
            if m[k] + 1 < grid.count(k) {
                let j = i + grid.stride(k);
                let h = grid.spacing(k);
                lip = lip.max((mats[j] - mats[i]).norm() / h);
                hol = hol.max((fs[j] - fs[i]).abs() / h.powf(cf.alpha));
            }
        }
    }
    let mut min_g = f64::INFINITY;
    for i in (0..n).filter(|&i| grid.is_boundary(i)) {
        min_g = min_g.min(cf.boundary(&grid.coord(i)));
    }
    Ok(ValidationReport {
        min_eigenvalue: min_eig,
        max_eigenvalue: max_eig,
        lip_a: lip,
        holder_f: hol,
        min_f: fs.iter().cloned().fold(f64::INFINITY, f64::min),
        max_f: fs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        min_boundary: min_g,
        negative_boundary: min_g < 0.0,
    })
}

/// Symmetric square root and inverse square root of the leading `dim` block.
pub fn sym_sqrt(dim: usize, m: &Mat3) -> Result<(Mat3, Mat3)> {
    let eig = SymmetricEigen::new(leading_block(dim, m));
    let lo = eig.eigenvalues.min();
    if !(lo > SQRT_EIGEN_TOL) {
        return Err(Error::SquareRootFailure { min_eig: lo });
    }
    let q = &eig.eigenvectors;
    let s = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    let si = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    let root = q * s * q.transpose();
    let inv = q * si * q.transpose();
    let mut r = Mat3::identity();
    let mut ri = Mat3::identity();
    for i in 0..dim {
        for j in 0..dim {
            r[(i, j)] = 0.5 * (root[(i, j)] + root[(j, i)]);
            ri[(i, j)] = 0.5 * (inv[(i, j)] + inv[(j, i)]);
        }
    }
    Ok((r, ri))
}

/// Affine frame `x = x0 + L y` with `L = f(x0)^{-1/2} A(x0)^{1/2}`.
///
/// In frame coordinates the coefficients become
/// `C(y) = A(x0)^{-1/2} A(x0 + L y) A(x0)^{-1/2}` and the forcing
/// `f(x0 + L y) / f(x0)`, both equal to the identity / one at `y = 0`.
#[derive(Clone, Debug)]
pub struct Frame {
    base: Vec3,
    l: Mat3,
    l_inv: Mat3,
    a0_inv_sqrt: Mat3,
    f0: f64,
    cf: CoefficientField,
}

pub fn make_frame(cf: &CoefficientField, x0: &Vec3) -> Result<Frame> {
    let dim = cf.dim();
    let a0 = cf.matrix(x0);
    let f0 = cf.forcing(x0);
    if !(f0 > 0.0) {
        return Err(Error::ForcingBelowC0 { at: arr(x0), value: f0, c0: cf.c0 });
    }
    let (root, inv_root) = sym_sqrt(dim, &a0)?;
    let scale = f0.sqrt();
    let mut l = root / scale;
    let mut l_inv = inv_root * scale;
    for i in dim..3 {
        l[(i, i)] = 1.0;
        l_inv[(i, i)] = 1.0;
    }
    Ok(Frame {
        base: *x0,
        l,
        l_inv,
        a0_inv_sqrt: inv_root,
        f0,
        cf: cf.clone(),
    })
}

impl Frame {
    pub fn base(&self) -> &Vec3 {
        &self.base
    }

    pub fn dim(&self) -> usize {
        self.cf.dim()
    }

    pub fn l(&self) -> &Mat3 {
        &self.l
    }

    pub fn l_inv(&self) -> &Mat3 {
        &self.l_inv
    }

    pub fn base_forcing(&self) -> f64 {
        self.f0
    }

    pub fn field(&self) -> &CoefficientField {
        &self.cf
    }

    pub fn to_physical(&self, y: &Vec3) -> Vec3 {
        self.base + self.l * y
    }

    pub fn to_frame(&self, x: &Vec3) -> Vec3 {
        self.l_inv * (x - self.base)
    }

    /// Gradient in frame coordinates from a physical gradient (`L` is symmetric).
    pub fn grad_to_frame(&self, g: &Vec3) -> Vec3 {
        self.l * g
    }

    /// Transformed coefficient matrix `C(y)`.
    pub fn coefficient(&self, y: &Vec3) -> Mat3 {
        let a = self.cf.matrix(&self.to_physical(y));
        let c = self.a0_inv_sqrt * a * self.a0_inv_sqrt;
        pad(self.dim(), c)
    }

    /// Transformed forcing ratio `f(x0 + L y) / f(x0)`.
    pub fn forcing_ratio(&self, y: &Vec3) -> f64 {
        self.cf.forcing(&self.to_physical(y)) / self.f0
    }

    /// `mu(y) = <C(y) y/|y|, y/|y|>`; errors at the base point.
    pub fn mu(&self, y: &Vec3) -> Result<f64> {
        let r = y.norm();
        if r == 0.0 {
            return Err(Error::OriginEvaluation);
        }
        let nu = y / r;
        Ok(nu.dot(&(self.coefficient(y) * nu)))
    }

    /// `mu` with the normalized-frame convention `mu(0) = 1`.
    pub fn mu_or_one(&self, y: &Vec3) -> f64 {
        self.mu(y).unwrap_or(1.0)
    }

    /// Semi-axis of the image of the unit ball along physical axis `k`.
    pub fn axis_extent(&self, k: usize) -> f64 {
        let row = self.l.row(k);
        row.norm()
    }

    /// True if `x0 + L B_r` lies inside the domain box.
    pub fn ball_fits(&self, domain: &crate::grid::Domain, r: f64) -> bool {
        let d = domain.axis_distances(&self.base);
        (0..self.dim()).all(|k| r * self.axis_extent(k) <= d[k] + 1e-12)
    }

    /// Largest `r` with `x0 + L B_r` inside the domain box.
    pub fn max_radius(&self, domain: &crate::grid::Domain) -> f64 {
        let d = domain.axis_distances(&self.base);
        (0..self.dim())
            .map(|k| d[k] / self.axis_extent(k))
            .fold(f64::INFINITY, f64::min)
    }

    /// Grid spacing as seen in frame coordinates.
    pub fn frame_spacing(&self, h: f64) -> f64 {
        h * self.l_inv.norm().min(op_norm(&self.l_inv, self.dim()))
    }
}

/// Spectral norm of the leading `dim` block.
pub fn op_norm(m: &Mat3, dim: usize) -> f64 {
    let b = leading_block(dim, m);
    b.singular_values().max()
}

/// `mu(x) = <A(x) x/|x|, x/|x|>` for a field already normalized at the
/// origin (`A(0) = I`). Errors at the origin.
pub fn mu(cf: &CoefficientField, x: &Vec3) -> Result<f64> {
    let r = x.norm();
    if r == 0.0 {
        return Err(Error::OriginEvaluation);
    }
    let nu = x / r;
    Ok(nu.dot(&(cf.matrix(x) * nu)))
}

/// Samples `g` on the boundary nodes (interior values zero).
pub fn boundary_samples(cf: &CoefficientField, grid: &Grid) -> NodalField {
    NodalField::from_fn(grid.clone(), |x| {
        if on_box_boundary(grid, x) {
            cf.boundary(x)
        } else {
            0.0
        }
    })
}

fn on_box_boundary(grid: &Grid, x: &Vec3) -> bool {
    let d = grid.domain();
    (0..grid.dim()).any(|k| {
        let tol = 1e-9 * grid.spacing(k);
        (x[k] - d.lower(k)).abs() < tol || (d.upper(k) - x[k]).abs() < tol
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Domain;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid2(n: usize) -> Grid {
        Grid::new(Domain::centered_cube(2, 1.0).unwrap(), &[n, n]).unwrap()
    }

    #[test]
    fn identity_field_is_valid() {
        let rep = validate_field(&CoefficientField::identity(2), &grid2(17)).unwrap();
        assert_eq!(rep.lip_a, 0.0);
        assert_eq!(rep.min_f, 1.0);
        assert_eq!(rep.min_eigenvalue, 1.0);
    }

    #[test]
    fn radial_lipschitz_constant_is_bounded() {
        let g = grid2(65);
        let cf = CoefficientField::radial_lipschitz(2, 0.3, 1.0);
        let rep = validate_field(&cf, &g).unwrap();
        // |(1+0.3|x|) - (1+0.3|y|)| * |I|_F <= 0.3 sqrt(2) |x - y|
        assert!(rep.lip_a <= 0.3 * 2f64.sqrt() + 1e-12, "{}", rep.lip_a);
        assert!(rep.lip_a > 0.3 * 2f64.sqrt() * 0.9);
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let cf = CoefficientField::new(2, |_| Mat3::from_diagonal(&Vec3::new(1.0, -1.0, 1.0)), |_| 1.0);
        assert!(matches!(
            validate_field(&cf, &grid2(5)),
            Err(Error::EllipticityViolation { .. })
        ));
    }

    #[test]
    fn asymmetric_matrix_and_low_forcing_are_rejected() {
        let cf = CoefficientField::new(
            2,
            |_| {
                let mut m = Mat3::identity();
                m[(0, 1)] = 0.1;
                m
            },
            |_| 1.0,
        );
        assert!(matches!(validate_field(&cf, &grid2(5)), Err(Error::NonSymmetric { .. })));
        let mut cf = CoefficientField::new(2, |_| Mat3::identity(), |x| 0.5 + x[0].abs());
        cf.c0 = 0.75;
        assert!(matches!(validate_field(&cf, &grid2(5)), Err(Error::ForcingBelowC0 { .. })));
    }

    #[test]
    fn mu_examples() {
        let cf = CoefficientField::identity(2);
        assert!((mu(&cf, &Vec3::new(0.3, -0.2, 0.0)).unwrap() - 1.0).abs() < 1e-15);
        let cf = CoefficientField::new(
            2,
            |x| Mat3::from_diagonal(&Vec3::new(1.0 + x[0].abs(), 1.0, 1.0)),
            |_| 1.0,
        );
        assert!((mu(&cf, &Vec3::new(0.5, 0.0, 0.0)).unwrap() - 1.5).abs() < 1e-15);
        assert!(matches!(mu(&cf, &Vec3::zeros()), Err(Error::OriginEvaluation)));
    }

    #[test]
    fn frame_examples() {
        let x0 = Vec3::new(0.1, 0.2, 0.0);
        let f = make_frame(&CoefficientField::identity(2), &x0).unwrap();
        assert!((f.l() - Mat3::identity()).norm() < 1e-15);

        let cf = CoefficientField::new(2, |_| Mat3::identity() * 4.0, |_| 1.0);
        let f = make_frame(&cf, &x0).unwrap();
        assert!((f.l() - Mat3::from_diagonal(&Vec3::new(2.0, 2.0, 1.0))).norm() < 1e-12);
        assert!((f.coefficient(&Vec3::zeros()) - Mat3::identity()).norm() < 1e-12);

        let cf = CoefficientField::new(2, |_| Mat3::identity(), |_| 4.0);
        let f = make_frame(&cf, &x0).unwrap();
        assert!((f.l() - Mat3::from_diagonal(&Vec3::new(0.5, 0.5, 1.0))).norm() < 1e-12);
        assert!((f.forcing_ratio(&Vec3::zeros()) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn frame_normalizes_anisotropic_coefficients() {
        let cf = CoefficientField::anisotropic(2, 0.7).scaled(3.0);
        let x0 = Vec3::new(-0.2, 0.4, 0.0);
        let f = make_frame(&cf, &x0).unwrap();
        assert!((f.coefficient(&Vec3::zeros()) - Mat3::identity()).norm() <= 1e-12);
        assert!((f.forcing_ratio(&Vec3::zeros()) - 1.0).abs() <= 1e-12);
        let l = f.l();
        assert!((l - l.transpose()).norm() < 1e-14);
        assert!(SymmetricEigen::new(leading_block(2, l)).eigenvalues.min() > 0.0);
        let y = Vec3::new(0.3, -0.1, 0.0);
        assert!((f.to_frame(&f.to_physical(&y)) - y).norm() < 1e-14);
    }

    #[test]
    fn sqrt_of_indefinite_fails() {
        let m = Mat3::from_diagonal(&Vec3::new(1.0, -1.0, 1.0));
        assert!(matches!(sym_sqrt(2, &m), Err(Error::SquareRootFailure { .. })));
    }

    #[test]
    fn mu_is_bounded_and_lipschitz_in_normalized_frame() {
        let cf = CoefficientField::radial_lipschitz(2, 0.3, 1.0);
        let x0 = Vec3::new(0.2, -0.1, 0.0);
        let frame = make_frame(&cf, &x0).unwrap();
        let lip = 0.3 * 2f64.sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let lam = cf.lambda * cf.lambda;
        let mut worst = 0.0f64;
        for _ in 0..10_000 {
            let y = Vec3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), 0.0);
            let z = Vec3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), 0.0);
            let (my, mz) = (frame.mu(&y).unwrap(), frame.mu(&z).unwrap());
            assert!(my >= 1.0 / lam && my <= lam);
            worst = worst.max((my - mz).abs() / (y - z).norm());
        }
        // frame coordinates stretch distances by at most |L|, so scale the bound
        let lip_frame = lip * op_norm(frame.l(), 2);
        assert!(worst <= 10.0 * lip_frame, "{worst} vs {lip_frame}");
    }

    #[test]
    fn tabulated_field_interpolates() {
        let g = grid2(5);
        let mats = (0..g.len()).map(|i| Mat3::identity() * (1.0 + g.coord(i)[0].abs())).collect();
        let fs = vec![1.0; g.len()];
        let cf = CoefficientField::tabulated(g, mats, fs).unwrap();
        let a = cf.matrix(&Vec3::new(0.25, 0.1, 0.0));
        assert!((a[(0, 0)] - 1.25).abs() < 1e-14);
        assert_eq!(cf.forcing(&Vec3::new(0.3, 0.3, 0.0)), 1.0);
    }

    #[test]
    fn presets_parse() {
        assert!(CoefficientField::preset("identity", 2, 1.0).is_ok());
        let cf = CoefficientField::preset("radial-lipschitz:0.3", 2, 1.0).unwrap();
        assert!((cf.matrix(&Vec3::new(1.0, 0.0, 0.0))[(0, 0)] - 1.3).abs() < 1e-15);
        assert!(CoefficientField::preset("anisotropic:0.4", 2, 1.0).is_ok());
        assert!(CoefficientField::preset("nope", 2, 1.0).is_err());
        assert!(CoefficientField::preset("radial-lipschitz:x", 2, 1.0).is_err());
    }
}
