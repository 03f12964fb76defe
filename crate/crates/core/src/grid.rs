//! Axis-aligned box domains, uniform tensor grids and nodal fields.
//!
//! Geometry is carried in 3-vectors regardless of the working dimension:
//! components beyond `dim` are zero. Nodes are numbered with axis 0
//! varying fastest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Vec3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    dim: usize,
    lower: [f64; 3],
    upper: [f64; 3],
    pub tag: String,
}

impl Domain {
    pub fn new(lower: &[f64], upper: &[f64], tag: impl Into<String>) -> Result<Self> {
        let dim = lower.len();
        if dim == 0 || dim > 3 || upper.len() != dim {
            return Err(Error::InvalidDomain(format!(
                "dimension must be 1..=3 with matching bounds (got {} and {})",
                lower.len(),
                upper.len()
            )));
        }
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        for k in 0..dim {
            if !(upper[k] - lower[k] > 0.0) || !lower[k].is_finite() || !upper[k].is_finite() {
                return Err(Error::InvalidDomain(format!(
                    "axis {k} interval [{}, {}] has no positive length",
                    lower[k], upper[k]
                )));
            }
            lo[k] = lower[k];
            hi[k] = upper[k];
        }
        Ok(Self {
            dim,
            lower: lo,
            upper: hi,
            tag: tag.into(),
        })
    }

    /// The cube `[-half, half]^dim`.
    pub fn centered_cube(dim: usize, half: f64) -> Result<Self> {
        let lo = vec![-half; dim];
        let hi = vec![half; dim];
        Self::new(&lo, &hi, format!("cube[{half}]"))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lower(&self, axis: usize) -> f64 {
        self.lower[axis]
    }

    pub fn upper(&self, axis: usize) -> f64 {
        self.upper[axis]
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn center(&self) -> Vec3 {
        let mut c = Vec3::zeros();
        for k in 0..self.dim {
            c[k] = 0.5 * (self.lower[k] + self.upper[k]);
        }
        c
    }

    pub fn contains(&self, x: &Vec3) -> bool {
        (0..self.dim).all(|k| x[k] >= self.lower[k] && x[k] <= self.upper[k])
    }

    /// Distance from `x` to the box boundary along each axis (negative if outside).
    pub fn axis_distances(&self, x: &Vec3) -> [f64; 3] {
        let mut d = [f64::INFINITY; 3];
        for k in 0..self.dim {
            d[k] = (x[k] - self.lower[k]).min(self.upper[k] - x[k]);
        }
        d
    }

    pub fn dist_to_boundary(&self, x: &Vec3) -> f64 {
        self.axis_distances(x)
            .iter()
            .take(self.dim)
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    domain: Domain,
    counts: [usize; 3],
    spacing: [f64; 3],
    strides: [usize; 3],
}

impl Grid {
    pub fn new(domain: Domain, counts: &[usize]) -> Result<Self> {
        let dim = domain.dim();
        if counts.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "{} node counts for a {dim}-dimensional domain",
                counts.len()
            )));
        }
        let mut c = [1usize; 3];
        let mut h = [1.0; 3];
        for k in 0..dim {
            if counts[k] < 3 {
                return Err(Error::InvalidGrid(format!(
                    "axis {k} has {} nodes (need >= 3)",
                    counts[k]
                )));
            }
            c[k] = counts[k];
            h[k] = domain.extent(k) / (counts[k] - 1) as f64;
        }
        let strides = [1, c[0], c[0] * c[1]];
        Ok(Self {
            domain,
            counts: c,
            spacing: h,
            strides,
        })
    }

    /// Grid with spacing as close as possible to `h` (exact when the extents
    /// are integer multiples of `h`).
    pub fn with_spacing(domain: Domain, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::InvalidGrid(format!("spacing {h} must be positive")));
        }
        let counts: Vec<usize> = (0..domain.dim())
            .map(|k| (domain.extent(k) / h).round() as usize + 1)
            .collect();
        Self::new(domain, &counts)
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts[..self.dim()]
    }

    pub fn count(&self, axis: usize) -> usize {
        self.counts[axis]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.spacing[axis]
    }

    pub fn spacings(&self) -> &[f64] {
        &self.spacing[..self.dim()]
    }

    pub fn h_max(&self) -> f64 {
        self.spacings().iter().cloned().fold(0.0, f64::max)
    }

    pub fn h_min(&self) -> f64 {
        self.spacings().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacings().iter().product()
    }

    pub fn index(&self, multi: [usize; 3]) -> usize {
        multi[0] + self.strides[1] * multi[1] + self.strides[2] * multi[2]
    }

    pub fn multi_index(&self, idx: usize) -> [usize; 3] {
        let i0 = idx % self.counts[0];
        let rest = idx / self.counts[0];
        let i1 = rest % self.counts[1];
        let i2 = rest / self.counts[1];
        [i0, i1, i2]
    }

    pub fn coord(&self, idx: usize) -> Vec3 {
        let m = self.multi_index(idx);
        let mut x = Vec3::zeros();
        for k in 0..self.dim() {
            x[k] = self.domain.lower(k) + m[k] as f64 * self.spacing[k];
        }
        x
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        let m = self.multi_index(idx);
        (0..self.dim()).any(|k| m[k] == 0 || m[k] + 1 == self.counts[k])
    }

    pub fn interior_count(&self) -> usize {
        (0..self.dim()).map(|k| self.counts[k] - 2).product()
    }

    /// Trapezoidal quadrature weight of a node.
    pub fn weight(&self, idx: usize) -> f64 {
        let m = self.multi_index(idx);
        let mut w = 1.0;
        for k in 0..self.dim() {
            let edge = m[k] == 0 || m[k] + 1 == self.counts[k];
            w *= if edge { 0.5 * self.spacing[k] } else { self.spacing[k] };
        }
        w
    }

    /// Index of the node nearest to `x` (clamped to the grid).
    pub fn nearest(&self, x: &Vec3) -> usize {
        let mut m = [0usize; 3];
        for k in 0..self.dim() {
            let t = (x[k] - self.domain.lower(k)) / self.spacing[k];
            m[k] = (t.round().max(0.0) as usize).min(self.counts[k] - 1);
        }
        self.index(m)
    }

    /// Multilinear prolongation of nodal values from the grid with half the
    /// node density (counts `(n+1)/2`). Returns `None` if the counts do not nest.
    pub fn coarsened(&self) -> Option<Grid> {
        let mut counts = Vec::with_capacity(self.dim());
        for k in 0..self.dim() {
            let n = self.counts[k];
            if !(n - 1).is_multiple_of(2) || (n - 1) / 2 + 1 < 5 {
                return None;
            }
            counts.push((n - 1) / 2 + 1);
        }
        Grid::new(self.domain.clone(), &counts).ok()
    }
}

/// Nodal values on a grid with piecewise-cubic (4-point Lagrange, tensor
/// product) interpolation. The interpolant reproduces polynomials of degree
/// three per axis, so quadratic profiles are recovered exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodalField {
    grid: Grid,
    values: Vec<f64>,
}

#[inline]
fn lagrange4(s: f64) -> ([f64; 4], [f64; 4]) {
    // nodes at -1, 0, 1, 2
    let w = [
        -s * (s - 1.0) * (s - 2.0) / 6.0,
        (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0,
        -(s + 1.0) * s * (s - 2.0) / 2.0,
        (s + 1.0) * s * (s - 1.0) / 6.0,
    ];
    let d = [
        -(3.0 * s * s - 6.0 * s + 2.0) / 6.0,
        (3.0 * s * s - 4.0 * s - 1.0) / 2.0,
        -(3.0 * s * s - 2.0 * s - 2.0) / 2.0,
        (3.0 * s * s - 1.0) / 6.0,
    ];
    (w, d)
}

#[inline]
fn lagrange3(s: f64) -> ([f64; 4], [f64; 4]) {
    // quadratic through nodes -1, 0, 1 (used when an axis has only 3 nodes)
    let w = [0.5 * s * (s - 1.0), 1.0 - s * s, 0.5 * s * (s + 1.0), 0.0];
    let d = [s - 0.5, -2.0 * s, s + 0.5, 0.0];
    (w, d)
}

impl NodalField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "{} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&Vec3) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.coord(i))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Per-axis stencil: first node index and local weights (value, derivative).
    #[inline]
    fn axis_stencil(&self, axis: usize, x: f64) -> (usize, [f64; 4], [f64; 4]) {
        let n = self.grid.count(axis);
        let h = self.grid.spacing(axis);
        let t = (x - self.grid.domain().lower(axis)) / h;
        if n == 3 {
            let s = t - 1.0;
            let (w, mut d) = lagrange3(s);
            d.iter_mut().for_each(|v| *v /= h);
            return (0, w, d);
        }
        let i0 = (t.floor() as isize).clamp(1, n as isize - 3) as usize;
        let s = t - i0 as f64;
        let (w, mut d) = lagrange4(s);
        d.iter_mut().for_each(|v| *v /= h);
        (i0 - 1, w, d)
    }

    pub fn value(&self, x: &Vec3) -> f64 {
        self.value_grad(x).0
    }

    /// Interpolated value and gradient at a point of the domain.
    pub fn value_grad(&self, x: &Vec3) -> (f64, Vec3) {
        let g = &self.grid;
        match g.dim() {
            1 => {
                let (b, w, d) = self.axis_stencil(0, x[0]);
                let mut v = 0.0;
                let mut dv = 0.0;
                for a in 0..4 {
                    let u = self.values.get(b + a).copied().unwrap_or(0.0);
                    v += w[a] * u;
                    dv += d[a] * u;
                }
                (v, Vec3::new(dv, 0.0, 0.0))
            }
            2 => {
                let (b0, w0, d0) = self.axis_stencil(0, x[0]);
                let (b1, w1, d1) = self.axis_stencil(1, x[1]);
                let s1 = g.stride(1);
                let m0 = if g.count(0) == 3 { 3 } else { 4 };
                let m1 = if g.count(1) == 3 { 3 } else { 4 };
                let (mut v, mut gx, mut gy) = (0.0, 0.0, 0.0);
                for j in 0..m1 {
                    let row = (b1 + j) * s1 + b0;
                    let (mut rv, mut rd) = (0.0, 0.0);
                    for i in 0..m0 {
                        let u = self.values[row + i];
                        rv += w0[i] * u;
                        rd += d0[i] * u;
                    }
                    v += w1[j] * rv;
                    gx += w1[j] * rd;
                    gy += d1[j] * rv;
                }
                (v, Vec3::new(gx, gy, 0.0))
            }
            _ => {
                let (b0, w0, d0) = self.axis_stencil(0, x[0]);
                let (b1, w1, d1) = self.axis_stencil(1, x[1]);
                let (b2, w2, d2) = self.axis_stencil(2, x[2]);
                let (s1, s2) = (g.stride(1), g.stride(2));
                let m = |k: usize| if g.count(k) == 3 { 3 } else { 4 };
                let mut out = [0.0f64; 4];
                for l in 0..m(2) {
                    for j in 0..m(1) {
                        let row = (b2 + l) * s2 + (b1 + j) * s1 + b0;
                        let (mut rv, mut rd) = (0.0, 0.0);
                        for i in 0..m(0) {
                            let u = self.values[row + i];
                            rv += w0[i] * u;
                            rd += d0[i] * u;
                        }
                        out[0] += w2[l] * w1[j] * rv;
                        out[1] += w2[l] * w1[j] * rd;
                        out[2] += w2[l] * d1[j] * rv;
                        out[3] += d2[l] * w1[j] * rv;
                    }
                }
                (out[0], Vec3::new(out[1], out[2], out[3]))
            }
        }
    }

    /// Nodal gradient by centered differences (one-sided on the boundary).
    pub fn nodal_gradient(&self, idx: usize) -> Vec3 {
        let g = &self.grid;
        let m = g.multi_index(idx);
        let mut out = Vec3::zeros();
        for k in 0..g.dim() {
            let s = g.stride(k);
            let h = g.spacing(k);
            let n = g.count(k);
            out[k] = if m[k] == 0 {
                (self.values[idx + s] - self.values[idx]) / h
            } else if m[k] + 1 == n {
                (self.values[idx] - self.values[idx - s]) / h
            } else {
                (self.values[idx + s] - self.values[idx - s]) / (2.0 * h)
            };
        }
        out
    }

    /// Multilinear interpolation onto a finer grid whose counts are `2n-1`.
    pub fn prolong_to(&self, fine: &Grid) -> NodalField {
        let coarse = &self.grid;
        let dim = coarse.dim();
        let values = (0..fine.len())
            .map(|i| {
                let m = fine.multi_index(i);
                let mut base = [0usize; 3];
                let mut odd = [false; 3];
                for k in 0..dim {
                    base[k] = m[k] / 2;
                    odd[k] = m[k] % 2 == 1;
                }
                let corners = 1usize << dim;
                let mut acc = 0.0;
                let mut wsum = 0.0;
                for c in 0..corners {
                    let mut mm = base;
                    let mut ok = true;
                    for k in 0..dim {
                        if c >> k & 1 == 1 {
                            if !odd[k] {
                                ok = false;
                                break;
                            }
                            mm[k] += 1;
                        }
                    }
                    if !ok {
                        continue;
                    }
                    let w: f64 = (0..dim).map(|k| if odd[k] { 0.5 } else { 1.0 }).product();
                    acc += w * self.values[coarse.index(mm)];
                    wsum += w;
                }
                acc / wsum
            })
            .collect();
        NodalField {
            grid: fine.clone(),
            values,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid2(n: usize) -> Grid {
        Grid::new(Domain::centered_cube(2, 1.0).unwrap(), &[n, n]).unwrap()
    }

    #[test]
    fn domain_rejects_degenerate_interval() {
        assert!(Domain::new(&[0.0, 1.0], &[1.0, 1.0], "bad").is_err());
        assert!(Domain::new(&[], &[], "bad").is_err());
    }

    #[test]
    fn grid_rejects_two_nodes() {
        let d = Domain::centered_cube(1, 1.0).unwrap();
        assert!(Grid::new(d, &[2]).is_err());
    }

    #[test]
    fn index_round_trip_and_coords() {
        let d = Domain::new(&[0.0, -1.0, 2.0], &[1.0, 1.0, 3.0], "box").unwrap();
        let g = Grid::new(d, &[5, 9, 3]).unwrap();
        for i in 0..g.len() {
            assert_eq!(g.index(g.multi_index(i)), i);
            assert!(g.domain().contains(&g.coord(i)));
        }
        assert_eq!(g.interior_count(), 3 * 7);
        let total: f64 = (0..g.len()).map(|i| g.weight(i)).sum();
        assert!((total - 2.0).abs() < 1e-12);
    }

    #[test]
    fn cubic_interpolation_reproduces_quadratics() {
        let g = grid2(17);
        let f = NodalField::from_fn(g, |x| 0.4 * x[0] * x[0] + 0.1 * x[1] * x[1] - 0.3 * x[0] * x[1] + x[1]);
        for &(a, b) in &[(0.013, -0.77), (0.99, 0.5), (-1.0, -1.0), (0.31, 0.0)] {
            let x = Vec3::new(a, b, 0.0);
            let (v, gr) = f.value_grad(&x);
            let exact = 0.4 * a * a + 0.1 * b * b - 0.3 * a * b + b;
            assert!((v - exact).abs() < 1e-13);
            assert!((gr[0] - (0.8 * a - 0.3 * b)).abs() < 1e-12);
            assert!((gr[1] - (0.2 * b - 0.3 * a + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn cubic_interpolation_3d_and_1d() {
        let d = Domain::centered_cube(3, 1.0).unwrap();
        let g = Grid::new(d, &[9, 9, 9]).unwrap();
        let f = NodalField::from_fn(g, |x| x[0] * x[2] + x[1] * x[1]);
        let x = Vec3::new(0.1, -0.37, 0.62);
        let (v, gr) = f.value_grad(&x);
        assert!((v - (0.1 * 0.62 + 0.37 * 0.37)).abs() < 1e-13);
        assert!((gr - Vec3::new(0.62, -0.74, 0.1)).norm() < 1e-12);

        let g1 = Grid::new(Domain::centered_cube(1, 1.0).unwrap(), &[3]).unwrap();
        let f1 = NodalField::from_fn(g1, |x| x[0] * x[0]);
        assert!((f1.value(&Vec3::new(0.3, 0.0, 0.0)) - 0.09).abs() < 1e-14);
    }

    #[test]
    fn prolongation_is_exact_for_multilinear_data() {
        let fine = grid2(17);
        let coarse = fine.coarsened().unwrap();
        assert_eq!(coarse.counts(), &[9, 9]);
        let c = NodalField::from_fn(coarse, |x| 1.0 + 2.0 * x[0] - x[1] + 0.5 * x[0] * x[1]);
        let f = c.prolong_to(&fine);
        for i in 0..fine.len() {
            let x = fine.coord(i);
            let e = 1.0 + 2.0 * x[0] - x[1] + 0.5 * x[0] * x[1];
            assert!((f.values()[i] - e).abs() < 1e-13);
        }
    }
}
