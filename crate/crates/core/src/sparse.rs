//! Compressed sparse row matrices and a Jacobi-preconditioned conjugate
//! gradient restricted to a node subset.

use std::collections::BTreeMap;

#[derive(Clone, Debug)]
pub struct Csr {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    diag: Vec<f64>,
}

/// Row-wise accumulator used during assembly.
#[derive(Debug)]
pub struct CsrBuilder {
    rows: Vec<BTreeMap<usize, f64>>,
}

impl CsrBuilder {
    pub fn new(n: usize) -> Self {
        Self { rows: vec![BTreeMap::new(); n] }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        *self.rows[i].entry(j).or_insert(0.0) += v;
    }

    pub fn build(self) -> Csr {
        let n = self.rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut diag = vec![0.0; n];
        row_ptr.push(0);
        for (i, row) in self.rows.into_iter().enumerate() {
            for (j, v) in row {
                if j == i {
                    diag[i] = v;
                }
                cols.push(j);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Csr { n, row_ptr, cols, vals, diag }
    }
}

impl Csr {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for k in self.row_ptr[i]..self.row_ptr[i + 1] {
            s += self.vals[k] * x[self.cols[k]];
        }
        s
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row_dot(i, x);
        }
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        (0..self.n).map(|i| x[i] * self.row_dot(i, x)).sum()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                let t = self.row(j).find(|&(c, _)| c == i).map(|(_, v)| v).unwrap_or(0.0);
                worst = worst.max((v - t).abs());
            }
        }
        worst
    }
}

/// Solves `K x = b` for the unknowns with `free[i]`, holding the others at
/// their current values in `x`. Stops once `max_i |r_i| scale_i <= tol`.
/// Returns the number of iterations used.
pub fn pcg_masked(
    k: &Csr,
    b: &[f64],
    x: &mut [f64],
    free: &[bool],
    scale: &[f64],
    tol: f64,
    max_iter: usize,
) -> usize {
    let n = k.n();
    let mut r = vec![0.0; n];
    let mut kx = vec![0.0; n];
    k.matvec(x, &mut kx);
    for i in 0..n {
        r[i] = if free[i] { b[i] - kx[i] } else { 0.0 };
    }
    let precond = |r: &[f64], z: &mut [f64]| {
        for i in 0..n {
            z[i] = if free[i] && k.diag()[i] != 0.0 { r[i] / k.diag()[i] } else { 0.0 };
        }
    };
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut kp = vec![0.0; n];
    for it in 0..max_iter {
        let rmax = r.iter().zip(scale).map(|(v, s)| v.abs() * s).fold(0.0, f64::max);
        if rmax <= tol {
            return it;
        }
        k.matvec(&p, &mut kp);
        for i in 0..n {
            if !free[i] {
                kp[i] = 0.0;
            }
        }
        let pkp: f64 = p.iter().zip(&kp).map(|(a, b)| a * b).sum();
        if pkp <= 0.0 {
            return it;
        }
        let a = rz / pkp;
        for i in 0..n {
            x[i] += a * p[i];
            r[i] -= a * kp[i];
        }
        precond(&r, &mut z);
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    max_iter
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace1d(n: usize) -> Csr {
        let mut b = CsrBuilder::new(n);
        for i in 0..n {
            b.add(i, i, 2.0);
            if i > 0 {
                b.add(i, i - 1, -1.0);
            }
            if i + 1 < n {
                b.add(i, i + 1, -1.0);
            }
        }
        b.build()
    }

    #[test]
    fn pcg_solves_tridiagonal() {
        let k = laplace1d(50);
        let xs: Vec<f64> = (0..50).map(|i| (i as f64 * 0.1).sin()).collect();
        let mut b = vec![0.0; 50];
        k.matvec(&xs, &mut b);
        let mut x = vec![0.0; 50];
        let free = vec![true; 50];
        pcg_masked(&k, &b, &mut x, &free, &[1.0; 50], 1e-13, 500);
        for i in 0..50 {
            assert!((x[i] - xs[i]).abs() < 1e-10);
        }
        assert_eq!(k.max_asymmetry(), 0.0);
    }

    #[test]
    fn pcg_respects_mask() {
        let k = laplace1d(10);
        let b = vec![1.0; 10];
        let mut x = vec![0.0; 10];
        x[0] = 3.0;
        let mut free = vec![true; 10];
        free[0] = false;
        pcg_masked(&k, &b, &mut x, &free, &[1.0; 10], 1e-13, 200);
        assert_eq!(x[0], 3.0);
        let mut kx = vec![0.0; 10];
        k.matvec(&x, &mut kx);
        for i in 1..10 {
            assert!((kx[i] - 1.0).abs() < 1e-10);
        }
    }
}
