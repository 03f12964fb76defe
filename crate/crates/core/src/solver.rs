//! Discrete energy and the constrained minimizer.
//!
//! The energy `∫ <A∇v,∇v> + 2 f v` is discretized cell by cell: diagonal
//! coefficients act on edge differences with `a_kk` taken at the edge
//! midpoint, off-diagonal coefficients act on cell-averaged gradients with
//! `a_kl` at the cell center. The resulting stiffness `K` is symmetric and,
//! for interior nodes, `(K u)_i = -w_i div_h(A ∇u)_i` with trapezoid weights
//! `w_i`.

use serde::{Deserialize, Serialize};

use crate::error::{arr, Error, Result};
use crate::field::CoefficientField;
use crate::grid::{Grid, NodalField};
use crate::sparse::{pcg_masked, Csr, CsrBuilder};
use crate::Vec3;

#[derive(Clone, Debug)]
pub struct DiscreteEnergy {
    grid: Grid,
    stiffness: Csr,
    load: Vec<f64>,
    forcing: Vec<f64>,
    cf: CoefficientField,
}

/// Builds the stiffness matrix and load vector of the energy.
pub fn assemble(cf: &CoefficientField, grid: &Grid) -> Result<DiscreteEnergy> {
    let dim = grid.dim();
    if cf.dim() != dim {
        return Err(Error::InvalidGrid(format!(
            "grid dimension {dim} does not match field dimension {}",
            cf.dim()
        )));
    }
    for k in 0..dim {
        let interior = grid.count(k) - 2;
        if interior < 3 {
            return Err(Error::GridTooCoarse { axis: k, interior });
        }
    }
    let n = grid.len();
    let mut b = CsrBuilder::new(n);
    let corners = 1usize << dim;
    let edges_per_axis = (corners / 2) as f64;
    let vol = grid.cell_volume();
    let h: Vec<f64> = (0..dim).map(|k| grid.spacing(k)).collect();

    let cells: Vec<[usize; 3]> = {
        let mut out = Vec::new();
        let c = [
            grid.count(0) - 1,
            if dim > 1 { grid.count(1) - 1 } else { 1 },
            if dim > 2 { grid.count(2) - 1 } else { 1 },
        ];
        for m2 in 0..c[2] {
            for m1 in 0..c[1] {
                for m0 in 0..c[0] {
                    out.push([m0, m1, m2]);
                }
            }
        }
        out
    };
    let corner_index = |base: [usize; 3], c: usize| {
        let mut m = base;
        for k in 0..dim {
            m[k] += (c >> k) & 1;
        }
        grid.index(m)
    };

    for base in cells {
        let i0 = grid.index(base);
        let x0 = grid.coord(i0);
        // diagonal terms on edges
        for k in 0..dim {
            for c in 0..corners {
                if (c >> k) & 1 == 1 {
                    continue;
                }
                let i = corner_index(base, c);
                let j = corner_index(base, c | (1 << k));
                let mid = (grid.coord(i) + grid.coord(j)) * 0.5;
                let a = cf.matrix(&mid)[(k, k)];
                let s = a / (h[k] * h[k]) * vol / edges_per_axis;
                b.add(i, i, s);
                b.add(j, j, s);
                b.add(i, j, -s);
                b.add(j, i, -s);
            }
        }
        if dim < 2 {
            continue;
        }
        let mut center = x0;
        for k in 0..dim {
            center[k] += 0.5 * h[k];
        }
        let a = cf.matrix(&center);
        for k in 0..dim {
            for l in (k + 1)..dim {
                let akl = a[(k, l)];
                if akl == 0.0 {
                    continue;
                }
                let alpha = |axis: usize, c: usize| {
                    (2.0 * ((c >> axis) & 1) as f64 - 1.0) / (h[axis] * edges_per_axis)
                };
                for c in 0..corners {
                    for d in 0..corners {
                        let v = akl * vol * (alpha(k, c) * alpha(l, d) + alpha(l, c) * alpha(k, d));
                        b.add(corner_index(base, c), corner_index(base, d), v);
                    }
                }
            }
        }
    }

    let forcing: Vec<f64> = (0..n).map(|i| cf.forcing(&grid.coord(i))).collect();
    let load = (0..n).map(|i| grid.weight(i) * forcing[i]).collect();
    Ok(DiscreteEnergy {
        grid: grid.clone(),
        stiffness: b.build(),
        load,
        forcing,
        cf: cf.clone(),
    })
}

impl DiscreteEnergy {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn stiffness(&self) -> &Csr {
        &self.stiffness
    }

    pub fn load(&self) -> &[f64] {
        &self.load
    }

    pub fn forcing(&self) -> &[f64] {
        &self.forcing
    }

    pub fn field(&self) -> &CoefficientField {
        &self.cf
    }

    /// `u^T K u + 2 Σ w_i f_i u_i`.
    pub fn energy(&self, u: &[f64]) -> f64 {
        self.stiffness.quad_form(u) + 2.0 * self.load.iter().zip(u).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Half gradient of the energy at node `i`: `(K u)_i + w_i f_i`.
    pub fn gradient_at(&self, u: &[f64], i: usize) -> f64 {
        self.stiffness.row_dot(i, u) + self.load[i]
    }

    /// `f_i - div_h(A ∇u)_i` at an interior node.
    pub fn nodal_residual(&self, u: &[f64], i: usize) -> f64 {
        self.gradient_at(u, i) / self.grid.weight(i)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum WarmStart {
    /// Nested primal-dual active-set iteration before relaxation.
    ActiveSet,
    /// Unconstrained linear solve clamped at zero.
    Unconstrained,
    Zero,
    /// Interior values taken from this vector (clamped at zero).
    Provided(Vec<f64>),
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub omega: f64,
    pub warm_start: WarmStart,
    pub record_energy: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200_000,
            omega: 1.5,
            warm_start: WarmStart::ActiveSet,
            record_energy: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ObstacleSolution {
    pub u: NodalField,
    /// Relaxation sweeps.
    pub iterations: usize,
    /// Active-set iterations spent in the warm start.
    pub warm_iterations: usize,
    pub energy: f64,
    /// `max |min(u_i, f_i - div_h(A∇u)_i)|` over interior nodes.
    pub projected_residual: f64,
    /// `f_i - div_h(A∇u)_i` at interior nodes, zero on the boundary.
    pub multiplier: Vec<f64>,
    /// `u_i > u_pos_threshold`.
    pub positive: Vec<bool>,
    pub u_pos_threshold: f64,
    pub tol: f64,
    pub converged: bool,
    pub energy_history: Vec<f64>,
}

impl ObstacleSolution {
    pub fn grid(&self) -> &Grid {
        self.u.grid()
    }

    pub fn field(&self) -> &NodalField {
        &self.u
    }

    pub fn values(&self) -> &[f64] {
        self.u.values()
    }

    /// Wraps given nodal values (e.g. a closed-form field) with the same
    /// diagnostics a solve would produce.
    pub fn from_values(de: &DiscreteEnergy, values: Vec<f64>, tol: f64) -> Result<Self> {
        let u = NodalField::new(de.grid().clone(), values)?;
        Ok(finish(de, u, 0, 0, tol, Vec::new()))
    }
}

fn positivity_threshold(de: &DiscreteEnergy, tol: f64) -> f64 {
    let fmax = de.forcing().iter().fold(0.0f64, |a, b| a.max(b.abs()));
    tol.max(de.grid().h_max().powi(2)) * fmax
}

fn finish(
    de: &DiscreteEnergy,
    u: NodalField,
    iterations: usize,
    warm_iterations: usize,
    tol: f64,
    energy_history: Vec<f64>,
) -> ObstacleSolution {
    let grid = de.grid();
    let vals = u.values();
    let mut multiplier = vec![0.0; grid.len()];
    let mut proj = 0.0f64;
    for i in 0..grid.len() {
        if !grid.is_boundary(i) {
            let r = de.nodal_residual(vals, i);
            multiplier[i] = r;
            proj = proj.max(vals[i].min(r).abs());
        }
    }
    let thr = positivity_threshold(de, tol);
    let positive = vals.iter().map(|v| *v > thr).collect();
    ObstacleSolution {
        energy: de.energy(vals),
        u,
        iterations,
        warm_iterations,
        projected_residual: proj,
        multiplier,
        positive,
        u_pos_threshold: thr,
        tol,
        converged: proj <= tol,
        energy_history,
    }
}

fn interior_mask(grid: &Grid) -> Vec<bool> {
    (0..grid.len()).map(|i| !grid.is_boundary(i)).collect()
}

fn residual_scale(grid: &Grid) -> Vec<f64> {
    (0..grid.len()).map(|i| 1.0 / grid.weight(i)).collect()
}

/// Unconstrained minimizer with the given boundary values.
fn unconstrained(de: &DiscreteEnergy, u: &mut [f64], tol: f64) -> usize {
    let grid = de.grid();
    let free = interior_mask(grid);
    let rhs: Vec<f64> = de.load().iter().map(|v| -v).collect();
    pcg_masked(de.stiffness(), &rhs, u, &free, &residual_scale(grid), 0.1 * tol, 20 * grid.len() + 100)
}

/// Primal-dual active-set iteration from the current iterate. Returns the
/// number of outer iterations.
fn active_set(de: &DiscreteEnergy, u: &mut [f64], tol: f64, max_outer: usize) -> usize {
    let grid = de.grid();
    let n = grid.len();
    let interior = interior_mask(grid);
    let scale = residual_scale(grid);
    let rhs: Vec<f64> = de.load().iter().map(|v| -v).collect();
    let k = de.stiffness();
    let mut active: Vec<bool> = (0..n).map(|i| interior[i] && u[i] <= 0.0).collect();
    for outer in 1..=max_outer {
        let free: Vec<bool> = (0..n).map(|i| interior[i] && !active[i]).collect();
        for i in 0..n {
            if active[i] {
                u[i] = 0.0;
            }
        }
        pcg_masked(k, &rhs, u, &free, &scale, 0.1 * tol, 20 * n + 100);
        let mut changed = false;
        for i in 0..n {
            if !interior[i] {
                continue;
            }
            let lam = de.gradient_at(u, i);
            let now = lam / k.diag()[i] - u[i] > 0.0;
            if now != active[i] {
                active[i] = now;
                changed = true;
            }
        }
        if !changed {
            return outer;
        }
    }
    max_outer
}

/// Nested active-set solve: coarsest grid first, prolongated upward.
fn nested_active_set(de: &DiscreteEnergy, u: &mut [f64], tol: f64) -> Result<usize> {
    let grid = de.grid();
    let mut total = 0;
    if let Some(coarse) = grid.coarsened() {
        if coarse.interior_count() >= 27usize.min(grid.interior_count()) {
            let cde = assemble(de.field(), &coarse)?;
            let mut cu = vec![0.0; coarse.len()];
            for ci in 0..coarse.len() {
                if coarse.is_boundary(ci) {
                    let mut m = coarse.multi_index(ci);
                    for k in 0..grid.dim() {
                        m[k] *= 2;
                    }
                    cu[ci] = u[grid.index(m)];
                }
            }
            total += nested_active_set(&cde, &mut cu, tol)?;
            let fine = NodalField::new(coarse, cu)?.prolong_to(grid);
            for i in 0..grid.len() {
                if !grid.is_boundary(i) {
                    u[i] = fine.values()[i].max(0.0);
                }
            }
            total += active_set(de, u, tol, 200);
            return Ok(total);
        }
    }
    unconstrained(de, u, tol);
    total += active_set(de, u, tol, 200);
    Ok(total)
}

/// Computes the discrete minimizer over `{u >= 0, u = g on the boundary}`.
///
/// After the warm start, projected SOR sweeps (red-black order, projection
/// onto `u >= 0` after every nodal update) run until the projected residual
/// is at most `opts.tol`.
pub fn solve(de: &DiscreteEnergy, g: &NodalField, opts: &SolveOptions) -> Result<ObstacleSolution> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidOption(format!("tolerance must be positive (got {})", opts.tol)));
    }
    if !(opts.omega > 0.0 && opts.omega < 2.0) {
        return Err(Error::InvalidOption(format!("omega must lie in (0, 2) (got {})", opts.omega)));
    }
    let grid = de.grid();
    if g.grid().len() != grid.len() {
        return Err(Error::InvalidGrid("boundary data grid does not match".into()));
    }
    if grid.interior_count() == 0 {
        return Err(Error::EmptyInterior);
    }
    let n = grid.len();
    let mut u = vec![0.0; n];
    for i in 0..n {
        if grid.is_boundary(i) {
            let v = g.values()[i];
            if v < 0.0 {
                return Err(Error::InfeasibleBoundary { at: arr(&grid.coord(i)), value: v });
            }
            u[i] = v;
        }
    }
    let mut warm = 0;
    match &opts.warm_start {
        WarmStart::Zero => {}
        WarmStart::Unconstrained => {
            unconstrained(de, &mut u, opts.tol);
            for i in 0..n {
                if !grid.is_boundary(i) {
                    u[i] = u[i].max(0.0);
                }
            }
        }
        WarmStart::ActiveSet => {
            warm = nested_active_set(de, &mut u, opts.tol)?;
        }
        WarmStart::Provided(v) => {
            if v.len() != n {
                return Err(Error::InvalidOption("warm-start vector has wrong length".into()));
            }
            for i in 0..n {
                if !grid.is_boundary(i) {
                    u[i] = v[i].max(0.0);
                }
            }
        }
    }

    let (red, black): (Vec<usize>, Vec<usize>) = (0..n)
        .filter(|&i| !grid.is_boundary(i))
        .partition(|&i| grid.multi_index(i).iter().sum::<usize>() % 2 == 0);
    let k = de.stiffness();
    let scale = residual_scale(grid);
    let mut history = Vec::new();
    if opts.record_energy {
        history.push(de.energy(&u));
    }
    let projected = |u: &[f64]| -> f64 {
        let mut m = 0.0f64;
        for &i in red.iter().chain(&black) {
            let r = de.gradient_at(u, i) * scale[i];
            m = m.max(u[i].min(r).abs());
        }
        m
    };
    let mut sweeps = 0;
    let mut res = projected(&u);
    while res > opts.tol {
        if sweeps >= opts.max_iter {
            let sol = finish(de, NodalField::new(grid.clone(), u)?, sweeps, warm, opts.tol, history);
            return Err(Error::MaxIterExceeded { solution: Box::new(sol) });
        }
        for &i in red.iter().chain(&black) {
            let r = de.gradient_at(&u, i);
            u[i] = (u[i] - opts.omega * r / k.diag()[i]).max(0.0);
        }
        sweeps += 1;
        if opts.record_energy {
            history.push(de.energy(&u));
        }
        res = projected(&u);
    }
    Ok(finish(de, NodalField::new(grid.clone(), u)?, sweeps, warm, opts.tol, history))
}

/// Assembles and solves with the boundary data carried by `cf`.
pub fn solve_field(cf: &CoefficientField, grid: &Grid, opts: &SolveOptions) -> Result<ObstacleSolution> {
    let de = assemble(cf, grid)?;
    let g = crate::field::boundary_samples(cf, grid);
    solve(&de, &g, opts)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResidualReport {
    /// `max |div_h(A∇u) - f|` over positive nodes at least two cells from
    /// the coincidence set.
    pub pde_max: f64,
    pub pde_nodes: usize,
    /// `max |u|` over the coincidence set.
    pub coincidence_max: f64,
    pub coincidence_nodes: usize,
}

/// PDE and coincidence residuals of a solution, with the stencil rebuilt
/// from `cf`.
pub fn pde_residual(sol: &ObstacleSolution, cf: &CoefficientField) -> Result<ResidualReport> {
    let grid = sol.grid();
    let de = assemble(cf, grid)?;
    let u = sol.values();
    let dim = grid.dim();
    let n = grid.len();
    let coincidence: Vec<bool> = (0..n).map(|i| !grid.is_boundary(i) && !sol.positive[i]).collect();
    // dilate the coincidence set by two cells (box neighborhood)
    let mut near = coincidence.clone();
    for _ in 0..2 {
        let prev = near.clone();
        for i in 0..n {
            if prev[i] {
                continue;
            }
            let m = grid.multi_index(i);
            'outer: for k in 0..dim {
                for s in [-1isize, 1] {
                    let mk = m[k] as isize + s;
                    if mk < 0 || mk >= grid.count(k) as isize {
                        continue;
                    }
                    let mut mm = m;
                    mm[k] = mk as usize;
                    if prev[grid.index(mm)] {
                        near[i] = true;
                        break 'outer;
                    }
                }
            }
        }
    }
    let mut rep = ResidualReport {
        pde_max: 0.0,
        pde_nodes: 0,
        coincidence_max: 0.0,
        coincidence_nodes: 0,
    };
    for i in 0..n {
        if grid.is_boundary(i) {
            continue;
        }
        if coincidence[i] {
            rep.coincidence_nodes += 1;
            rep.coincidence_max = rep.coincidence_max.max(u[i].abs());
        } else if !near[i] {
            rep.pde_nodes += 1;
            rep.pde_max = rep.pde_max.max(de.nodal_residual(u, i).abs());
        }
    }
    Ok(rep)
}

/// Nodal values of a closed-form field.
pub fn sample(grid: &Grid, f: impl Fn(&Vec3) -> f64) -> Vec<f64> {
    (0..grid.len()).map(|i| f(&grid.coord(i))).collect()
}
