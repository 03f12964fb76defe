//! Coincidence set, positivity set and free-boundary points of a solution.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::sphere_rule;
use crate::solver::ObstacleSolution;
use crate::Vec3;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GammaPoint {
    pub x: Vec3,
    /// Unit vector pointing into the positivity set (zero if undetermined).
    pub normal: Vec3,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FreeBoundarySet {
    /// Interior nodes with `u <= u_pos_threshold`.
    pub coincidence: Vec<bool>,
    /// Interior nodes with `u > u_pos_threshold`.
    pub positive: Vec<bool>,
    pub points: Vec<GammaPoint>,
}

impl FreeBoundarySet {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }
}

/// Splits interior nodes by the positivity threshold and locates free
/// boundary points on grid edges that join a node where the discrete
/// solution vanishes to one where it does not. "Vanishes" means below
/// `1e-3` of the positivity threshold: an isolated zero (a singular point
/// of a polynomial solution) is only reached to solver precision.
///
/// On such an edge `a -> b` the crossing is placed where the least-squares
/// line through `sqrt(u)` at `b` and up to two further nodes beyond it
/// vanishes. Near a regular point `u` grows quadratically, so `sqrt(u)` is
/// close to linear and this is exact for half-space and radial profiles.
/// The discrete contact region can overshoot the continuous one by a
/// fraction of a cell, so the crossing may lie up to one cell behind `a`.
/// Crossings closer than `h/2` are merged.
pub fn extract(sol: &ObstacleSolution) -> Result<FreeBoundarySet> {
    let grid = sol.grid();
    if grid.interior_count() == 0 {
        return Err(Error::EmptyInterior);
    }
    let n = grid.len();
    let u = sol.values();
    let dim = grid.dim();
    let interior: Vec<bool> = (0..n).map(|i| !grid.is_boundary(i)).collect();
    let positive: Vec<bool> = (0..n).map(|i| interior[i] && sol.positive[i]).collect();
    let coincidence: Vec<bool> = (0..n).map(|i| interior[i] && !sol.positive[i]).collect();

    let zero = 1e-3 * sol.u_pos_threshold;
    let mut raw = Vec::new();
    for a in 0..n {
        if u[a] > zero {
            continue;
        }
        let m = grid.multi_index(a);
        for k in 0..dim {
            for s in [-1isize, 1] {
                let step = |m: [usize; 3], t: isize| -> Option<usize> {
                    let mk = m[k] as isize + t * s;
                    if mk < 0 || mk >= grid.count(k) as isize {
                        return None;
                    }
                    let mut mm = m;
                    mm[k] = mk as usize;
                    Some(grid.index(mm))
                };
                let Some(b) = step(m, 1) else { continue };
                if u[b] <= zero || !(interior[a] || interior[b]) {
                    continue;
                }
                let xa = grid.coord(a);
                let xb = grid.coord(b);
                // sqrt(u) at distances 1, 2, 3 from a along the edge
                let mut pts = vec![(1.0, u[b].sqrt())];
                for t in 2..=3 {
                    match step(m, t) {
                        Some(c) if u[c] > pts[pts.len() - 1].1.powi(2) => pts.push((t as f64, u[c].sqrt())),
                        _ => break,
                    }
                }
                let t = if pts.len() >= 2 {
                    let (c0, slope) = crate::blowup::linear_fit(&pts);
                    if slope > 0.0 {
                        (-c0 / slope).clamp(-1.0, 1.0)
                    } else {
                        0.5
                    }
                } else {
                    0.5
                };
                let x = xa + (xb - xa) * t;
                let g = sol.u.nodal_gradient(b);
                let normal = if g.norm() > 0.0 { g / g.norm() } else { Vec3::zeros() };
                raw.push(GammaPoint { x, normal });
            }
        }
    }

    let merge = 0.5 * grid.h_min();
    let mut points: Vec<(GammaPoint, usize)> = Vec::new();
    for p in raw {
        if let Some((q, count)) = points.iter_mut().find(|(q, _)| (q.x - p.x).norm() < merge) {
            let c = *count as f64;
            q.x = (q.x * c + p.x) / (c + 1.0);
            let nsum = q.normal * c + p.normal;
            q.normal = if nsum.norm() > 0.0 { nsum / nsum.norm() } else { Vec3::zeros() };
            *count += 1;
        } else {
            points.push((p, 1));
        }
    }
    Ok(FreeBoundarySet {
        coincidence,
        positive,
        points: points.into_iter().map(|(p, _)| p).collect(),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GrowthSample {
    pub point: usize,
    pub radius: f64,
    /// `sup_{∂B_r(x0)} u / r^2`.
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GrowthReport {
    pub samples: Vec<GrowthSample>,
    /// Points that were tested (indices into the free-boundary set).
    pub tested: Vec<usize>,
    /// Minimum ratio over tested points and radii `>= 4h`.
    pub theta_min: f64,
    pub theta_max: f64,
    /// Largest relative variation across radii of a single point's ratio.
    pub radius_spread: f64,
    pub floor: f64,
    pub pass: bool,
}

/// Samples of `∂B_r(x0)`: `max(64, ceil(2 pi r / h))` angles in 2D.
pub fn sphere_points(dim: usize, x0: &Vec3, r: f64, h: f64) -> Vec<Vec3> {
    let n_ang = ((2.0 * std::f64::consts::PI * r / h).ceil() as usize).max(64);
    let n_ang = if dim == 3 { n_ang.min(256) } else { n_ang };
    sphere_rule(dim, n_ang).points.iter().map(|p| x0 + p * r).collect()
}

/// Quadratic detachment: `sup_{∂B_r(x0)} u >= theta r^2` at free boundary
/// points. Points closer than `2 max(radii)` to the boundary are skipped.
pub fn quadratic_growth_check(
    sol: &ObstacleSolution,
    fbs: &FreeBoundarySet,
    radii: &[f64],
    floor: f64,
) -> Result<GrowthReport> {
    let grid = sol.grid();
    let dim = grid.dim();
    let h = grid.h_max();
    let rmax = radii.iter().cloned().fold(0.0, f64::max);
    let tested: Vec<usize> = (0..fbs.len())
        .filter(|&p| grid.domain().dist_to_boundary(&fbs.points[p].x) > 2.0 * rmax)
        .collect();
    if tested.is_empty() {
        return Err(Error::RadiusOutOfDomain { radius: rmax });
    }
    let samples: Vec<GrowthSample> = tested
        .par_iter()
        .flat_map_iter(|&p| {
            let x0 = fbs.points[p].x;
            radii.iter().map(move |&r| {
                let sup = sphere_points(dim, &x0, r, h)
                    .iter()
                    .map(|y| sol.u.value(y))
                    .fold(f64::NEG_INFINITY, f64::max);
                GrowthSample { point: p, radius: r, ratio: sup / (r * r) }
            })
        })
        .collect();
    let valid = |s: &&GrowthSample| s.radius >= 4.0 * h * (1.0 - 1e-12);
    let theta_min = samples.iter().filter(valid).map(|s| s.ratio).fold(f64::INFINITY, f64::min);
    let theta_max = samples.iter().filter(valid).map(|s| s.ratio).fold(f64::NEG_INFINITY, f64::max);
    let mut spread = 0.0f64;
    for &p in &tested {
        let rs: Vec<f64> = samples.iter().filter(valid).filter(|s| s.point == p).map(|s| s.ratio).collect();
        if rs.is_empty() {
            continue;
        }
        let hi = rs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = rs.iter().cloned().fold(f64::INFINITY, f64::min);
        if hi > 0.0 {
            spread = spread.max((hi - lo) / hi);
        }
    }
    Ok(GrowthReport {
        pass: theta_min.is_finite() && theta_min >= floor,
        samples,
        tested,
        theta_min,
        theta_max,
        radius_spread: spread,
        floor,
    })
}

/// One-sided Hausdorff distance from `a` to `b`.
pub fn hausdorff_one_sided(a: &[GammaPoint], b: &[GammaPoint]) -> f64 {
    a.iter()
        .map(|p| b.iter().map(|q| (p.x - q.x).norm()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}
