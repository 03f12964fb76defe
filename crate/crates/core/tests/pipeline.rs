//! End-to-end runs on small grids: solve, free boundary, functionals,
//! blow-up and file round trip.

use std::f64::consts::PI;

use approx::assert_relative_eq;
use obslab_core::blowup::{classify_point_oriented, stratify, BlowupOptions, PointLabel, StratifyOptions};
use obslab_core::free_boundary::{extract, hausdorff_one_sided, quadratic_growth_check};
use obslab_core::functionals::{monotonicity_trace, radius_ladder, weiss_phi, Functionals};
use obslab_core::io::{read_solution, write_solution, Provenance};
use obslab_core::solver::{pde_residual, solve_field, SolveOptions};
use obslab_core::{CoefficientField, Domain, Grid, Vec3};

fn half_space() -> CoefficientField {
    CoefficientField::identity(2).with_boundary(|x| 0.5 * x[1].max(0.0).powi(2))
}

fn grid(n: usize) -> Grid {
    // Γ at x2 = 0 sits a third of a cell above a grid line
    let lo = -1.0 - 1.0 / (3.0 * n as f64);
    Grid::new(Domain::new(&[-1.0, lo], &[1.0, lo + 2.0], "offset").unwrap(), &[2 * n + 1, 2 * n + 1]).unwrap()
}

#[test]
fn half_space_pipeline() {
    let cf = half_space();
    let g = grid(64);
    let sol = solve_field(&cf, &g, &SolveOptions::default()).unwrap();
    assert!(sol.converged);
    let err = (0..g.len())
        .map(|i| (sol.values()[i] - cf.boundary(&g.coord(i))).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-4, "{err}");
    let res = pde_residual(&sol, &cf).unwrap();
    assert!(res.pde_max < 1e-6, "{res:?}");

    let fbs = extract(&sol).unwrap();
    let h = g.h_max();
    assert!(fbs.points.iter().all(|p| p.x[1].abs() < h), "Γ off the line x2 = 0");
    assert!(fbs.points.iter().all(|p| p.normal[1] > 0.99));

    let growth = quadratic_growth_check(&sol, &fbs, &[4.0 * h, 0.1, 0.2], 0.05).unwrap();
    assert_relative_eq!(growth.theta_min, 0.5, max_relative = 0.05);

    let p = fbs.points.iter().min_by(|a, b| a.x.norm().total_cmp(&b.x.norm())).unwrap();
    let rep = classify_point_oriented(sol.field(), &cf, &p.x, &p.normal, &BlowupOptions::default()).unwrap();
    assert_eq!(rep.label, PointLabel::Regular);
    assert_relative_eq!(rep.phi0, PI / 16.0, max_relative = 0.1);
}

#[test]
fn free_boundary_is_stable_under_refinement() {
    let cf = half_space();
    let coarse = extract(&solve_field(&cf, &grid(32), &SolveOptions::default()).unwrap()).unwrap();
    let fine = extract(&solve_field(&cf, &grid(64), &SolveOptions::default()).unwrap()).unwrap();
    let h = 1.0 / 32.0;
    assert!(hausdorff_one_sided(&coarse.points, &fine.points) <= 2.0 * h);
    assert!(hausdorff_one_sided(&fine.points, &coarse.points) <= 2.0 * h);
}

#[test]
fn radial_solution_has_constant_weiss_energy() {
    let cf = CoefficientField::identity(2).with_boundary(|x| 0.25 * x.norm_squared());
    let g = Grid::new(Domain::centered_cube(2, 1.0).unwrap(), &[129, 129]).unwrap();
    let sol = solve_field(&cf, &g, &SolveOptions::default()).unwrap();
    for r in [0.1, 0.2, 0.4] {
        assert_relative_eq!(weiss_phi(sol.field(), &cf, &Vec3::zeros(), r).unwrap(), PI / 8.0, max_relative = 1e-3);
    }
    let fx = Functionals::new(sol.field(), &cf, &Vec3::zeros()).unwrap();
    let ladder = radius_ladder(fx.frame(), fx.domain(), g.h_max(), 0.5);
    let trace = monotonicity_trace(&fx, &ladder, None).unwrap();
    let spread = trace.phi.iter().fold(0.0f64, |m, p| m.max((p - PI / 8.0).abs()));
    assert!(spread < 1e-3, "{spread}");
}

#[test]
fn perturbed_half_space_sweep_has_no_singular_points() {
    let cf = CoefficientField::radial_lipschitz(2, 0.3, 1.0).with_boundary(|x| 0.5 * x[1].max(0.0).powi(2));
    let g = Grid::new(Domain::centered_cube(2, 1.0).unwrap(), &[129, 129]).unwrap();
    let sol = solve_field(&cf, &g, &SolveOptions::default()).unwrap();
    let fbs = extract(&sol).unwrap();
    let rep = stratify(&sol, &cf, &fbs, &StratifyOptions { stride: 16, ..Default::default() }).unwrap();
    assert!(rep.regular > 0);
    assert_eq!(rep.strata.iter().sum::<usize>(), 0);
    assert_eq!(rep.ambiguous, 0);
    assert!(rep.regular_open);
}

#[test]
fn solution_files_round_trip() {
    let cf = half_space();
    let g = grid(16);
    let sol = solve_field(&cf, &g, &SolveOptions::default()).unwrap();
    let dir = std::env::temp_dir().join(format!("obslab-pipeline-{}", std::process::id()));
    let prov = Provenance::new("0", "half-space", &g, 1e-8, 3);
    write_solution(&dir, &sol, &prov).unwrap();
    let (header, field) = read_solution(&dir).unwrap();
    assert_eq!(header.provenance, prov);
    assert_eq!(field.values(), sol.values());
    std::fs::remove_dir_all(&dir).unwrap();
}
