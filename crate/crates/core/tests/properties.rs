//! Property tests over randomized inputs.

use obslab_core::drift::{fit_weiss, weighted_exp_integral};
use obslab_core::functionals::radius_ladder;
use obslab_core::solver::{solve_field, SolveOptions};
use obslab_core::{make_frame, CoefficientField, Domain, Grid, Vec3};
use proptest::prelude::*;

fn small_grid() -> Grid {
    Grid::new(Domain::centered_cube(2, 1.0).unwrap(), &[17, 17]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn solution_is_nonnegative_and_matches_data(angle in 0.0..std::f64::consts::TAU, offset in -0.4..0.4f64) {
        let nu = Vec3::new(angle.cos(), angle.sin(), 0.0);
        let cf = CoefficientField::radial_lipschitz(2, 0.3, 1.0)
            .with_boundary(move |x| 0.5 * (x.dot(&nu) - offset).max(0.0).powi(2));
        let g = small_grid();
        let sol = solve_field(&cf, &g, &SolveOptions::default()).unwrap();
        prop_assert!(sol.values().iter().all(|v| *v >= 0.0));
        for i in (0..g.len()).filter(|&i| g.is_boundary(i)) {
            prop_assert_eq!(sol.values()[i], cf.boundary(&g.coord(i)));
        }
    }

    #[test]
    fn scaling_coefficients_and_forcing_leaves_solution(c in 0.25..4.0f64) {
        let cf = CoefficientField::anisotropic(2, 0.4).with_boundary(|x| 0.5 * x[1].max(0.0).powi(2));
        let g = small_grid();
        let opts = SolveOptions { tol: 1e-11, ..Default::default() };
        let a = solve_field(&cf, &g, &opts).unwrap();
        let b = solve_field(&cf.scaled(c), &g, &opts).unwrap();
        let d = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        prop_assert!(d < 1e-8, "max difference {}", d);
    }

    #[test]
    fn ladder_is_geometric_and_admissible(x in -0.5..0.5f64, y in -0.5..0.5f64, n in 32usize..128) {
        let cf = CoefficientField::radial_lipschitz(2, 0.3, 1.0);
        let domain = Domain::centered_cube(2, 1.0).unwrap();
        let frame = make_frame(&cf, &Vec3::new(x, y, 0.0)).unwrap();
        let h = 2.0 / n as f64;
        let ladder = radius_ladder(&frame, &domain, h, 0.5);
        prop_assert!(ladder.windows(2).all(|w| ((w[1] / w[0]) - 2f64.powf(0.25)).abs() < 1e-12));
        if let Some(top) = ladder.last() {
            prop_assert!(*top <= 0.5 * frame.max_radius(&domain) + 1e-12);
            prop_assert!(*top <= 0.5 + 1e-12);
            prop_assert!(frame.ball_fits(&domain, *top));
        }
    }

    #[test]
    fn weiss_fit_makes_trace_nondecreasing(
        decay in proptest::collection::vec(0.0..0.05f64, 9),
        alpha in 0.3..1.0f64,
    ) {
        let radii: Vec<f64> = (0..10).map(|k| 0.05 * 1.25f64.powi(k)).collect();
        let mut phi = vec![1.0];
        for d in &decay {
            let last = *phi.last().unwrap();
            phi.push(last - d);
        }
        let tol = vec![0.0; 9];
        let v = fit_weiss(&radii, &phi, &tol, alpha, 1e3).unwrap();
        let (c3, c4) = (v.constants[0], v.constants[1]);
        let g: Vec<f64> = radii
            .iter()
            .zip(&phi)
            .map(|(r, p)| (c3 * r).exp() * p + c4 * weighted_exp_integral(c3, alpha, *r))
            .collect();
        prop_assert!(g.windows(2).all(|w| w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0)));
    }
}
