mod common;

use std::f64::consts::PI;
use std::sync::Arc;

use common::caputo_oracle;
use fastcaputo::experiment::shared_kernels;
use fastcaputo::grid::{error_norms, grad_norm_sq, l2_norm_sq, max_norm, rates};
use fastcaputo::linear::{
    fast_history_scalars, manufactured_problem, prior_estimate_check, sobolev_sides, solve_linear, solve_linear_error,
    LinearProblem, StabilityConstants,
};
use fastcaputo::{Error, GridSpec, SolveConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn zero_data_gives_zero_solution() {
    let p = LinearProblem::homogeneous(0.3, -1.0, 2.0, 1.0, Arc::new(|_| 0.0));
    let g = p.grid(24, 20).unwrap();
    for cfg in [SolveConfig::direct(), SolveConfig::fast(1e-8)] {
        let s = solve_linear(&p, &g, &cfg).unwrap();
        assert_eq!(s.levels.len(), 21);
        assert!(s.levels.iter().flatten().all(|&v| v == 0.0));
    }
}

#[test]
fn manufactured_solution_matches_initial_data_and_vanishes_at_ends() {
    for alpha in [0.2, 0.5] {
        let p = manufactured_problem(alpha);
        let exact = p.exact.clone().unwrap();
        for i in 0..=50 {
            let x = PI * i as f64 / 50.0;
            let g = (x * (PI - x)).powi(4);
            assert!((exact(x, 0.0) - g).abs() <= 1e-13 * g.max(1.0));
            assert!(((p.initial)(x) - g).abs() <= 1e-13 * g.max(1.0));
        }
        for t in [0.0, 0.3, 1.0] {
            assert!(exact(0.0, t).abs() < 1e-12 && exact(PI, t).abs() < 1e-12);
            assert!((p.source)(0.0, t).abs() < 1e-12 && (p.source)(PI, t).abs() < 1e-12);
        }
    }
}

#[test]
fn manufactured_source_balances_the_equation() {
    // u = g(x) (e^{-x} t^{3+a} + 1) with g = p^4, p = x (pi - x)
    for alpha in [0.2, 0.5] {
        let p = manufactured_problem(alpha);
        for &x in &[0.4, 1.1, 1.9, 2.7] {
            let pp = x * (PI - x);
            let dp = PI - 2.0 * x;
            let g = pp.powi(4);
            let dg = 4.0 * pp.powi(3) * dp;
            let d2g = 12.0 * pp * pp * dp * dp - 8.0 * pp.powi(3);
            let ex = (-x).exp();
            for &t in &[0.2, 0.6, 1.0] {
                let du = |s: f64| g * ex * (3.0 + alpha) * s.powf(2.0 + alpha);
                let caputo = caputo_oracle(&du, t, alpha);
                let uxx = d2g + (d2g - 2.0 * dg + g) * ex * t.powf(3.0 + alpha);
                let f = (p.source)(x, t);
                let residual = caputo - uxx - f;
                assert!(residual.abs() <= 1e-6 * f.abs().max(1.0), "x={x} t={t}: {residual}");
            }
        }
    }
}

#[test]
fn fast_and_direct_agree() {
    for alpha in [0.2, 0.5] {
        let p = manufactured_problem(alpha);
        let g = p.grid(400, 80).unwrap();
        let (ef, sf) = solve_linear_error(&p, &g, &SolveConfig::fast(1e-7)).unwrap();
        let (ed, sd) = solve_linear_error(&p, &g, &SolveConfig::direct()).unwrap();
        assert!((ef - ed).abs() <= 1e-5, "alpha={alpha}: {ef} vs {ed}");
        assert!(sf.n_exp > 0 && sf.n_exp_half > 0 && sd.n_exp == 0);
        assert!(sf.certified_error <= 1e-7 && sf.certified_error_half <= 1e-7);
    }
}

#[test]
fn coarse_temporal_anchor_matches_published_error() {
    // published: alpha = 0.5, dt = 1/10, E = 8.151e-2 (at a finer mesh)
    let p = manufactured_problem(0.5);
    let g = p.grid(2000, 10).unwrap();
    let (e, _) = solve_linear_error(&p, &g, &SolveConfig::fast(1e-7)).unwrap();
    assert!((e / 8.151e-2 - 1.0).abs() < 2e-3, "E = {e}");
}

#[test]
fn coarse_spatial_anchor_matches_published_error() {
    // published: alpha = 0.2, h = pi/40, E = 5.258e-2
    let p = manufactured_problem(0.2);
    let g = p.grid(40, 4000).unwrap();
    let (e, _) = solve_linear_error(&p, &g, &SolveConfig::fast(1e-7)).unwrap();
    assert!((e / 5.258e-2 - 1.0).abs() < 5e-3, "E = {e}");
}

#[test]
fn spatial_order_is_two() {
    let p = manufactured_problem(0.5);
    let errors: Vec<f64> = [10, 20, 40, 80]
        .iter()
        .map(|&n| {
            solve_linear_error(&p, &p.grid(n, 1000).unwrap(), &SolveConfig::fast(1e-7))
                .unwrap()
                .0
        })
        .collect();
    for r in rates(&errors) {
        assert!((r - 2.0).abs() < 0.1, "rates {:?}", rates(&errors));
    }
}

#[test]
fn error_norms_of_exact_levels_vanish() {
    let p = manufactured_problem(0.5);
    let g = p.grid(20, 10).unwrap();
    let exact = p.exact.clone().unwrap();
    let xs = g.xs();
    let levels: Vec<Vec<f64>> = (0..=10)
        .map(|k| xs.iter().map(|&x| exact(x, g.t(k))).collect())
        .collect();
    let norms = error_norms(&levels, &*exact, &g);
    assert_eq!(norms.e_norm, 0.0);
    assert_eq!(norms.per_step.len(), 10);
    assert_eq!(rates(&[4.0, 1.0, 0.25]), vec![2.0, 2.0]);
}

#[test]
fn prior_estimate_holds_for_manufactured_data() {
    for alpha in [0.2, 0.5] {
        let p = manufactured_problem(alpha);
        let g = p.grid(100, 50).unwrap();
        for cfg in [SolveConfig::direct(), SolveConfig::fast(1e-7)] {
            let s = solve_linear(&p, &g, &cfg).unwrap();
            let est = prior_estimate_check(&s.levels, &p, &g, cfg.analysis_eps()).unwrap();
            assert!(est.holds, "alpha={alpha} worst ratio {}", est.worst_ratio);
            assert_eq!(est.terms.len(), 50);
        }
    }
}

#[test]
fn prior_estimate_trivial_for_zero_data() {
    let p = LinearProblem::homogeneous(0.5, 0.0, 1.0, 1.0, Arc::new(|_| 0.0));
    let g = p.grid(10, 10).unwrap();
    let s = solve_linear(&p, &g, &SolveConfig::direct()).unwrap();
    let est = prior_estimate_check(&s.levels, &p, &g, 0.0).unwrap();
    assert!(est.holds);
    assert!(est.terms.iter().all(|t| t.lhs == 0.0 && t.rhs == 0.0));
}

fn random_problem(rng: &mut ChaCha8Rng, alpha: f64) -> LinearProblem {
    let modes: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.gen_range(-2.0..2.0),
                rng.gen_range(0.5..4.0),
                rng.gen_range(0.0..6.3),
                rng.gen_range(0.0..5.0),
            )
        })
        .collect();
    let init: Vec<(f64, f64)> = (0..3)
        .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(0.5..3.0)))
        .collect();
    let source = move |x: f64, t: f64| {
        modes
            .iter()
            .map(|(c, k, ph, w)| c * (k * x + ph).sin() * (w * t).cos())
            .sum()
    };
    let initial = move |x: f64| init.iter().map(|(c, m)| c * (-m * (x - 1.5).powi(2)).exp()).sum();
    LinearProblem {
        alpha,
        x_left: 0.0,
        x_right: 3.0,
        horizon: 1.0,
        source: Arc::new(source),
        initial: Arc::new(initial),
        exact: None,
    }
}

#[test]
fn prior_estimate_holds_for_random_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..20 {
        let alpha = [0.2, 0.5][trial % 2];
        let p = random_problem(&mut rng, alpha);
        assert!((p.source)(0.0, 0.0) != 0.0);
        let g = p.grid(60, 40).unwrap();
        for cfg in [SolveConfig::direct(), SolveConfig::fast(1e-8)] {
            let s = solve_linear(&p, &g, &cfg).unwrap();
            let est = prior_estimate_check(&s.levels, &p, &g, cfg.analysis_eps()).unwrap();
            assert!(est.holds, "trial {trial}: ratio {}", est.worst_ratio);
        }
    }
}

#[test]
fn no_blow_up_for_any_step_size() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let amps: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let initial = Arc::new(move |x: f64| {
        amps.iter()
            .enumerate()
            .map(|(k, a)| a * ((k + 1) as f64 * x).sin())
            .sum()
    });
    for alpha in [0.2, 0.5] {
        let p = LinearProblem::homogeneous(alpha, 0.0, PI, 1.0, initial.clone());
        for k in 0..=6 {
            let g = p.grid(100, 1 << k).unwrap();
            for cfg in [SolveConfig::direct(), SolveConfig::fast(1e-8)] {
                let s = solve_linear(&p, &g, &cfg).unwrap();
                let est = prior_estimate_check(&s.levels, &p, &g, cfg.analysis_eps()).unwrap();
                assert!(est.holds, "alpha={alpha} dt=1/{}", 1 << k);
                let peak = s.levels.iter().map(|u| max_norm(u)).fold(0.0, f64::max);
                assert!(peak <= 1.0 + max_norm(&s.levels[0]) * 10.0);
            }
        }
    }
}

#[test]
fn boundary_stencil_consistency() {
    let x0 = 0.3_f64;
    for k in 1..=8 {
        let h = 0.5f64.powi(k);
        let slope = ((x0 + h).sin() - x0.sin()) / h;
        let defect = 2.0 / h * (slope - x0.cos()) - (-x0.sin());
        // |v'''| = |cos| <= 1
        assert!(defect.abs() <= h / 3.0, "h={h}: {defect}");
    }
}

#[test]
fn discrete_sobolev_inequality() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let n = rng.gen_range(2..80);
        let h = rng.gen_range(0.01..0.5);
        let u: Vec<f64> = (0..=n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for theta in [0.1, 1.0, 10.0] {
            let (lhs, rhs) = sobolev_sides(&u, h, theta);
            assert!(lhs <= rhs * (1.0 + 1e-12), "n={n} theta={theta}");
        }
    }
    let u = vec![1.0, -1.0, 2.0];
    assert_eq!(
        sobolev_sides(&u, 1.0, 1.0).1,
        grad_norm_sq(&u, 1.0) + 1.5 * l2_norm_sq(&u, 1.0)
    );
}

#[test]
fn history_counter_is_flat_in_steps() {
    let alpha = 0.5;
    let p = manufactured_problem(alpha);
    let (kernels, _) = shared_kernels(alpha, 1.0 / 4096.0, 1.0, 1e-7, true).unwrap();
    let cfg = SolveConfig::fast(1e-7).with_kernels(kernels);
    let mut counts = Vec::new();
    for n_time in [256, 4096] {
        let s = solve_linear(&p, &p.grid(30, n_time).unwrap(), &cfg).unwrap();
        assert_eq!(
            s.stats.peak_history_scalars,
            fast_history_scalars(30, s.stats.n_exp, s.stats.n_exp_half)
        );
        counts.push(s.stats.peak_history_scalars);
    }
    assert_eq!(counts[0], counts[1]);
}

#[test]
fn loose_tolerance_is_rejected() {
    let p = LinearProblem::homogeneous(0.5, 0.0, 1.0, 10.0, Arc::new(|x| x));
    let g = p.grid(10, 100).unwrap();
    assert!(matches!(
        solve_linear(&p, &g, &SolveConfig::fast(0.3)),
        Err(Error::Configuration(_))
    ));
    assert!(StabilityConstants::new(0.5, 0.1, 100, 0.3).is_err());
    let c = StabilityConstants::new(0.5, 0.1, 10, 1e-9).unwrap();
    assert!(c.mu > 0.0 && c.nu > 0.0 && c.rho > 0.0 && c.varrho > 0.0);
}

#[test]
fn mismatched_grid_is_rejected() {
    let p = manufactured_problem(0.5);
    let g = GridSpec::new(0.0, 3.0, 10, 1.0, 10, 0.5).unwrap();
    assert!(matches!(
        solve_linear(&p, &g, &SolveConfig::direct()),
        Err(Error::Configuration(_))
    ));
    assert!(GridSpec::new(0.0, 1.0, 1, 1.0, 10, 0.5).is_err());
    assert!(GridSpec::new(0.0, 1.0, 10, 1.0, 10, 1.5).is_err());
}
