mod common;

use fastcaputo::quadrature::{gauss_jacobi_power, gauss_legendre};
use fastcaputo::soe::{
    build_soe, build_soe_planned, certify_soe, eval_soe, log_samples, merge_terms, plan_build, reduce_soe,
    select_cutoff, DEFAULT_CERT_SAMPLES,
};
use fastcaputo::special::gamma;
use fastcaputo::{Error, SumOfExponentials};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

#[test]
fn cutoff_matches_mpmath_roots() {
    // mpmath.findroot on 5 exp(-delta p) p^2 = eps, decreasing branch
    assert!(rel(select_cutoff(1e-3, 1e-9).unwrap(), 43703.050099322933) < 1e-12);
    assert!(rel(select_cutoff(1.0, 0.3).unwrap(), 6.5821264362169844) < 1e-12);
}

#[test]
fn cutoff_satisfies_bound_and_is_smallest() {
    for &(delta, eps) in &[(1e-3, 1e-6), (1e-2, 1e-3), (0.1, 1e-12)] {
        let p = select_cutoff(delta, eps).unwrap();
        let bound = |p: f64| 5.0 * (-delta * p).exp() * p * p;
        assert!(p >= 1.0 / delta);
        assert!(bound(p) <= eps);
        assert!(bound(p * (1.0 - 1e-9)) > eps);
    }
}

#[test]
fn cutoff_rejects_out_of_range_arguments() {
    assert!(matches!(select_cutoff(0.0, 1e-6), Err(Error::Input(_))));
    assert!(matches!(select_cutoff(2.0, 1e-6), Err(Error::Input(_))));
    assert!(matches!(select_cutoff(1e-3, 0.5), Err(Error::Input(_))));
}

#[test]
fn unit_horizon_has_no_small_panels() {
    let plan = plan_build(1.5, 1e-3, 1.0, 1e-6).unwrap();
    assert_eq!(plan.m_low, -1);
    let ten = plan_build(1.5, 1e-3, 10.0, 1e-6).unwrap();
    assert_eq!(ten.m_low, -5);
}

#[test]
fn plan_top_panel_covers_cutoff() {
    let plan = plan_build(1.5, 1e-3, 1.0, 1e-6).unwrap();
    let p = select_cutoff(1e-3, 0.5e-6).unwrap();
    assert_eq!(plan.cutoff_p, p);
    assert_eq!(plan.n_high, p.log2().ceil() as i32);
    assert!(2f64.powi(plan.n_high) <= p.max(1.0) * 2.0);
    assert!(2f64.powi(plan.m_low) <= 1.0 && 1.0 <= 2f64.powi(plan.n_high + 1));
}

#[test]
fn plan_orders_never_shrink_with_eps() {
    let mut prev = plan_build(1.2, 1e-3, 10.0, 1e-2).unwrap();
    for eps in [1e-3, 1e-5, 1e-7, 1e-9, 1e-11, 1e-13] {
        let plan = plan_build(1.2, 1e-3, 10.0, eps).unwrap();
        assert!(plan.n_end >= prev.n_end && plan.n_small >= prev.n_small && plan.n_large >= prev.n_large);
        prev = plan;
    }
}

#[test]
fn build_is_certified_on_dense_samples() {
    let soe = build_soe(1.5, 1e-3, 1.0, 1e-6).unwrap();
    assert!(soe.certified_error() <= 1e-6);
    assert!(!soe.is_empty());
    assert!(soe.exponents().windows(2).all(|w| w[0] < w[1]));
    assert!(soe.exponents().iter().all(|&s| s >= 0.0));
    assert!(soe.weights().iter().all(|&w| w > 0.0));
    let mut copy = soe.clone();
    assert!(certify_soe(&mut copy, DEFAULT_CERT_SAMPLES) <= 1e-6);
}

#[test]
fn build_holds_off_the_certification_grid() {
    // plain summation at random times not on the log grid
    let eps = 1e-6;
    let soe = build_soe(1.5, 1e-3, 1.0, eps).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20_000 {
        let t = (rng.gen_range((1e-3f64).ln()..0.0)).exp();
        let approx: f64 = soe.terms().map(|(s, w)| w * (-s * t).exp()).sum();
        assert!((approx - t.powf(-1.5)).abs() <= 1.05 * eps, "t = {t}");
    }
}

#[test]
fn value_at_delta_matches_power() {
    let soe = build_soe(1.5, 1e-3, 1.0, 1e-6).unwrap();
    assert!((eval_soe(&soe, 1e-3) - 10f64.powf(4.5)).abs() <= 1e-6);
}

#[test]
fn eval_decreases_strictly() {
    let soe = build_soe(1.2, 1e-3, 10.0, 1e-6).unwrap();
    let ts = log_samples(1e-3, 10.0, 2000);
    let vals: Vec<f64> = ts.iter().map(|&t| soe.eval(t)).collect();
    assert!(vals.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn single_flat_term_evaluates_to_one() {
    let soe = SumOfExponentials::from_terms(1.5, 0.1, 1.0, 1.0, vec![(0.0, 1.0)]).unwrap();
    for t in [0.1, 0.5, 1.0, 100.0] {
        assert_eq!(soe.eval(t), 1.0);
    }
}

#[test]
fn weight_perturbation_breaks_certificate() {
    let eps = 1e-6;
    let soe = build_soe(1.5, 1e-3, 1.0, eps).unwrap();
    let mut terms: Vec<(f64, f64)> = soe.terms().collect();
    terms[0].1 += 2.0 * eps;
    let mut bad = SumOfExponentials::from_terms(1.5, 1e-3, 1.0, eps, terms).unwrap();
    assert!(bad.certify(DEFAULT_CERT_SAMPLES) > eps);
}

#[test]
fn samples_include_both_endpoints() {
    let ts = log_samples(1e-3, 10.0, 1000);
    assert_eq!(ts.len(), 1000);
    assert_eq!(ts[0], 1e-3);
    assert_eq!(ts[999], 10.0);
    assert!(ts.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn reduction_keeps_certificate_and_shrinks() {
    for &(beta, eps, horizon) in &[(1.2, 1e-3, 1.0), (1.5, 1e-6, 1.0), (1.5, 1e-9, 10.0)] {
        let raw = build_soe(beta, 1e-3, horizon, eps).unwrap();
        let reduced = reduce_soe(&raw, eps);
        assert!(reduced.len() <= raw.len());
        assert!(reduced.len() < raw.len(), "no reduction for beta={beta} eps={eps}");
        assert!(reduced.certified_error() <= eps);
        let mut check = reduced.clone();
        assert!(check.certify(DEFAULT_CERT_SAMPLES) <= eps);
        assert!(reduced.exponents().windows(2).all(|w| w[0] < w[1]));
        assert!(reduced.weights().iter().all(|&w| w > 0.0));
    }
}

#[test]
fn reduction_below_tolerance_is_identity() {
    let raw = build_soe(1.5, 1e-3, 1.0, 1e-6).unwrap();
    assert_eq!(reduce_soe(&raw, 1e-7), raw);
}

#[test]
fn reduced_counts_stay_near_published_table() {
    // published counts after reduction for T/dt = 1e3
    for &(alpha, eps, published) in &[(0.2, 1e-3, 27), (0.5, 1e-6, 42), (0.5, 1e-9, 49)] {
        let reduced = build_soe(1.0 + alpha, 1e-3, 1.0, eps).unwrap().reduce(eps);
        assert!(
            reduced.len() <= 2 * published,
            "alpha={alpha} eps={eps}: {}",
            reduced.len()
        );
    }
}

#[test]
fn equal_exponents_merge_exactly() {
    let (s, w) = merge_terms((3.0, 0.25), (3.0, 0.5), 0.7);
    assert!((s - 3.0).abs() < 1e-15);
    assert!(rel(w, 0.75) < 1e-14);
    let single = SumOfExponentials::from_terms(1.5, 0.1, 1.0, 1.0, vec![(s, w)]).unwrap();
    for t in [0.1, 0.4, 1.0] {
        assert!(rel(single.eval(t), 0.75 * (-3.0 * t).exp()) < 1e-14);
    }
}

#[test]
fn merged_pair_matches_value_and_slope() {
    let (a, b, t0) = ((2.0, 0.3), (5.0, 0.1), 0.4);
    let (s, w) = merge_terms(a, b, t0);
    let value = |t: f64| a.1 * (-a.0 * t).exp() + b.1 * (-b.0 * t).exp();
    let slope = a.0 * a.1 * (-a.0 * t0).exp() + b.0 * b.1 * (-b.0 * t0).exp();
    assert!(rel(w * (-s * t0).exp(), value(t0)) < 1e-14);
    assert!(rel(s * w * (-s * t0).exp(), slope) < 1e-14);
}

#[test]
fn term_count_respects_bound_and_growth_shape() {
    let delta: f64 = 1e-3;
    let mut ratios = Vec::new();
    for alpha in [0.2, 0.5] {
        for eps in [1e-3, 1e-6, 1e-9] {
            for horizon in [1.0, 10.0] {
                let (soe, plan) = build_soe_planned(1.0 + alpha, delta, horizon, eps).unwrap();
                assert!(soe.len() <= plan.term_bound());
                let le = (1.0 / eps).ln();
                let lle = le.ln();
                let shape = le * (lle + (horizon / delta).ln()) + (1.0 / delta).ln() * (lle + (1.0 / delta).ln());
                ratios.push(soe.len() as f64 / shape);
            }
        }
    }
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(hi / lo < 1.5, "ratios {ratios:?}");
    assert!(hi < 2.0, "ratios {ratios:?}");
}

#[test]
fn laplace_tail_obeys_bound() {
    let delta: f64 = 1e-3;
    for beta in [1.2, 1.5, 1.8] {
        for eps in [1e-3, 1e-6, 1e-9] {
            let p = select_cutoff(delta, eps).unwrap();
            let f = |s: f64| (-delta * s).exp() * s.powf(beta - 1.0);
            let tail = common::adaptive_simpson(&f, p, 10.0 * p, 1e-30) / gamma(beta);
            let bound = (-delta * p).exp() * 2f64.powf(beta - 1.0) * (p.powf(beta) / gamma(beta) + delta.powf(-beta));
            assert!(tail <= bound, "beta={beta} eps={eps}: {tail} > {bound}");
            assert!(tail <= eps);
        }
    }
}

#[test]
fn panel_errors_decay_geometrically() {
    let (beta, t) = (1.5, 1e-2);
    let g = gamma(beta);
    let legendre = |n: usize| {
        gauss_legendre(n, 256.0, 512.0)
            .unwrap()
            .integrate(|s| (-t * s).exp() * s.powf(beta - 1.0))
            / g
    };
    let jacobi = |n: usize| {
        gauss_jacobi_power(n, beta - 1.0, 0.5)
            .unwrap()
            .integrate(|s| (-t * s).exp())
            / g
    };
    for rule in [&legendre as &dyn Fn(usize) -> f64, &jacobi] {
        let err = |n: usize| (rule(n) - rule(10 * n)).abs();
        let e2 = err(2);
        let floor = 1e-15 * rule(120).abs();
        for n in 3..=12 {
            assert!(err(n) <= e2 * 0.5f64.powi(n as i32 - 2) + floor, "n={n}");
        }
    }
}

#[test]
fn json_round_trip_is_exact() {
    let soe = build_soe(1.2, 1e-3, 10.0, 1e-6).unwrap().reduce(1e-6);
    let back = SumOfExponentials::from_json(&soe.to_json()).unwrap();
    assert_eq!(back, soe);
    assert!(matches!(SumOfExponentials::from_json("{}"), Err(Error::Input(_))));
}

#[test]
fn construction_reports_failure() {
    // far below the rounding floor of the expansion
    match build_soe(1.8, 1e-3, 10.0, 1e-15) {
        Err(Error::Construction { achieved, tolerance }) => assert!(achieved > tolerance),
        other => panic!("expected construction error, got {other:?}"),
    }
}

#[test]
fn invalid_kernel_arguments() {
    assert!(matches!(build_soe(2.5, 1e-3, 1.0, 1e-6), Err(Error::Input(_))));
    assert!(matches!(build_soe(1.5, 1e-3, 0.5, 1e-6), Err(Error::Input(_))));
    assert!(SumOfExponentials::from_terms(1.5, 0.1, 1.0, 1.0, vec![]).is_err());
    assert!(SumOfExponentials::from_terms(1.5, 0.1, 1.0, 1.0, vec![(1.0, -1.0)]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn built_kernels_are_certified(alpha in 0.05f64..0.95, log_eps in 3.0f64..9.0, log_dt in 1.0f64..4.0) {
        let (eps, delta) = (10f64.powf(-log_eps), 10f64.powf(-log_dt));
        let soe = build_soe(1.0 + alpha, delta, 1.0, eps).unwrap();
        prop_assert!(soe.certified_error() <= eps);
        let mut again = soe.clone();
        prop_assert!(again.certify(20_000) <= eps);
    }

    #[test]
    fn cutoff_is_monotone_in_eps(log_a in 1.0f64..12.0, gap in 0.1f64..3.0, log_dt in 0.0f64..4.0) {
        let delta = 10f64.powf(-log_dt);
        let tight = select_cutoff(delta, 10f64.powf(-(log_a + gap))).unwrap();
        let loose = select_cutoff(delta, 10f64.powf(-log_a)).unwrap();
        prop_assert!(tight >= loose);
    }
}
