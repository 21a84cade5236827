use isodiff::error::Error;
use isodiff::frequency::{alpha_net_time, diophantine_scan, torus_distance, Frequency};
use isodiff::grid::TimeGrid;
use isodiff::perturbation::{GeneralPerturbation, PerturbationSeries};
use isodiff::separatrix::{separatrix, separatrix_complex};
use num_complex::Complex64;
use proptest::prelude::*;
use std::f64::consts::{FRAC_PI_2, PI};

const GOLDEN: f64 = 1.618_033_988_749_895;

/// q''(z) by the Cauchy integral on a circle of radius r, trapezoid rule with m nodes.
fn cauchy_second_derivative(z: Complex64, r: f64, m: usize) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..m {
        let angle = 2.0 * PI * j as f64 / m as f64;
        let e = Complex64::from_polar(1.0, angle);
        let (q, _) = separatrix_complex(z + e * r).unwrap();
        acc += q / (e * e);
    }
    acc * 2.0 / (r * r * m as f64)
}

#[test]
fn separatrix_reference_values() {
    let (q, dq) = separatrix(0.0);
    assert!((q - PI).abs() < 1e-15 && (dq - 2.0).abs() < 1e-15);
    let (q, dq) = separatrix(1.0);
    assert!((q - 4.0 * 1f64.exp().atan()).abs() < 1e-14);
    assert!((dq - 2.0 / 1f64.cosh()).abs() < 1e-14);
    assert!((q - 4.873_131_620_069_111).abs() < 1e-14, "{q}");
    assert!((dq - 1.296_108_547_327_771).abs() < 1e-14, "{dq}");
    let (q, dq) = separatrix(60.0);
    assert!((q - 2.0 * PI).abs() < 1e-12 && dq.abs() < 1e-12);
}

#[test]
fn complex_separatrix_solves_pendulum_equation() {
    let z = Complex64::new(1.0, 0.5);
    let (q, _) = separatrix_complex(z).unwrap();
    let qdd = cauchy_second_derivative(z, 0.2, 128);
    let residual = (-qdd + q.sin()).norm();
    assert!(residual < 1e-12, "{residual}");

    let z = Complex64::new(0.0, FRAC_PI_2 - 0.1);
    let (q, dq) = separatrix_complex(z).unwrap();
    assert!((dq.norm() - 2.0 / 0.1f64.sin()).abs() < 1e-10, "{}", dq.norm());
    let qdd = cauchy_second_derivative(z, 0.05, 256);
    let residual = (-qdd + q.sin()).norm() / qdd.norm();
    assert!(residual < 1e-10, "{residual}");

    let (q, dq) = separatrix_complex(Complex64::new(0.0, 0.0)).unwrap();
    assert!((q - PI).norm() < 1e-15 && (dq - 2.0).norm() < 1e-15);
}

#[test]
fn strip_violation_is_a_domain_error() {
    let err = separatrix_complex(Complex64::new(0.3, FRAC_PI_2)).unwrap_err();
    assert!(matches!(err, Error::StripViolation { .. }), "{err:?}");
}

#[test]
fn resonant_frequency_is_reported() {
    match diophantine_scan(&[1.0, 1.0], 2.5, 2) {
        Err(Error::Resonance { k, .. }) => assert!(k == vec![1, -1] || k == vec![-1, 1], "{k:?}"),
        other => panic!("{other:?}"),
    }
    assert!(Frequency::new(vec![1.0, 1.0], 0.1, 2.5, 4).is_err());
}

#[test]
fn golden_scan_matches_brute_force_and_picks_fibonacci_pair() {
    let omega = [1.0, GOLDEN];
    let tau = 2.01;
    let scan = diophantine_scan(&omega, tau, 50).unwrap();
    let mut best = f64::INFINITY;
    for k1 in -50i64..=50 {
        for k2 in -50i64..=50 {
            let l1 = k1.abs() + k2.abs();
            if l1 == 0 || l1 > 50 {
                continue;
            }
            let g = (k1 as f64 * omega[0] + k2 as f64 * omega[1]).abs() * (l1 as f64).powf(tau);
            best = best.min(g);
        }
    }
    assert!(scan.gamma_emp > 0.0);
    assert!((scan.gamma_emp - best).abs() < 1e-12 * best, "{} vs {best}", scan.gamma_emp);
    let mut fib = vec![0i64, 1];
    while fib.len() < 20 {
        let next = fib[fib.len() - 1] + fib[fib.len() - 2];
        fib.push(next);
    }
    let (a, b) = (scan.worst_k[0].abs(), scan.worst_k[1].abs());
    let consecutive = fib.windows(2).any(|w| (w[0] == b && w[1] == a) || (w[0] == a && w[1] == b));
    assert!(consecutive, "{:?}", scan.worst_k);
}

#[test]
fn one_dimensional_scan_is_one() {
    for k in [1, 5, 40] {
        for tau in [0.5, 3.0] {
            let scan = diophantine_scan(&[1.0], tau, k).unwrap();
            assert_eq!(scan.gamma_emp, 1.0);
            assert_eq!(scan.worst_k[0].abs(), 1);
        }
    }
}

#[test]
fn frequency_rejects_small_tau() {
    assert!(Frequency::new(vec![1.0, GOLDEN], 0.1, 2.0, 10).is_err());
    assert!(Frequency::new(vec![1.0, GOLDEN], 0.1, 2.01, 10).is_ok());
}

#[test]
fn alpha_net_examples() {
    assert_eq!(alpha_net_time(&[1.0, GOLDEN], 0.1, 0.0, 1.0).unwrap(), 0.0);

    let theta = alpha_net_time(&[1.0, GOLDEN], 0.2, 1.0, 200.0).unwrap();
    assert!((1.0..=200.0).contains(&theta));
    assert!(torus_distance(&[theta, theta * GOLDEN]) < 0.2);

    let theta = alpha_net_time(&[1.0], 0.1, 5.0, 10.0).unwrap();
    assert!((theta - 2.0 * PI).abs() < 0.1, "{theta}");

    match alpha_net_time(&[1.0], 0.1, 1.0, 2.0) {
        Err(Error::IntervalTooShort { scan_min, .. }) => assert!((scan_min - 1.0).abs() < 0.1 / 4.0 + 1e-12),
        other => panic!("{other:?}"),
    }
}

#[test]
fn time_grid_nodes_and_weights() {
    let grid = TimeGrid::new(-56.0, 0.02, 5600).unwrap();
    let nodes: Vec<f64> = grid.nodes().collect();
    assert!(nodes.windows(2).all(|w| w[1] > w[0]));
    assert!(grid.weights().iter().all(|w| *w > 0.0));
    assert!((-0.5 * grid.end()).exp() < 1e-12);
    let gauss: Vec<f64> = nodes.iter().map(|t| (-t * t).exp()).collect();
    assert!((grid.integrate(&gauss) - PI.sqrt()).abs() < 1e-13);
}

#[test]
fn reality_constraint_is_enforced() {
    let bad = PerturbationSeries::new(1, [(vec![1], Complex64::new(1.0, 0.0))], vec![0.5]);
    assert!(bad.is_err());
    let good = PerturbationSeries::new(
        1,
        [(vec![1], Complex64::new(0.5, 0.2)), (vec![-1], Complex64::new(0.5, -0.2))],
        vec![0.5],
    )
    .unwrap();
    let phi = 0.7;
    assert!((good.eval(&[phi]) - (phi.cos() - 0.4 * phi.sin())).abs() < 1e-15);

    let bad = GeneralPerturbation::new(1, [((vec![1], 1), Complex64::new(1.0, 0.0))]);
    assert!(bad.is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn separatrix_energy_is_zero(t in -30.0f64..30.0) {
        let (q, dq) = separatrix(t);
        prop_assert!((0.5 * dq * dq + q.cos() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn complex_extension_agrees_on_real_axis(t in -30.0f64..30.0) {
        let (q, dq) = separatrix(t);
        let (qc, dqc) = separatrix_complex(Complex64::new(t, 0.0)).unwrap();
        prop_assert!((qc.re - q).abs() < 1e-14 && qc.im.abs() < 1e-14);
        prop_assert!((dqc.re - dq).abs() < 1e-14 && dqc.im.abs() < 1e-14);
    }

    #[test]
    fn alpha_net_hit_satisfies_distance(ratio in 1.1f64..3.0, alpha in 0.05f64..0.5, lo in 0.0f64..50.0) {
        let omega = [1.0, ratio];
        if let Ok(theta) = alpha_net_time(&omega, alpha, lo, lo + 2000.0) {
            prop_assert!(theta >= lo && theta <= lo + 2000.0);
            prop_assert!(torus_distance(&[theta, theta * ratio]) < alpha);
        }
    }

    #[test]
    fn diophantine_scan_is_monotone(ratio in 1.05f64..3.0, k in 1usize..20) {
        let omega = [1.0, ratio];
        if let (Ok(a), Ok(b)) = (diophantine_scan(&omega, 2.5, k), diophantine_scan(&omega, 2.5, k + 1)) {
            prop_assert!(b.gamma_emp <= a.gamma_emp);
        }
    }
}
