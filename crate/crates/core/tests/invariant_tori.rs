use isodiff::error::Error;
use isodiff::frequency::Frequency;
use isodiff::perturbation::GeneralPerturbation;
use isodiff::tori::{
    flow_residual, flow_residual_offgrid, isotropy_residual, solve_quasiperiodic, symplectic_residual,
    torus_correction, zero_mean_check, TorusSettings,
};
use isodiff::torus::TorusGrid;
use proptest::prelude::*;
use std::f64::consts::FRAC_PI_2;

const GOLDEN: f64 = 1.618_033_988_749_895;

/// cos φ₁ cos q.
fn cos_cos() -> GeneralPerturbation {
    GeneralPerturbation::from_cosines(2, &[(vec![1, 0], 1, 0.5, 0.0), (vec![1, 0], -1, 0.5, 0.0)]).unwrap()
}

/// cos φ₁ sin q.
fn cos_sin() -> GeneralPerturbation {
    GeneralPerturbation::from_cosines(2, &[(vec![1, 0], 1, 0.5, -FRAC_PI_2), (vec![1, 0], -1, 0.5, FRAC_PI_2)]).unwrap()
}

/// A generic mixture in (φ, q).
fn generic() -> GeneralPerturbation {
    GeneralPerturbation::from_cosines(
        2,
        &[
            (vec![1, 0], 1, 0.4, 0.3),
            (vec![0, 1], 0, 0.7, -0.2),
            (vec![1, -1], 2, 0.2, 1.1),
            (vec![2, 1], -1, 0.1, 0.0),
            (vec![0, 0], 1, 0.3, 0.5),
        ],
    )
    .unwrap()
}

fn grid() -> TorusGrid {
    TorusGrid::new(2, 32).unwrap()
}

#[test]
fn unperturbed_torus_is_flat() {
    let freq = Frequency::golden();
    let torus = torus_correction(&freq, &generic(), 0.0, &grid(), &[0.3, -0.2], &TorusSettings::default()).unwrap();
    assert!(torus.orbit.q.iter().chain(&torus.orbit.p).all(|x| *x == 0.0));
    assert!(torus.a.iter().flatten().all(|x| *x == 0.0));
    assert!((torus.energy - (0.3 - 0.2 * GOLDEN)).abs() < 1e-15);
    assert_eq!(torus.energy_spread, 0.0);
    let report = symplectic_residual(&torus, 8, 1);
    assert!(report.max_deviation < 1e-10 && report.isotropy == 0.0, "{report:?}");
}

#[test]
fn phase_independent_perturbation_has_no_action_correction() {
    let f = GeneralPerturbation::from_cosines(2, &[(vec![0, 0], 1, 0.5, 0.0), (vec![0, 0], 2, 0.25, 0.0)]).unwrap();
    let torus = torus_correction(&Frequency::golden(), &f, 1e-3, &grid(), &[0.0, 0.0], &TorusSettings::default()).unwrap();
    assert!(torus.a.iter().flatten().all(|x| x.abs() < 1e-18));
    assert!(torus.g_mean.iter().all(|g| *g == 0.0));
}

/// 6th-order central second derivative.
fn d2(f: impl Fn(f64) -> f64, t: f64, h: f64) -> f64 {
    let c = [-49.0 / 18.0, 1.5, -0.15, 1.0 / 90.0];
    let mut acc = c[0] * f(t);
    for (j, cj) in c.iter().enumerate().skip(1) {
        let s = j as f64 * h;
        acc += cj * (f(t + s) + f(t - s));
    }
    acc / (h * h)
}

#[test]
fn quasi_periodic_solution_linear_response_and_ode() {
    let omega = [1.0, GOLDEN];
    let f = cos_sin();
    let mu = 1e-3;
    let orbit = solve_quasiperiodic(&omega, &f, mu, &grid(), &TorusSettings::default()).unwrap();
    assert!(orbit.residual < 1e-12, "{}", orbit.residual);
    // First order: Q ≈ μ cos ψ₁ / (1 + ω₁²) with a cubic remainder.
    for j in (0..orbit.grid.len()).step_by(37) {
        let psi = orbit.grid.point(j);
        let linear = mu * psi[0].cos() / (1.0 + omega[0] * omega[0]);
        assert!((orbit.q[j] - linear).abs() < 10.0 * mu.powi(3), "{}", orbit.q[j] - linear);
    }
    // Along ψ = ωt + ψ₀ the series solves −q'' + sin q = μ∂_q f.
    let psi0 = [0.4, 2.2];
    let q_at = |t: f64| orbit.q_series.eval(&[psi0[0] + omega[0] * t, psi0[1] + omega[1] * t]);
    let mut worst: f64 = 0.0;
    for t in [0.0, 1.7, 5.3, 11.0] {
        let q = q_at(t);
        let phi = [psi0[0] + omega[0] * t, psi0[1] + omega[1] * t];
        let res = -d2(q_at, t, 0.05) + q.sin() - mu * f.eval(&phi, q).fq;
        worst = worst.max(res.abs());
    }
    assert!(worst < 1e-9, "{worst}");
}

#[test]
fn action_correction_first_order() {
    let freq = Frequency::golden();
    let mu = 1e-3;
    let torus = torus_correction(&freq, &cos_cos(), mu, &grid(), &[0.0, 0.0], &TorusSettings::default()).unwrap();
    // g₁ = sin ψ₁ cos Q ≈ sin ψ₁, so a₁ ≈ −μ cos ψ₁ / ω₁ and a₂ = 0.
    for j in (0..torus.orbit.grid.len()).step_by(29) {
        let psi = torus.orbit.grid.point(j);
        assert!((torus.a[0][j] + mu * psi[0].cos()).abs() < 1e-8);
        assert!(torus.a[1][j].abs() < 1e-18);
    }
    assert!((torus.min_divisor - 1.0).abs() < 1e-12);
}

#[test]
fn flow_residuals_on_and_off_grid() {
    let freq = Frequency::golden();
    for f in [cos_cos(), generic()] {
        let torus = torus_correction(&freq, &f, 1e-3, &grid(), &[0.5, 0.1], &TorusSettings::default()).unwrap();
        let on = flow_residual(&torus, &f);
        assert!(on.max() < 1e-8, "{on:?}");
        let off = flow_residual_offgrid(&torus, &f, 32, 7);
        assert!(off.max() < 1e-8, "{off:?}");
        assert!(torus.energy_spread < 1e-10, "{}", torus.energy_spread);
    }
}

#[test]
fn zero_mean_identity() {
    let omega = [1.0, GOLDEN];
    let settings = TorusSettings::default();
    let flat = solve_quasiperiodic(&omega, &generic(), 0.0, &grid(), &settings).unwrap();
    assert!(zero_mean_check(&flat, &generic()) < 1e-15);
    for mu in [1e-3, 1e-2] {
        let orbit = solve_quasiperiodic(&omega, &generic(), mu, &grid(), &settings).unwrap();
        let mean = zero_mean_check(&orbit, &generic());
        assert!(mean < 1e-9, "{mean}");
    }
}

#[test]
fn straightening_map_is_symplectic() {
    let freq = Frequency::golden();
    for f in [cos_cos(), generic()] {
        let torus = torus_correction(&freq, &f, 1e-3, &grid(), &[0.0, 0.0], &TorusSettings::default()).unwrap();
        let report = symplectic_residual(&torus, 16, 3);
        assert!(report.max_deviation < 1e-7, "{report:?}");
        assert!(report.isotropy < 1e-8, "{report:?}");
        assert!((isotropy_residual(&torus) - report.isotropy).abs() < 1e-15);
    }
}

#[test]
fn resonant_divisor_is_flagged() {
    let freq = Frequency::unchecked(vec![1.0, 1.0], 0.1, 2.5);
    let f = GeneralPerturbation::from_cosines(2, &[(vec![1, -1], 1, 0.5, 0.0), (vec![1, -1], -1, 0.5, 0.0)]).unwrap();
    let err = torus_correction(&freq, &f, 1e-3, &grid(), &[0.0, 0.0], &TorusSettings::default()).unwrap_err();
    assert!(matches!(err, Error::SmallDivisor { .. }), "{err:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn action_correction_has_zero_mean(mu in 1e-4f64..5e-3, i1 in -1.0f64..1.0) {
        let torus = torus_correction(&Frequency::golden(), &generic(), mu, &grid(), &[i1, 0.0], &TorusSettings::default()).unwrap();
        for comp in &torus.a {
            let mean = comp.iter().sum::<f64>() / comp.len() as f64;
            prop_assert!(mean.abs() < 1e-15);
        }
        prop_assert!(flow_residual(&torus, &generic()).max() < 1e-8);
    }
}
