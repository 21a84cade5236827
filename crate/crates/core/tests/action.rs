use isodiff::action::{
    action_one_bump, action_trace, homoclinic_f, homoclinic_g, melnikov_gamma, melnikov_general, MELNIKOV_SIGN,
};
use isodiff::conjugacy::{conjugacy_check, torus_conjugacy};
use isodiff::error::Error;
use isodiff::fit::{fit_exponential, fit_power};
use isodiff::frequency::Frequency;
use isodiff::kbump::{action_k_bump, heteroclinic_value, k_bump_trace, solve_k_bump};
use isodiff::onebump::solve_one_bump;
use isodiff::perturbation::{GeneralPerturbation, PerturbationSeries};
use isodiff::reduced::{reduced_action, section_shift, solve_reduced};
use isodiff::separatrix::separatrix;
use isodiff::spectral::first_order_check;
use isodiff::system::{OrbitSettings, PendulumSystem};
use isodiff::torus::TorusGrid;
use num_complex::Complex64;
use proptest::prelude::*;
use std::f64::consts::{FRAC_PI_2, PI};

const GOLDEN: f64 = 1.618_033_988_749_895;

fn system_with(n: usize, omega: Vec<f64>, terms: &[(Vec<i64>, f64, f64)]) -> PendulumSystem {
    let f = PerturbationSeries::from_cosines(n, terms, vec![1.0; n]).unwrap();
    PendulumSystem::new(Frequency::unchecked(omega, 0.1, n as f64 + 0.01), f)
}

fn golden_system() -> PendulumSystem {
    system_with(2, vec![1.0, GOLDEN], &[(vec![1, 0], 1.0, 0.0), (vec![0, 1], 1.0, 0.0)])
}

fn pendulum_cosine() -> PendulumSystem {
    system_with(1, vec![1.0], &[(vec![1], 1.0, 0.0)])
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn step(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// Γ from the closed-form coefficients Γ_k = f_k·2π(k·ω)/sinh((k·ω)π/2), Γ₀ = 4f₀, at a complex phase.
fn gamma_closed_form(omega: &[f64], f: &PerturbationSeries, b: &[Complex64]) -> Complex64 {
    f.modes()
        .map(|(k, c)| {
            let x: f64 = k.iter().zip(omega).map(|(ki, w)| *ki as f64 * w).sum();
            let weight = if x == 0.0 { 4.0 } else { 2.0 * PI * x / (0.5 * PI * x).sinh() };
            let phase: Complex64 = k.iter().zip(b).map(|(ki, bi)| bi * *ki as f64).sum();
            c * weight * (Complex64::i() * phase).exp()
        })
        .sum()
}

fn shifted(a: &[f64], dir: usize, h: f64) -> Vec<f64> {
    let mut out = a.to_vec();
    out[dir] += h;
    out
}

#[test]
fn unperturbed_action_is_eight() {
    let oracle = adaptive_simpson(&|t: f64| 4.0 / t.cosh().powi(2), -40.0, 40.0, 1e-14);
    assert!((oracle - 8.0).abs() < 1e-12, "{oracle}");
    let system = golden_system();
    let settings = OrbitSettings::default();
    for a in [[0.0, 0.0], [1.3, -2.2], [3.0, 0.5]] {
        let v = homoclinic_f(&system, 0.0, &a, 0.4, &settings).unwrap();
        assert!((v.value - oracle).abs() < 1e-10, "{}", v.value);
        assert!(v.dtheta[0].abs() < 1e-12 && v.da.iter().all(|d| *d == 0.0));
        assert!((homoclinic_g(&system, 0.0, &a, &settings).unwrap() - 8.0).abs() < 1e-10);
    }
}

#[test]
fn action_derivatives_match_finite_differences() {
    let system = system_with(2, vec![1.0, GOLDEN], &[(vec![1, 0], 1.0, 0.0)]);
    let settings = OrbitSettings::default();
    let mu = 1e-3;
    let h = 1e-4;
    let (a, theta) = ([0.7, -0.3], 0.25);
    let v = homoclinic_f(&system, mu, &a, theta, &settings).unwrap();
    assert!(v.quadrature_error < 1e-10, "{}", v.quadrature_error);
    for j in 0..2 {
        let fp = homoclinic_f(&system, mu, &shifted(&a, j, h), theta, &settings).unwrap().value;
        let fm = homoclinic_f(&system, mu, &shifted(&a, j, -h), theta, &settings).unwrap().value;
        assert!((v.da[j] - (fp - fm) / (2.0 * h)).abs() < 1e-6);
    }
    let fp = homoclinic_f(&system, mu, &a, theta + h, &settings).unwrap().value;
    let fm = homoclinic_f(&system, mu, &a, theta - h, &settings).unwrap().value;
    assert!((v.dtheta[0] - (fp - fm) / (2.0 * h)).abs() < 1e-6);
}

#[test]
fn homoclinic_function_invariance_and_periodicity() {
    let system = golden_system();
    let settings = OrbitSettings::default();
    let mu = 1e-3;
    let a = [0.9, 2.1];
    let moved: Vec<f64> = a.iter().zip(system.omega()).map(|(x, w)| x + 1.3 * w).collect();
    let f = homoclinic_f(&system, mu, &a, 1.3, &settings).unwrap().value;
    let g = homoclinic_g(&system, mu, &moved, &settings).unwrap();
    assert!((f - g).abs() < 1e-9, "{}", f - g);
    let base = homoclinic_g(&system, mu, &a, &settings).unwrap();
    for j in 0..2 {
        let p = homoclinic_g(&system, mu, &shifted(&a, j, 2.0 * PI), &settings).unwrap();
        assert!((p - base).abs() < 1e-12);
    }
}

#[test]
fn melnikov_primitive_examples() {
    let c = 0.37;
    let constant = PerturbationSeries::from_cosines(1, &[(vec![0], c, 0.0)], vec![1.0]).unwrap();
    let oracle = adaptive_simpson(&|t: f64| 2.0 * c / t.cosh().powi(2), -40.0, 40.0, 1e-14);
    assert!((melnikov_gamma(&[1.0], &constant, &[0.3]) - oracle).abs() < 1e-12);
    assert!((oracle - 4.0 * c).abs() < 1e-12);

    let system = pendulum_cosine();
    let expected = gamma_closed_form(&[1.0], &system.f, &[Complex64::new(0.0, 0.0)]).re;
    assert!((expected - 2.0 * PI / (0.5 * PI).sinh()).abs() < 1e-14);
    assert!((expected - 2.7303).abs() < 5e-5);
    assert!((melnikov_gamma(&[1.0], &system.f, &[0.0]) - expected).abs() < 1e-10);
    assert!((melnikov_gamma(&[1.0], &system.f, &[PI]) + expected).abs() < 1e-10);
}

#[test]
fn general_melnikov_cross_checks() {
    let q_free = GeneralPerturbation::from_cosines(2, &[(vec![1, 0], 0, 1.0, 0.2), (vec![1, -1], 0, 0.5, 0.0)]).unwrap();
    assert!(melnikov_general(&[1.0, GOLDEN], &q_free, &[0.3, 0.4]).abs() < 1e-15);

    let series = PerturbationSeries::from_cosines(1, &[(vec![1], 1.0, 0.0)], vec![1.0]).unwrap();
    let product = GeneralPerturbation::from_product(&series);
    for a in [0.0, 0.8, 2.0, PI] {
        let m = melnikov_general(&[1.0], &product, &[a]);
        let g = melnikov_gamma(&[1.0], &series, &[a]);
        assert!((m.abs() - g.abs()).abs() < 1e-10);
        assert!((m - g).abs() < 1e-10, "product case M = Γ");
    }

    let cos_q = GeneralPerturbation::from_cosines(1, &[(vec![1], 1, 0.5, 0.0), (vec![1], -1, 0.5, 0.0)]).unwrap();
    let amplitude = adaptive_simpson(&|t: f64| (separatrix(t).0.cos() - 1.0) * t.cos(), -40.0, 40.0, 1e-14);
    for a in [0.0, 1.1, 2.5] {
        let m = melnikov_general(&[1.0], &cos_q, &[a]);
        assert!((m - amplitude * a.cos()).abs() < 1e-10, "{m} vs {}", amplitude * a.cos());
    }
}

#[test]
fn first_order_expansion_and_sign() {
    let system = pendulum_cosine();
    let settings = OrbitSettings::default();
    let grid = TorusGrid::new(1, 16).unwrap();
    let report = first_order_check(&system, &[1e-2, 3e-3, 1e-3], &grid, &settings).unwrap();
    assert!((report.fit.slope - 2.0).abs() < 0.15, "{:?}", report.fit);
    for row in &report.rows {
        assert!(row.argmin_distance <= grid.spacing() + 1e-12);
    }
    // Independent sign pin: G_μ(0) − G_μ(π) against μ(Γ(0) − Γ(π)).
    let mu = 1e-4;
    let dg = homoclinic_g(&system, mu, &[0.0], &settings).unwrap() - homoclinic_g(&system, mu, &[PI], &settings).unwrap();
    let dgamma = melnikov_gamma(&[1.0], &system.f, &[0.0]) - melnikov_gamma(&[1.0], &system.f, &[PI]);
    assert!((dg / (mu * dgamma) - MELNIKOV_SIGN).abs() < 1e-2, "{}", dg / (mu * dgamma));
}

#[test]
fn k_bump_action_decomposition() {
    let system = golden_system();
    let settings = OrbitSettings::default();
    let a = [0.3, 1.2];

    let one = homoclinic_f(&system, 1e-3, &a, 0.4, &settings).unwrap().value;
    let orbit = solve_k_bump(&system, 1e-3, &a, &[0.4], &settings, None).unwrap();
    let single = action_k_bump(&system, &orbit, &settings).unwrap();
    assert!((single.value - one).abs() < 1e-12 && single.remainders == vec![0.0]);

    for k in 2..=4 {
        let thetas: Vec<f64> = (0..k).map(|i| 32.0 * i as f64).collect();
        let orbit = solve_k_bump(&system, 0.0, &a, &thetas, &settings, None).unwrap();
        let act = action_k_bump(&system, &orbit, &settings).unwrap();
        assert!((act.value - 8.0 * k as f64).abs() < 1e-6, "{}", act.value);
    }

    let lengths = [11.0, 14.0, 17.0, 20.0];
    let remainders: Vec<f64> = lengths
        .iter()
        .map(|l| {
            let orbit = solve_k_bump(&system, 1e-3, &a, &[0.0, *l], &settings, None).unwrap();
            let act = action_k_bump(&system, &orbit, &settings).unwrap();
            assert!((act.value - act.direct).abs() < 1e-9);
            act.max_remainder()
        })
        .collect();
    let fit = fit_exponential(&lengths, &remainders).unwrap();
    assert!(fit.slope < 0.0 && fit.r_squared > 0.99, "{fit:?}");
}

#[test]
fn k_bump_translation_invariance() {
    let system = golden_system();
    let settings = OrbitSettings::default();
    let a = [0.3, 1.2];
    let eta = 0.77;
    let thetas = [0.0, 14.0, 29.0];
    let moved_thetas: Vec<f64> = thetas.iter().map(|t| t + eta).collect();
    let moved_a: Vec<f64> = a.iter().zip(system.omega()).map(|(x, w)| x + eta * w).collect();
    let x = solve_k_bump(&system, 1e-3, &a, &moved_thetas, &settings, None).unwrap();
    let y = solve_k_bump(&system, 1e-3, &moved_a, &thetas, &settings, None).unwrap();
    let fx = action_k_bump(&system, &x, &settings).unwrap().value;
    let fy = action_k_bump(&system, &y, &settings).unwrap().value;
    assert!((fx - fy).abs() < 1e-9, "{}", fx - fy);
}

#[test]
fn heteroclinic_function_gradient_and_energy_relation() {
    let system = golden_system();
    let settings = OrbitSettings::default();
    let mu = 1e-3;
    let a = [0.3, 1.2];
    let thetas = [0.0, 13.0];
    let orbit = solve_k_bump(&system, mu, &a, &thetas, &settings, None).unwrap();
    let counts = orbit.node_counts();

    let plain = heteroclinic_value(&system, &orbit, &[0.0, 0.0], 1e-12).unwrap();
    let fk = action_k_bump(&system, &orbit, &settings).unwrap();
    assert!((plain.value - fk.direct).abs() < 1e-14);

    let omega = system.omega();
    let norm = (omega[0] * omega[0] + omega[1] * omega[1]).sqrt();
    let jump = [-0.05 * omega[1] / norm, 0.05 * omega[0] / norm];
    let g = heteroclinic_value(&system, &orbit, &jump, 1e-12).unwrap();
    let value = |a: &[f64], th: &[f64]| {
        let o = solve_k_bump(&system, mu, a, th, &settings, Some(&counts)).unwrap();
        heteroclinic_value(&system, &o, &jump, 1e-12).unwrap().value
    };
    let h = 1e-4;
    for j in 0..2 {
        let fd = (value(&shifted(&a, j, h), &thetas) - value(&shifted(&a, j, -h), &thetas)) / (2.0 * h);
        assert!((g.da[j] - fd).abs() < 1e-6, "dA[{j}] {} vs {fd}", g.da[j]);
    }
    for i in 0..2 {
        let fd = (value(&a, &shifted(&thetas, i, h)) - value(&a, &shifted(&thetas, i, -h))) / (2.0 * h);
        assert!((g.dtheta[i] - fd).abs() < 1e-6, "dθ[{i}] {} vs {fd}", g.dtheta[i]);
    }

    let err = heteroclinic_value(&system, &orbit, &[0.1, 0.0], 1e-12).unwrap_err();
    assert!(matches!(err, Error::EnergyDefect(_)), "{err:?}");
}

#[test]
fn action_trace_jump_matches_phase_derivative() {
    let system = system_with(2, vec![1.0, GOLDEN], &[(vec![1, 0], 1.0, 0.0)]);
    let settings = OrbitSettings::default();
    let a = [0.7, -0.3];
    let i0 = [0.25, -1.5];

    let flat = solve_one_bump(&system, 0.0, &a, 0.0, &settings).unwrap();
    let trace = action_trace(&system, &flat, &i0);
    assert!((0..trace.times.len()).all(|j| trace.action(j) == i0));

    let mu = 1e-3;
    let orbit = solve_one_bump(&system, mu, &a, 0.0, &settings).unwrap();
    let trace = action_trace(&system, &orbit, &i0);
    let h = 1e-4;
    for j in 0..2 {
        let fp = homoclinic_g(&system, mu, &shifted(&a, j, h), &settings).unwrap();
        let fm = homoclinic_g(&system, mu, &shifted(&a, j, -h), &settings).unwrap();
        let jump = trace.last()[j] - i0[j];
        assert!((jump - (fp - fm) / (2.0 * h)).abs() < 1e-8, "{jump}");
        let da = action_one_bump(&system, &orbit).da[j];
        assert!((jump - da).abs() < 1e-9, "{jump} vs {da}");
    }

    let thetas = [0.0, 30.0, 60.0];
    let chain = solve_k_bump(&system, mu, &a, &thetas, &settings, None).unwrap();
    let total = k_bump_trace(&system, &chain, &i0);
    for j in 0..2 {
        let per_bump: f64 = thetas
            .iter()
            .map(|t| homoclinic_f(&system, mu, &a, *t, &settings).unwrap().da[j])
            .sum();
        assert!((total.last()[j] - i0[j] - per_bump).abs() < 1e-8);
    }
}

#[test]
fn reduced_action_basics() {
    let system = golden_system();
    let settings = OrbitSettings::default();
    let flat = solve_reduced::<f64>(&system, 0.0, &[0.4, 0.1], 0.3, &settings).unwrap();
    assert!((reduced_action(&system, &flat).value - 8.0).abs() < 1e-10);

    let a = [Complex64::new(0.4, 0.0), Complex64::new(0.1, 0.0)];
    let orbit = solve_reduced(&system, 1e-3, &a, Complex64::new(0.3, 0.0), &settings).unwrap();
    let act = reduced_action(&system, &orbit);
    assert!(act.value.im.abs() < 1e-12 && act.dtheta.im.abs() < 1e-12);

    let eta = 0.9;
    let base = [0.4, 0.1];
    let moved: Vec<f64> = base.iter().zip(system.omega()).map(|(x, w)| x + eta * w).collect();
    let x = reduced_action(&system, &solve_reduced::<f64>(&system, 1e-3, &base, 0.3 + eta, &settings).unwrap());
    let y = reduced_action(&system, &solve_reduced::<f64>(&system, 1e-3, &moved, 0.3, &settings).unwrap());
    assert!((x.value - y.value).abs() < 1e-9);
}

#[test]
fn complex_reduced_action_is_first_order_melnikov() {
    let system = golden_system();
    let settings = OrbitSettings::default();
    let delta = 0.5;
    let theta = Complex64::new(0.0, FRAC_PI_2 - delta);
    let a = [Complex64::new(0.3, 0.0), Complex64::new(-0.8, 0.0)];
    let phase: Vec<Complex64> = a.iter().zip(system.omega()).map(|(x, w)| x + theta * w).collect();
    let gamma = gamma_closed_form(system.omega(), &system.f, &phase);
    let mus = [2e-3, 1e-3, 5e-4, 2.5e-4];
    let defects: Vec<f64> = mus
        .iter()
        .map(|mu| {
            let orbit = solve_reduced(&system, *mu, &a, theta, &settings).unwrap();
            let value = reduced_action(&system, &orbit).value;
            (value - 8.0 - MELNIKOV_SIGN * mu * gamma).norm()
        })
        .collect();
    let fit = fit_power(&mus, &defects).unwrap();
    assert!((fit.slope - 2.0).abs() < 0.15, "{fit:?} {defects:?}");
}

#[test]
fn section_shift_is_order_mu() {
    let system = golden_system();
    let settings = OrbitSettings::default();
    let flat = solve_reduced::<f64>(&system, 0.0, &[0.1, 0.2], 0.0, &settings).unwrap();
    assert_eq!(section_shift(&flat).unwrap(), 0.0);
    let mu = 1e-3;
    let mut worst: f64 = 0.0;
    for a1 in [0.0, 2.0, 4.0] {
        for a2 in [0.5, 3.0] {
            let orbit = solve_reduced::<f64>(&system, mu, &[a1, a2], 0.0, &settings).unwrap();
            let l = section_shift(&orbit).unwrap();
            let (w, _) = orbit.w_at(l);
            let q = separatrix(l - orbit.nu).0 + w;
            assert!((q - PI).abs() < 1e-12);
            worst = worst.max(l.abs() / mu);
        }
    }
    assert!(worst > 0.0 && worst < 10.0, "{worst}");
}

/// θ in [lo, hi] where ∂_θF̃(A, ·) vanishes, by bisection.
fn reduced_critical_theta(system: &PendulumSystem, mu: f64, a: &[f64], mut lo: f64, mut hi: f64) -> f64 {
    let settings = OrbitSettings::default();
    let d = |t: f64| reduced_action(system, &solve_reduced::<f64>(system, mu, a, t, &settings).unwrap()).dtheta;
    let mut dlo = d(lo);
    assert!(dlo * d(hi) < 0.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let dm = d(mid);
        if dm * dlo > 0.0 {
            lo = mid;
            dlo = dm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn conjugacy_at_critical_points_and_on_a_grid() {
    let system = pendulum_cosine();
    let settings = OrbitSettings::default();
    let mu = 1e-3;
    // F̃(A, θ) ≈ 8 − μΓ(A + θ) is stationary in θ near A + θ = 0.
    let theta = reduced_critical_theta(&system, mu, &[0.0], -0.5, 0.5);
    let report = conjugacy_check(&system, mu, &[0.0], theta, &settings).unwrap();
    assert!((report.f_tilde - report.v).abs() < 1e-10, "{}", report.f_tilde - report.v);
    assert!(report.h.abs() < 1e-5, "{}", report.h);

    let golden = golden_system();
    let mut ratios = Vec::new();
    for mu in [1e-3, 1e-2] {
        let mut worst: f64 = 0.0;
        for a1 in [0.5, 2.5, 4.5] {
            for a2 in [1.0, 3.5, 5.5] {
                let r = conjugacy_check(&golden, mu, &[a1, a2], 0.0, &settings).unwrap();
                if let Some(ratio) = r.ratio {
                    worst = worst.max(ratio);
                }
                assert!(r.root_defect < 1e-11);
            }
        }
        ratios.push(worst);
    }
    assert!(ratios.iter().all(|r| *r > 0.0 && r.is_finite()));
    assert!(ratios[1] / ratios[0] < 2.0 && ratios[0] / ratios[1] < 2.0, "{ratios:?}");

    for a1 in [0.0, 2.1, 4.2] {
        for a2 in [0.0, 3.0] {
            let c = torus_conjugacy(&golden, 1e-3, &[a1, a2], &settings).unwrap();
            assert!(c.defect < 1e-8, "{c:?}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn translation_invariance_of_f(a1 in 0.0f64..6.3, a2 in 0.0f64..6.3, theta in -2.0f64..2.0, eta in -3.0f64..3.0) {
        let system = golden_system();
        let settings = OrbitSettings::default();
        let moved = [a1 + eta, a2 + eta * GOLDEN];
        let x = homoclinic_f(&system, 1e-3, &[a1, a2], theta + eta, &settings).unwrap().value;
        let y = homoclinic_f(&system, 1e-3, &moved, theta, &settings).unwrap().value;
        prop_assert!((x - y).abs() < 1e-9);
    }

    #[test]
    fn analytic_gradient_matches_central_differences(a1 in 0.0f64..6.3, a2 in 0.0f64..6.3, theta in -1.0f64..1.0) {
        let system = golden_system();
        let settings = OrbitSettings::default();
        let mu = 1e-3;
        let h = 1e-4;
        let a = [a1, a2];
        let v = homoclinic_f(&system, mu, &a, theta, &settings).unwrap();
        let tol = 1e-6f64.max(10.0 * h * h);
        for j in 0..2 {
            let fp = homoclinic_f(&system, mu, &shifted(&a, j, h), theta, &settings).unwrap().value;
            let fm = homoclinic_f(&system, mu, &shifted(&a, j, -h), theta, &settings).unwrap().value;
            prop_assert!((v.da[j] - (fp - fm) / (2.0 * h)).abs() < tol);
        }
        let fp = homoclinic_f(&system, mu, &a, theta + h, &settings).unwrap().value;
        let fm = homoclinic_f(&system, mu, &a, theta - h, &settings).unwrap().value;
        prop_assert!((v.dtheta[0] - (fp - fm) / (2.0 * h)).abs() < tol);
    }

    #[test]
    fn homoclinic_function_is_periodic(a1 in 0.0f64..6.3, a2 in 0.0f64..6.3, k1 in -3i64..3, k2 in -3i64..3) {
        let system = golden_system();
        let settings = OrbitSettings::default();
        let x = homoclinic_g(&system, 1e-3, &[a1, a2], &settings).unwrap();
        let y = homoclinic_g(&system, 1e-3, &[a1 + 2.0 * PI * k1 as f64, a2 + 2.0 * PI * k2 as f64], &settings).unwrap();
        prop_assert!((x - y).abs() < 1e-11);
    }
}
