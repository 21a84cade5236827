use isodiff::error::Error;
use isodiff::fit::fit_exponential;
use isodiff::fit::fit_power;
use isodiff::frequency::Frequency;
use isodiff::green::{green_halfline, green_interval, GridFunction, Side};
use isodiff::grid::TimeGrid;
use isodiff::kbump::solve_k_bump;
use isodiff::onebump::{solve_one_bump, solve_one_bump_from, OneBumpOrbit};
use isodiff::perturbation::PerturbationSeries;
use isodiff::reduced::{reduced_action, solve_reduced};
use isodiff::separatrix::{psi0, separatrix, separatrix_point};
use isodiff::system::{OrbitSettings, PendulumSystem};
use num_complex::Complex64;
use proptest::prelude::*;
use std::f64::consts::{FRAC_PI_2, PI};

const GOLDEN: f64 = 1.618_033_988_749_895;

fn cosine_system() -> PendulumSystem {
    let f = PerturbationSeries::from_cosines(1, &[(vec![1], 1.0, 0.0)], vec![1.0]).unwrap();
    PendulumSystem::new(Frequency::unchecked(vec![1.0], 1.0, 1.0), f)
}

fn golden_system() -> PendulumSystem {
    let f = PerturbationSeries::from_cosines(2, &[(vec![1, 0], 1.0, 0.0), (vec![0, 1], 1.0, 0.0)], vec![1.0, 1.0])
        .unwrap();
    PendulumSystem::new(Frequency::golden(), f)
}

/// Independent second difference (sixth order) for residual oracles.
fn d2<T: Copy + std::ops::Add<Output = T> + std::ops::Sub<Output = T> + std::ops::Mul<f64, Output = T>>(
    v: &[T],
    j: usize,
    h: f64,
) -> T {
    ((v[j - 3] + v[j + 3]) * 2.0 - (v[j - 2] + v[j + 2]) * 27.0 + (v[j - 1] + v[j + 1]) * 270.0 - v[j] * 490.0)
        * (1.0 / (180.0 * h * h))
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn halfline_green_of_zero_is_zero() {
    let grid = TimeGrid::new(0.0, 0.01, 4000).unwrap();
    let h = GridFunction::from_fn(grid, |_| (0.0, 0.0));
    let u = green_halfline(&h, Side::Right);
    assert!(u.values.iter().all(|v| *v == 0.0));
}

#[test]
fn halfline_green_of_exponential() {
    let grid = TimeGrid::new(0.0, 0.005, 8000).unwrap();
    let h = GridFunction::from_fn(grid, |s| ((-s).exp(), -(-s).exp()));
    let u = green_halfline(&h, Side::Right);
    let err = grid
        .nodes()
        .zip(&u.values)
        .map(|(t, v)| (v - 0.5 * t * (-t).exp()).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-10, "{err}");
    let derr = grid
        .nodes()
        .zip(&u.derivative_values)
        .map(|(t, v)| (v - 0.5 * (1.0 - t) * (-t).exp()).abs())
        .fold(0.0, f64::max);
    assert!(derr < 1e-10, "{derr}");

    let left = TimeGrid::new(-40.0, 0.005, 8000).unwrap();
    let h = GridFunction::from_fn(left, |s| (s.exp(), s.exp()));
    let u = green_halfline(&h, Side::Left);
    let err = left.nodes().zip(&u.values).map(|(t, v)| (v + 0.5 * t * t.exp()).abs()).fold(0.0, f64::max);
    assert!(err < 1e-10, "{err}");
}

#[test]
fn halfline_green_of_shifted_psi0_solves_ode() {
    let step = 0.005;
    let grid = TimeGrid::new(0.0, step, 12000).unwrap();
    let h = GridFunction::from_fn(grid, |s| (psi0(s - 3.0), 0.0));
    let u = green_halfline(&h, Side::Right);
    assert!(u.values[0].abs() < 1e-15);
    let residual = (3..grid.len() - 3)
        .map(|j| (-d2(&u.values, j, step) + u.values[j] - h.values[j]).abs())
        .fold(0.0, f64::max);
    assert!(residual < 1e-10, "{residual}");
    assert!(u.derivative_consistency() < 1e-9);
}

#[test]
fn interval_green_closed_forms() {
    let theta = 3.0;
    let grid = TimeGrid::new(0.0, theta / 3000.0, 3000).unwrap();
    let zero = GridFunction::from_fn(grid, |_| (0.0, 0.0));
    assert!(green_interval(&zero, theta).values.iter().all(|v| *v == 0.0));

    let one = GridFunction::from_fn(grid, |_| (1.0, 0.0));
    let u = green_interval(&one, theta);
    let exact = |t: f64| 1.0 - (t.sinh() + (theta - t).sinh()) / theta.sinh();
    let err = grid.nodes().zip(&u.values).map(|(t, v)| (v - exact(t)).abs()).fold(0.0, f64::max);
    assert!(err < 1e-12, "{err}");
    assert!(u.values[0].abs() < 1e-15 && u.values[grid.len() - 1].abs() < 1e-14);

    let theta = 40.0;
    let grid = TimeGrid::new(0.0, 0.01, 4000).unwrap();
    let one = GridFunction::from_fn(grid, |_| (1.0, 0.0));
    let u = green_interval(&one, theta);
    assert!((u.values[2000] - 1.0).abs() < 1e-8);
}

#[test]
fn unperturbed_one_bump_is_the_separatrix() {
    let system = golden_system();
    let orbit = solve_one_bump(&system, 0.0, &[0.3, 1.1], 0.7, &OrbitSettings::default()).unwrap();
    assert!(orbit.residual < 1e-12, "{}", orbit.residual);
    assert!(orbit.left.w.iter().chain(&orbit.right.w).all(|w| *w == 0.0));
    assert_eq!(orbit.section_value, PI);
}

/// Classical RK4 for q'' = sin q (1 − μ cos(t + a)) with a signed step.
fn shoot(mu: f64, a: f64, q0: f64, p0: f64, steps: usize, h: f64) -> Vec<(f64, f64)> {
    let rhs = |t: f64, q: f64, p: f64| (p, q.sin() * (1.0 - mu * (t + a).cos()));
    let mut out = vec![(0.0, q0)];
    let (mut t, mut q, mut p) = (0.0, q0, p0);
    for _ in 0..steps {
        let k1 = rhs(t, q, p);
        let k2 = rhs(t + 0.5 * h, q + 0.5 * h * k1.0, p + 0.5 * h * k1.1);
        let k3 = rhs(t + 0.5 * h, q + 0.5 * h * k2.0, p + 0.5 * h * k2.1);
        let k4 = rhs(t + h, q + h * k3.0, p + h * k3.1);
        q += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        p += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        t += h;
        out.push((t, q));
    }
    out
}

#[test]
fn perturbed_one_bump_matches_shooting() {
    let system = cosine_system();
    let mu = 1e-3;
    let orbit = solve_one_bump(&system, mu, &[0.0], 0.0, &OrbitSettings::default()).unwrap();
    assert!(orbit.residual < 1e-8, "{}", orbit.residual);
    assert!((orbit.section_value - PI).abs() < 1e-14);

    let sup_w = orbit.left.w.iter().chain(&orbit.right.w).fold(0.0f64, |m, w| m.max(w.abs()));
    assert!(sup_w > 1e-2 * mu && sup_w < 10.0 * mu, "{sup_w}");
    let c = orbit.decay_constant();
    assert!(c.is_finite() && c > 0.0 && c < 20.0, "{c}");

    // Nodes every 0.02 coincide with every 200th RK4 step of size 1e-4.
    for (half, sign) in [(&orbit.right, 1.0), (&orbit.left, -1.0)] {
        let traj = shoot(mu, 0.0, PI, half.pin_velocity(), 60_000, sign * 1e-4);
        let mut worst: f64 = 0.0;
        for (i, (t, q)) in traj.iter().step_by(200).enumerate() {
            let j = if sign > 0.0 { half.pin() + i } else { half.pin() - i };
            worst = worst.max((separatrix(*t).0 + half.w[j] - q).abs());
        }
        assert!(worst < 1e-7, "{worst}");
    }
}

#[test]
fn one_bump_translation_covariance() {
    let system = golden_system();
    let settings = OrbitSettings::default();
    let mu = 1e-3;
    let a = [0.4, -0.9];
    let shifted: Vec<f64> = a.iter().zip(system.omega()).map(|(x, w)| x + w).collect();
    let moved = solve_one_bump(&system, mu, &a, 1.0, &settings).unwrap();
    let base = solve_one_bump(&system, mu, &shifted, 0.0, &settings).unwrap();
    assert!(sup_diff(&moved.left.w, &base.left.w) < 1e-10);
    assert!(sup_diff(&moved.right.w, &base.right.w) < 1e-10);
}

#[test]
fn one_bump_is_periodic_in_phase() {
    let system = golden_system();
    let settings = OrbitSettings::default();
    let a = [0.4, -0.9];
    let b = [0.4 + 2.0 * PI, -0.9 - 4.0 * PI];
    let x = solve_one_bump(&system, 1e-3, &a, 0.2, &settings).unwrap();
    let y = solve_one_bump(&system, 1e-3, &b, 0.2, &settings).unwrap();
    assert!(sup_diff(&x.right.w, &y.right.w) < 1e-12);
    assert!(sup_diff(&x.left.w, &y.left.w) < 1e-12);
}

#[test]
fn one_bump_uniqueness_basin() {
    let system = golden_system();
    let settings = OrbitSettings::default();
    let orbit = solve_one_bump(&system, 1e-3, &[0.4, 1.3], 0.0, &settings).unwrap();
    let bump = |half: &[f64], grid: &TimeGrid| -> Vec<f64> {
        half.iter()
            .enumerate()
            .map(|(j, w)| {
                let t = grid.node(j);
                w + 0.1 * (-(t - 0.7f64.copysign(t)).powi(2)).exp() * (1.0 - (-t * t * 50.0).exp())
            })
            .collect()
    };
    let left = bump(&orbit.left.w, &orbit.left.grid);
    let right = bump(&orbit.right.w, &orbit.right.grid);
    let again = solve_one_bump_from(&system, 1e-3, &[0.4, 1.3], 0.0, &settings, Some((&left, &right))).unwrap();
    assert!(sup_diff(&again.left.w, &orbit.left.w) < 1e-9);
    assert!(sup_diff(&again.right.w, &orbit.right.w) < 1e-9);
}

fn stitched(orbit: &OneBumpOrbit) -> Vec<f64> {
    orbit.q().values
}

#[test]
fn one_bump_is_linear_in_mu_to_leading_order() {
    let system = golden_system();
    let settings = OrbitSettings::default();
    let a = [0.2, 0.5];
    let eps = 1e-5;
    let plus = stitched(&solve_one_bump(&system, eps, &a, 0.0, &settings).unwrap());
    let minus = stitched(&solve_one_bump(&system, -eps, &a, 0.0, &settings).unwrap());
    let zero = stitched(&solve_one_bump(&system, 0.0, &a, 0.0, &settings).unwrap());
    let slope: Vec<f64> = plus.iter().zip(&minus).map(|(p, m)| (p - m) / (2.0 * eps)).collect();
    let mus = [2e-2, 1e-2, 5e-3, 2.5e-3];
    let defects: Vec<f64> = mus
        .iter()
        .map(|mu| {
            let q = stitched(&solve_one_bump(&system, *mu, &a, 0.0, &settings).unwrap());
            q.iter().zip(&zero).zip(&slope).map(|((q, z), s)| (q - z - mu * s).abs()).fold(0.0, f64::max)
        })
        .collect();
    let fit = fit_power(&mus, &defects).unwrap();
    assert!((fit.slope - 2.0).abs() < 0.1, "{fit:?}");
}

#[test]
fn unperturbed_reduced_orbit_is_trivial() {
    let system = golden_system();
    let orbit = solve_reduced(&system, 0.0, &[0.3, 1.0], 0.4, &OrbitSettings::default()).unwrap();
    assert_eq!(orbit.nu, 0.0);
    assert_eq!(orbit.alpha, 0.0);
    assert!(orbit.w.iter().all(|w| *w == 0.0));
}

#[test]
fn reduced_alpha_is_proportional_to_dtheta() {
    // γ = ∫ψ₀q̇₀ by composite Simpson on [−40, 40].
    let n = 80_000;
    let h = 80.0 / n as f64;
    let mut gamma = 0.0;
    for j in 0..=n {
        let t = -40.0 + j as f64 * h;
        let w = if j == 0 || j == n { 1.0 } else if j % 2 == 1 { 4.0 } else { 2.0 };
        gamma += w * psi0(t) * separatrix(t).1;
    }
    gamma *= h / 3.0;

    let system = golden_system();
    let settings = OrbitSettings::default();
    for (a, theta) in [([0.3, 1.0], 0.4), ([1.9, -0.4], -0.2), ([2.5, 2.5], 0.0)] {
        let orbit = solve_reduced(&system, 1e-3, &a, theta, &settings).unwrap();
        assert!(orbit.residual < 1e-8, "{}", orbit.residual);
        assert!(orbit.orthogonality < 1e-12, "{}", orbit.orthogonality);
        let action = reduced_action(&system, &orbit);
        let ratio = orbit.alpha.abs() / action.dtheta.abs();
        assert!((ratio * gamma - 1.0).abs() < 1e-2, "{ratio} vs 1/γ = {}", 1.0 / gamma);
        let size = orbit.size_constant(system.f.strip_norm(), 0.5);
        assert!(size.is_finite() && size < 10.0, "{size}");
    }
}

#[test]
fn complex_reduced_orbit_near_strip_edge() {
    let system = golden_system();
    let settings = OrbitSettings::default().with_step(0.005);
    let mu = 1e-4;
    let theta = Complex64::new(0.0, FRAC_PI_2 - 0.3);
    let a = [Complex64::new(0.2, 0.0), Complex64::new(-0.4, 0.0)];
    let orbit = solve_reduced(&system, mu, &a, theta, &settings).unwrap();
    assert!(orbit.alpha.norm() > 0.0 && orbit.alpha.im.abs() > 0.0);

    // Residual of −Q̈ + sin Q (1 − μf) − αψ_θ with the base's second derivative in closed form.
    let h = orbit.grid.step();
    let mut worst: f64 = 0.0;
    for j in 3..orbit.grid.len() - 3 {
        let t = orbit.grid.node(j);
        let z = Complex64::new(t, 0.0) - theta - orbit.nu;
        let base = separatrix_point(z);
        let q = base.q + orbit.w[j];
        let qdd = base.sin_q + d2(&orbit.w, j, h);
        let phase = [Complex64::new(t, 0.0) + a[0], Complex64::new(GOLDEN * t, 0.0) + a[1]];
        let f = phase[0].cos() + phase[1].cos();
        let r = -qdd + q.sin() * (1.0 - f * mu) - orbit.alpha * psi0(Complex64::new(t, 0.0) - theta);
        worst = worst.max(r.norm());
    }
    assert!(worst < 1e-9, "{worst}");
    assert!(solve_reduced(&system, mu, &a, Complex64::new(0.0, FRAC_PI_2), &settings).is_err());
}

#[test]
fn single_bump_chain_reduces_to_one_bump() {
    let system = golden_system();
    let settings = OrbitSettings::default();
    let a = [0.3, 2.0];
    let one = solve_one_bump(&system, 1e-3, &a, 0.5, &settings).unwrap();
    let k = solve_k_bump(&system, 1e-3, &a, &[0.5], &settings, None).unwrap();
    assert!(k.intervals.is_empty());
    assert!(sup_diff(&k.left_tail.w, &one.left.w) < 1e-10);
    assert!(sup_diff(&k.right_tail.w, &one.right.w) < 1e-10);
}

#[test]
fn unperturbed_three_bump_chain_follows_shifted_separatrices() {
    let system = golden_system();
    let settings = OrbitSettings::default();
    let thetas = [0.0, 40.0, 80.0];
    let orbit = solve_k_bump(&system, 0.0, &[0.0, 0.0], &thetas, &settings, None).unwrap();
    for d in orbit.section_defects() {
        assert!(d.abs() < 1e-12, "{d}");
    }
    let mut worst: f64 = 0.0;
    for (t, q, _) in orbit.samples() {
        let (i, theta) = thetas.iter().enumerate().min_by(|x, y| (t - x.1).abs().total_cmp(&(t - y.1).abs())).unwrap();
        if (t - theta).abs() < 10.0 {
            worst = worst.max((q - separatrix(t - theta).0 - 2.0 * PI * i as f64).abs());
        }
    }
    assert!(worst < 1e-8, "{worst}");
}

#[test]
fn two_bump_defect_decays_exponentially_in_spacing() {
    let system = golden_system();
    let settings = OrbitSettings::default();
    let mu = 1e-3;
    let a = [0.3, 0.8];
    let one = solve_one_bump(&system, mu, &a, 0.0, &settings).unwrap();
    let lengths = [12.0, 16.0, 20.0, 24.0];
    let defects: Vec<f64> = lengths
        .iter()
        .map(|l| {
            let orbit = solve_k_bump(&system, mu, &a, &[0.0, *l], &settings, None).unwrap();
            assert!(orbit.residual < 1e-8);
            let iv = &orbit.intervals[0];
            assert!((iv.grid.step() - settings.step).abs() < 1e-15);
            (0..=iv.grid.intervals() / 2)
                .map(|j| (iv.q(j) - separatrix(iv.grid.node(j)).0 - one.right.w[j]).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let fit = fit_exponential(&lengths, &defects).unwrap();
    assert!(fit.slope < -0.3, "{fit:?} {defects:?}");
    assert!(fit.r_squared > 0.99, "{fit:?}");
}

#[test]
fn k_bump_rejects_short_spacing() {
    let system = golden_system();
    let err = solve_k_bump(&system, 1e-3, &[0.0, 0.0], &[0.0, 5.0], &OrbitSettings::default(), None).unwrap_err();
    assert!(matches!(err, Error::SpacingTooSmall { .. }), "{err:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn halfline_green_solves_ode_for_smooth_forcing(
        c in prop::collection::vec(-1.0f64..1.0, 3),
        centers in prop::collection::vec(0.5f64..6.0, 3),
        widths in prop::collection::vec(0.5f64..2.0, 3),
    ) {
        let step = 0.005;
        let grid = TimeGrid::new(0.0, step, 8000).unwrap();
        let h = GridFunction::from_fn(grid, |s| {
            let v = (0..3).map(|i| c[i] * (-((s - centers[i]) / widths[i]).powi(2)).exp()).sum::<f64>();
            (v, 0.0)
        });
        let u = green_halfline(&h, Side::Right);
        prop_assert!(u.values[0].abs() < 1e-14);
        prop_assert!(u.values[grid.len() - 1].abs() < 1e-12);
        let residual = (3..grid.len() - 3)
            .map(|j| (-d2(&u.values, j, step) + u.values[j] - h.values[j]).abs())
            .fold(0.0, f64::max);
        prop_assert!(residual < 1e-8, "{}", residual);
    }

    #[test]
    fn interval_green_solves_ode_for_smooth_forcing(
        theta in 2.0f64..20.0,
        c in prop::collection::vec(-1.0f64..1.0, 2),
        freq in 0.1f64..3.0,
    ) {
        let intervals = 4000;
        let step = theta / intervals as f64;
        let grid = TimeGrid::new(0.0, step, intervals).unwrap();
        let h = GridFunction::from_fn(grid, |s| (c[0] * (freq * s).sin() + c[1] * (-s).exp(), 0.0));
        let u = green_interval(&h, theta);
        prop_assert!(u.values[0].abs() < 1e-14);
        prop_assert!(u.values[intervals].abs() < 1e-12);
        let residual = (3..grid.len() - 3)
            .map(|j| (-d2(&u.values, j, step) + u.values[j] - h.values[j]).abs())
            .fold(0.0, f64::max);
        prop_assert!(residual < 1e-8, "{}", residual);
    }
}
