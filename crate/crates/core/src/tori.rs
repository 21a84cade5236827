//! Perturbed invariant tori for general perturbations f(φ, q): the quasi-periodic pendulum
//! solution (Q^μ, P^μ), the action correction a^μ and the symplectic straightening map.

use crate::error::{Error, Result};
use crate::frequency::{dot_k, norm, Frequency};
use crate::perturbation::GeneralPerturbation;
use crate::torus::{TorusGrid, TrigSeries};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TorusSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for TorusSettings {
    fn default() -> Self {
        Self { tol: 1e-15, max_iter: 200 }
    }
}

/// (Q^μ, P^μ) on the torus grid with −(ω·∇)²Q + sin Q = μ∂_q f(ψ, Q).
#[derive(Clone, Debug)]
pub struct QuasiPeriodicOrbit {
    pub mu: f64,
    pub omega: Vec<f64>,
    pub grid: TorusGrid,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub q_series: TrigSeries,
    pub p_series: TrigSeries,
    pub iterations: usize,
    /// sup |(ω·∇)P − sin Q + μ∂_q f(ψ, Q)| on the grid.
    pub residual: f64,
}

fn is_nyquist(grid: &TorusGrid, k: &[i64]) -> bool {
    grid.m % 2 == 0 && k.iter().any(|kd| kd.unsigned_abs() as usize * 2 == grid.m)
}

/// Applies the Fourier multiplier `mult(k)` to a real grid function.
fn apply_multiplier(grid: &TorusGrid, values: &[f64], mult: impl Fn(&[i64]) -> Complex64) -> Vec<f64> {
    let mut coeffs = grid.forward(values);
    for (idx, c) in coeffs.iter_mut().enumerate() {
        let k = grid.mode_of(idx);
        *c = if is_nyquist(grid, &k) { Complex64::default() } else { *c * mult(&k) };
    }
    grid.inverse(&coeffs).into_iter().map(|c| c.re).collect()
}

fn transport(grid: &TorusGrid, omega: &[f64], values: &[f64]) -> Vec<f64> {
    apply_multiplier(grid, values, |k| Complex64::new(0.0, dot_k(omega, k)))
}

pub fn solve_quasiperiodic(
    omega: &[f64],
    f: &GeneralPerturbation,
    mu: f64,
    grid: &TorusGrid,
    settings: &TorusSettings,
) -> Result<QuasiPeriodicOrbit> {
    if f.n() != grid.n || omega.len() != grid.n {
        return Err(Error::InvalidInput("torus grid, ω and f must share n".into()));
    }
    let points: Vec<Vec<f64>> = (0..grid.len()).map(|i| grid.point(i)).collect();
    let mut q: Vec<f64> = vec![0.0; grid.len()];
    let mut iterations = 0;
    loop {
        let rhs: Vec<f64> = q
            .iter()
            .zip(&points)
            .map(|(qj, psi)| qj - qj.sin() + mu * f.eval(psi, *qj).fq)
            .collect();
        let next = apply_multiplier(grid, &rhs, |k| Complex64::new(1.0 / (1.0 + dot_k(omega, k).powi(2)), 0.0));
        let change = next.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        q = next;
        iterations += 1;
        if change <= settings.tol {
            break;
        }
        if iterations >= settings.max_iter || !change.is_finite() {
            return Err(Error::NonConvergence { iterations, residual: change });
        }
    }
    let p = transport(grid, omega, &q);
    let dp = transport(grid, omega, &p);
    let residual = dp
        .iter()
        .zip(&q)
        .zip(&points)
        .map(|((dpj, qj), psi)| (dpj - qj.sin() + mu * f.eval(psi, *qj).fq).abs())
        .fold(0.0, f64::max);
    let q_series = TrigSeries::from_fft(grid, &grid.forward(&q), 1e-20);
    let p_series = TrigSeries::from_fft(grid, &grid.forward(&p), 1e-20);
    Ok(QuasiPeriodicOrbit { mu, omega: omega.to_vec(), grid: *grid, q, p, q_series, p_series, iterations, residual })
}

/// T^μ_{I₀} = {I = I₀ + a^μ(ψ), φ = ψ, q = Q^μ(ψ), p = P^μ(ψ)}.
#[derive(Clone, Debug)]
pub struct PerturbedTorus {
    pub i0: Vec<f64>,
    pub orbit: QuasiPeriodicOrbit,
    /// a^μ on the grid, one vector per component.
    pub a: Vec<Vec<f64>>,
    pub a_series: Vec<TrigSeries>,
    /// Torus averages of g^μ = −∇_ψ f(ψ, Q^μ).
    pub g_mean: Vec<f64>,
    /// Mean of H_μ over the torus.
    pub energy: f64,
    /// max − min of H_μ over the grid.
    pub energy_spread: f64,
    /// Smallest |k·ω| among the modes solved for.
    pub min_divisor: f64,
}

/// Solves (ω·∇)a = μg by a_k = μg_k/(i k·ω).
pub fn torus_correction(
    frequency: &Frequency,
    f: &GeneralPerturbation,
    mu: f64,
    grid: &TorusGrid,
    i0: &[f64],
    settings: &TorusSettings,
) -> Result<PerturbedTorus> {
    let omega = frequency.omega();
    let orbit = solve_quasiperiodic(omega, f, mu, grid, settings)?;
    let n = grid.n;
    let points: Vec<Vec<f64>> = (0..grid.len()).map(|i| grid.point(i)).collect();
    let values: Vec<_> = points.iter().zip(&orbit.q).map(|(psi, qj)| f.eval(psi, *qj)).collect();
    let gamma_scale = if frequency.gamma() > 0.0 { frequency.gamma() } else { norm(omega) };
    let floor = 1e-12 * gamma_scale;
    let mut a: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut a_series = Vec::with_capacity(n);
    let mut g_mean = Vec::with_capacity(n);
    let mut min_divisor = f64::INFINITY;
    for c in 0..n {
        let g: Vec<f64> = values.iter().map(|v| -v.grad_phi[c]).collect();
        let mut coeffs = grid.forward(&g);
        g_mean.push(coeffs[0].re);
        for (idx, coeff) in coeffs.iter_mut().enumerate() {
            let k = grid.mode_of(idx);
            if idx == 0 || is_nyquist(grid, &k) {
                *coeff = Complex64::default();
                continue;
            }
            let divisor = dot_k(omega, &k);
            if divisor.abs() < floor {
                if coeff.norm() > 1e-15 {
                    return Err(Error::SmallDivisor { k, divisor, magnitude: coeff.norm() });
                }
                *coeff = Complex64::default();
                continue;
            }
            if coeff.norm() > 1e-15 {
                min_divisor = min_divisor.min(divisor.abs());
            }
            *coeff *= mu / Complex64::new(0.0, divisor);
        }
        a_series.push(TrigSeries::from_fft(grid, &coeffs, 1e-20));
        a.push(grid.inverse(&coeffs).into_iter().map(|z| z.re).collect());
    }
    let energies: Vec<f64> = (0..grid.len())
        .map(|j| {
            let action: f64 = omega.iter().enumerate().map(|(c, w)| w * (i0[c] + a[c][j])).sum();
            let (qj, pj) = (orbit.q[j], orbit.p[j]);
            action + 0.5 * pj * pj + qj.cos() - 1.0 + mu * values[j].f
        })
        .collect();
    let energy = energies.iter().sum::<f64>() / energies.len() as f64;
    let hi = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = energies.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(PerturbedTorus {
        i0: i0.to_vec(),
        orbit,
        a,
        a_series,
        g_mean,
        energy,
        energy_spread: hi - lo,
        min_divisor,
    })
}

/// Residuals of the equations of motion along the torus, per component group.
#[derive(Clone, Debug, Serialize)]
pub struct TorusResidual {
    pub action: f64,
    pub q: f64,
    pub p: f64,
}

impl TorusResidual {
    pub fn max(&self) -> f64 {
        self.action.max(self.q).max(self.p)
    }
}

pub fn flow_residual(torus: &PerturbedTorus, f: &GeneralPerturbation) -> TorusResidual {
    let orbit = &torus.orbit;
    let grid = &orbit.grid;
    let omega = &orbit.omega;
    let mu = orbit.mu;
    let points: Vec<Vec<f64>> = (0..grid.len()).map(|i| grid.point(i)).collect();
    let values: Vec<_> = points.iter().zip(&orbit.q).map(|(psi, qj)| f.eval(psi, *qj)).collect();
    let mut action: f64 = 0.0;
    for (c, ac) in torus.a.iter().enumerate() {
        let da = transport(grid, omega, ac);
        for (j, d) in da.iter().enumerate() {
            action = action.max((d + mu * values[j].grad_phi[c]).abs());
        }
    }
    let dq = transport(grid, omega, &orbit.q);
    let q = dq.iter().zip(&orbit.p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let dp = transport(grid, omega, &orbit.p);
    let p = (0..grid.len())
        .map(|j| (dp[j] - orbit.q[j].sin() + mu * values[j].fq).abs())
        .fold(0.0, f64::max);
    TorusResidual { action, q, p }
}

/// Equations of motion at random off-grid phases, using the interpolating series.
pub fn flow_residual_offgrid(torus: &PerturbedTorus, f: &GeneralPerturbation, samples: usize, seed: u64) -> TorusResidual {
    let orbit = &torus.orbit;
    let omega = &orbit.omega;
    let mu = orbit.mu;
    let rate = |series: &TrigSeries, psi: &[f64]| -> f64 {
        let (_, g) = series.eval_with_gradient(psi);
        g.iter().zip(omega).map(|(a, b)| a * b).sum()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = TorusResidual { action: 0.0, q: 0.0, p: 0.0 };
    for _ in 0..samples {
        let psi: Vec<f64> = (0..orbit.grid.n).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
        let q = orbit.q_series.eval(&psi);
        let p = orbit.p_series.eval(&psi);
        let v = f.eval(&psi, q);
        for (c, series) in torus.a_series.iter().enumerate() {
            out.action = out.action.max((rate(series, &psi) + mu * v.grad_phi[c]).abs());
        }
        out.q = out.q.max((rate(&orbit.q_series, &psi) - p).abs());
        out.p = out.p.max((rate(&orbit.p_series, &psi) - q.sin() + mu * v.fq).abs());
    }
    out
}

/// |∫_{Tⁿ} ∇_ψ f(ψ, Q^μ(ψ)) dψ| (normalized average), which vanishes identically.
pub fn zero_mean_check(orbit: &QuasiPeriodicOrbit, f: &GeneralPerturbation) -> f64 {
    let grid = &orbit.grid;
    let mut mean = vec![0.0; grid.n];
    for j in 0..grid.len() {
        let v = f.eval(&grid.point(j), orbit.q[j]);
        for (m, g) in mean.iter_mut().zip(&v.grad_phi) {
            *m += g;
        }
    }
    norm(&mean) / grid.len() as f64
}

/// sup over i < j of |∂_j a_i − ∂_i a_j + ∂_jP ∂_iQ − ∂_iP ∂_jQ| on the grid.
pub fn isotropy_residual(torus: &PerturbedTorus) -> f64 {
    let grid = &torus.orbit.grid;
    let n = grid.n;
    let dq: Vec<Vec<f64>> = (0..n).map(|d| grid.derivative(&torus.orbit.q, d)).collect();
    let dp: Vec<Vec<f64>> = (0..n).map(|d| grid.derivative(&torus.orbit.p, d)).collect();
    let da: Vec<Vec<Vec<f64>>> = torus
        .a
        .iter()
        .map(|ac| (0..n).map(|d| grid.derivative(ac, d)).collect())
        .collect();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            for x in 0..grid.len() {
                let v = da[i][j][x] - da[j][i][x] + dp[j][x] * dq[i][x] - dp[i][x] * dq[j][x];
                worst = worst.max(v.abs());
            }
        }
    }
    worst
}

/// (J, ψ, u, v) ↦ (I, φ, q, p), with coordinates ordered (ψ, u, J, v) and (φ, q, I, p).
pub fn straightening_map(torus: &PerturbedTorus, z: &[f64]) -> Vec<f64> {
    let n = torus.orbit.grid.n;
    let psi = &z[..n];
    let u = z[n];
    let j = &z[n + 1..2 * n + 1];
    let v = z[2 * n + 1];
    let (qv, qg) = torus.orbit.q_series.eval_with_gradient(psi);
    let (pv, pg) = torus.orbit.p_series.eval_with_gradient(psi);
    let mut out = Vec::with_capacity(2 * n + 2);
    out.extend_from_slice(psi);
    out.push(qv + u);
    for c in 0..n {
        out.push(torus.a_series[c].eval(psi) + u * pg[c] - v * qg[c] + j[c]);
    }
    out.push(pv + v);
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct SymplecticReport {
    pub samples: usize,
    /// max |DΦᵀ Ω DΦ − Ω| over the samples.
    pub max_deviation: f64,
    pub isotropy: f64,
}

fn canonical_form(n: usize) -> DMatrix<f64> {
    let d = n + 1;
    let mut omega = DMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        omega[(i, d + i)] = -1.0;
        omega[(d + i, i)] = 1.0;
    }
    omega
}

/// Finite-difference check that the straightening map preserves the canonical two-form.
pub fn symplectic_residual(torus: &PerturbedTorus, samples: usize, seed: u64) -> SymplecticReport {
    let n = torus.orbit.grid.n;
    let dim = 2 * n + 2;
    let omega = canonical_form(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let mut z: Vec<f64> = Vec::with_capacity(dim);
        z.extend((0..n).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)));
        z.push(rng.gen_range(-0.5..0.5));
        z.extend((0..n).map(|_| rng.gen_range(-1.0..1.0)));
        z.push(rng.gen_range(-0.5..0.5));
        let mut jac = DMatrix::zeros(dim, dim);
        for c in 0..dim {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[c] += h;
            zm[c] -= h;
            let (fp, fm) = (straightening_map(torus, &zp), straightening_map(torus, &zm));
            for r in 0..dim {
                jac[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
            }
        }
        let defect = jac.transpose() * &omega * &jac - &omega;
        worst = worst.max(defect.amax());
    }
    SymplecticReport { samples, max_deviation: worst, isotropy: isotropy_residual(torus) }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unperturbed_torus_is_flat() {
        let f = GeneralPerturbation::from_cosines(2, &[(vec![1, 0], 1, 1.0, 0.0)]).unwrap();
        let grid = TorusGrid::new(2, 16).unwrap();
        let torus = torus_correction(&Frequency::golden(), &f, 0.0, &grid, &[0.0, 0.0], &TorusSettings::default()).unwrap();
        assert!(torus.orbit.q.iter().all(|v| *v == 0.0));
        assert!(torus.a.iter().flatten().all(|v| *v == 0.0));
    }
}
