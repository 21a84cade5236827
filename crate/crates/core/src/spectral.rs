//! Fourier side of the Melnikov theory: exact coefficients of Γ, empirical tables of computed
//! torus functions, the exponentially small coefficient bound and three-time-scale profiles.

use crate::action::{homoclinic_g, melnikov_gamma, MELNIKOV_SIGN};
use crate::error::{Error, Result};
use crate::fit::{fit_power, LinearFit};
use crate::frequency::{dot_k, torus_distance, Frequency};
use crate::perturbation::PerturbationSeries;
use crate::reduced::{reduced_action, solve_reduced};
use crate::system::{OrbitSettings, PendulumSystem};
use crate::torus::TorusGrid;
use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TableSource {
    Gamma,
    Homoclinic,
    Reduced,
    Samples,
}

/// Coefficients c_k for every k in the box |k_i| ≤ bound.
#[derive(Clone, Debug, Serialize)]
pub struct FourierTable {
    pub n: usize,
    pub bound: usize,
    pub omega: Vec<f64>,
    pub source: TableSource,
    pub entries: Vec<(Vec<i64>, Complex64)>,
    /// Largest coefficient in the upper half of the resolved band (empirical tables only).
    pub aliasing: f64,
}

fn box_modes(n: usize, bound: usize) -> Vec<Vec<i64>> {
    let b = bound as i64;
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<i64>| {
                (-b..=b).map(move |kd| {
                    let mut v = prefix.clone();
                    v.push(kd);
                    v
                })
            })
            .collect();
    }
    out
}

impl FourierTable {
    pub fn get(&self, k: &[i64]) -> Complex64 {
        self.entries
            .iter()
            .find(|(m, _)| m.as_slice() == k)
            .map(|e| e.1)
            .unwrap_or_default()
    }

    pub fn eval(&self, a: &[f64]) -> f64 {
        self.entries
            .iter()
            .map(|(k, c)| {
                let phase: f64 = k.iter().zip(a).map(|(ki, ai)| *ki as f64 * ai).sum();
                (c * Complex64::from_polar(1.0, phase)).re
            })
            .sum()
    }

    pub fn max_deviation(&self, other: &FourierTable) -> f64 {
        self.entries.iter().map(|(k, c)| (c - other.get(k)).norm()).fold(0.0, f64::max)
    }
}

/// ln of x ↦ 2πx/sinh(πx/2) for x ≠ 0, stable for large |x|.
pub fn melnikov_kernel_ln(x: f64) -> f64 {
    let ax = x.abs();
    (4.0 * PI * ax).ln() - 0.5 * PI * ax - (-(-PI * ax).exp()).ln_1p()
}

/// 2πx/sinh(πx/2), with the limit 4 at x = 0.
pub fn melnikov_kernel(x: f64) -> f64 {
    if x.abs() < 1e-6 {
        4.0 * (1.0 - PI * PI * x * x / 24.0)
    } else {
        melnikov_kernel_ln(x).exp()
    }
}

/// Γ_k = f_k·2π(k·ω)/sinh((k·ω)π/2) for the modes of f, tabulated on the box |k_i| ≤ bound.
pub fn gamma_fourier(omega: &[f64], f: &PerturbationSeries, bound: usize) -> FourierTable {
    let entries = box_modes(f.n(), bound)
        .into_iter()
        .map(|k| {
            let c = f.coefficient(&k) * melnikov_kernel(dot_k(omega, &k));
            (k, c)
        })
        .collect();
    FourierTable { n: f.n(), bound, omega: omega.to_vec(), source: TableSource::Gamma, entries, aliasing: 0.0 }
}

/// Discrete Fourier coefficients of torus samples, |k_i| ≤ bound, requiring m ≥ 4·bound.
pub fn empirical_fourier(grid: &TorusGrid, values: &[f64], bound: usize, omega: &[f64], source: TableSource) -> Result<FourierTable> {
    if grid.m < 4 * bound {
        return Err(Error::UnderResolved(format!("grid size {} below 4·{bound}", grid.m)));
    }
    if values.len() != grid.len() {
        return Err(Error::InvalidInput(format!("{} samples for a grid of {}", values.len(), grid.len())));
    }
    let coeffs = grid.forward(values);
    let quarter = (grid.m / 4) as i64;
    let aliasing = coeffs
        .iter()
        .enumerate()
        .filter(|(idx, _)| grid.mode_of(*idx).iter().any(|k| k.abs() >= quarter))
        .map(|(_, c)| c.norm())
        .fold(0.0, f64::max);
    let entries = box_modes(grid.n, bound)
        .into_iter()
        .map(|k| {
            let c = coeffs[grid.mode_index(&k)];
            (k, c)
        })
        .collect();
    Ok(FourierTable { n: grid.n, bound, omega: omega.to_vec(), source, entries, aliasing })
}

/// Samples of Γ on the torus grid via time-domain quadrature.
pub fn gamma_samples(grid: &TorusGrid, omega: &[f64], f: &PerturbationSeries) -> Vec<f64> {
    grid.sample(|b| Ok(melnikov_gamma(omega, f, b))).expect("quadrature cannot fail")
}

/// G_μ on the torus grid.
pub fn homoclinic_samples(system: &PendulumSystem, mu: f64, grid: &TorusGrid, settings: &OrbitSettings) -> Result<Vec<f64>> {
    grid.sample(|a| homoclinic_g(system, mu, a, settings))
}

/// G̃_μ on the torus grid.
pub fn reduced_samples(system: &PendulumSystem, mu: f64, grid: &TorusGrid, settings: &OrbitSettings) -> Result<Vec<f64>> {
    grid.sample(|a| {
        let orbit = solve_reduced::<f64>(system, mu, a, 0.0, settings)?;
        Ok(reduced_action(system, &orbit).value)
    })
}

fn centered(values: &[f64]) -> Vec<f64> {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| v - mean).collect()
}

fn argmin(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

#[derive(Clone, Debug, Serialize)]
pub struct FirstOrderRow {
    pub mu: f64,
    /// sup |centered G_μ − μ·centered(±Γ)|.
    pub sup_difference: f64,
    /// Torus distance between the grid argmins of G_μ and ±μΓ.
    pub argmin_distance: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FirstOrderReport {
    pub rows: Vec<FirstOrderRow>,
    pub fit: LinearFit,
}

/// Log-log fit of ‖centered G_μ − μ·centered Γ‖_sup against μ; the slope should be 2.
pub fn first_order_check(
    system: &PendulumSystem,
    mus: &[f64],
    grid: &TorusGrid,
    settings: &OrbitSettings,
) -> Result<FirstOrderReport> {
    let gamma = centered(&gamma_samples(grid, system.omega(), &system.f));
    let gamma_argmin = grid.point(argmin(&gamma.iter().map(|g| MELNIKOV_SIGN * g).collect::<Vec<_>>()));
    let mut rows = Vec::with_capacity(mus.len());
    for &mu in mus {
        let g = centered(&homoclinic_samples(system, mu, grid, settings)?);
        let sup_difference = g
            .iter()
            .zip(&gamma)
            .map(|(gv, gm)| (gv - MELNIKOV_SIGN * mu * gm).abs())
            .fold(0.0, f64::max);
        let p = grid.point(argmin(&g));
        let d: Vec<f64> = p.iter().zip(&gamma_argmin).map(|(x, y)| x - y).collect();
        rows.push(FirstOrderRow { mu, sup_difference, argmin_distance: torus_distance(&d) });
    }
    let fit = fit_power(
        &rows.iter().map(|r| r.mu).collect::<Vec<_>>(),
        &rows.iter().map(|r| r.sup_difference).collect::<Vec<_>>(),
    )?;
    Ok(FirstOrderReport { rows, fit })
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundEntry {
    pub k: Vec<i64>,
    pub deviation: f64,
    pub envelope: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundReport {
    pub mu: f64,
    pub delta: f64,
    pub noise_floor: f64,
    pub entries: Vec<BoundEntry>,
    /// Nonzero modes whose deviation fell below the noise floor.
    pub excluded: usize,
    /// Empirical C₆.
    pub max_ratio: f64,
}

/// Ratios |G̃_k − μΓ_k| / [μ²‖f‖²δ⁻⁴e^{−Σr_i|k_i|}e^{−|k·ω|(π/2−δ)}] over resolved k ≠ 0.
pub fn splitting_bound_check(
    system: &PendulumSystem,
    mu: f64,
    delta: f64,
    grid: &TorusGrid,
    bound: usize,
    settings: &OrbitSettings,
) -> Result<BoundReport> {
    let omega = system.omega();
    let samples = reduced_samples(system, mu, grid, settings)?;
    let reduced = empirical_fourier(grid, &samples, bound, omega, TableSource::Reduced)?;
    let gamma = gamma_fourier(omega, &system.f, bound);
    let scale = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let noise_floor = 1e3 * f64::EPSILON * scale;
    let f_norm = system.f.strip_norm();
    let mut entries = Vec::new();
    let mut excluded = 0;
    for (k, c) in &reduced.entries {
        if k.iter().all(|&x| x == 0) {
            continue;
        }
        let deviation = (c - MELNIKOV_SIGN * mu * gamma.get(k)).norm();
        if deviation < noise_floor {
            excluded += 1;
            continue;
        }
        let width: f64 = k.iter().zip(system.f.widths()).map(|(ki, r)| r * ki.unsigned_abs() as f64).sum();
        let ln_env = 2.0 * (mu * f_norm).ln() - 4.0 * delta.ln() - width - dot_k(omega, k).abs() * (0.5 * PI - delta);
        let envelope = ln_env.exp();
        entries.push(BoundEntry { k: k.clone(), deviation, envelope, ratio: (deviation.ln() - ln_env).exp() });
    }
    let max_ratio = entries.iter().map(|e| e.ratio).fold(0.0, f64::max);
    Ok(BoundReport { mu, delta, noise_floor, entries, excluded, max_ratio })
}

/// ω = (1/√ε, ε^a·β).
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct ThreeScaleConfig {
    pub epsilon: f64,
    pub a: f64,
    pub beta: Vec<f64>,
}

impl ThreeScaleConfig {
    pub fn omega(&self) -> Vec<f64> {
        let mut omega = vec![1.0 / self.epsilon.sqrt()];
        omega.extend(self.beta.iter().map(|b| self.epsilon.powf(self.a) * b));
        omega
    }

    pub fn frequency(&self) -> Frequency {
        Frequency::unchecked(self.omega(), 0.0, self.beta.len() as f64 + 1.01)
    }

    /// ln[(4π/√ε)e^{−π/(2√ε)}].
    pub fn ln_fast_scale(&self) -> f64 {
        let s = self.epsilon.sqrt();
        (4.0 * PI / s).ln() - 0.5 * PI / s
    }

    pub fn validate(&self, f: &PerturbationSeries) -> Result<()> {
        if !(self.epsilon > 0.0) || self.a < 0.0 {
            return Err(Error::InvalidInput("three-scale config needs ε > 0 and a ≥ 0".into()));
        }
        if f.n() != self.beta.len() + 1 {
            return Err(Error::InvalidInput(format!("β has {} entries but f has n = {}", self.beta.len(), f.n())));
        }
        if self.a == 0.0 {
            for (i, b) in self.beta.iter().enumerate() {
                let r = f.widths()[i + 1];
                if r <= b.abs() * 0.5 * PI {
                    return Err(Error::InvalidInput(format!(
                        "width r_{} = {r} must exceed |β|π/2 = {}",
                        i + 2,
                        b.abs() * 0.5 * PI
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Partial Fourier profiles of Γ in the fast angle, evaluated at a slow angle A₂.
#[derive(Clone, Debug, Serialize)]
pub struct ThreeScaleProfile {
    pub a2: Vec<f64>,
    pub gamma0: f64,
    /// Γ_{k₁=1}(A₂) divided by (4π/√ε)e^{−π/(2√ε)}.
    pub gamma1_rescaled: Complex64,
    /// 4f₀(A₂).
    pub gamma0_limit: f64,
    /// f₁(A₂), continued to A₂ + i(π/2)β when a = 0.
    pub gamma1_limit: Complex64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ThreeScaleCoeffs {
    pub epsilon: f64,
    pub profiles: Vec<ThreeScaleProfile>,
    pub gamma0_defect: f64,
    pub gamma1_defect: f64,
    /// sup_{A₂} |Γ₁ rescaled|.
    pub gamma1_amplitude: f64,
    /// Σ_{|k₁|≥2}|Γ_k| / [(‖f‖/√ε)e^{−π/√ε}].
    pub tail_ratio: f64,
}

fn slow_phase(k: &[i64], a2: &[f64]) -> f64 {
    k[1..].iter().zip(a2).map(|(ki, ai)| *ki as f64 * ai).sum()
}

/// Γ₀(ε, ·), Γ₁(ε, ·) on `samples` slow angles and the |k₁| ≥ 2 tail.
pub fn three_scale_coeffs(cfg: &ThreeScaleConfig, f: &PerturbationSeries, a2_points: &[Vec<f64>]) -> Result<ThreeScaleCoeffs> {
    cfg.validate(f)?;
    let omega = cfg.omega();
    let ln_scale = cfg.ln_fast_scale();
    let mut profiles = Vec::with_capacity(a2_points.len());
    for a2 in a2_points {
        let mut gamma0 = 0.0;
        let mut limit0 = 0.0;
        let mut g1 = Complex64::default();
        let mut limit1 = Complex64::default();
        for (k, c) in f.modes() {
            let phase = Complex64::from_polar(1.0, slow_phase(k, a2));
            let x = dot_k(&omega, k);
            match k[0] {
                0 => {
                    gamma0 += (c * melnikov_kernel(x) * phase).re;
                    limit0 += 4.0 * (c * phase).re;
                }
                1 => {
                    g1 += c * (melnikov_kernel_ln(x) - ln_scale).exp() * phase;
                    let shift = if cfg.a == 0.0 {
                        let s: f64 = k[1..].iter().zip(&cfg.beta).map(|(ki, b)| *ki as f64 * b).sum();
                        (-0.5 * PI * s).exp()
                    } else {
                        1.0
                    };
                    limit1 += c * phase * shift;
                }
                _ => {}
            }
        }
        profiles.push(ThreeScaleProfile {
            a2: a2.clone(),
            gamma0,
            gamma1_rescaled: g1,
            gamma0_limit: limit0,
            gamma1_limit: limit1,
        });
    }
    let gamma0_defect = profiles.iter().map(|p| (p.gamma0 - p.gamma0_limit).abs()).fold(0.0, f64::max);
    let gamma1_defect = profiles.iter().map(|p| (p.gamma1_rescaled - p.gamma1_limit).norm()).fold(0.0, f64::max);
    let gamma1_amplitude = profiles.iter().map(|p| p.gamma1_rescaled.norm()).fold(0.0, f64::max);
    let s = cfg.epsilon.sqrt();
    let ln_tail_scale = (f.strip_norm() / s).ln() - PI / s;
    let tail_ratio: f64 = f
        .modes()
        .filter(|(k, _)| k[0].abs() >= 2)
        .map(|(k, c)| (c.norm().ln() + melnikov_kernel_ln(dot_k(&omega, k)) - ln_tail_scale).exp())
        .fold(0.0, |acc, x| acc + x);
    Ok(ThreeScaleCoeffs { epsilon: cfg.epsilon, profiles, gamma0_defect, gamma1_defect, gamma1_amplitude, tail_ratio })
}
