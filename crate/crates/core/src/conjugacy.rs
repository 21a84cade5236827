//! Pointwise verification that the homoclinic function is a reparametrization of the reduced one:
//! F_μ(A, θ) = F̃_μ(A, θ + h̄_μ(A, θ)).

use crate::action::homoclinic_f;
use crate::error::{Error, Result};
use crate::reduced::{reduced_action, section_shift, solve_reduced};
use crate::system::{OrbitSettings, PendulumSystem};
use serde::Serialize;

#[derive(Clone, Debug, Serialize)]
pub struct ConjugacyReport {
    pub a: Vec<f64>,
    pub theta: f64,
    /// Section shift, Q^μ_{A,θ}(θ + l) = π.
    pub l: f64,
    /// V = F_μ(A, θ + l).
    pub v: f64,
    pub f_tilde: f64,
    pub dtheta_f_tilde: f64,
    /// Root of F̃(A, θ + h) = V.
    pub h: f64,
    /// |F̃ − V|/|∂_θF̃|², absent where ∂_θF̃ is below `derivative_floor`.
    pub ratio: Option<f64>,
    /// |F̃(A, θ + h) − V| after root finding.
    pub root_defect: f64,
}

/// Derivatives below this are treated as critical for the ratio statistic.
pub const DERIVATIVE_FLOOR: f64 = 1e-5;

fn reduced_value(system: &PendulumSystem, mu: f64, a: &[f64], theta: f64, settings: &OrbitSettings) -> Result<(f64, f64)> {
    let orbit = solve_reduced::<f64>(system, mu, a, theta, settings)?;
    let act = reduced_action(system, &orbit);
    Ok((act.value, act.dtheta))
}

/// Solves F̃(A, θ + h) = target by safeguarded Newton started from (target − F̃)/∂_θF̃.
fn solve_level(
    system: &PendulumSystem,
    mu: f64,
    a: &[f64],
    theta: f64,
    target: f64,
    start: (f64, f64),
    settings: &OrbitSettings,
) -> Result<(f64, f64)> {
    let (mut value, mut slope) = start;
    let mut h = 0.0;
    let scale = target.abs().max(1.0);
    for _ in 0..40 {
        let defect = value - target;
        if defect.abs() <= 1e-15 * scale {
            return Ok((h, defect.abs()));
        }
        if slope.abs() < 1e-14 {
            // Critical in θ: the level is attained here up to the quadratic defect.
            return Ok((h, defect.abs()));
        }
        let step = (-defect / slope).clamp(-0.25, 0.25);
        h += step;
        (value, slope) = reduced_value(system, mu, a, theta + h, settings)?;
        if step.abs() < 1e-14 {
            return Ok((h, (value - target).abs()));
        }
    }
    let defect = (value - target).abs();
    if defect < 1e-11 * scale {
        Ok((h, defect))
    } else {
        Err(Error::NonConvergence { iterations: 40, residual: defect })
    }
}

pub fn conjugacy_check(
    system: &PendulumSystem,
    mu: f64,
    a: &[f64],
    theta: f64,
    settings: &OrbitSettings,
) -> Result<ConjugacyReport> {
    let orbit = solve_reduced::<f64>(system, mu, a, theta, settings)?;
    let act = reduced_action(system, &orbit);
    let l = section_shift(&orbit)?;
    let v = homoclinic_f(system, mu, a, theta + l, settings)?.value;
    let (h, root_defect) = solve_level(system, mu, a, theta, v, (act.value, act.dtheta), settings)?;
    let ratio = (act.dtheta.abs() >= DERIVATIVE_FLOOR).then(|| (act.value - v).abs() / act.dtheta.powi(2));
    Ok(ConjugacyReport {
        a: a.to_vec(),
        theta,
        l,
        v,
        f_tilde: act.value,
        dtheta_f_tilde: act.dtheta,
        h,
        ratio,
        root_defect,
    })
}

/// h̄(A, θ) with F_μ(A, θ) = F̃_μ(A, θ + h̄). The reduced base point θ′ solves θ′ + l(A, θ′) = θ.
pub fn conjugacy_shift(system: &PendulumSystem, mu: f64, a: &[f64], theta: f64, settings: &OrbitSettings) -> Result<f64> {
    let mut base = theta;
    let mut converged = false;
    for _ in 0..50 {
        let orbit = solve_reduced::<f64>(system, mu, a, base, settings)?;
        let next = theta - section_shift(&orbit)?;
        let done = (next - base).abs() < 1e-14;
        base = next;
        if done {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence { iterations: 50, residual: f64::NAN });
    }
    let v = homoclinic_f(system, mu, a, theta, settings)?.value;
    let start = reduced_value(system, mu, a, base, settings)?;
    let (h, _) = solve_level(system, mu, a, base, v, start, settings)?;
    Ok(base + h - theta)
}

#[derive(Clone, Debug, Serialize)]
pub struct TorusConjugacy {
    pub a: Vec<f64>,
    pub g: f64,
    pub hbar: f64,
    /// G̃_μ(A + h̄ω), evaluated by an independent reduced solve at θ = 0.
    pub g_tilde: f64,
    pub defect: f64,
}

/// Checks G_μ(A) = G̃_μ(A + h̄_μ(A, 0)ω).
pub fn torus_conjugacy(system: &PendulumSystem, mu: f64, a: &[f64], settings: &OrbitSettings) -> Result<TorusConjugacy> {
    let hbar = conjugacy_shift(system, mu, a, 0.0, settings)?;
    let g = homoclinic_f(system, mu, a, 0.0, settings)?.value;
    let shifted: Vec<f64> = a.iter().zip(system.omega()).map(|(x, w)| x + hbar * w).collect();
    let g_tilde = reduced_value(system, mu, &shifted, 0.0, settings)?.0;
    Ok(TorusConjugacy { a: a.to_vec(), g, hbar, g_tilde, defect: (g - g_tilde).abs() })
}
