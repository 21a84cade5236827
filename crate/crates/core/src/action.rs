//! Action functionals on pseudo-homoclinic orbits, their derivatives and the Melnikov primitives.

use crate::error::Result;
use crate::frequency::dot_k;
use crate::grid::{integrate_uniform, TimeGrid};
use crate::onebump::{solve_one_bump, BumpHalf, OneBumpOrbit};
use crate::perturbation::{GeneralPerturbation, PerturbationSeries};
use crate::separatrix::separatrix_point;
use crate::system::{corrected, lagrangian_correction, OrbitSettings, PendulumSystem};
use serde::Serialize;

/// Action of the unperturbed separatrix, ∫q̇₀² dt.
pub const SEPARATRIX_ACTION: f64 = 8.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ActionValue {
    pub value: f64,
    /// ∂_θ components (one per bump).
    pub dtheta: Vec<f64>,
    /// ∂_A components.
    pub da: Vec<f64>,
    pub quadrature_error: f64,
}

/// Richardson-style error indicator: compares the full-resolution rule with the stride-2 rule.
pub(crate) fn quadrature_indicator(values: &[f64], step: f64) -> f64 {
    if values.len() < 21 {
        return 0.0;
    }
    let coarse: Vec<f64> = values.iter().step_by(2).copied().collect();
    let fine = integrate_uniform(values, step);
    let rough = if (values.len() - 1) % 2 == 0 {
        integrate_uniform(&coarse, 2.0 * step)
    } else {
        fine
    };
    (fine - rough).abs() / 15.0
}

/// Per-node data of a 1-bump half needed by the action and the trace.
pub(crate) struct HalfIntegrands {
    pub correction: Vec<f64>,
    /// (1 − cos q)∇f, node-major.
    pub jump_density: Vec<f64>,
}

pub(crate) fn half_integrands(system: &PendulumSystem, mu: f64, a: &[f64], half: &BumpHalf) -> HalfIntegrands {
    let n = system.n();
    let samples = system.f.sample_line(system.omega(), a, half.grid.nodes());
    let mut correction = Vec::with_capacity(half.grid.len());
    let mut jump_density = Vec::with_capacity(half.grid.len() * n);
    for j in 0..half.grid.len() {
        let base = half.base(j);
        correction.push(lagrangian_correction(&base, half.w[j], half.dw[j], mu * samples.values[j]));
        let omc = corrected(&base, half.w[j]).one_minus_cos_q;
        jump_density.extend(samples.gradient(j).iter().map(|g| omc * g));
    }
    HalfIntegrands { correction, jump_density }
}

/// F_μ(A, θ) with ∂_θF from the velocity jump and ∂_AF from the jump quadrature.
pub fn action_one_bump(system: &PendulumSystem, orbit: &OneBumpOrbit) -> ActionValue {
    let n = system.n();
    let mut value = SEPARATRIX_ACTION;
    let mut da = vec![0.0; n];
    let mut quadrature_error = 0.0;
    for half in [&orbit.left, &orbit.right] {
        let data = half_integrands(system, orbit.mu, &orbit.a, half);
        let step = half.grid.step();
        value += integrate_uniform(&data.correction, step);
        let weights = half.grid.weights();
        for (j, w) in weights.iter().enumerate() {
            for (d, g) in da.iter_mut().zip(&data.jump_density[j * n..(j + 1) * n]) {
                *d -= orbit.mu * w * g;
            }
        }
        let far = match half.side {
            crate::green::Side::Left => 0,
            crate::green::Side::Right => half.grid.len() - 1,
        };
        quadrature_error += quadrature_indicator(&data.correction, step) + data.correction[far].abs();
    }
    let (before, after) = orbit.velocities_at_section();
    ActionValue { value, dtheta: vec![0.5 * (after * after - before * before)], da, quadrature_error }
}

/// G_μ(A) = F_μ(A, 0).
pub fn homoclinic_g(system: &PendulumSystem, mu: f64, a: &[f64], settings: &OrbitSettings) -> Result<f64> {
    let orbit = solve_one_bump(system, mu, a, 0.0, settings)?;
    Ok(action_one_bump(system, &orbit).value)
}

/// F_μ(A, θ) as a full action value.
pub fn homoclinic_f(
    system: &PendulumSystem,
    mu: f64,
    a: &[f64],
    theta: f64,
    settings: &OrbitSettings,
) -> Result<ActionValue> {
    let orbit = solve_one_bump(system, mu, a, theta, settings)?;
    Ok(action_one_bump(system, &orbit))
}

/// Time samples of I_μ(t) = I₀ − μ∫_{−T}^t (1 − cos q)∂_φf ds.
#[derive(Clone, Debug)]
pub struct ActionTrace {
    pub times: Vec<f64>,
    /// Node-major, n components per time.
    pub actions: Vec<f64>,
    pub n: usize,
}

impl ActionTrace {
    pub fn action(&self, idx: usize) -> &[f64] {
        &self.actions[idx * self.n..(idx + 1) * self.n]
    }

    pub fn last(&self) -> &[f64] {
        self.action(self.times.len() - 1)
    }

    pub fn first(&self) -> &[f64] {
        self.action(0)
    }

    /// Appends the trace of one grid piece starting from the current last value.
    pub(crate) fn extend_piece(&mut self, grid: &TimeGrid, mu: f64, jump_density: &[f64]) {
        let n = self.n;
        let start = self.last().to_vec();
        let mut cumulative = Vec::with_capacity(n);
        for c in 0..n {
            let comp: Vec<f64> = (0..grid.len()).map(|j| jump_density[j * n + c]).collect();
            cumulative.push(grid.cumulative(&comp));
        }
        for j in 1..grid.len() {
            self.times.push(grid.node(j));
            for c in 0..n {
                self.actions.push(start[c] - mu * cumulative[c][j]);
            }
        }
    }
}

/// Action trace along a 1-bump orbit.
pub fn action_trace(system: &PendulumSystem, orbit: &OneBumpOrbit, i0: &[f64]) -> ActionTrace {
    let mut trace = ActionTrace { times: vec![orbit.left.grid.start()], actions: i0.to_vec(), n: system.n() };
    for half in [&orbit.left, &orbit.right] {
        let data = half_integrands(system, orbit.mu, &orbit.a, half);
        trace.extend_piece(&half.grid, orbit.mu, &data.jump_density);
    }
    trace
}

/// Grid for Melnikov quadratures that resolves every mode of f.
pub fn melnikov_grid(omega: &[f64], f: &PerturbationSeries) -> TimeGrid {
    let fastest = f.modes().map(|(k, _)| dot_k(omega, k).abs()).fold(1.0, f64::max);
    let step = 0.02f64.min(std::f64::consts::PI / (4.0 * fastest));
    TimeGrid::spanning(-40.0, 40.0, step)
}

/// Γ(B) = ∫(1 − cos q₀(t)) f(ωt + B) dt.
pub fn melnikov_gamma(omega: &[f64], f: &PerturbationSeries, b: &[f64]) -> f64 {
    let grid = melnikov_grid(omega, f);
    let samples = f.sample_line(omega, b, grid.nodes());
    let values: Vec<f64> = grid
        .nodes()
        .zip(&samples.values)
        .map(|(t, v)| separatrix_point(t).one_minus_cos_q * v)
        .collect();
    grid.integrate(&values)
}

/// M(A) = ∫[f(ωt + A, q₀(t)) − f(ωt + A, 0)] dt.
pub fn melnikov_general(omega: &[f64], f: &GeneralPerturbation, a: &[f64]) -> f64 {
    let fastest = f.modes().map(|(k, _, _)| dot_k(omega, k).abs()).fold(1.0, f64::max);
    let grid = TimeGrid::spanning(-40.0, 40.0, 0.02f64.min(std::f64::consts::PI / (4.0 * fastest)));
    let values: Vec<f64> = grid
        .nodes()
        .map(|t| {
            let phi: Vec<f64> = omega.iter().zip(a).map(|(w, ai)| w * t + ai).collect();
            f.eval(&phi, separatrix_point(t).q).f - f.eval(&phi, 0.0).f
        })
        .collect();
    grid.integrate(&values)
}

/// Sign s in G_μ = const + s·μΓ + O(μ²) for the Lagrangian q̇²/2 + (1 − cos q)(1 − μf).
/// Fixed by the first-order expansion and re-checked numerically in the tests.
pub const MELNIKOV_SIGN: f64 = -1.0;
