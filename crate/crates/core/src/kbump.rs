//! k-bump pseudo-homoclinic orbits with q(θ_i) = (2i − 1)π and the decomposition
//! F^k = Σ F_μ(A, θ_i) + Σ R_i of their action.

use crate::action::{quadrature_indicator, ActionTrace, ActionValue, SEPARATRIX_ACTION};
use crate::error::{Error, Result};
use crate::green::{ode_residual, solve_dirichlet, Side};
use crate::grid::{quadrature_weights, TimeGrid};
use crate::onebump::{half_grid, solve_half, BumpHalf};
use crate::separatrix::separatrix_point;
use crate::system::{corrected, lagrangian, lagrangian_correction, pendulum_forcing, BasePoint, OrbitSettings, PendulumSystem};
use rayon::prelude::*;
use std::f64::consts::PI;

/// Solution on [θ_i, θ_{i+1}] as a correction to q₀(t − θ_i) + q₀(t − θ_{i+1}) + 2πi.
#[derive(Clone, Debug)]
pub struct BumpInterval {
    pub index: usize,
    pub left_center: f64,
    pub right_center: f64,
    pub grid: TimeGrid,
    pub w: Vec<f64>,
    pub dw: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

impl BumpInterval {
    pub fn base(&self, j: usize) -> BasePoint<f64> {
        let t = self.grid.node(j);
        BasePoint::pair(separatrix_point(t - self.left_center), separatrix_point(t - self.right_center))
    }

    /// Unwrapped q at node j.
    pub fn q(&self, j: usize) -> f64 {
        self.base(j).q + self.w[j] + 2.0 * PI * self.index as f64
    }

    pub fn length(&self) -> f64 {
        self.right_center - self.left_center
    }
}

#[derive(Clone, Debug)]
pub struct KBumpOrbit {
    pub mu: f64,
    pub a: Vec<f64>,
    pub thetas: Vec<f64>,
    pub left_tail: BumpHalf,
    /// Right tail, offset by 2π(k − 1).
    pub right_tail: BumpHalf,
    pub intervals: Vec<BumpInterval>,
    pub residual: f64,
}

/// Default node count for an interval of length L: even, with step at most h.
pub fn interval_nodes(length: f64, step: f64) -> usize {
    2 * ((length / (2.0 * step)).ceil() as usize).max(1)
}

impl KBumpOrbit {
    pub fn k(&self) -> usize {
        self.thetas.len()
    }

    pub fn node_counts(&self) -> Vec<usize> {
        self.intervals.iter().map(|iv| iv.grid.intervals()).collect()
    }

    /// q(θ_i) − (2i − 1)π for every bump (1-based i).
    pub fn section_defects(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.k());
        for i in 0..self.k() {
            let q = if i < self.intervals.len() {
                self.intervals[i].q(0)
            } else {
                PI + self.right_tail.w[0] + 2.0 * PI * (self.k() - 1) as f64
            };
            out.push(q - (2 * i + 1) as f64 * PI);
        }
        out
    }

    /// (t, q, q̇) at every node, in the order of [`k_bump_trace`].
    pub fn samples(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::new();
        let tail = |half: &BumpHalf, offset: f64, skip: usize, out: &mut Vec<(f64, f64, f64)>| {
            for j in skip..half.grid.len() {
                let b = half.base(j);
                out.push((half.grid.node(j), b.q + half.w[j] + offset, b.dq + half.dw[j]));
            }
        };
        tail(&self.left_tail, 0.0, 0, &mut out);
        for iv in &self.intervals {
            for j in 1..iv.grid.len() {
                out.push((iv.grid.node(j), iv.q(j), iv.base(j).dq + iv.dw[j]));
            }
        }
        tail(&self.right_tail, 2.0 * PI * (self.k() - 1) as f64, 1, &mut out);
        out
    }

    /// (q̇(θ_i⁻), q̇(θ_i⁺)).
    pub fn velocities(&self, i: usize) -> (f64, f64) {
        let before = if i == 0 {
            self.left_tail.pin_velocity()
        } else {
            let iv = &self.intervals[i - 1];
            let last = iv.grid.len() - 1;
            iv.base(last).dq + iv.dw[last]
        };
        let after = if i + 1 == self.k() {
            self.right_tail.pin_velocity()
        } else {
            let iv = &self.intervals[i];
            iv.base(0).dq + iv.dw[0]
        };
        (before, after)
    }
}

/// Solves the k-bump problem. `node_counts` fixes the interval discretizations (used to keep
/// the grids frozen under finite differences); otherwise [`interval_nodes`] is used.
pub fn solve_k_bump(
    system: &PendulumSystem,
    mu: f64,
    a: &[f64],
    thetas: &[f64],
    settings: &OrbitSettings,
    node_counts: Option<&[usize]>,
) -> Result<KBumpOrbit> {
    let k = thetas.len();
    if k == 0 {
        return Err(Error::InvalidInput("k-bump orbit needs at least one bump".into()));
    }
    for pair in thetas.windows(2) {
        let spacing = pair[1] - pair[0];
        if !(spacing >= settings.min_spacing - 1e-9) {
            return Err(Error::SpacingTooSmall { spacing, min: settings.min_spacing });
        }
    }
    if let Some(counts) = node_counts {
        if counts.len() + 1 != k {
            return Err(Error::InvalidInput("node count list must have k − 1 entries".into()));
        }
    }
    let first = thetas[0];
    let last = thetas[k - 1];
    let left_tail = solve_half(
        system,
        mu,
        a,
        half_grid(first, Side::Left, settings.step, settings.half_length),
        first,
        Side::Left,
        None,
        settings,
    )?;
    let right_tail = solve_half(
        system,
        mu,
        a,
        half_grid(last, Side::Right, settings.step, settings.half_length),
        last,
        Side::Right,
        None,
        settings,
    )?;
    let intervals: Result<Vec<BumpInterval>> = (0..k - 1)
        .into_par_iter()
        .map(|i| {
            let length = thetas[i + 1] - thetas[i];
            let nodes = node_counts.map(|c| c[i]).unwrap_or_else(|| interval_nodes(length, settings.step));
            solve_interval(system, mu, a, i, thetas[i], thetas[i + 1], nodes, settings)
        })
        .collect();
    let intervals = intervals?;
    let residual = intervals
        .iter()
        .map(|iv| iv.residual)
        .fold(left_tail.residual.max(right_tail.residual), f64::max);
    Ok(KBumpOrbit { mu, a: a.to_vec(), thetas: thetas.to_vec(), left_tail, right_tail, intervals, residual })
}

#[allow(clippy::too_many_arguments)]
fn solve_interval(
    system: &PendulumSystem,
    mu: f64,
    a: &[f64],
    index: usize,
    left_center: f64,
    right_center: f64,
    nodes: usize,
    settings: &OrbitSettings,
) -> Result<BumpInterval> {
    let length = right_center - left_center;
    let grid = TimeGrid::new(left_center, length / nodes as f64, nodes)?;
    let samples = system.f.sample_line(system.omega(), a, grid.nodes());
    let damping: Vec<f64> = samples.values.iter().map(|f| 1.0 - mu * f).collect();
    let bases: Vec<BasePoint<f64>> = grid
        .nodes()
        .map(|t| BasePoint::pair(separatrix_point(t - left_center), separatrix_point(t - right_center)))
        .collect();
    // Boundary values making q(θ_i) = (2i+1)π and q(θ_{i+1}) = (2i+3)π exactly.
    let edge = separatrix_point(-length).q;
    let forcing = |j: usize, w: f64| pendulum_forcing(&bases[j], w, damping[j]);
    let out = solve_dirichlet(grid.step(), -edge, edge, vec![0.0; grid.len()], forcing, settings.newton)?;
    let residual = ode_residual(&out.values, grid.step(), forcing);
    let dw = grid.derivative(&out.values);
    Ok(BumpInterval {
        index,
        left_center,
        right_center,
        grid,
        w: out.values,
        dw,
        residual,
        iterations: out.iterations,
    })
}

/// Pointwise integrands of one interval: full Lagrangian and (1 − cos q)∇f.
fn interval_integrands(system: &PendulumSystem, mu: f64, a: &[f64], iv: &BumpInterval) -> (Vec<f64>, Vec<f64>) {
    let n = system.n();
    let samples = system.f.sample_line(system.omega(), a, iv.grid.nodes());
    let mut lag = Vec::with_capacity(iv.grid.len());
    let mut jump = Vec::with_capacity(iv.grid.len() * n);
    for j in 0..iv.grid.len() {
        let base = iv.base(j);
        lag.push(lagrangian(&base, iv.w[j], iv.dw[j], 1.0 - mu * samples.values[j]));
        let omc = corrected(&base, iv.w[j]).one_minus_cos_q;
        jump.extend(samples.gradient(j).iter().map(|g| omc * g));
    }
    (lag, jump)
}

fn half_lagrangian(system: &PendulumSystem, mu: f64, a: &[f64], half: &BumpHalf) -> (Vec<f64>, Vec<f64>) {
    let samples = system.f.sample_line(system.omega(), a, half.grid.nodes());
    let mut full = Vec::with_capacity(half.grid.len());
    let mut correction = Vec::with_capacity(half.grid.len());
    for j in 0..half.grid.len() {
        let base = half.base(j);
        full.push(lagrangian(&base, half.w[j], half.dw[j], 1.0 - mu * samples.values[j]));
        correction.push(lagrangian_correction(&base, half.w[j], half.dw[j], mu * samples.values[j]));
    }
    (full, correction)
}

/// Gregory weights of the sub-range [from, to] of a uniform grid.
fn piece_integral(values: &[f64], from: usize, to: usize, step: f64) -> f64 {
    let w = quadrature_weights(to + 1 - from, step);
    values[from..=to].iter().zip(&w).map(|(v, wi)| v * wi).sum()
}

#[derive(Clone, Debug)]
pub struct KBumpAction {
    /// F^k = Σ F_i + Σ R_i.
    pub value: f64,
    /// 1-bump actions F_μ(A, θ_i) on the interval discretizations.
    pub one_bump: Vec<f64>,
    /// R_i = R_i⁻ + R_i⁺.
    pub remainders: Vec<f64>,
    /// Direct quadrature of the k-bump action, for the decomposition check.
    pub direct: f64,
    pub gradient: ActionValue,
}

impl KBumpAction {
    pub fn max_remainder(&self) -> f64 {
        self.remainders.iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

/// Analytic gradient of F^k: velocity jumps in θ_i and the jump quadrature in A.
pub fn k_bump_gradient(system: &PendulumSystem, orbit: &KBumpOrbit) -> ActionValue {
    let n = system.n();
    let mut da = vec![0.0; n];
    let mut value = 0.0;
    let mut quadrature_error = 0.0;
    for half in [&orbit.left_tail, &orbit.right_tail] {
        let data = crate::action::half_integrands(system, orbit.mu, &orbit.a, half);
        let w = half.grid.weights();
        for (j, wj) in w.iter().enumerate() {
            for (d, g) in da.iter_mut().zip(&data.jump_density[j * n..(j + 1) * n]) {
                *d -= orbit.mu * wj * g;
            }
        }
        value += 0.5 * SEPARATRIX_ACTION + half.grid.integrate(&data.correction);
        quadrature_error += quadrature_indicator(&data.correction, half.grid.step());
    }
    let pieces: Vec<(f64, Vec<f64>, f64)> = orbit
        .intervals
        .par_iter()
        .map(|iv| {
            let (lag, jump) = interval_integrands(system, orbit.mu, &orbit.a, iv);
            let w = iv.grid.weights();
            let mut local = vec![0.0; n];
            for (j, wj) in w.iter().enumerate() {
                for (d, g) in local.iter_mut().zip(&jump[j * n..(j + 1) * n]) {
                    *d -= orbit.mu * wj * g;
                }
            }
            (iv.grid.integrate(&lag), local, quadrature_indicator(&lag, iv.grid.step()))
        })
        .collect();
    for (v, local, err) in pieces {
        value += v;
        quadrature_error += err;
        for (d, l) in da.iter_mut().zip(local) {
            *d += l;
        }
    }
    let dtheta = (0..orbit.k())
        .map(|i| {
            let (before, after) = orbit.velocities(i);
            0.5 * (after * after - before * before)
        })
        .collect();
    ActionValue { value, dtheta, da, quadrature_error }
}

/// F^k with its decomposition into 1-bump actions and the remainders R_i.
pub fn action_k_bump(system: &PendulumSystem, orbit: &KBumpOrbit, settings: &OrbitSettings) -> Result<KBumpAction> {
    let k = orbit.k();
    let gradient = k_bump_gradient(system, orbit);
    if k == 1 {
        let value = gradient.value;
        return Ok(KBumpAction { value, one_bump: vec![value], remainders: vec![0.0], direct: value, gradient });
    }
    let (mu, a) = (orbit.mu, orbit.a.as_slice());
    let per_bump: Result<Vec<(f64, f64)>> = (0..k)
        .into_par_iter()
        .map(|i| {
            let theta = orbit.thetas[i];
            let mut f_i = SEPARATRIX_ACTION;
            let mut r_i = 0.0;
            // Left side of bump i.
            if i == 0 {
                let (_, corr) = half_lagrangian(system, mu, a, &orbit.left_tail);
                f_i += orbit.left_tail.grid.integrate(&corr);
            } else {
                let iv = &orbit.intervals[i - 1];
                let step = iv.grid.step();
                let length = (0.5 * iv.length() + 1.0).max(settings.half_length);
                let grid = half_grid(theta, Side::Left, step, length);
                let reference = solve_half(system, mu, a, grid, theta, Side::Left, None, settings)?;
                let (ref_full, ref_corr) = half_lagrangian(system, mu, a, &reference);
                f_i += reference.grid.integrate(&ref_corr);
                let (lag, _) = interval_integrands(system, mu, a, iv);
                let nodes = iv.grid.intervals();
                let mid = nodes / 2;
                let ref_last = reference.grid.len() - 1;
                let diff: Vec<f64> = (mid..=nodes).map(|j| lag[j] - ref_full[ref_last - (nodes - j)]).collect();
                r_i += piece_integral(&diff, 0, diff.len() - 1, step);
                r_i -= piece_integral(&ref_full, 0, ref_last - (nodes - mid), step);
            }
            // Right side of bump i.
            if i + 1 == k {
                let (_, corr) = half_lagrangian(system, mu, a, &orbit.right_tail);
                f_i += orbit.right_tail.grid.integrate(&corr);
            } else {
                let iv = &orbit.intervals[i];
                let step = iv.grid.step();
                let length = (0.5 * iv.length() + 1.0).max(settings.half_length);
                let grid = half_grid(theta, Side::Right, step, length);
                let reference = solve_half(system, mu, a, grid, theta, Side::Right, None, settings)?;
                let (ref_full, ref_corr) = half_lagrangian(system, mu, a, &reference);
                f_i += reference.grid.integrate(&ref_corr);
                let (lag, _) = interval_integrands(system, mu, a, iv);
                let mid = iv.grid.intervals() / 2;
                let diff: Vec<f64> = (0..=mid).map(|j| lag[j] - ref_full[j]).collect();
                r_i += piece_integral(&diff, 0, mid, step);
                r_i -= piece_integral(&ref_full, mid, reference.grid.len() - 1, step);
            }
            Ok((f_i, r_i))
        })
        .collect();
    let per_bump = per_bump?;
    let one_bump: Vec<f64> = per_bump.iter().map(|p| p.0).collect();
    let remainders: Vec<f64> = per_bump.iter().map(|p| p.1).collect();
    let value = one_bump.iter().sum::<f64>() + remainders.iter().sum::<f64>();
    Ok(KBumpAction { value, one_bump, remainders, direct: gradient.value, gradient })
}

/// 𝓕^k = F^k − (I₀′ − I₀)·A with its full gradient.
pub fn heteroclinic_value(
    system: &PendulumSystem,
    orbit: &KBumpOrbit,
    jump: &[f64],
    tolerance: f64,
) -> Result<ActionValue> {
    let defect: f64 = system.omega().iter().zip(jump).map(|(w, d)| w * d).sum();
    if defect.abs() > tolerance {
        return Err(Error::EnergyDefect(defect));
    }
    let mut g = k_bump_gradient(system, orbit);
    g.value -= jump.iter().zip(&orbit.a).map(|(d, a)| d * a).sum::<f64>();
    for (d, j) in g.da.iter_mut().zip(jump) {
        *d -= j;
    }
    Ok(g)
}

/// I_μ(t) along the whole k-bump orbit.
pub fn k_bump_trace(system: &PendulumSystem, orbit: &KBumpOrbit, i0: &[f64]) -> ActionTrace {
    let mut trace = ActionTrace { times: vec![orbit.left_tail.grid.start()], actions: i0.to_vec(), n: system.n() };
    let data = crate::action::half_integrands(system, orbit.mu, &orbit.a, &orbit.left_tail);
    trace.extend_piece(&orbit.left_tail.grid, orbit.mu, &data.jump_density);
    for iv in &orbit.intervals {
        let (_, jump) = interval_integrands(system, orbit.mu, &orbit.a, iv);
        trace.extend_piece(&iv.grid, orbit.mu, &jump);
    }
    let data = crate::action::half_integrands(system, orbit.mu, &orbit.a, &orbit.right_tail);
    trace.extend_piece(&orbit.right_tail.grid, orbit.mu, &data.jump_density);
    trace
}
