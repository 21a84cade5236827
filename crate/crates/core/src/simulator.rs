//! Direct integration of the full flow
//! φ̇ = ω, İ = −μ(1 − cos q)∇f(φ), q̇ = p, ṗ = sin q·(1 − μf(φ))
//! by symmetric splitting into the exactly solvable drift (ω·I + p²/2) and the potential kick.

use crate::chain::{build_chain, ChainResult, PipelineOptions};
use crate::error::{Error, Result};
use crate::fit::{fit_line, LinearFit};
use crate::frequency::{norm, wrap_angle};
use crate::perturbation::PerturbationSeries;
use crate::system::PendulumSystem;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlowState {
    pub t: f64,
    pub phi: Vec<f64>,
    pub action: Vec<f64>,
    /// Unwrapped pendulum angle.
    pub q: f64,
    pub p: f64,
}

impl FlowState {
    /// Distance of (q mod 2π, p) to the hyperbolic point.
    pub fn torus_distance(&self) -> f64 {
        wrap_angle(self.q).hypot(self.p)
    }
}

pub struct Flow<'a> {
    pub omega: &'a [f64],
    pub f: &'a PerturbationSeries,
    pub mu: f64,
}

impl<'a> Flow<'a> {
    pub fn new(system: &'a PendulumSystem, mu: f64) -> Self {
        Self { omega: system.omega(), f: &system.f, mu }
    }

    pub fn hamiltonian(&self, s: &FlowState) -> f64 {
        let rotor: f64 = self.omega.iter().zip(&s.action).map(|(w, i)| w * i).sum();
        let cq = s.q.cos();
        rotor + 0.5 * s.p * s.p + (cq - 1.0) + self.mu * (1.0 - cq) * self.f.eval(&s.phi)
    }

    fn kick(&self, s: &mut FlowState, h: f64) {
        let (sq, cq) = s.q.sin_cos();
        if self.mu == 0.0 {
            s.p += h * sq;
            return;
        }
        let (fv, grad) = self.f.eval_with_gradient(&s.phi);
        s.p += h * sq * (1.0 - self.mu * fv);
        let weight = h * self.mu * (1.0 - cq);
        s.action.iter_mut().zip(&grad).for_each(|(i, g)| *i -= weight * g);
    }

    fn drift(&self, s: &mut FlowState, h: f64) {
        s.phi.iter_mut().zip(self.omega).for_each(|(p, w)| *p += w * h);
        s.q += s.p * h;
        s.t += h;
    }

    fn strang(&self, s: &mut FlowState, h: f64) {
        self.kick(s, 0.5 * h);
        self.drift(s, h);
        self.kick(s, 0.5 * h);
    }

    /// One step of the chosen scheme.
    pub fn step(&self, s: &mut FlowState, h: f64, scheme: Scheme) {
        match scheme {
            Scheme::Strang => self.strang(s, h),
            Scheme::Yoshida4 => {
                let cbrt2 = 2f64.cbrt();
                let outer = 1.0 / (2.0 - cbrt2);
                let inner = -cbrt2 * outer;
                self.strang(s, outer * h);
                self.strang(s, inner * h);
                self.strang(s, outer * h);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Kick-drift-kick, second order.
    Strang,
    /// Triple-jump composition of Strang steps, fourth order.
    #[default]
    Yoshida4,
}

impl Scheme {
    pub fn order(self) -> u32 {
        match self {
            Scheme::Strang => 2,
            Scheme::Yoshida4 => 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegrateOptions {
    /// Largest step; the actual step divides the duration evenly.
    pub dt: f64,
    pub scheme: Scheme,
    /// Record every this many steps (0 records only the end points).
    pub record_every: usize,
    /// Error out when |H(t) − H(0)| exceeds this.
    pub drift_bound: Option<f64>,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self { dt: 1e-2, scheme: Scheme::Yoshida4, record_every: 0, drift_bound: None }
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub states: Vec<FlowState>,
    pub energies: Vec<f64>,
    /// max_t |H(t) − H(0)| over every step.
    pub max_drift: f64,
    pub steps: usize,
}

impl Trajectory {
    pub fn last(&self) -> &FlowState {
        self.states.last().expect("trajectory has a start")
    }

    pub fn header(n: usize) -> Vec<String> {
        let mut cols = vec!["t".to_string()];
        cols.extend((1..=n).map(|i| format!("phi{i}")));
        cols.extend((1..=n).map(|i| format!("I{i}")));
        cols.extend(["q", "p", "H"].map(String::from));
        cols
    }

    /// Rows (t, φ…, I…, q, p, H).
    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.states
            .iter()
            .zip(&self.energies)
            .map(|(s, h)| {
                let mut row = vec![s.t];
                row.extend(&s.phi);
                row.extend(&s.action);
                row.extend([s.q, s.p, *h]);
                row
            })
            .collect()
    }
}

/// Integrates for `duration` (negative runs backwards in time).
pub fn integrate(flow: &Flow, state0: &FlowState, duration: f64, options: &IntegrateOptions) -> Result<Trajectory> {
    if !(options.dt > 0.0) || !duration.is_finite() {
        return Err(Error::InvalidInput(format!("integration needs dt > 0 and finite duration ({}, {duration})", options.dt)));
    }
    if state0.phi.len() != flow.omega.len() || state0.action.len() != flow.omega.len() {
        return Err(Error::InvalidInput(format!("state dimension differs from ω ({})", flow.omega.len())));
    }
    let steps = (duration.abs() / options.dt).ceil() as usize;
    let h = if steps == 0 { 0.0 } else { duration / steps as f64 };
    let mut state = state0.clone();
    let h0 = flow.hamiltonian(&state);
    let mut out = Trajectory { states: vec![state.clone()], energies: vec![h0], max_drift: 0.0, steps };
    for j in 1..=steps {
        flow.step(&mut state, h, options.scheme);
        let energy = flow.hamiltonian(&state);
        out.max_drift = out.max_drift.max((energy - h0).abs());
        if let Some(bound) = options.drift_bound {
            if out.max_drift > bound {
                return Err(Error::EnergyDrift { drift: out.max_drift, bound, t: state.t });
            }
        }
        if j == steps || (options.record_every > 0 && j % options.record_every == 0) {
            out.states.push(state.clone());
            out.energies.push(energy);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WindowReport {
    pub index: usize,
    pub theta: f64,
    /// I(θ̄_i + w) − I(θ̄_i − w) along the direct flow.
    pub direct_jump: Vec<f64>,
    /// |ΔI_direct − ΔI_variational| over the window.
    pub jump_error: f64,
    /// Largest |(q, p)| deviation from the variational orbit at the window edges.
    pub edge_deviation: f64,
    /// Distance to the next torus at the right edge.
    pub approach: f64,
    pub energy_drift: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ShadowReport {
    pub mu: f64,
    pub windows: Vec<WindowReport>,
    pub max_jump_error: f64,
    pub max_edge_deviation: f64,
    /// Windows whose jump error exceeds the tolerance.
    pub failures: Vec<usize>,
    pub tolerance: f64,
    /// Time spent between leaving the η-ball of the initial torus and θ̄₁.
    pub departure: f64,
    /// Time from θ̄_k to the first entry in the η-ball of the final torus.
    pub arrival: f64,
    /// ω·ΣΔI over the direct windows.
    pub energy_relation: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShadowOptions {
    pub dt: f64,
    pub scheme: Scheme,
    /// Per-window jump tolerance as a multiple of μ.
    pub relative_tolerance: f64,
    /// Longest run searched for the η-ball crossings.
    pub max_approach: f64,
}

impl Default for ShadowOptions {
    fn default() -> Self {
        Self { dt: 5e-3, scheme: Scheme::Yoshida4, relative_tolerance: 1e-4, max_approach: 60.0 }
    }
}

fn anchored(chain: &ChainResult, omega: &[f64], i: usize) -> FlowState {
    let tr = &chain.transitions[i];
    FlowState {
        t: tr.anchor.t,
        phi: chain.a_bar.iter().zip(omega).map(|(a, w)| a + w * tr.anchor.t).collect(),
        action: tr.anchor.action.clone(),
        q: tr.anchor.q,
        p: tr.anchor.p,
    }
}

/// Time until the flow from `state` first enters the η-ball, or None within `max`.
fn entry_time(flow: &Flow, state: &FlowState, eta: f64, max: f64, backwards: bool, options: &ShadowOptions) -> Option<f64> {
    let h = if backwards { -options.dt } else { options.dt };
    let mut s = state.clone();
    let mut prev = s.torus_distance();
    let mut elapsed = 0.0;
    while elapsed < max {
        flow.step(&mut s, h, options.scheme);
        elapsed += options.dt;
        let d = s.torus_distance();
        if d <= eta {
            return Some(elapsed - options.dt * (eta - d) / (prev - d));
        }
        prev = d;
    }
    None
}

/// Re-anchors the direct flow on the variational orbit at every θ̄_i and integrates over the
/// transition window in both directions.
pub fn shadow_verify(system: &PendulumSystem, mu: f64, chain: &ChainResult, eta: f64, options: &ShadowOptions) -> Result<ShadowReport> {
    if chain.transitions.is_empty() {
        return Err(Error::InvalidInput("chain carries no transition data".into()));
    }
    let flow = Flow::new(system, mu);
    let omega = system.omega();
    let run = IntegrateOptions { dt: options.dt, scheme: options.scheme, record_every: 0, drift_bound: None };
    let windows = (0..chain.transitions.len())
        .into_par_iter()
        .map(|i| {
            let tr = &chain.transitions[i];
            let start = anchored(chain, omega, i);
            let fwd = integrate(&flow, &start, tr.after.t - tr.anchor.t, &run)?;
            let bwd = integrate(&flow, &start, tr.before.t - tr.anchor.t, &run)?;
            let (right, left) = (fwd.last(), bwd.last());
            let direct: Vec<f64> = right.action.iter().zip(&left.action).map(|(a, b)| a - b).collect();
            let predicted = tr.jump();
            let jump_error = norm(&direct.iter().zip(&predicted).map(|(a, b)| a - b).collect::<Vec<_>>());
            let edge_deviation = (right.q - tr.after.q)
                .hypot(right.p - tr.after.p)
                .max((left.q - tr.before.q).hypot(left.p - tr.before.p));
            Ok(WindowReport {
                index: tr.index,
                theta: tr.theta,
                direct_jump: direct.clone(),
                jump_error,
                edge_deviation,
                approach: right.torus_distance(),
                energy_drift: fwd.max_drift.max(bwd.max_drift),
            })
        })
        .collect::<Result<Vec<WindowReport>>>()?;
    let tolerance = options.relative_tolerance * mu;
    let failures = windows.iter().filter(|w| !(w.jump_error <= tolerance)).map(|w| w.index).collect();
    let max_jump_error = windows.iter().map(|w| w.jump_error).fold(0.0, f64::max);
    let max_edge_deviation = windows.iter().map(|w| w.edge_deviation).fold(0.0, f64::max);

    let first = anchored(chain, omega, 0);
    let last = anchored(chain, omega, chain.transitions.len() - 1);
    let departure = entry_time(&flow, &first, eta, options.max_approach, true, options).unwrap_or(f64::INFINITY);
    let arrival = entry_time(&flow, &last, eta, options.max_approach, false, options).unwrap_or(f64::INFINITY);
    let total: Vec<f64> = (0..omega.len())
        .map(|c| windows.iter().map(|w| w.direct_jump[c]).sum::<f64>())
        .collect();
    let energy_relation = omega.iter().zip(&total).map(|(w, d)| w * d).sum();
    Ok(ShadowReport {
        mu,
        windows,
        max_jump_error,
        max_edge_deviation,
        failures,
        tolerance,
        departure,
        arrival,
        energy_relation,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalingRow {
    pub mu: f64,
    pub delta: Option<f64>,
    pub k: Option<usize>,
    pub diffusion_time: Option<f64>,
    /// T_d·μ/|ln μ|.
    pub ratio: Option<f64>,
    pub gradient_norm: Option<f64>,
    pub interior_margin: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
    /// T_d·μ = c·(a + |ln μ|): slope c, intercept c·a.
    pub fit: Option<LinearFit>,
    pub offset: Option<f64>,
    /// max/min of T_d·μ/|ln μ| over the successful rows.
    pub band: Option<f64>,
}

/// End-to-end chains for every μ; failures are recorded per row.
pub fn scaling_experiment(
    system: &PendulumSystem,
    mus: &[f64],
    i0: &[f64],
    i0p: &[f64],
    options: &PipelineOptions,
) -> ScalingReport {
    let rows: Vec<ScalingRow> = mus
        .par_iter()
        .map(|&mu| match build_chain(system, mu, i0, i0p, options) {
            Ok(run) => ScalingRow {
                mu,
                delta: Some(run.certificate.delta),
                k: Some(run.plan.k),
                diffusion_time: Some(run.diffusion_time),
                ratio: Some(run.diffusion_time * mu / mu.ln().abs()),
                gradient_norm: Some(run.result.gradient_norm),
                interior_margin: Some(run.result.interior_margin),
                error: None,
            },
            Err(e) => ScalingRow {
                mu,
                delta: None,
                k: None,
                diffusion_time: None,
                ratio: None,
                gradient_norm: None,
                interior_margin: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    scaling_summary(rows)
}

pub fn scaling_summary(rows: Vec<ScalingRow>) -> ScalingReport {
    let ok: Vec<(f64, f64, f64)> = rows
        .iter()
        .filter_map(|r| Some((r.mu, r.diffusion_time?, r.ratio?)))
        .collect();
    let x: Vec<f64> = ok.iter().map(|r| r.0.ln().abs()).collect();
    let y: Vec<f64> = ok.iter().map(|r| r.1 * r.0).collect();
    let fit = fit_line(&x, &y).ok();
    let offset = fit.map(|f| f.intercept / f.slope);
    let band = (!ok.is_empty()).then(|| {
        let hi = ok.iter().map(|r| r.2).fold(0.0, f64::max);
        let lo = ok.iter().map(|r| r.2).fold(f64::INFINITY, f64::min);
        hi / lo
    });
    ScalingReport { rows, fit, offset, band }
}
