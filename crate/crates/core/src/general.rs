//! 1-bump pseudo-homoclinic orbits for a general perturbation f(φ, q), in the coordinate
//! u = q − Q^μ(ωt + A) centred on the perturbed torus, and their action with the P_i terms.

use crate::action::{quadrature_indicator, ActionValue};
use crate::error::{Error, Result};
use crate::green::{ode_residual, solve_dirichlet, Side};
use crate::grid::TimeGrid;
use crate::onebump::half_grid;
use crate::perturbation::GeneralPerturbation;
use crate::system::{lagrangian_correction, BasePoint, OrbitSettings};
use crate::tori::QuasiPeriodicOrbit;
use std::f64::consts::{PI, TAU};

/// One half-line: u = q₀(t − θ) + w.
#[derive(Clone, Debug)]
pub struct GeneralHalf {
    pub side: Side,
    pub grid: TimeGrid,
    pub w: Vec<f64>,
    pub dw: Vec<f64>,
    /// Q^μ along the line at the grid nodes.
    pub torus_q: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct GeneralOneBump {
    pub mu: f64,
    pub a: Vec<f64>,
    pub theta: f64,
    pub left: GeneralHalf,
    pub right: GeneralHalf,
    pub residual: f64,
}

impl GeneralOneBump {
    /// (u̇(θ⁻), u̇(θ⁺)).
    pub fn velocities_at_section(&self) -> (f64, f64) {
        (2.0 + self.left.dw[self.left.grid.len() - 1], 2.0 + self.right.dw[0])
    }
}

/// The torus solution must belong to the same perturbation and μ.
pub struct GeneralProblem<'a> {
    pub omega: &'a [f64],
    pub f: &'a GeneralPerturbation,
    pub torus: &'a QuasiPeriodicOrbit,
}

impl GeneralProblem<'_> {
    fn check(&self, a: &[f64]) -> Result<()> {
        if a.len() != self.omega.len() || self.f.n() != self.omega.len() || self.torus.omega != self.omega {
            return Err(Error::InvalidInput("general problem dimensions or frequencies disagree".into()));
        }
        Ok(())
    }

    fn phases(&self, a: &[f64], t: f64) -> Vec<f64> {
        a.iter().zip(self.omega).map(|(ai, w)| ai + w * t).collect()
    }

    fn solve_half(&self, a: &[f64], theta: f64, side: Side, settings: &OrbitSettings) -> Result<GeneralHalf> {
        let mu = self.torus.mu;
        let grid = half_grid(theta, side, settings.step, settings.half_length);
        let times: Vec<f64> = grid.nodes().collect();
        let (torus_q, _) = self.torus.q_series.on_line(self.omega, a, &times);
        let bases: Vec<BasePoint<f64>> = times.iter().map(|t| BasePoint::at_single(t - theta)).collect();
        let phases: Vec<Vec<f64>> = times.iter().map(|t| self.phases(a, *t)).collect();
        let torus_fq: Vec<f64> = phases.iter().zip(&torus_q).map(|(p, q)| self.f.eval(p, *q).fq).collect();
        let forcing = |j: usize, w: f64| {
            let big_q = torus_q[j];
            let u = bases[j].q + w;
            let v = self.f.eval(&phases[j], big_q + u);
            let g = (big_q + u).sin() - big_q.sin() - mu * (v.fq - torus_fq[j]) - bases[j].ddq;
            (g, (big_q + u).cos() - mu * v.fqq)
        };
        let out = solve_dirichlet(grid.step(), 0.0, 0.0, vec![0.0; grid.len()], forcing, settings.newton)?;
        let residual = ode_residual(&out.values, grid.step(), forcing);
        let dw = grid.derivative(&out.values);
        Ok(GeneralHalf { side, grid, w: out.values, dw, torus_q, residual, iterations: out.iterations })
    }

    /// Solves −ü + sin(Q + u) − sin Q = μ[∂_q f(ψ, Q + u) − ∂_q f(ψ, Q)] with u(θ) = π.
    pub fn solve_one_bump(&self, a: &[f64], theta: f64, settings: &OrbitSettings) -> Result<GeneralOneBump> {
        self.check(a)?;
        let left = self.solve_half(a, theta, Side::Left, settings)?;
        let right = self.solve_half(a, theta, Side::Right, settings)?;
        Ok(GeneralOneBump {
            mu: self.torus.mu,
            a: a.to_vec(),
            theta,
            residual: left.residual.max(right.residual),
            left,
            right,
        })
    }

    /// 𝓕_μ(A, θ) = ∫_{−∞}^θ L(P₀) + ∫_θ^∞ L(P₁) + 2π q̇^μ_A(θ), with its θ- and A-derivatives.
    pub fn action(&self, orbit: &GeneralOneBump) -> ActionValue {
        let mu = orbit.mu;
        let n = self.omega.len();
        let mut value = 0.0;
        let mut da = vec![0.0; n];
        let mut quadrature_error = 0.0;
        for (half, winding) in [(&orbit.left, 0.0), (&orbit.right, 1.0)] {
            let mut integrand = Vec::with_capacity(half.grid.len());
            let mut jump = vec![Vec::with_capacity(half.grid.len()); n];
            for j in 0..half.grid.len() {
                let t = half.grid.node(j);
                let base = BasePoint::at_single(t - orbit.theta);
                let (w, dw) = (half.w[j], half.dw[j]);
                let u = base.q + w;
                let big_q = half.torus_q[j];
                let psi = self.phases(&orbit.a, t);
                let on = self.f.eval(&psi, big_q + u);
                let off = self.f.eval(&psi, big_q);
                let shifted = u - TAU * winding;
                let pendulum = shifted.cos() - 1.0 - (big_q + shifted).cos() + big_q.cos() - big_q.sin() * shifted;
                let forcing = on.f - off.f - off.fq * shifted;
                integrand.push(lagrangian_correction(&base, w, dw, 0.0) + pendulum - mu * forcing);
                for c in 0..n {
                    jump[c].push(on.grad_phi[c] - off.grad_phi[c]);
                }
            }
            value += 4.0 + half.grid.integrate(&integrand);
            quadrature_error += quadrature_indicator(&integrand, half.grid.step());
            for c in 0..n {
                da[c] -= mu * half.grid.integrate(&jump[c]);
            }
        }
        value += TAU * self.torus.p_series.eval(&self.phases(&orbit.a, orbit.theta));
        let (before, after) = orbit.velocities_at_section();
        ActionValue { value, dtheta: vec![0.5 * (after * after - before * before)], da, quadrature_error }
    }

    /// 𝒢_μ(A) = 𝓕_μ(A, 0).
    pub fn homoclinic_g(&self, a: &[f64], settings: &OrbitSettings) -> Result<f64> {
        Ok(self.action(&self.solve_one_bump(a, 0.0, settings)?).value)
    }
}

/// Section value check: u(θ) = π holds by construction of the half-line problems.
pub fn section_value(orbit: &GeneralOneBump) -> f64 {
    PI + orbit.right.w[0]
}
