//! Reduced orbits: Q = q₀(t − θ − ν) + w solving −Q̈ + sin Q(1 − μf) = αψ₀(t − θ)
//! with ∫(Q − q_θ)ψ₀(t − θ)dt = 0, for real or complex (A, θ).

use crate::action::{ActionValue, SEPARATRIX_ACTION};
use crate::error::{Error, Result};
use crate::green::{ode_residual, tridiagonal_solve};
use crate::grid::{quadrature_weights, TimeGrid};
use crate::scalar::Scalar;
use crate::separatrix::{psi0, psi0_derivative, psi0_normalization, separatrix_point};
use crate::system::{corrected, lagrangian_correction, pendulum_forcing, BasePoint, OrbitSettings, PendulumSystem};
use std::f64::consts::{FRAC_PI_2, PI};

#[derive(Clone, Debug)]
pub struct ReducedOrbit<T> {
    pub mu: f64,
    pub a: Vec<T>,
    pub theta: T,
    pub nu: T,
    pub alpha: T,
    /// Grid centred at Re θ; node `pin` sits at t = Re θ where w vanishes.
    pub grid: TimeGrid,
    pub pin: usize,
    pub w: Vec<T>,
    pub dw: Vec<T>,
    /// sup |−Q̈ + sin Q − μ sin Q f − αψ_θ| over interior nodes.
    pub residual: f64,
    /// |∫(Q − q_θ)ψ_θ dt|.
    pub orthogonality: f64,
    pub iterations: usize,
}

struct Workspace<T> {
    f: Vec<T>,
    grad_f: Vec<T>,
    psi: Vec<T>,
    weights: Vec<f64>,
}

impl<T: Scalar> ReducedOrbit<T> {
    pub fn base(&self, j: usize) -> BasePoint<T> {
        BasePoint::at_single(T::lift(self.grid.node(j)) - self.theta - self.nu)
    }

    /// Q(t_j) − q_θ(t_j).
    pub fn deviation(&self, j: usize) -> T {
        let t = T::lift(self.grid.node(j));
        separatrix_point(t - self.theta - self.nu).q - separatrix_point(t - self.theta).q + self.w[j]
    }

    /// (‖w‖ + |ν| + |α|)·δ²/(μ‖f‖), the constant of the size estimate.
    pub fn size_constant(&self, f_norm: f64, delta: f64) -> f64 {
        let sup = self.w.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if self.mu == 0.0 || f_norm == 0.0 {
            return 0.0;
        }
        (sup + self.nu.abs() + self.alpha.abs()) * delta * delta / (self.mu.abs() * f_norm)
    }

    /// Sixth-order Lagrange interpolation of w at real time t.
    pub fn w_at(&self, t: f64) -> (T, T) {
        let x = (t - self.grid.start()) / self.grid.step();
        let last = self.grid.len() - 1;
        let base = (x.floor() as isize - 2).clamp(0, last as isize - 5) as usize;
        let mut value = T::default();
        let mut slope = T::default();
        for i in 0..6 {
            let xi = (base + i) as f64;
            let mut li = 1.0;
            let mut dli = 0.0;
            for m in 0..6 {
                if m == i {
                    continue;
                }
                let xm = (base + m) as f64;
                let mut prod = 1.0 / (xi - xm);
                for r in 0..6 {
                    if r != i && r != m {
                        prod *= (x - (base + r) as f64) / (xi - (base + r) as f64);
                    }
                }
                dli += prod;
                li *= (x - xm) / (xi - xm);
            }
            value = value + self.w[base + i] * T::lift(li);
            slope = slope + self.w[base + i] * T::lift(dli / self.grid.step());
        }
        (value, slope)
    }
}

fn workspace<T: Scalar>(system: &PendulumSystem, a: &[T], theta: T, grid: &TimeGrid) -> Workspace<T> {
    let samples = system.f.sample_line(system.omega(), a, grid.nodes());
    let psi = grid.nodes().map(|t| psi0(T::lift(t) - theta)).collect();
    Workspace { f: samples.values, grad_f: samples.gradients, psi, weights: grid.weights() }
}

/// Solves the reduced problem by Newton on the Numerov discretization with the unknowns
/// (w off the pin, ν, α) and the pin node's Numerov row plus orthogonality as bordering equations.
pub fn solve_reduced<T: Scalar>(
    system: &PendulumSystem,
    mu: f64,
    a: &[T],
    theta: T,
    settings: &OrbitSettings,
) -> Result<ReducedOrbit<T>> {
    let imag = theta.imag_part().abs();
    if imag >= FRAC_PI_2 {
        return Err(Error::StripViolation { imag, limit: FRAC_PI_2 });
    }
    for (ai, r) in a.iter().zip(system.f.widths()) {
        if ai.imag_part().abs() > *r {
            return Err(Error::StripViolation { imag: ai.imag_part().abs(), limit: *r });
        }
    }
    let step = settings.step;
    let half = (settings.half_length / step).ceil() as usize;
    let n = 2 * half + 1;
    let grid = TimeGrid::new(theta.re() - half as f64 * step, step, 2 * half).expect("valid grid");
    let pin = half;
    let ws = workspace(system, a, theta, &grid);
    let damping: Vec<T> = ws.f.iter().map(|f| T::lift(1.0) - T::lift(mu) * *f).collect();
    let q_theta: Vec<T> = grid.nodes().map(|t| separatrix_point(T::lift(t) - theta).q).collect();
    let h2 = T::lift(step * step / 12.0);

    let mut w = vec![T::default(); n];
    let mut nu = T::default();
    let mut alpha = T::default();
    let mut last_update = f64::INFINITY;
    let mut iterations = 0;
    let mut g = vec![T::default(); n];
    let mut dg = vec![T::default(); n];
    let mut g_nu = vec![T::default(); n];
    let mut bases = Vec::with_capacity(n);
    for iteration in 1..=settings.newton.max_iter {
        iterations = iteration;
        bases.clear();
        bases.extend(grid.nodes().map(|t| BasePoint::at_single(T::lift(t) - theta - nu)));
        for j in 0..n {
            let (gj, dgj) = pendulum_forcing(&bases[j], w[j], damping[j]);
            g[j] = gj - alpha * ws.psi[j];
            dg[j] = dgj;
            let c = corrected(&bases[j], w[j]);
            g_nu[j] = -(c.cos_q * damping[j] - bases[j].cos_q()) * bases[j].dq;
        }
        let row = |j: usize, v: &[T]| h2 * (v[j + 1] + T::lift(10.0) * v[j] + v[j - 1]);
        let residual_at = |j: usize| w[j + 1] - T::lift(2.0) * w[j] + w[j - 1] - row(j, &g);
        let psi_row = |j: usize| -row(j, &ws.psi);

        // Unknown layout: left block w_1..w_{pin-1}, right block w_{pin+1}..w_{n-2}.
        let blocks = [(1usize, pin - 1), (pin + 1, n - 2)];
        let mut x0 = Vec::new();
        let mut x_nu = Vec::new();
        let mut x_alpha = Vec::new();
        for (lo, hi) in blocks {
            let m = hi + 1 - lo;
            let mut sub = vec![T::default(); m];
            let mut diag = vec![T::default(); m];
            let mut sup = vec![T::default(); m];
            let mut r0 = vec![T::default(); m];
            let mut r_nu = vec![T::default(); m];
            let mut r_alpha = vec![T::default(); m];
            for i in 0..m {
                let j = lo + i;
                sub[i] = T::lift(1.0) - h2 * dg[j - 1];
                diag[i] = T::lift(-2.0) - T::lift(10.0) * h2 * dg[j];
                sup[i] = T::lift(1.0) - h2 * dg[j + 1];
                r0[i] = -residual_at(j);
                r_nu[i] = row(j, &g_nu);
                r_alpha[i] = psi_row(j);
            }
            x0.push(tridiagonal_solve(&sub, &diag, &sup, &r0));
            x_nu.push(tridiagonal_solve(&sub, &diag, &sup, &r_nu));
            x_alpha.push(tridiagonal_solve(&sub, &diag, &sup, &r_alpha));
        }
        let (l_last, r_first) = (pin - 2, 0usize);
        let a_left = T::lift(1.0) - h2 * dg[pin - 1];
        let a_right = T::lift(1.0) - h2 * dg[pin + 1];
        // Pin row: r_p + a_l δw_{p−1} + a_r δw_{p+1} + c_ν δν + c_α δα = 0.
        let r_p = residual_at(pin);
        let c_nu = -row(pin, &g_nu);
        let c_alpha = -psi_row(pin);
        let pin_const = r_p + a_left * x0[0][l_last] + a_right * x0[1][r_first];
        let pin_nu = c_nu + a_left * x_nu[0][l_last] + a_right * x_nu[1][r_first];
        let pin_alpha = c_alpha + a_left * x_alpha[0][l_last] + a_right * x_alpha[1][r_first];
        // Orthogonality: Σ W_j (Q_j − q_θ,j) ψ_j.
        let mut orth = T::default();
        let mut orth_nu = T::default();
        for j in 0..n {
            let wp = T::lift(ws.weights[j]) * ws.psi[j];
            orth = orth + wp * (bases[j].q - q_theta[j] + w[j]);
            orth_nu = orth_nu - wp * bases[j].dq;
        }
        let mut orth_const = orth;
        let mut orth_alpha = T::default();
        let mut orth_nu_total = orth_nu;
        for (b, (lo, _)) in blocks.iter().enumerate() {
            for (i, ((x, xn), xa)) in x0[b].iter().zip(&x_nu[b]).zip(&x_alpha[b]).enumerate() {
                let wp = T::lift(ws.weights[lo + i]) * ws.psi[lo + i];
                orth_const = orth_const + wp * *x;
                orth_nu_total = orth_nu_total + wp * *xn;
                orth_alpha = orth_alpha + wp * *xa;
            }
        }
        let det = pin_nu * orth_alpha - pin_alpha * orth_nu_total;
        let d_nu = (-pin_const * orth_alpha + pin_alpha * orth_const) / det;
        let d_alpha = (-orth_const * pin_nu + orth_nu_total * pin_const) / det;
        last_update = d_nu.abs().max(d_alpha.abs());
        for (b, (lo, _)) in blocks.iter().enumerate() {
            for i in 0..x0[b].len() {
                let d = x0[b][i] + x_nu[b][i] * d_nu + x_alpha[b][i] * d_alpha;
                last_update = last_update.max(d.abs());
                w[lo + i] = w[lo + i] + d;
            }
        }
        nu = nu + d_nu;
        alpha = alpha + d_alpha;
        if !last_update.is_finite() {
            break;
        }
        if last_update < settings.newton.tol {
            break;
        }
    }
    if !(last_update < settings.newton.tol) {
        return Err(Error::NonConvergence { iterations, residual: last_update });
    }
    let bases: Vec<BasePoint<T>> = grid.nodes().map(|t| BasePoint::at_single(T::lift(t) - theta - nu)).collect();
    let forcing = |j: usize, v: T| {
        let (gj, dgj) = pendulum_forcing(&bases[j], v, damping[j]);
        (gj - alpha * ws.psi[j], dgj)
    };
    let residual = ode_residual(&w, step, forcing);
    let dw = grid.derivative(&w);
    let mut orbit = ReducedOrbit {
        mu,
        a: a.to_vec(),
        theta,
        nu,
        alpha,
        grid,
        pin,
        w,
        dw,
        residual,
        orthogonality: 0.0,
        iterations,
    };
    let weights = quadrature_weights(n, step);
    let orth = (0..n).fold(T::default(), |acc, j| acc + T::lift(weights[j]) * orbit.deviation(j) * ws.psi[j]);
    orbit.orthogonality = orth.abs();
    Ok(orbit)
}

/// Reduced action F̃_μ(A, θ) with ∂_θF̃ = α(−γ + ∫(Q − q_θ)ψ̇_θ) and ∂_AF̃ = −μ∫(1 − cos Q)∂_φf.
pub struct ReducedAction<T> {
    pub value: T,
    pub dtheta: T,
    pub da: Vec<T>,
    pub quadrature_error: f64,
}

pub fn reduced_action<T: Scalar>(system: &PendulumSystem, orbit: &ReducedOrbit<T>) -> ReducedAction<T> {
    let n = system.n();
    let ws = workspace(system, &orbit.a, orbit.theta, &orbit.grid);
    let mut correction = Vec::with_capacity(orbit.grid.len());
    let mut value = T::lift(SEPARATRIX_ACTION);
    let mut da = vec![T::default(); n];
    let mut projection = T::default();
    for j in 0..orbit.grid.len() {
        let base = orbit.base(j);
        let wt = T::lift(ws.weights[j]);
        let lc = lagrangian_correction(&base, orbit.w[j], orbit.dw[j], T::lift(orbit.mu) * ws.f[j]);
        correction.push(lc);
        value = value + wt * lc;
        let omc = corrected(&base, orbit.w[j]).one_minus_cos_q;
        for (d, gf) in da.iter_mut().zip(&ws.grad_f[j * n..(j + 1) * n]) {
            *d = *d - T::lift(orbit.mu) * wt * omc * *gf;
        }
        let dpsi = psi0_derivative(T::lift(orbit.grid.node(j)) - orbit.theta);
        projection = projection + wt * orbit.deviation(j) * dpsi;
    }
    let dtheta = orbit.alpha * (projection - T::lift(psi0_normalization()));
    let re: Vec<f64> = correction.iter().map(|c| c.re()).collect();
    let im: Vec<f64> = correction.iter().map(|c| c.im()).collect();
    let step = orbit.grid.step();
    let quadrature_error = crate::action::quadrature_indicator(&re, step)
        + crate::action::quadrature_indicator(&im, step)
        + correction[0].abs()
        + correction[correction.len() - 1].abs();
    ReducedAction { value, dtheta, da, quadrature_error }
}

impl ReducedAction<f64> {
    pub fn to_action_value(&self) -> ActionValue {
        ActionValue {
            value: self.value,
            dtheta: vec![self.dtheta],
            da: self.da.clone(),
            quadrature_error: self.quadrature_error,
        }
    }
}

/// l with Q^μ_{A,θ}(θ + l) = π, by safeguarded Newton on [−1, 1].
pub fn section_shift(orbit: &ReducedOrbit<f64>) -> Result<f64> {
    let eval = |l: f64| {
        let t = orbit.theta + l;
        let p = separatrix_point(t - orbit.theta - orbit.nu);
        let (w, dw) = orbit.w_at(t);
        (p.q + w - PI, p.dq + dw)
    };
    let (mut lo, mut hi) = (-1.0, 1.0);
    let (flo, fhi) = (eval(lo).0, eval(hi).0);
    if flo * fhi > 0.0 {
        return Err(Error::RootNotBracketed(format!("Q(θ ± 1) − π = {flo:e}, {fhi:e}")));
    }
    let mut l = orbit.nu;
    if !(lo..=hi).contains(&l) {
        l = 0.0;
    }
    for _ in 0..100 {
        let (fv, dv) = eval(l);
        if fv == 0.0 {
            return Ok(l);
        }
        if fv < 0.0 {
            lo = l;
        } else {
            hi = l;
        }
        let mut next = l - fv / dv;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - l).abs() < 1e-15 {
            return Ok(next);
        }
        l = next;
    }
    Ok(l)
}
