//! 1-bump pseudo-homoclinic orbits: q(θ) = π, asymptotic to the torus at both ends,
//! solving the perturbed pendulum equation on each half-line.

use crate::error::Result;
use crate::green::{ode_residual, solve_dirichlet, GridFunction, Side};
use crate::grid::TimeGrid;
use crate::separatrix::separatrix_point;
use crate::system::{pendulum_forcing, BasePoint, OrbitSettings, PendulumSystem};

/// One half of a 1-bump orbit: q = q₀(t − θ) + w + 2π·offset on a grid that
/// starts (right half) or ends (left half) at θ.
#[derive(Clone, Debug)]
pub struct BumpHalf {
    pub side: Side,
    pub theta: f64,
    pub grid: TimeGrid,
    pub w: Vec<f64>,
    pub dw: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

impl BumpHalf {
    /// Index of the node at t = θ.
    pub fn pin(&self) -> usize {
        match self.side {
            Side::Left => self.grid.len() - 1,
            Side::Right => 0,
        }
    }

    pub fn base(&self, j: usize) -> BasePoint<f64> {
        BasePoint::at_single(self.grid.node(j) - self.theta)
    }

    /// q̇ at the pin, one-sided.
    pub fn pin_velocity(&self) -> f64 {
        2.0 + self.dw[self.pin()]
    }
}

/// Grid of a half-line problem with the given step and at least `length` time units.
pub fn half_grid(theta: f64, side: Side, step: f64, length: f64) -> TimeGrid {
    let intervals = (length / step).ceil() as usize;
    let start = match side {
        Side::Left => theta - intervals as f64 * step,
        Side::Right => theta,
    };
    TimeGrid::new(start, step, intervals).expect("positive step")
}

/// Solves one half-line Dirichlet problem w(θ) = 0, w(θ ± T) = 0.
pub fn solve_half(
    system: &PendulumSystem,
    mu: f64,
    a: &[f64],
    grid: TimeGrid,
    theta: f64,
    side: Side,
    guess: Option<&[f64]>,
    settings: &OrbitSettings,
) -> Result<BumpHalf> {
    let samples = system.f.sample_line(system.omega(), a, grid.nodes());
    let damping: Vec<f64> = samples.values.iter().map(|f| 1.0 - mu * f).collect();
    let bases: Vec<BasePoint<f64>> = grid.nodes().map(|t| BasePoint::at_single(t - theta)).collect();
    let forcing = |j: usize, w: f64| pendulum_forcing(&bases[j], w, damping[j]);
    let initial = guess.map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; grid.len()]);
    let out = solve_dirichlet(grid.step(), 0.0, 0.0, initial, forcing, settings.newton)?;
    let residual = ode_residual(&out.values, grid.step(), forcing);
    let dw = grid.derivative(&out.values);
    Ok(BumpHalf { side, theta, grid, w: out.values, dw, iterations: out.iterations, residual })
}

#[derive(Clone, Debug)]
pub struct OneBumpOrbit {
    pub mu: f64,
    pub a: Vec<f64>,
    pub theta: f64,
    pub left: BumpHalf,
    pub right: BumpHalf,
    /// sup |−q̈ + sin q − μ sin q f| over interior nodes of both halves.
    pub residual: f64,
    pub section_value: f64,
}

impl OneBumpOrbit {
    /// q and q̇ on the combined grid [θ − T, θ + T] (requires equal steps on both halves).
    pub fn q(&self) -> GridFunction<f64> {
        assert!((self.left.grid.step() - self.right.grid.step()).abs() < 1e-15);
        let grid = TimeGrid::new(
            self.left.grid.start(),
            self.left.grid.step(),
            self.left.grid.intervals() + self.right.grid.intervals(),
        )
        .expect("valid grid");
        let mut values = Vec::with_capacity(grid.len());
        let mut derivative_values = Vec::with_capacity(grid.len());
        for half in [&self.left, &self.right] {
            let skip = usize::from(half.side == Side::Right);
            for j in skip..half.grid.len() {
                let p = separatrix_point(half.grid.node(j) - self.theta);
                values.push(p.q + half.w[j]);
                derivative_values.push(p.dq + half.dw[j]);
            }
        }
        GridFunction::new(grid, values, derivative_values)
    }

    /// (q̇(θ⁻), q̇(θ⁺)).
    pub fn velocities_at_section(&self) -> (f64, f64) {
        (self.left.pin_velocity(), self.right.pin_velocity())
    }

    /// Smallest C with |q − q_θ| ≤ C μ e^{−|t−θ|/2} on the grid.
    pub fn decay_constant(&self) -> f64 {
        if self.mu == 0.0 {
            return 0.0;
        }
        let mut c: f64 = 0.0;
        for half in [&self.left, &self.right] {
            for (j, w) in half.w.iter().enumerate() {
                let dt = (half.grid.node(j) - self.theta).abs();
                c = c.max(w.abs() * (0.5 * dt).exp());
            }
        }
        c / self.mu.abs()
    }

    /// Largest defect of the fixed-point form w = L₀(w − G(w)) on each half-line,
    /// with L₀ the continuous Green operator.
    pub fn fixed_point_defect(&self, system: &PendulumSystem) -> f64 {
        let mut worst: f64 = 0.0;
        for half in [&self.left, &self.right] {
            let samples = system.f.sample_line(system.omega(), &self.a, half.grid.nodes());
            let shifted = TimeGrid::new(half.grid.start() - self.theta, half.grid.step(), half.grid.intervals())
                .expect("valid grid");
            let h: Vec<f64> = (0..half.grid.len())
                .map(|j| {
                    let base = half.base(j);
                    half.w[j] - pendulum_forcing(&base, half.w[j], 1.0 - self.mu * samples.values[j]).0
                })
                .collect();
            let hf = GridFunction::new(shifted, h, vec![0.0; shifted.len()]);
            let u = crate::green::green_halfline(&hf, half.side);
            for (a, b) in u.values.iter().zip(&half.w) {
                worst = worst.max((a - b).abs());
            }
        }
        worst
    }
}

/// Solves for the 1-bump orbit with section q(θ) = π.
pub fn solve_one_bump(
    system: &PendulumSystem,
    mu: f64,
    a: &[f64],
    theta: f64,
    settings: &OrbitSettings,
) -> Result<OneBumpOrbit> {
    solve_one_bump_from(system, mu, a, theta, settings, None)
}

/// As [`solve_one_bump`], starting Newton from the given (left, right) corrections.
pub fn solve_one_bump_from(
    system: &PendulumSystem,
    mu: f64,
    a: &[f64],
    theta: f64,
    settings: &OrbitSettings,
    guess: Option<(&[f64], &[f64])>,
) -> Result<OneBumpOrbit> {
    let lg = half_grid(theta, Side::Left, settings.step, settings.half_length);
    let rg = half_grid(theta, Side::Right, settings.step, settings.half_length);
    let left = solve_half(system, mu, a, lg, theta, Side::Left, guess.map(|g| g.0), settings)?;
    let right = solve_half(system, mu, a, rg, theta, Side::Right, guess.map(|g| g.1), settings)?;
    let section_value = std::f64::consts::PI + right.w[0];
    Ok(OneBumpOrbit {
        mu,
        a: a.to_vec(),
        theta,
        residual: left.residual.max(right.residual),
        section_value,
        left,
        right,
    })
}
