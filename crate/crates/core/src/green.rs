//! Green operators of −ü + u and the Numerov–Newton kernel shared by all orbit solvers.

use crate::error::{Error, Result};
use crate::grid::{cumulative_uniform, TimeGrid};
use crate::scalar::Scalar;

/// Samples of a function and its time derivative on a uniform grid.
#[derive(Clone, Debug)]
pub struct GridFunction<T> {
    pub grid: TimeGrid,
    pub values: Vec<T>,
    pub derivative_values: Vec<T>,
}

impl<T: Scalar> GridFunction<T> {
    pub fn new(grid: TimeGrid, values: Vec<T>, derivative_values: Vec<T>) -> Self {
        assert_eq!(values.len(), grid.len());
        assert_eq!(derivative_values.len(), grid.len());
        Self { grid, values, derivative_values }
    }

    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> (T, T)) -> Self {
        let (values, derivative_values) = grid.nodes().map(f).unzip();
        Self { grid, values, derivative_values }
    }

    /// Largest gap between the stored derivative and a fourth-order difference of the values.
    pub fn derivative_consistency(&self) -> f64 {
        let d = self.grid.derivative(&self.values);
        d.iter().zip(&self.derivative_values).map(|(a, b)| (*a - *b).abs()).fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Thomas algorithm; `sub[0]` and `sup[n-1]` are ignored.
pub fn tridiagonal_solve<T: Scalar>(sub: &[T], diag: &[T], sup: &[T], rhs: &[T]) -> Vec<T> {
    let n = diag.len();
    let mut c = vec![T::default(); n];
    let mut d = vec![T::default(); n];
    if n == 0 {
        return d;
    }
    c[0] = sup[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - sub[i] * c[i - 1];
        c[i] = sup[i] / m;
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / m;
    }
    for i in (0..n - 1).rev() {
        let next = d[i + 1];
        d[i] = d[i] - c[i] * next;
    }
    d
}

/// Sixth-order central second difference at interior node j (3 ≤ j ≤ len−4).
pub fn second_difference6<T: Scalar>(v: &[T], j: usize, step: f64) -> T {
    let c = |x: f64| T::lift(x);
    (c(2.0) * (v[j - 3] + v[j + 3]) - c(27.0) * (v[j - 2] + v[j + 2]) + c(270.0) * (v[j - 1] + v[j + 1])
        - c(490.0) * v[j])
        / T::lift(180.0 * step * step)
}

/// Settings for the Newton iteration on Numerov discretizations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self { tol: 1e-13, max_iter: 30 }
    }
}

#[derive(Clone, Debug)]
pub struct NewtonOutcome<T> {
    pub values: Vec<T>,
    pub iterations: usize,
    pub last_update: f64,
}

/// Solves w'' = G(t_j, w) on a uniform grid with Dirichlet data by Newton on the Numerov scheme.
/// `forcing(j, w)` returns (G, ∂G/∂w) at node j. The tridiagonal Jacobian solve is the discrete
/// Green operator of the linearized problem.
pub fn solve_dirichlet<T: Scalar>(
    step: f64,
    left: T,
    right: T,
    mut values: Vec<T>,
    forcing: impl Fn(usize, T) -> (T, T),
    settings: NewtonSettings,
) -> Result<NewtonOutcome<T>> {
    let n = values.len();
    if n < 3 {
        return Err(Error::InvalidInput("Dirichlet problem needs at least three nodes".into()));
    }
    values[0] = left;
    values[n - 1] = right;
    let h2 = T::lift(step * step / 12.0);
    let m = n - 2;
    let mut g = vec![T::default(); n];
    let mut dg = vec![T::default(); n];
    let mut sub = vec![T::default(); m];
    let mut diag = vec![T::default(); m];
    let mut sup = vec![T::default(); m];
    let mut rhs = vec![T::default(); m];
    let mut last_update = f64::INFINITY;
    for iteration in 1..=settings.max_iter {
        for j in 0..n {
            let (gj, dgj) = forcing(j, values[j]);
            g[j] = gj;
            dg[j] = dgj;
        }
        for i in 0..m {
            let j = i + 1;
            rhs[i] = -(values[j + 1] - T::lift(2.0) * values[j] + values[j - 1]
                - h2 * (g[j + 1] + T::lift(10.0) * g[j] + g[j - 1]));
            sub[i] = T::lift(1.0) - h2 * dg[j - 1];
            diag[i] = T::lift(-2.0) - T::lift(10.0) * h2 * dg[j];
            sup[i] = T::lift(1.0) - h2 * dg[j + 1];
        }
        let delta = tridiagonal_solve(&sub, &diag, &sup, &rhs);
        last_update = delta.iter().map(|d| d.abs()).fold(0.0, f64::max);
        for (v, d) in values[1..n - 1].iter_mut().zip(&delta) {
            *v = *v + *d;
        }
        if !last_update.is_finite() {
            break;
        }
        if last_update < settings.tol {
            return Ok(NewtonOutcome { values, iterations: iteration, last_update });
        }
    }
    Err(Error::NonConvergence { iterations: settings.max_iter, residual: last_update })
}

/// Continuous residual sup|w'' − G(t, w)| over interior nodes, with w'' from sixth-order differences.
pub fn ode_residual<T: Scalar>(values: &[T], step: f64, forcing: impl Fn(usize, T) -> (T, T)) -> f64 {
    let n = values.len();
    if n < 7 {
        return 0.0;
    }
    (3..n - 3)
        .map(|j| (second_difference6(values, j, step) - forcing(j, values[j]).0).abs())
        .fold(0.0, f64::max)
}

fn reverse_cumulative<T: Scalar>(values: &[T], step: f64) -> Vec<T> {
    let rev: Vec<T> = values.iter().rev().copied().collect();
    let mut c = cumulative_uniform(&rev, step);
    c.reverse();
    c
}

/// u(t) = ½∫₀^∞ (e^{−|t−s|} − e^{−(t+s)}) h(s) ds on the right half-line, mirrored on the left.
/// The input grid starts at 0 (right) or ends at 0 (left).
pub fn green_halfline<T: Scalar>(h: &GridFunction<T>, side: Side) -> GridFunction<T> {
    match side {
        Side::Right => green_halfline_right(&h.grid, &h.values),
        Side::Left => {
            let grid = h.grid;
            let mirrored = TimeGrid::new(0.0, grid.step(), grid.intervals()).expect("valid grid");
            let vals: Vec<T> = h.values.iter().rev().copied().collect();
            let out = green_halfline_right(&mirrored, &vals);
            let values = out.values.into_iter().rev().collect();
            let derivative_values = out.derivative_values.into_iter().rev().map(|d| -d).collect();
            GridFunction::new(grid, values, derivative_values)
        }
    }
}

fn green_halfline_right<T: Scalar>(grid: &TimeGrid, h: &[T]) -> GridFunction<T> {
    let step = grid.step();
    let inner: Vec<T> = grid.nodes().zip(h).map(|(s, v)| *v * T::lift(s.sinh())).collect();
    let outer: Vec<T> = grid.nodes().zip(h).map(|(s, v)| *v * T::lift((-s).exp())).collect();
    let lower = cumulative_uniform(&inner, step);
    let upper = reverse_cumulative(&outer, step);
    let mut values = Vec::with_capacity(h.len());
    let mut derivative_values = Vec::with_capacity(h.len());
    for (j, t) in grid.nodes().enumerate() {
        let decay = T::lift((-t).exp());
        values.push(decay * lower[j] + T::lift(t.sinh()) * upper[j]);
        derivative_values.push(-decay * lower[j] + T::lift(t.cosh()) * upper[j]);
    }
    GridFunction::new(*grid, values, derivative_values)
}

/// Dirichlet Green operator on [0, θ]: u(0) = u(θ) = 0.
pub fn green_interval<T: Scalar>(h: &GridFunction<T>, theta: f64) -> GridFunction<T> {
    let grid = h.grid;
    let step = grid.step();
    let inner: Vec<T> = grid.nodes().zip(&h.values).map(|(s, v)| *v * T::lift(s.sinh())).collect();
    let outer: Vec<T> =
        grid.nodes().zip(&h.values).map(|(s, v)| *v * T::lift((theta - s).sinh())).collect();
    let lower = cumulative_uniform(&inner, step);
    let upper = reverse_cumulative(&outer, step);
    let norm = theta.sinh();
    let mut values = Vec::with_capacity(grid.len());
    let mut derivative_values = Vec::with_capacity(grid.len());
    for (j, t) in grid.nodes().enumerate() {
        values.push((T::lift((theta - t).sinh()) * lower[j] + T::lift(t.sinh()) * upper[j]) / T::lift(norm));
        derivative_values
            .push((T::lift(-(theta - t).cosh()) * lower[j] + T::lift(t.cosh()) * upper[j]) / T::lift(norm));
    }
    GridFunction::new(grid, values, derivative_values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thomas_matches_dense() {
        let sub = [0.0, 1.0, 2.0, -1.0];
        let diag = [4.0, 5.0, 6.0, 7.0];
        let sup = [1.0, -2.0, 1.0, 0.0];
        let x = [1.0, -1.0, 0.5, 2.0];
        let rhs: Vec<f64> = (0..4)
            .map(|i| {
                diag[i] * x[i] + if i > 0 { sub[i] * x[i - 1] } else { 0.0 } + if i < 3 { sup[i] * x[i + 1] } else { 0.0 }
            })
            .collect();
        let sol = tridiagonal_solve(&sub, &diag, &sup, &rhs);
        for (a, b) in sol.iter().zip(&x) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn numerov_linear_problem() {
        // w'' = w with w(0) = 0, w(1) = sinh 1.
        let n = 101;
        let step = 0.01;
        let out = solve_dirichlet(step, 0.0, 1f64.sinh(), vec![0.0; n], |_, w| (w, 1.0), NewtonSettings::default()).unwrap();
        let err = out.values.iter().enumerate().map(|(j, v)| (v - (j as f64 * step).sinh()).abs()).fold(0.0, f64::max);
        assert!(err < 1e-11, "{err}");
    }
}
