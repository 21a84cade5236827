//! Uniform time grids, Gregory quadrature and finite-difference helpers.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

/// Gregory end-correction coefficients.
const GREGORY: [f64; 5] = [1.0 / 12.0, 1.0 / 24.0, 19.0 / 720.0, 3.0 / 160.0, 863.0 / 60480.0];
const GREGORY_ORDER: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    start: f64,
    step: f64,
    intervals: usize,
}

impl TimeGrid {
    pub fn new(start: f64, step: f64, intervals: usize) -> Result<Self> {
        if !(step.is_finite() && step != 0.0) || intervals == 0 {
            return Err(Error::InvalidInput(format!(
                "time grid needs a finite nonzero step and at least one interval (step {step}, intervals {intervals})"
            )));
        }
        Ok(Self { start, step, intervals })
    }

    /// Grid from `start` to `end` with the smallest interval count whose step is at most `max_step`.
    pub fn spanning(start: f64, end: f64, max_step: f64) -> Self {
        let intervals = (((end - start) / max_step).abs().ceil() as usize).max(1);
        Self { start, step: (end - start) / intervals as f64, intervals }
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.node(self.intervals)
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn node(&self, j: usize) -> f64 {
        self.start + j as f64 * self.step
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |j| self.node(j))
    }

    /// Quadrature weights; signed like the step so that reversed grids integrate backwards.
    pub fn weights(&self) -> Vec<f64> {
        quadrature_weights(self.len(), self.step)
    }

    pub fn integrate<T: Scalar>(&self, values: &[T]) -> T {
        assert_eq!(values.len(), self.len());
        integrate_uniform(values, self.step)
    }

    /// Running integral from the first node, fourth order on every interval.
    pub fn cumulative<T: Scalar>(&self, values: &[T]) -> Vec<T> {
        cumulative_uniform(values, self.step)
    }

    pub fn derivative<T: Scalar>(&self, values: &[T]) -> Vec<T> {
        differentiate_uniform(values, self.step)
    }
}

/// Trapezoid weights with Gregory end corrections (fourth difference order) when enough nodes exist.
pub fn quadrature_weights(nodes: usize, step: f64) -> Vec<f64> {
    let mut w = vec![step; nodes];
    if nodes == 1 {
        w[0] = 0.0;
        return w;
    }
    w[0] = 0.5 * step;
    w[nodes - 1] = 0.5 * step;
    let order = if nodes > 2 * GREGORY_ORDER + 1 {
        GREGORY_ORDER
    } else {
        ((nodes - 1) / 2).min(GREGORY_ORDER)
    };
    let last = nodes - 1;
    for (j, c) in GREGORY.iter().take(order).enumerate() {
        let order_j = j + 1;
        // -c h (∇^j f_n + (-1)^j Δ^j f_0)
        let mut binom = 1.0;
        for i in 0..=order_j {
            if i > 0 {
                binom = binom * (order_j + 1 - i) as f64 / i as f64;
            }
            let sign_back = if i % 2 == 0 { 1.0 } else { -1.0 };
            w[last - i] -= c * step * sign_back * binom;
            let sign_fwd = if (order_j - i) % 2 == 0 { 1.0 } else { -1.0 };
            let parity = if order_j % 2 == 0 { 1.0 } else { -1.0 };
            w[i] -= c * step * parity * sign_fwd * binom;
        }
    }
    w
}

pub fn integrate_uniform<T: Scalar>(values: &[T], step: f64) -> T {
    let w = quadrature_weights(values.len(), step);
    values.iter().zip(&w).fold(T::default(), |acc, (v, wi)| acc + *v * T::lift(*wi))
}

pub fn cumulative_uniform<T: Scalar>(values: &[T], step: f64) -> Vec<T> {
    let n = values.len();
    let mut out = vec![T::default(); n];
    if n < 2 {
        return out;
    }
    let h = |x: f64| T::lift(x * step);
    for j in 0..n - 1 {
        let inc = if n < 4 {
            h(0.5) * (values[j] + values[j + 1])
        } else if j == 0 {
            h(1.0 / 24.0)
                * (T::lift(9.0) * values[0] + T::lift(19.0) * values[1] - T::lift(5.0) * values[2]
                    + values[3])
        } else if j == n - 2 {
            h(1.0 / 24.0)
                * (values[j - 2] - T::lift(5.0) * values[j - 1]
                    + T::lift(19.0) * values[j]
                    + T::lift(9.0) * values[j + 1])
        } else {
            h(1.0 / 24.0)
                * (T::lift(13.0) * (values[j] + values[j + 1]) - values[j - 1] - values[j + 2])
        };
        out[j + 1] = out[j] + inc;
    }
    out
}

/// Five-point fourth-order derivative with one-sided stencils at the ends.
pub fn differentiate_uniform<T: Scalar>(v: &[T], step: f64) -> Vec<T> {
    let n = v.len();
    let mut d = vec![T::default(); n];
    if n < 5 {
        for j in 0..n {
            let (a, b) = if j == 0 { (0, 1.min(n - 1)) } else if j == n - 1 { (n - 2, n - 1) } else { (j - 1, j + 1) };
            if b > a {
                d[j] = (v[b] - v[a]) / T::lift((b - a) as f64 * step);
            }
        }
        return d;
    }
    let c = |x: f64| T::lift(x);
    let s = T::lift(12.0 * step);
    d[0] = (c(-25.0) * v[0] + c(48.0) * v[1] - c(36.0) * v[2] + c(16.0) * v[3] - c(3.0) * v[4]) / s;
    d[1] = (c(-3.0) * v[0] - c(10.0) * v[1] + c(18.0) * v[2] - c(6.0) * v[3] + v[4]) / s;
    for j in 2..n - 2 {
        d[j] = (v[j - 2] - c(8.0) * v[j - 1] + c(8.0) * v[j + 1] - v[j + 2]) / s;
    }
    let m = n - 1;
    d[m] = (c(25.0) * v[m] - c(48.0) * v[m - 1] + c(36.0) * v[m - 2] - c(16.0) * v[m - 3]
        + c(3.0) * v[m - 4])
        / s;
    d[m - 1] = (c(3.0) * v[m] + c(10.0) * v[m - 1] - c(18.0) * v[m - 2] + c(6.0) * v[m - 3]
        - v[m - 4])
        / s;
    d
}
