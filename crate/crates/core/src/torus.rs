//! Uniform grids on Tⁿ, parallel sampling and n-dimensional FFTs.

use crate::error::{Error, Result};
use crate::frequency::dot_k;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use std::f64::consts::PI;

/// m points per dimension; flat index Σ j_d m^{n−1−d} (last axis fastest).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TorusGrid {
    pub n: usize,
    pub m: usize,
}

impl TorusGrid {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        if n == 0 || m < 2 {
            return Err(Error::InvalidInput(format!("torus grid needs n ≥ 1 and m ≥ 2, got n={n}, m={m}")));
        }
        Ok(Self { n, m })
    }

    pub fn len(&self) -> usize {
        self.m.pow(self.n as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.m as f64
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.n];
        for d in (0..self.n).rev() {
            out[d] = idx % self.m;
            idx /= self.m;
        }
        out
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi.iter().fold(0, |acc, j| acc * self.m + j % self.m)
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        self.multi_index(idx).into_iter().map(|j| j as f64 * self.spacing()).collect()
    }

    /// Flat index of the FFT bin holding mode k.
    pub fn mode_index(&self, k: &[i64]) -> usize {
        let m = self.m as i64;
        k.iter().fold(0, |acc, &kd| acc * self.m + kd.rem_euclid(m) as usize)
    }

    /// Signed mode of an FFT bin, in (−m/2, m/2].
    pub fn mode_of(&self, idx: usize) -> Vec<i64> {
        let m = self.m as i64;
        self.multi_index(idx)
            .into_iter()
            .map(|j| {
                let j = j as i64;
                if j > m / 2 {
                    j - m
                } else {
                    j
                }
            })
            .collect()
    }

    /// Evaluates `f` at every grid point, in parallel.
    pub fn sample<F>(&self, f: F) -> Result<Vec<f64>>
    where
        F: Fn(&[f64]) -> Result<f64> + Sync,
    {
        (0..self.len()).into_par_iter().map(|idx| f(&self.point(idx))).collect()
    }

    /// c_k = m^{−n} Σ_j g_j e^{−ik·A_j}, as an FFT-ordered array.
    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, false);
        let scale = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|c| *c *= scale);
        data
    }

    /// Σ_k c_k e^{ik·A_j} on the grid.
    pub fn inverse(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        let mut data = coeffs.to_vec();
        self.transform(&mut data, true);
        data
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let m = self.m;
        let mut planner = FftPlanner::new();
        let fft = if inverse { planner.plan_fft_inverse(m) } else { planner.plan_fft_forward(m) };
        let mut line = vec![Complex64::new(0.0, 0.0); m];
        for d in 0..self.n {
            let stride = m.pow((self.n - 1 - d) as u32);
            let outer = self.len() / (m * stride);
            for o in 0..outer {
                for s in 0..stride {
                    let base = o * m * stride + s;
                    for (j, slot) in line.iter_mut().enumerate() {
                        *slot = data[base + j * stride];
                    }
                    fft.process(&mut line);
                    for (j, v) in line.iter().enumerate() {
                        data[base + j * stride] = *v;
                    }
                }
            }
        }
    }

    /// Spectral derivative ∂/∂A_d of a real grid function.
    pub fn derivative(&self, values: &[f64], axis: usize) -> Vec<f64> {
        let mut coeffs = self.forward(values);
        for (idx, c) in coeffs.iter_mut().enumerate() {
            let k = self.mode_of(idx)[axis];
            // The Nyquist mode has no real derivative.
            let k = if 2 * k.unsigned_abs() as usize == self.m { 0 } else { k };
            *c *= Complex64::new(0.0, k as f64);
        }
        self.inverse(&coeffs).into_iter().map(|c| c.re).collect()
    }
}

/// Real trigonometric polynomial Σ c_k e^{ik·ψ}.
#[derive(Clone, Debug, Default)]
pub struct TrigSeries {
    pub n: usize,
    pub terms: Vec<(Vec<i64>, Complex64)>,
}

impl TrigSeries {
    /// Keeps every non-Nyquist bin above `cutoff`.
    pub fn from_fft(grid: &TorusGrid, coeffs: &[Complex64], cutoff: f64) -> Self {
        let half = (grid.m / 2) as i64;
        let terms = coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| c.norm() > cutoff)
            .map(|(idx, c)| (grid.mode_of(idx), *c))
            .filter(|(k, _)| grid.m % 2 == 1 || k.iter().all(|kd| kd.abs() != half))
            .collect();
        Self { n: grid.n, terms }
    }

    fn phase(k: &[i64], psi: &[f64]) -> Complex64 {
        Complex64::from_polar(1.0, k.iter().zip(psi).map(|(ki, p)| *ki as f64 * p).sum())
    }

    pub fn eval(&self, psi: &[f64]) -> f64 {
        self.terms.iter().map(|(k, c)| (c * Self::phase(k, psi)).re).sum()
    }

    pub fn eval_with_gradient(&self, psi: &[f64]) -> (f64, Vec<f64>) {
        let mut value = 0.0;
        let mut grad = vec![0.0; self.n];
        for (k, c) in &self.terms {
            let term = c * Self::phase(k, psi);
            value += term.re;
            for (g, ki) in grad.iter_mut().zip(k) {
                *g -= *ki as f64 * term.im;
            }
        }
        (value, grad)
    }

    /// Value, gradient and Hessian (row-major n×n).
    pub fn eval_with_hessian(&self, psi: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let n = self.n;
        let mut value = 0.0;
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n * n];
        for (k, c) in &self.terms {
            let term = c * Self::phase(k, psi);
            value += term.re;
            for i in 0..n {
                let ki = k[i] as f64;
                grad[i] -= ki * term.im;
                for j in 0..n {
                    hess[i * n + j] -= ki * k[j] as f64 * term.re;
                }
            }
        }
        (value, grad, hess)
    }

    /// Values and time derivatives along ψ = ωt + a.
    pub fn on_line(&self, omega: &[f64], a: &[f64], times: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut values = vec![0.0; times.len()];
        let mut rates = vec![0.0; times.len()];
        for (k, c) in &self.terms {
            let start = c * Self::phase(k, a);
            let freq = dot_k(omega, k);
            for (j, t) in times.iter().enumerate() {
                let term = start * Complex64::from_polar(1.0, freq * t);
                values[j] += term.re;
                rates[j] -= freq * term.im;
            }
        }
        (values, rates)
    }

    pub fn max_coefficient(&self) -> f64 {
        self.terms.iter().map(|(_, c)| c.norm()).fold(0.0, f64::max)
    }
}
