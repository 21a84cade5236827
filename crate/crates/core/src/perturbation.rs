//! Finite Fourier perturbations f(φ) and general perturbations f(φ, q).

use crate::error::{Error, Result};
use crate::frequency::dot_k;
use crate::scalar::Scalar;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

const REALITY_TOL: f64 = 1e-13;

/// f(φ) = Σ f_k e^{ik·φ} with analyticity widths r_i.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSeries {
    n: usize,
    modes: Vec<Vec<i64>>,
    coeffs: Vec<Complex64>,
    widths: Vec<f64>,
}

fn check_reality<K: Ord + Clone + std::fmt::Debug>(
    table: &BTreeMap<K, Complex64>,
    negate: impl Fn(&K) -> K,
) -> Result<()> {
    let scale = table.values().map(|c| c.norm()).fold(0.0, f64::max).max(1e-300);
    for (k, c) in table {
        let partner = table.get(&negate(k)).copied().unwrap_or_default();
        if (partner - c.conj()).norm() > REALITY_TOL * scale {
            return Err(Error::InvalidInput(format!(
                "coefficients violate f(-k) = conj(f(k)) at k = {k:?}"
            )));
        }
    }
    Ok(())
}

impl PerturbationSeries {
    pub fn new(
        n: usize,
        coefficients: impl IntoIterator<Item = (Vec<i64>, Complex64)>,
        widths: Vec<f64>,
    ) -> Result<Self> {
        if widths.len() != n || widths.iter().any(|r| !(*r >= 0.0)) {
            return Err(Error::InvalidInput(format!("need {n} nonnegative widths, got {widths:?}")));
        }
        let mut table: BTreeMap<Vec<i64>, Complex64> = BTreeMap::new();
        for (k, c) in coefficients {
            if k.len() != n {
                return Err(Error::InvalidInput(format!("mode {k:?} does not have {n} components")));
            }
            *table.entry(k).or_default() += c;
        }
        table.retain(|_, c| c.norm() > 0.0);
        check_reality(&table, |k| k.iter().map(|x| -x).collect())?;
        let (modes, coeffs) = table.into_iter().unzip();
        Ok(Self { n, modes, coeffs, widths })
    }

    /// Σ amp·cos(k·φ + phase).
    pub fn from_cosines(n: usize, terms: &[(Vec<i64>, f64, f64)], widths: Vec<f64>) -> Result<Self> {
        let mut pairs = Vec::new();
        for (k, amp, phase) in terms {
            if k.iter().all(|x| *x == 0) {
                pairs.push((k.clone(), Complex64::new(amp * phase.cos(), 0.0)));
            } else {
                let half = Complex64::from_polar(0.5 * amp, *phase);
                pairs.push((k.clone(), half));
                pairs.push((k.iter().map(|x| -x).collect(), half.conj()));
            }
        }
        Self::new(n, pairs, widths)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn modes(&self) -> impl Iterator<Item = (&[i64], Complex64)> + '_ {
        self.modes.iter().map(|k| k.as_slice()).zip(self.coeffs.iter().copied())
    }

    pub fn coefficient(&self, k: &[i64]) -> Complex64 {
        self.modes
            .binary_search_by(|m| m.as_slice().cmp(k))
            .map(|i| self.coeffs[i])
            .unwrap_or_default()
    }

    pub fn is_zero(&self) -> bool {
        self.modes.is_empty()
    }

    /// Largest |k_i| per component.
    pub fn max_index(&self) -> Vec<usize> {
        let mut out = vec![0; self.n];
        for k in &self.modes {
            for (o, ki) in out.iter_mut().zip(k) {
                *o = (*o).max(ki.unsigned_abs() as usize);
            }
        }
        out
    }

    /// Bound Σ|f_k|e^{Σr_i|k_i|} on the sup norm over the complex strip.
    pub fn strip_norm(&self) -> f64 {
        self.modes()
            .map(|(k, c)| c.norm() * self.width_weight(k).recip())
            .sum()
    }

    /// e^{−Σ r_i |k_i|}.
    pub fn width_weight(&self, k: &[i64]) -> f64 {
        (-k.iter().zip(&self.widths).map(|(ki, r)| r * ki.abs() as f64).sum::<f64>()).exp()
    }

    /// Checks |f_k| ≤ C|k|^{−s}e^{−Σr_i|k_i|} for every nonzero mode.
    pub fn check_decay(&self, c_s: f64, s: f64) -> bool {
        self.modes().all(|(k, c)| {
            let l1: i64 = k.iter().map(|x| x.abs()).sum();
            l1 == 0 || c.norm() <= c_s * (l1 as f64).powf(-s) * self.width_weight(k) * (1.0 + 1e-12)
        })
    }

    pub fn eval<T: Scalar>(&self, phi: &[T]) -> T {
        let mut acc = Complex64::default();
        for (k, c) in self.modes() {
            acc += c * phase_exp(k, phi);
        }
        T::from_c64(acc)
    }

    pub fn eval_with_gradient<T: Scalar>(&self, phi: &[T]) -> (T, Vec<T>) {
        let mut acc = Complex64::default();
        let mut grad = vec![Complex64::default(); self.n];
        for (k, c) in self.modes() {
            let term = c * phase_exp(k, phi);
            acc += term;
            for (g, ki) in grad.iter_mut().zip(k) {
                *g += Complex64::new(0.0, *ki as f64) * term;
            }
        }
        (T::from_c64(acc), grad.into_iter().map(T::from_c64).collect())
    }

    /// f and ∇f along the line φ = ωt + A at the given times.
    pub fn sample_line<T: Scalar>(
        &self,
        omega: &[f64],
        a: &[T],
        times: impl Iterator<Item = f64>,
    ) -> LineSamples<T> {
        let shifts: Vec<Complex64> = self.modes.iter().map(|k| phase_exp(k, a)).collect();
        let rates: Vec<f64> = self.modes.iter().map(|k| dot_k(omega, k)).collect();
        let mut values = Vec::new();
        let mut gradients = Vec::new();
        for t in times {
            let mut acc = Complex64::default();
            let mut grad = vec![Complex64::default(); self.n];
            for (idx, k) in self.modes.iter().enumerate() {
                let term = self.coeffs[idx] * shifts[idx] * Complex64::cis(rates[idx] * t);
                acc += term;
                for (g, ki) in grad.iter_mut().zip(k) {
                    *g += Complex64::new(0.0, *ki as f64) * term;
                }
            }
            values.push(T::from_c64(acc));
            gradients.extend(grad.into_iter().map(T::from_c64));
        }
        LineSamples { n: self.n, values, gradients }
    }
}

/// Samples of f and ∇f; gradients are stored node-major with n entries per node.
#[derive(Clone, Debug)]
pub struct LineSamples<T> {
    pub n: usize,
    pub values: Vec<T>,
    pub gradients: Vec<T>,
}

impl<T: Copy> LineSamples<T> {
    pub fn gradient(&self, node: usize) -> &[T] {
        &self.gradients[node * self.n..(node + 1) * self.n]
    }
}

fn phase_exp<T: Scalar>(k: &[i64], phi: &[T]) -> Complex64 {
    let arg: Complex64 = k.iter().zip(phi).map(|(ki, p)| p.to_c64() * *ki as f64).sum();
    (Complex64::i() * arg).exp()
}

/// f(φ, q) = Σ f_{k,m} e^{i(k·φ + mq)}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneralPerturbation {
    n: usize,
    modes: Vec<(Vec<i64>, i64)>,
    coeffs: Vec<Complex64>,
}

/// Value and derivatives of a general perturbation at one point.
#[derive(Clone, Debug)]
pub struct GeneralValue<T> {
    pub f: T,
    pub fq: T,
    pub fqq: T,
    pub grad_phi: Vec<T>,
}

impl GeneralPerturbation {
    pub fn new(n: usize, coefficients: impl IntoIterator<Item = ((Vec<i64>, i64), Complex64)>) -> Result<Self> {
        let mut table: BTreeMap<(Vec<i64>, i64), Complex64> = BTreeMap::new();
        for ((k, m), c) in coefficients {
            if k.len() != n {
                return Err(Error::InvalidInput(format!("mode {k:?} does not have {n} components")));
            }
            *table.entry((k, m)).or_default() += c;
        }
        table.retain(|_, c| c.norm() > 0.0);
        check_reality(&table, |(k, m)| (k.iter().map(|x| -x).collect(), -m))?;
        let (modes, coeffs) = table.into_iter().unzip();
        Ok(Self { n, modes, coeffs })
    }

    /// Σ amp·cos(k·φ + m q + phase).
    pub fn from_cosines(n: usize, terms: &[(Vec<i64>, i64, f64, f64)]) -> Result<Self> {
        let mut pairs = Vec::new();
        for (k, m, amp, phase) in terms {
            if k.iter().all(|x| *x == 0) && *m == 0 {
                pairs.push(((k.clone(), 0), Complex64::new(amp * phase.cos(), 0.0)));
            } else {
                let half = Complex64::from_polar(0.5 * amp, *phase);
                pairs.push(((k.clone(), *m), half));
                pairs.push(((k.iter().map(|x| -x).collect(), -m), half.conj()));
            }
        }
        Self::new(n, pairs)
    }

    /// The product perturbation (1 − cos q)·f(φ).
    pub fn from_product(series: &PerturbationSeries) -> Self {
        let mut pairs = Vec::new();
        for (k, c) in series.modes() {
            pairs.push(((k.to_vec(), 0), c));
            pairs.push(((k.to_vec(), 1), -0.5 * c));
            pairs.push(((k.to_vec(), -1), -0.5 * c));
        }
        Self::new(series.n(), pairs).expect("product of a real series is real")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn modes(&self) -> impl Iterator<Item = (&[i64], i64, Complex64)> + '_ {
        self.modes.iter().zip(&self.coeffs).map(|((k, m), c)| (k.as_slice(), *m, *c))
    }

    pub fn is_q_independent(&self) -> bool {
        self.modes.iter().all(|(_, m)| *m == 0)
    }

    pub fn max_index(&self) -> Vec<usize> {
        let mut out = vec![0; self.n];
        for (k, _) in &self.modes {
            for (o, ki) in out.iter_mut().zip(k) {
                *o = (*o).max(ki.unsigned_abs() as usize);
            }
        }
        out
    }

    /// Σ|f_{k,m}|, a bound on the sup norm over the real domain.
    pub fn coefficient_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).sum()
    }

    pub fn eval<T: Scalar>(&self, phi: &[T], q: T) -> GeneralValue<T> {
        let qc = q.to_c64();
        let mut f = Complex64::default();
        let mut fq = Complex64::default();
        let mut fqq = Complex64::default();
        let mut grad = vec![Complex64::default(); self.n];
        for ((k, m), c) in self.modes.iter().zip(&self.coeffs) {
            let term = c * phase_exp(k, phi) * (Complex64::i() * qc * *m as f64).exp();
            let mf = *m as f64;
            f += term;
            fq += Complex64::new(0.0, mf) * term;
            fqq -= mf * mf * term;
            for (g, ki) in grad.iter_mut().zip(k) {
                *g += Complex64::new(0.0, *ki as f64) * term;
            }
        }
        GeneralValue {
            f: T::from_c64(f),
            fq: T::from_c64(fq),
            fqq: T::from_c64(fqq),
            grad_phi: grad.into_iter().map(T::from_c64).collect(),
        }
    }
}
