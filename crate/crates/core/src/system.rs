//! The forced pendulum-rotor system and solver settings shared by the orbit modules.

use crate::frequency::Frequency;
use crate::green::NewtonSettings;
use crate::perturbation::PerturbationSeries;
use crate::scalar::Scalar;
use crate::separatrix::{separatrix_point, SeparatrixPoint};

/// H = ω·I + p²/2 + (cos q − 1) + μ(1 − cos q) f(φ).
#[derive(Clone, Debug)]
pub struct PendulumSystem {
    pub frequency: Frequency,
    pub f: PerturbationSeries,
}

impl PendulumSystem {
    pub fn new(frequency: Frequency, f: PerturbationSeries) -> Self {
        assert_eq!(frequency.n(), f.n(), "frequency and perturbation dimensions differ");
        Self { frequency, f }
    }

    pub fn n(&self) -> usize {
        self.frequency.n()
    }

    pub fn omega(&self) -> &[f64] {
        self.frequency.omega()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrbitSettings {
    /// Grid step for 1-bump halves and reduced orbits.
    pub step: f64,
    /// Truncation half-length T.
    pub half_length: f64,
    /// Minimum bump spacing accepted by the k-bump solver.
    pub min_spacing: f64,
    pub newton: NewtonSettings,
}

impl Default for OrbitSettings {
    fn default() -> Self {
        Self { step: 0.02, half_length: 56.0, min_spacing: 10.0, newton: NewtonSettings::default() }
    }
}

impl OrbitSettings {
    pub fn with_step(mut self, step: f64) -> Self {
        self.step = step;
        self
    }

    pub fn with_half_length(mut self, half_length: f64) -> Self {
        self.half_length = half_length;
        self
    }
}

/// Analytic base curve b(t) around which orbits are corrected: q = b + w.
#[derive(Clone, Copy, Debug)]
pub struct BasePoint<T> {
    /// b modulo the 2π offset.
    pub q: T,
    pub dq: T,
    pub ddq: T,
    pub sin_q: T,
    pub one_minus_cos_q: T,
}

impl<T: Scalar> BasePoint<T> {
    pub fn single(p: SeparatrixPoint<T>) -> Self {
        Self { q: p.q, dq: p.dq, ddq: p.sin_q, sin_q: p.sin_q, one_minus_cos_q: p.one_minus_cos_q }
    }

    /// Sum of two separatrices; the second is offset by 2π relative to the first.
    pub fn pair(a: SeparatrixPoint<T>, b: SeparatrixPoint<T>) -> Self {
        let (ca, cb) = (a.cos_q(), b.cos_q());
        Self {
            q: a.q + b.q,
            dq: a.dq + b.dq,
            ddq: a.sin_q + b.sin_q,
            sin_q: a.sin_q * cb + ca * b.sin_q,
            one_minus_cos_q: a.one_minus_cos_q + b.one_minus_cos_q
                - a.one_minus_cos_q * b.one_minus_cos_q
                + a.sin_q * b.sin_q,
        }
    }

    pub fn cos_q(&self) -> T {
        T::lift(1.0) - self.one_minus_cos_q
    }

    pub fn at_single(t: T) -> Self {
        Self::single(separatrix_point(t))
    }
}

/// 1 − cos w computed without cancellation.
pub fn one_minus_cos<T: Scalar>(w: T) -> T {
    let s = (w * T::lift(0.5)).sin();
    T::lift(2.0) * s * s
}

/// sin w − w computed without cancellation.
pub fn sin_minus_id<T: Scalar>(w: T) -> T {
    if w.abs() < 1e-3 {
        let w2 = w * w;
        -w * w2 / T::lift(6.0) * (T::lift(1.0) - w2 / T::lift(20.0))
    } else {
        w.sin() - w
    }
}

/// Pointwise quantities of q = b + w.
#[derive(Clone, Copy, Debug)]
pub struct CorrectedPoint<T> {
    pub sin_q: T,
    pub cos_q: T,
    pub one_minus_cos_q: T,
}

pub fn corrected<T: Scalar>(base: &BasePoint<T>, w: T) -> CorrectedPoint<T> {
    let (sw, cw) = (w.sin(), w.cos());
    let omc_w = one_minus_cos(w);
    let cb = base.cos_q();
    CorrectedPoint {
        sin_q: base.sin_q * cw + cb * sw,
        cos_q: cb * cw - base.sin_q * sw,
        one_minus_cos_q: base.one_minus_cos_q + cb * omc_w + base.sin_q * sw,
    }
}

/// (G, ∂G/∂w) for w'' = sin(b+w)(1 − μf) − b''.
pub fn pendulum_forcing<T: Scalar>(base: &BasePoint<T>, w: T, damping: T) -> (T, T) {
    let c = corrected(base, w);
    (c.sin_q * damping - base.ddq, c.cos_q * damping)
}

/// Full Lagrangian q̇²/2 + (1 − cos q)(1 − μf).
pub fn lagrangian<T: Scalar>(base: &BasePoint<T>, w: T, dw: T, damping: T) -> T {
    let v = base.dq + dw;
    v * v * T::lift(0.5) + corrected(base, w).one_minus_cos_q * damping
}

/// L(b + w) − L(b) − d/dt(ḃ w) for a single separatrix base, which integrates to the action
/// correction with all O(w) terms cancelled analytically.
pub fn lagrangian_correction<T: Scalar>(base: &BasePoint<T>, w: T, dw: T, mu_f: T) -> T {
    dw * dw * T::lift(0.5) + base.cos_q() * one_minus_cos(w) + base.sin_q * sin_minus_id(w)
        - mu_f * corrected(base, w).one_minus_cos_q
}
