//! Closed forms for the unperturbed pendulum separatrix q₀(t) = 4·arctan(eᵗ) and
//! the weight function ψ₀ used by the reduced orbits.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::OnceLock;

/// Pointwise data of the separatrix at (possibly complex) time z.
#[derive(Clone, Copy, Debug)]
pub struct SeparatrixPoint<T> {
    pub q: T,
    pub dq: T,
    pub sin_q: T,
    pub one_minus_cos_q: T,
}

impl<T: Scalar> SeparatrixPoint<T> {
    pub fn cos_q(&self) -> T {
        T::lift(1.0) - self.one_minus_cos_q
    }
}

/// Returns (sech z, tanh z) without overflow for large |Re z|.
pub fn sech_tanh<T: Scalar>(z: T) -> (T, T) {
    let sign = if z.re() >= 0.0 { 1.0 } else { -1.0 };
    let u = (-z * T::lift(sign)).exp();
    let u2 = u * u;
    let denom = T::lift(1.0) + u2;
    (T::lift(2.0) * u / denom, T::lift(sign) * (T::lift(1.0) - u2) / denom)
}

/// Evaluates the separatrix at any point where the closed forms are finite.
/// No strip check; callers on the real line or inside the strip use this directly.
pub fn separatrix_point<T: Scalar>(z: T) -> SeparatrixPoint<T> {
    let (sech, tanh) = sech_tanh(z);
    let q = if z.re() <= 0.0 {
        T::lift(4.0) * z.exp().atan()
    } else {
        T::lift(2.0 * PI) - T::lift(4.0) * (-z).exp().atan()
    };
    SeparatrixPoint {
        q,
        dq: T::lift(2.0) * sech,
        sin_q: T::lift(-2.0) * tanh * sech,
        one_minus_cos_q: T::lift(2.0) * sech * sech,
    }
}

/// q₀(t) and q̇₀(t) on the real line.
pub fn separatrix(t: f64) -> (f64, f64) {
    let p = separatrix_point(t);
    (p.q, p.dq)
}

/// Holomorphic extension of the separatrix to the strip |Im z| < π/2.
pub fn separatrix_complex<T: Scalar>(z: T) -> Result<(T, T)> {
    let imag = z.imag_part().abs();
    if imag >= FRAC_PI_2 {
        return Err(Error::StripViolation { imag, limit: FRAC_PI_2 });
    }
    let p = separatrix_point(z);
    Ok((p.q, p.dq))
}

/// ψ₀(t) = cosh²t / (1 + cosh t)³.
pub fn psi0<T: Scalar>(z: T) -> T {
    let (s, _) = sech_tanh(z);
    let one_plus = T::lift(1.0) + s;
    s / (one_plus * one_plus * one_plus)
}

/// Time derivative of ψ₀.
pub fn psi0_derivative<T: Scalar>(z: T) -> T {
    let (s, tanh) = sech_tanh(z);
    let one_plus = T::lift(1.0) + s;
    let sq = one_plus * one_plus;
    -(s * tanh * (T::lift(1.0) - T::lift(2.0) * s)) / (sq * sq)
}

/// γ = ∫ψ₀(t)q̇₀(t)dt, computed once by quadrature.
pub fn psi0_normalization() -> f64 {
    static GAMMA: OnceLock<f64> = OnceLock::new();
    *GAMMA.get_or_init(|| {
        let grid = crate::grid::TimeGrid::spanning(-60.0, 60.0, 1e-3);
        let values: Vec<f64> = grid
            .nodes()
            .map(|t| psi0(t) * separatrix_point(t).dq)
            .collect();
        grid.integrate(&values)
    })
}
