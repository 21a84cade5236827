//! Frequency vectors, the diophantine scan and α-net hitting times.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frequency {
    omega: Vec<f64>,
    gamma: f64,
    tau: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiophantineScan {
    pub gamma_emp: f64,
    pub worst_k: Vec<i64>,
}

impl Frequency {
    /// Builds a frequency and checks |ω·k| ≥ γ/|k|^τ for all 0 < |k|₁ ≤ `k_check`.
    pub fn new(omega: Vec<f64>, gamma: f64, tau: f64, k_check: usize) -> Result<Self> {
        let n = omega.len();
        if n == 0 || omega.iter().all(|w| *w == 0.0) || omega.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidInput("frequency vector must be finite and nonzero".into()));
        }
        if !(gamma > 0.0) {
            return Err(Error::InvalidInput(format!("gamma must be positive, got {gamma}")));
        }
        if n > 1 && !(tau > n as f64) {
            return Err(Error::InvalidInput(format!("tau = {tau} must exceed n = {n}")));
        }
        if k_check > 0 {
            let scan = diophantine_scan(&omega, tau, k_check)?;
            if scan.gamma_emp < gamma {
                return Err(Error::InvalidInput(format!(
                    "diophantine constant {gamma} exceeds the scanned value {} (worst k = {:?})",
                    scan.gamma_emp, scan.worst_k
                )));
            }
        }
        Ok(Self { omega, gamma, tau })
    }

    /// Frequency without the diophantine scan, for resonant or test inputs.
    pub fn unchecked(omega: Vec<f64>, gamma: f64, tau: f64) -> Self {
        Self { omega, gamma, tau }
    }

    pub fn golden() -> Self {
        Self::unchecked(vec![1.0, 0.5 * (1.0 + 5f64.sqrt())], 0.1, 2.01)
    }

    pub fn n(&self) -> usize {
        self.omega.len()
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn norm(&self) -> f64 {
        norm(&self.omega)
    }

    pub fn dot(&self, k: &[i64]) -> f64 {
        dot_k(&self.omega, k)
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot_k(omega: &[f64], k: &[i64]) -> f64 {
    omega.iter().zip(k).map(|(w, ki)| w * *ki as f64).sum()
}

/// Visits every integer vector with 0 < |k|₁ ≤ `max_l1` whose first nonzero entry is positive.
pub fn for_each_half_lattice(n: usize, max_l1: usize, mut visit: impl FnMut(&[i64])) {
    fn rec(k: &mut Vec<i64>, idx: usize, budget: i64, leading: bool, visit: &mut dyn FnMut(&[i64])) {
        if idx == k.len() {
            if !leading {
                visit(k);
            }
            return;
        }
        let lo = if leading { 0 } else { -budget };
        for v in lo..=budget {
            k[idx] = v;
            rec(k, idx + 1, budget - v.abs(), leading && v == 0, visit);
        }
        k[idx] = 0;
    }
    let mut k = vec![0i64; n];
    rec(&mut k, 0, max_l1 as i64, true, &mut visit);
}

/// γ_emp = min over 0 < |k|₁ ≤ K of |ω·k|·|k|₁^τ, with the minimizing k.
pub fn diophantine_scan(omega: &[f64], tau: f64, k_max: usize) -> Result<DiophantineScan> {
    if omega.iter().all(|w| *w == 0.0) || k_max == 0 {
        return Err(Error::InvalidInput("diophantine scan needs nonzero omega and K >= 1".into()));
    }
    let scale = norm(omega);
    let mut best = DiophantineScan { gamma_emp: f64::INFINITY, worst_k: vec![0; omega.len()] };
    let mut resonance: Option<(Vec<i64>, f64)> = None;
    for_each_half_lattice(omega.len(), k_max, |k| {
        if resonance.is_some() {
            return;
        }
        let l1: i64 = k.iter().map(|x| x.abs()).sum();
        let value = dot_k(omega, k);
        if value.abs() <= 1e-13 * scale * l1 as f64 {
            resonance = Some((k.to_vec(), value));
            return;
        }
        let g = value.abs() * (l1 as f64).powf(tau);
        if g < best.gamma_emp {
            best = DiophantineScan { gamma_emp: g, worst_k: k.to_vec() };
        }
    });
    if let Some((k, value)) = resonance {
        return Err(Error::Resonance { k, value });
    }
    Ok(best)
}

/// Euclidean distance from x to the lattice 2πZⁿ.
pub fn torus_distance(x: &[f64]) -> f64 {
    x.iter().map(|v| wrap_angle(*v).powi(2)).sum::<f64>().sqrt()
}

/// Representative of x mod 2π in (−π, π].
pub fn wrap_angle(x: f64) -> f64 {
    let r = x.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Passages of the line θω within `alpha` of a lattice point 2πm for θ in [lo, hi], each taken at
/// the foot of the perpendicular so that χ = θω − 2πm is orthogonal to ω. Sorted by θ.
pub fn alpha_net_hits(omega: &[f64], alpha: f64, lo: f64, hi: f64) -> Result<Vec<(f64, Vec<f64>)>> {
    let n = omega.len();
    let w2: f64 = omega.iter().map(|w| w * w).sum();
    if !(alpha > 0.0 && alpha < 0.5 * PI) || hi < lo || w2 == 0.0 {
        return Err(Error::InvalidInput(format!("alpha_net_hits needs 0 < alpha < π/2 and lo <= hi ({alpha}, [{lo}, {hi}])")));
    }
    let p = (0..n).max_by(|&i, &j| omega[i].abs().total_cmp(&omega[j].abs())).expect("nonempty");
    let ends = [(lo * omega[p] - alpha) / (2.0 * PI), (hi * omega[p] + alpha) / (2.0 * PI)];
    let first = ends[0].min(ends[1]).floor() as i64;
    let last = ends[0].max(ends[1]).ceil() as i64;
    let others = 3usize.pow(n as u32 - 1);
    let mut hits = Vec::new();
    let mut m = vec![0i64; n];
    for mp in first..=last {
        let theta0 = 2.0 * PI * mp as f64 / omega[p];
        for code in 0..others {
            let mut c = code;
            for j in 0..n {
                m[j] = if j == p {
                    mp
                } else {
                    let shift = (c % 3) as i64 - 1;
                    c /= 3;
                    (theta0 * omega[j] / (2.0 * PI)).round() as i64 + shift
                };
            }
            let theta = 2.0 * PI * dot_k(omega, &m) / w2;
            if theta < lo || theta > hi {
                continue;
            }
            let chi: Vec<f64> = omega.iter().zip(&m).map(|(w, mj)| theta * w - 2.0 * PI * *mj as f64).collect();
            if norm(&chi) < alpha {
                hits.push((theta, chi));
            }
        }
    }
    hits.sort_by(|a, b| a.0.total_cmp(&b.0));
    hits.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-12);
    Ok(hits)
}

/// First θ on the lattice (α/(4|ω|))·Z inside [lo, hi] with d(θω, 2πZⁿ) < α.
pub fn alpha_net_time(omega: &[f64], alpha: f64, lo: f64, hi: f64) -> Result<f64> {
    if !(alpha > 0.0) || hi < lo {
        return Err(Error::InvalidInput(format!("alpha_net_time needs alpha > 0 and lo <= hi ({alpha}, [{lo}, {hi}])")));
    }
    let step = alpha / (4.0 * norm(omega));
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    let mut scan_min = f64::INFINITY;
    let mut point = vec![0.0; omega.len()];
    for j in first..=last {
        let theta = j as f64 * step;
        for (p, w) in point.iter_mut().zip(omega) {
            *p = theta * w;
        }
        let d = torus_distance(&point);
        if d < alpha {
            return Ok(theta);
        }
        scan_min = scan_min.min(d);
    }
    Err(Error::IntervalTooShort { lo, hi, scan_min })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_enumeration_counts() {
        let mut count = 0;
        for_each_half_lattice(2, 2, |_| count += 1);
        // |k|₁ ≤ 2 in Z² has 13 points; minus origin, halved.
        assert_eq!(count, 6);
    }

    #[test]
    fn resonance_detected() {
        match diophantine_scan(&[1.0, 1.0], 2.5, 2) {
            Err(Error::Resonance { k, .. }) => assert_eq!(k, vec![1, -1]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wrap_is_centered() {
        assert!((wrap_angle(2.0 * PI + 0.1) - 0.1).abs() < 1e-15);
        assert!((wrap_angle(-0.1) + 0.1).abs() < 1e-15);
    }
}
