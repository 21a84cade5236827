//! Transition chains between invariant tori: bump planning along α-net returns, minimization of
//! the k-bump heteroclinic function over the product of balls, and the resulting diffusion time.

use crate::action::ActionValue;
use crate::error::{Error, Result};
use crate::fit::fit_exponential;
use crate::frequency::{alpha_net_hits, norm, torus_distance, wrap_angle, Frequency};
use crate::general::GeneralProblem;
use crate::kbump::{action_k_bump, k_bump_gradient, k_bump_trace, solve_k_bump};
use crate::spectral::homoclinic_samples;
use crate::splitting::{certify_series, find_critical_points, interpolant, CertifyOptions, CriticalPoint, Region, SplittingCertificate};
use crate::system::{OrbitSettings, PendulumSystem};
use crate::torus::{TorusGrid, TrigSeries};
use rayon::prelude::*;
use serde::Serialize;

/// State of the variational orbit at one node.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EdgeSample {
    pub t: f64,
    pub q: f64,
    pub p: f64,
    pub action: Vec<f64>,
}

/// Variational data around one bump: the state at θ̄_i and at θ̄_i ± window.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Transition {
    pub index: usize,
    pub theta: f64,
    pub anchor: EdgeSample,
    pub before: EdgeSample,
    pub after: EdgeSample,
}

impl Transition {
    /// I(θ̄_i + w) − I(θ̄_i − w).
    pub fn jump(&self) -> Vec<f64> {
        self.after.action.iter().zip(&self.before.action).map(|(a, b)| a - b).collect()
    }
}

/// Transitions of one cluster plus its approach tails as (t, distance to the torus) pairs.
#[derive(Clone, Debug)]
pub struct ClusterTrace {
    pub transitions: Vec<Transition>,
    pub final_action: Vec<f64>,
    pub head: Vec<(f64, f64)>,
    pub tail: Vec<(f64, f64)>,
}

/// The heteroclinic function of a chain, evaluated cluster by cluster.
pub trait ChainFunctional: Sync {
    fn omega(&self) -> &[f64];

    /// Bumps farther apart than this are evaluated independently.
    fn coupling_length(&self) -> f64;

    /// F^k with ∂_θ and ∂_A for bumps at `thetas` (sorted, one cluster).
    fn cluster(&self, a: &[f64], thetas: &[f64]) -> Result<ActionValue>;

    /// Variational transition data for one cluster; `offset` is the index of its first bump and
    /// `i0` the action entering it.
    fn transitions(&self, a: &[f64], thetas: &[f64], offset: usize, i0: &[f64], window: f64) -> Result<ClusterTrace> {
        let _ = (a, thetas, offset, i0, window);
        Err(Error::Chain("transition traces are not available for this perturbation".into()))
    }
}

/// Product perturbations (1 − cos q)f(φ) through the k-bump solver.
pub struct ProductChain<'a> {
    pub system: &'a PendulumSystem,
    pub mu: f64,
    pub settings: OrbitSettings,
}

impl ChainFunctional for ProductChain<'_> {
    fn omega(&self) -> &[f64] {
        self.system.omega()
    }

    fn coupling_length(&self) -> f64 {
        2.0 * self.settings.half_length
    }

    fn cluster(&self, a: &[f64], thetas: &[f64]) -> Result<ActionValue> {
        let orbit = solve_k_bump(self.system, self.mu, a, thetas, &self.settings, None)?;
        Ok(k_bump_gradient(self.system, &orbit))
    }

    fn transitions(&self, a: &[f64], thetas: &[f64], offset: usize, i0: &[f64], window: f64) -> Result<ClusterTrace> {
        let orbit = solve_k_bump(self.system, self.mu, a, thetas, &self.settings, None)?;
        let trace = k_bump_trace(self.system, &orbit, i0);
        let mut samples = orbit.samples();
        if samples.len() != trace.times.len() {
            return Err(Error::Chain(format!("trace has {} nodes, orbit {}", trace.times.len(), samples.len())));
        }
        let shift = 2.0 * std::f64::consts::PI * offset as f64;
        for s in samples.iter_mut() {
            s.1 += shift;
        }
        let at = |t: f64| -> EdgeSample {
            let j = nearest(&trace.times, t);
            EdgeSample { t: samples[j].0, q: samples[j].1, p: samples[j].2, action: trace.action(j).to_vec() }
        };
        let transitions = thetas
            .iter()
            .enumerate()
            .map(|(i, &theta)| Transition {
                index: offset + i,
                theta,
                anchor: at(theta),
                before: at(theta - window),
                after: at(theta + window),
            })
            .collect();
        let distance = |s: &(f64, f64, f64)| (s.0, wrap_angle(s.1).hypot(s.2));
        let head = samples.iter().take_while(|s| s.0 <= thetas[0]).map(distance).collect();
        let last = *thetas.last().expect("nonempty cluster");
        let tail = samples.iter().filter(|s| s.0 >= last).map(distance).collect();
        Ok(ClusterTrace { transitions, final_action: trace.last().to_vec(), head, tail })
    }
}

/// General perturbations; only uncoupled (single-bump) clusters are supported.
pub struct GeneralChain<'a> {
    pub problem: &'a GeneralProblem<'a>,
    pub settings: OrbitSettings,
}

impl ChainFunctional for GeneralChain<'_> {
    fn omega(&self) -> &[f64] {
        self.problem.omega
    }

    fn coupling_length(&self) -> f64 {
        2.0 * self.settings.half_length
    }

    fn cluster(&self, a: &[f64], thetas: &[f64]) -> Result<ActionValue> {
        if thetas.len() != 1 {
            return Err(Error::Chain(format!(
                "general perturbations need bumps farther apart than {}",
                self.coupling_length()
            )));
        }
        let orbit = self.problem.solve_one_bump(a, thetas[0], &self.settings)?;
        Ok(self.problem.action(&orbit))
    }
}

fn nearest(times: &[f64], t: f64) -> usize {
    let j = times.partition_point(|&s| s < t);
    if j == 0 {
        0
    } else if j == times.len() || t - times[j - 1] <= times[j] - t {
        j - 1
    } else {
        j
    }
}

/// max_i |R_i| ≈ prefactor·exp(−rate·L) from a two-bump sweep over the spacing L.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RemainderFit {
    pub prefactor: f64,
    pub rate: f64,
    pub r_squared: f64,
    pub lengths: Vec<f64>,
    pub remainders: Vec<f64>,
}

pub const REMAINDER_LENGTHS: [f64; 5] = [10.5, 13.0, 16.0, 19.0, 22.0];

pub fn fit_remainders(
    system: &PendulumSystem,
    mu: f64,
    a: &[f64],
    lengths: &[f64],
    settings: &OrbitSettings,
) -> Result<RemainderFit> {
    let remainders = lengths
        .iter()
        .map(|&l| {
            let orbit = solve_k_bump(system, mu, a, &[0.0, l], settings, None)?;
            Ok(action_k_bump(system, &orbit, settings)?.max_remainder())
        })
        .collect::<Result<Vec<f64>>>()?;
    if remainders.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::Chain(format!("remainder sweep has non-positive entries {remainders:?}")));
    }
    let fit = fit_exponential(lengths, &remainders)?;
    if fit.slope >= 0.0 {
        return Err(Error::Chain(format!("remainders do not decay with spacing (slope {})", fit.slope)));
    }
    Ok(RemainderFit {
        prefactor: fit.intercept.exp(),
        rate: -fit.slope,
        r_squared: fit.r_squared,
        lengths: lengths.to_vec(),
        remainders,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ChainPlan {
    pub k: usize,
    /// Minimal gap between consecutive η.
    pub spacing: f64,
    pub eta: Vec<f64>,
    pub chi: Vec<Vec<f64>>,
    /// Orthonormal Ω₁ = ω/|ω|, Ω₂ = ΔI/|ΔI|, completed.
    pub basis: Vec<Vec<f64>>,
    pub a0: Vec<f64>,
    pub i0: Vec<f64>,
    pub jump: Vec<f64>,
    pub delta: f64,
    pub alpha: f64,
    pub radius: f64,
    pub g_min: f64,
    pub omega_norm: f64,
    pub remainder: RemainderFit,
    /// max (gap − D)·γα^τ/|ω| over the planned gaps.
    pub net_constant: f64,
    /// 1/(γα^τ).
    pub return_scale: f64,
}

impl ChainPlan {
    pub fn n(&self) -> usize {
        self.a0.len()
    }

    pub fn jump_norm(&self) -> f64 {
        norm(&self.jump)
    }

    /// Bump count for a jump of size `jump` in a ball of radius ρ with splitting δ.
    pub fn bump_count(jump: f64, radius: f64, delta: f64) -> usize {
        (24.0 * radius * jump / delta).floor() as usize + 1
    }
}

fn gram_schmidt(first: &[f64], second: Option<&[f64]>) -> Vec<Vec<f64>> {
    let n = first.len();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    let candidates = std::iter::once(first.to_vec())
        .chain(second.map(|s| s.to_vec()))
        .chain((0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()));
    for mut v in candidates {
        for b in &basis {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        let len = norm(&v);
        if len > 1e-8 {
            basis.push(v.iter().map(|x| x / len).collect());
        }
        if basis.len() == n {
            break;
        }
    }
    basis
}

/// Longest θ window searched for the next α-net return.
pub const MAX_NET_SEARCH: f64 = 1e7;

pub fn plan_chain(
    cert: &SplittingCertificate,
    i0: &[f64],
    i0p: &[f64],
    frequency: &Frequency,
    remainder: &RemainderFit,
    min_spacing: f64,
) -> Result<ChainPlan> {
    let omega = frequency.omega();
    let n = omega.len();
    if i0.len() != n || i0p.len() != n || cert.a0.len() != n {
        return Err(Error::InvalidInput(format!("dimension mismatch: ω has {n} components")));
    }
    let Region::Ball { radius } = cert.region else {
        return Err(Error::InvalidInput("chains need a ball certificate".into()));
    };
    let jump: Vec<f64> = i0p.iter().zip(i0).map(|(b, a)| b - a).collect();
    let jump_norm = norm(&jump);
    let w = frequency.norm();
    let defect: f64 = omega.iter().zip(&jump).map(|(a, b)| a * b).sum();
    if defect.abs() > 1e-12 * w * jump_norm.max(1.0) {
        return Err(Error::EnergyDefect(defect));
    }
    let k = ChainPlan::bump_count(jump_norm, radius, cert.delta);
    let first: Vec<f64> = omega.iter().map(|x| x / w).collect();
    let basis = gram_schmidt(&first, (jump_norm > 0.0).then_some(jump.as_slice()));
    let spacing = w / remainder.rate * (24.0 * remainder.prefactor / cert.delta).ln().abs() + 2.0 * radius;
    let min_gap = (spacing / w).max(min_spacing);
    let alpha = cert.alpha;

    let mut thetas = vec![0.0];
    let mut chi = vec![vec![0.0; n]];
    let mut net_constant = 0.0f64;
    let scale = frequency.gamma() * alpha.powf(frequency.tau()) / w;
    while thetas.len() < k {
        let lo = thetas.last().unwrap() + min_gap;
        let mut span = 64.0 / w;
        let hit = loop {
            let hits = alpha_net_hits(omega, alpha, lo, lo + span)?;
            if let Some(h) = hits.into_iter().next() {
                break h;
            }
            if span > MAX_NET_SEARCH {
                return Err(Error::IntervalTooShort { lo, hi: lo + span, scan_min: alpha });
            }
            span *= 2.0;
        };
        let x: Vec<f64> = omega.iter().map(|o| o * hit.0).collect();
        if !(norm(&hit.1) < alpha && torus_distance(&x) < alpha) {
            return Err(Error::Chain(format!("α-net hit at θ = {} fails re-verification", hit.0)));
        }
        net_constant = net_constant.max(((hit.0 - thetas.last().unwrap()) * w - spacing) * scale);
        thetas.push(hit.0);
        chi.push(hit.1);
    }
    Ok(ChainPlan {
        k,
        spacing,
        eta: thetas.iter().map(|t| t * w).collect(),
        chi,
        basis,
        a0: cert.a0.clone(),
        i0: i0.to_vec(),
        jump,
        delta: cert.delta,
        alpha,
        radius,
        g_min: cert.verification.interior_inf,
        omega_norm: w,
        remainder: remainder.clone(),
        net_constant,
        return_scale: 1.0 / (frequency.gamma() * alpha.powf(frequency.tau())),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChainSettings {
    /// Half-width of the per-transition windows.
    pub window: f64,
    /// Target for the full gradient norm after polishing.
    pub tolerance: f64,
    /// Largest accepted full gradient norm.
    pub acceptance: f64,
    pub max_surrogate: usize,
    pub max_polish: usize,
}

impl Default for ChainSettings {
    fn default() -> Self {
        Self { window: 10.0, tolerance: 1e-9, acceptance: 1e-6, max_surrogate: 60, max_polish: 12 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ChainResult {
    pub k: usize,
    pub a_bar: Vec<f64>,
    /// Coordinates of Ā − A₀ along Ω₂, …, Ω_n.
    pub b_bar: Vec<f64>,
    pub s_bar: Vec<f64>,
    pub thetas: Vec<f64>,
    /// 𝓕^k = F^k − ΔI·Ā.
    pub f_value: f64,
    /// F^k − k·min G − |ΔI|b₂, compared against 7kδ/24.
    pub normalized_value: f64,
    pub inf_bound: f64,
    pub gradient_norm: f64,
    pub surrogate_iterations: usize,
    pub polish_iterations: usize,
    /// ρ − max_i |(b + χ_i, s_i)|.
    pub interior_margin: f64,
    /// δ/2 − max_i (G(x_i) − min G).
    pub sublevel_margin: f64,
    pub clusters: usize,
    /// Fitted remainder at the smallest gap between clusters.
    pub neglected_coupling: f64,
    pub min_gap: f64,
    pub max_gap: f64,
    /// min gap / |ln δ| and max gap / max(|ln δ|, 1/(γα^τ)).
    pub k2: f64,
    pub k3: f64,
    pub transitions: Vec<Transition>,
    pub final_action: Vec<f64>,
    /// |I(+∞) − I₀′| / |ΔI|.
    pub jump_error: f64,
    #[serde(skip)]
    pub head: Vec<(f64, f64)>,
    #[serde(skip)]
    pub tail: Vec<(f64, f64)>,
}

struct Reduced<'p> {
    plan: &'p ChainPlan,
}

impl Reduced<'_> {
    fn local(&self, b: &[f64], s: f64, i: usize) -> Vec<f64> {
        let plan = self.plan;
        let mut y = plan.chi[i].clone();
        for (j, bj) in b.iter().enumerate() {
            y.iter_mut().zip(&plan.basis[j + 1]).for_each(|(x, e)| *x += bj * e);
        }
        y.iter_mut().zip(&plan.basis[0]).for_each(|(x, e)| *x += s * e);
        y
    }

    fn point(&self, b: &[f64], s: f64, i: usize) -> Vec<f64> {
        self.local(b, s, i).iter().zip(&self.plan.a0).map(|(y, a)| y + a).collect()
    }

    fn a(&self, b: &[f64]) -> Vec<f64> {
        let mut a = self.plan.a0.clone();
        for (j, bj) in b.iter().enumerate() {
            a.iter_mut().zip(&self.plan.basis[j + 1]).for_each(|(x, e)| *x += bj * e);
        }
        a
    }

    fn thetas(&self, s: &[f64]) -> Vec<f64> {
        self.plan.eta.iter().zip(s).map(|(e, si)| (e + si) / self.plan.omega_norm).collect()
    }

    fn max_radius(&self, b: &[f64], s: &[f64]) -> (f64, usize) {
        (0..self.plan.k)
            .map(|i| (norm(&self.local(b, s[i], i)), i))
            .fold((0.0, 0), |acc, x| if x.0 > acc.0 { x } else { acc })
    }

    fn inside(&self, b: &[f64], s: &[f64]) -> bool {
        self.max_radius(b, s).0 < self.plan.radius
    }

    fn linear_term(&self, b: &[f64]) -> f64 {
        if b.is_empty() {
            0.0
        } else {
            self.plan.jump_norm() * b[0]
        }
    }
}

fn quad_form(h: &[f64], n: usize, u: &[f64], v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for r in 0..n {
        for c in 0..n {
            acc += u[r] * h[r * n + c] * v[c];
        }
    }
    acc
}

/// Arrow-structured Hessian of Σ G(x_i): per-bump diagonal d_i, couplings B_i and the dense
/// b-block C.
struct Arrow {
    d: Vec<f64>,
    coupling: Vec<Vec<f64>>,
    block: Vec<f64>,
    m: usize,
}

impl Arrow {
    fn build(reduced: &Reduced, surrogate: &TrigSeries, b: &[f64], s: &[f64]) -> (f64, Vec<f64>, Vec<f64>, Self) {
        let plan = reduced.plan;
        let n = plan.n();
        let m = n - 1;
        let per_bump: Vec<(f64, Vec<f64>, Vec<f64>)> =
            (0..plan.k).into_par_iter().map(|i| surrogate.eval_with_hessian(&reduced.point(b, s[i], i))).collect();
        let mut value = -reduced.linear_term(b);
        let mut gb = vec![0.0; m];
        if m > 0 {
            gb[0] = -plan.jump_norm();
        }
        let mut gs = Vec::with_capacity(plan.k);
        let mut arrow = Arrow { d: Vec::with_capacity(plan.k), coupling: Vec::with_capacity(plan.k), block: vec![0.0; m * m], m };
        let e1 = &plan.basis[0];
        for (v, g, h) in &per_bump {
            value += v;
            gs.push(g.iter().zip(e1).map(|(x, y)| x * y).sum());
            for j in 0..m {
                gb[j] += g.iter().zip(&plan.basis[j + 1]).map(|(x, y)| x * y).sum::<f64>();
            }
            arrow.d.push(quad_form(h, n, e1, e1));
            arrow.coupling.push((0..m).map(|j| quad_form(h, n, &plan.basis[j + 1], e1)).collect());
            for j in 0..m {
                for l in 0..m {
                    arrow.block[j * m + l] += quad_form(h, n, &plan.basis[j + 1], &plan.basis[l + 1]);
                }
            }
        }
        (value, gb, gs, arrow)
    }

    /// Newton step for gradient (gb, gs); None when the Hessian is not positive definite.
    fn solve(&self, gb: &[f64], gs: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        if self.d.iter().any(|d| !(*d > 0.0)) {
            return None;
        }
        let m = self.m;
        let mut schur = self.block.clone();
        let mut rhs: Vec<f64> = gb.iter().map(|g| -g).collect();
        for ((d, bi), g) in self.d.iter().zip(&self.coupling).zip(gs) {
            for j in 0..m {
                rhs[j] += bi[j] * g / d;
                for l in 0..m {
                    schur[j * m + l] -= bi[j] * bi[l] / d;
                }
            }
        }
        let db = if m == 0 {
            Vec::new()
        } else {
            let mat = nalgebra::DMatrix::from_row_slice(m, m, &schur);
            let chol = mat.cholesky()?;
            chol.solve(&nalgebra::DVector::from_vec(rhs)).iter().copied().collect()
        };
        let ds = self
            .d
            .iter()
            .zip(&self.coupling)
            .zip(gs)
            .map(|((d, bi), g)| (-g - bi.iter().zip(&db).map(|(x, y)| x * y).sum::<f64>()) / d)
            .collect();
        Some((db, ds))
    }
}

fn clusters(thetas: &[f64], coupling: f64) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=thetas.len() {
        if i == thetas.len() || thetas[i] - thetas[i - 1] > coupling {
            out.push(start..i);
            start = i;
        }
    }
    out
}

struct FullGradient {
    value: f64,
    gb: Vec<f64>,
    gs: Vec<f64>,
    norm: f64,
}

fn full_gradient<F: ChainFunctional>(reduced: &Reduced, functional: &F, b: &[f64], s: &[f64]) -> Result<FullGradient> {
    let plan = reduced.plan;
    let a = reduced.a(b);
    let thetas = reduced.thetas(s);
    let ranges = clusters(&thetas, functional.coupling_length());
    let parts = ranges
        .par_iter()
        .map(|r| functional.cluster(&a, &thetas[r.clone()]))
        .collect::<Result<Vec<ActionValue>>>()?;
    let n = plan.n();
    let mut value = 0.0;
    let mut da = vec![0.0; n];
    let mut dtheta = Vec::with_capacity(plan.k);
    for p in parts {
        value += p.value;
        da.iter_mut().zip(&p.da).for_each(|(x, y)| *x += y);
        dtheta.extend(p.dtheta);
    }
    value -= plan.jump.iter().zip(&a).map(|(d, x)| d * x).sum::<f64>();
    da.iter_mut().zip(&plan.jump).for_each(|(x, d)| *x -= d);
    let gb = (1..n).map(|j| da.iter().zip(&plan.basis[j]).map(|(x, y)| x * y).sum()).collect();
    let gs: Vec<f64> = dtheta.iter().map(|g| g / plan.omega_norm).collect();
    let norm = (da.iter().chain(&dtheta).map(|x| x * x).sum::<f64>()).sqrt();
    Ok(FullGradient { value, gb, gs, norm })
}

fn step(b: &[f64], s: &[f64], db: &[f64], ds: &[f64], t: f64) -> (Vec<f64>, Vec<f64>) {
    (
        b.iter().zip(db).map(|(x, d)| x + t * d).collect(),
        s.iter().zip(ds).map(|(x, d)| x + t * d).collect(),
    )
}

fn boundary_error(reduced: &Reduced, b: &[f64], s: &[f64], stage: &str) -> Error {
    let (r, i) = reduced.max_radius(b, s);
    Error::Chain(format!("{stage} reached the boundary of W at bump {i} (|y| = {r}, ρ = {})", reduced.plan.radius))
}

/// Minimizes 𝓕̃^k over W: projected Newton on the surrogate Σ G(x_i) − |ΔI|b₂, then Newton
/// polish with the full gradient and the surrogate Hessian.
pub fn minimize_chain<F: ChainFunctional>(
    plan: &ChainPlan,
    functional: &F,
    surrogate: &TrigSeries,
    settings: &ChainSettings,
) -> Result<ChainResult> {
    let reduced = Reduced { plan };
    let m = plan.n() - 1;
    let mut b = vec![0.0; m];
    let mut s = vec![0.0; plan.k];
    if !reduced.inside(&b, &s) {
        return Err(boundary_error(&reduced, &b, &s, "the planned start"));
    }

    let mut surrogate_iterations = 0;
    for _ in 0..settings.max_surrogate {
        let (value, gb, gs, arrow) = Arrow::build(&reduced, surrogate, &b, &s);
        let gnorm = gb.iter().chain(&gs).map(|x| x * x).sum::<f64>().sqrt();
        if gnorm < settings.tolerance {
            break;
        }
        surrogate_iterations += 1;
        let (db, ds) = arrow.solve(&gb, &gs).unwrap_or_else(|| {
            let lip = arrow.d.iter().fold(1e-12f64, |acc, d| acc.max(d.abs()));
            (gb.iter().map(|g| -g / lip).collect(), gs.iter().map(|g| -g / lip).collect())
        });
        let slope: f64 = gb.iter().zip(&db).chain(gs.iter().zip(&ds)).map(|(g, d)| g * d).sum();
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..50 {
            let (nb, ns) = step(&b, &s, &db, &ds, t);
            if reduced.inside(&nb, &ns) {
                let trial = ns
                    .iter()
                    .enumerate()
                    .map(|(i, si)| surrogate.eval(&reduced.point(&nb, *si, i)))
                    .sum::<f64>()
                    - reduced.linear_term(&nb);
                if trial <= value + 1e-4 * t * slope || (value - trial).abs() <= 1e-14 * value.abs() {
                    b = nb;
                    s = ns;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(boundary_error(&reduced, &b, &s, "surrogate descent"));
        }
    }

    let mut polish_iterations = 0;
    let mut full = full_gradient(&reduced, functional, &b, &s)?;
    while full.norm >= settings.tolerance && polish_iterations < settings.max_polish {
        polish_iterations += 1;
        let (_, _, _, arrow) = Arrow::build(&reduced, surrogate, &b, &s);
        let (db, ds) = arrow
            .solve(&full.gb, &full.gs)
            .ok_or_else(|| Error::Chain("surrogate Hessian is not positive definite during polish".into()))?;
        let mut t = 1.0;
        let (mut nb, mut ns) = step(&b, &s, &db, &ds, t);
        while !reduced.inside(&nb, &ns) && t > 1e-6 {
            t *= 0.5;
            (nb, ns) = step(&b, &s, &db, &ds, t);
        }
        if !reduced.inside(&nb, &ns) {
            return Err(boundary_error(&reduced, &nb, &ns, "polish"));
        }
        let next = full_gradient(&reduced, functional, &nb, &ns)?;
        if next.norm > full.norm && polish_iterations > 2 {
            break;
        }
        b = nb;
        s = ns;
        full = next;
    }
    if !(full.norm < settings.acceptance) {
        return Err(Error::NonConvergence { iterations: polish_iterations, residual: full.norm });
    }

    let (radius, _) = reduced.max_radius(&b, &s);
    let interior_margin = plan.radius - radius;
    if interior_margin <= 0.0 {
        return Err(boundary_error(&reduced, &b, &s, "the minimizer"));
    }
    let a_bar = reduced.a(&b);
    let thetas = reduced.thetas(&s);
    let k = plan.k as f64;
    let f_full = full.value + plan.jump.iter().zip(&a_bar).map(|(d, x)| d * x).sum::<f64>();
    let normalized_value = f_full - k * plan.g_min - reduced.linear_term(&b);
    let inf_bound = 7.0 * k * plan.delta / 24.0;
    if normalized_value > inf_bound {
        return Err(Error::Chain(format!("normalized minimum {normalized_value:e} exceeds 7kδ/24 = {inf_bound:e}")));
    }
    let excess = (0..plan.k)
        .map(|i| surrogate.eval(&reduced.point(&b, s[i], i)) - plan.g_min)
        .fold(f64::NEG_INFINITY, f64::max);
    let sublevel_margin = 0.5 * plan.delta - excess;
    if sublevel_margin < 0.0 {
        return Err(Error::Chain(format!("a bump leaves the δ/2 sublevel set by {:e}", -sublevel_margin)));
    }

    let gaps: Vec<f64> = thetas.windows(2).map(|w| w[1] - w[0]).collect();
    let min_gap = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    let max_gap = gaps.iter().copied().fold(0.0, f64::max);
    let ln_delta = plan.delta.ln().abs();
    let ranges = clusters(&thetas, functional.coupling_length());
    let between = ranges
        .windows(2)
        .map(|w| thetas[w[1].start] - thetas[w[0].end - 1])
        .fold(f64::INFINITY, f64::min);
    let neglected_coupling =
        if between.is_finite() { plan.remainder.prefactor * (-plan.remainder.rate * between).exp() } else { 0.0 };

    let mut transitions = Vec::with_capacity(plan.k);
    let mut action = plan.i0.clone();
    let mut head = Vec::new();
    let mut tail = Vec::new();
    let last = ranges.len().saturating_sub(1);
    for (c, r) in ranges.iter().enumerate() {
        let trace = functional.transitions(&a_bar, &thetas[r.clone()], r.start, &action, settings.window)?;
        action = trace.final_action;
        transitions.extend(trace.transitions);
        if c == 0 {
            head = trace.head;
        }
        if c == last {
            tail = trace.tail;
        }
    }
    let target: Vec<f64> = plan.i0.iter().zip(&plan.jump).map(|(a, d)| a + d).collect();
    let miss: Vec<f64> = action.iter().zip(&target).map(|(a, b)| a - b).collect();
    let jump_error = if plan.jump_norm() > 0.0 { norm(&miss) / plan.jump_norm() } else { norm(&miss) };

    Ok(ChainResult {
        k: plan.k,
        a_bar,
        b_bar: b,
        s_bar: s,
        thetas,
        f_value: full.value,
        normalized_value,
        inf_bound,
        gradient_norm: full.norm,
        surrogate_iterations,
        polish_iterations,
        interior_margin,
        sublevel_margin,
        clusters: ranges.len(),
        neglected_coupling,
        min_gap: if gaps.is_empty() { 0.0 } else { min_gap },
        max_gap,
        k2: if gaps.is_empty() { 0.0 } else { min_gap / ln_delta },
        k3: max_gap / ln_delta.max(plan.return_scale),
        transitions,
        final_action: action,
        jump_error,
        head,
        tail,
    })
}

/// Time from `anchor` until the tail enters the `eta`-ball for good, with samples ordered away
/// from the bump when `forward` and towards it otherwise. Tails that end outside are extrapolated
/// with unit rate.
fn approach_time(samples: &[(f64, f64)], eta: f64, anchor: f64, forward: bool) -> f64 {
    let ordered: Vec<(f64, f64)> = if forward { samples.to_vec() } else { samples.iter().rev().copied().collect() };
    let Some(j) = ordered.iter().rposition(|s| s.1 > eta) else {
        return 0.0;
    };
    if j + 1 == ordered.len() {
        let end = ordered[j];
        return (end.0 - anchor).abs() + (end.1 / eta).ln();
    }
    let (outer, inner) = (ordered[j], ordered[j + 1]);
    let frac = (outer.1 - eta) / (outer.1 - inner.1);
    (outer.0 + frac * (inner.0 - outer.0) - anchor).abs()
}

/// T_d = θ̄_k − θ̄₁ plus the approach times of the two tails to the η-neighborhoods of the tori.
pub fn diffusion_time(result: &ChainResult, eta: f64) -> f64 {
    let first = result.thetas[0];
    let last = *result.thetas.last().expect("nonempty chain");
    let left = approach_time(&result.head, eta, first, false);
    let right = approach_time(&result.tail, eta, last, true);
    last - first + left + right
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PipelineOptions {
    /// Points per axis of the torus grid sampling G_μ.
    pub grid: usize,
    pub orbit: OrbitSettings,
    pub certify: CertifyOptions,
    pub chain: ChainSettings,
    /// Radius of the neighborhoods of the end tori.
    pub eta: f64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            grid: 32,
            orbit: OrbitSettings::default(),
            certify: CertifyOptions::default(),
            chain: ChainSettings::default(),
            eta: 1e-2,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ChainRun {
    pub mu: f64,
    pub minimum: CriticalPoint,
    pub certificate: SplittingCertificate,
    pub plan: ChainPlan,
    pub result: ChainResult,
    pub diffusion_time: f64,
}

/// Samples G_μ, certifies its global minimum, fits the remainders, plans and minimizes the chain
/// from `i0` to `i0p`.
pub fn build_chain(
    system: &PendulumSystem,
    mu: f64,
    i0: &[f64],
    i0p: &[f64],
    options: &PipelineOptions,
) -> Result<ChainRun> {
    let grid = TorusGrid::new(system.n(), options.grid)?;
    let values = homoclinic_samples(system, mu, &grid, &options.orbit)?;
    let report = find_critical_points(&grid, &values)?;
    let minimum = report
        .global_minimum()
        .cloned()
        .ok_or_else(|| Error::Certification("G_μ has no nondegenerate minimum".into()))?;
    let series = interpolant(&grid, &values);
    let certificate = certify_series(&series, &minimum.point, &options.certify)?;
    let remainder = fit_remainders(system, mu, &minimum.point, &REMAINDER_LENGTHS, &options.orbit)?;
    let plan = plan_chain(&certificate, i0, i0p, &system.frequency, &remainder, options.orbit.min_spacing)?;
    let functional = ProductChain { system, mu, settings: options.orbit };
    let result = minimize_chain(&plan, &functional, &series, &options.chain)?;
    let diffusion_time = diffusion_time(&result, options.eta);
    Ok(ChainRun { mu, minimum, certificate, plan, result, diffusion_time })
}
