//! Critical points of torus functions and certificates for the three-inequality splitting
//! condition: (i) boundary excess ≥ δ, (ii) sup over B_α(A₀) ≤ inf + δ/4, (iii) the δ/2-sublevel
//! and 3δ/4-superlevel sets at distance ≥ 2α.

use crate::action::MELNIKOV_SIGN;
use crate::error::{Error, Result};
use crate::frequency::wrap_angle;
use crate::perturbation::PerturbationSeries;
use crate::spectral::{reduced_samples, three_scale_coeffs, ThreeScaleConfig};
use crate::system::{OrbitSettings, PendulumSystem};
use crate::torus::{TorusGrid, TrigSeries};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI, TAU};

/// α = ALPHA_FRACTION·ρ·√(λ_min/λ_max). The nondegenerate-minimum formula with 1/8 violates
/// (iii) already for an exact quadratic, see [`COARSE_ALPHA_FRACTION`].
pub const ALPHA_FRACTION: f64 = 1.0 / 24.0;
pub const COARSE_ALPHA_FRACTION: f64 = 1.0 / 8.0;

/// Fourier interpolant of grid samples, dropping bins at round-off level.
pub fn interpolant(grid: &TorusGrid, values: &[f64]) -> TrigSeries {
    let coeffs = grid.forward(values);
    let top = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    TrigSeries::from_fft(grid, &coeffs, 1e-15 * top)
}

fn symmetric_eigen(n: usize, hess: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let h = DMatrix::from_row_slice(n, n, hess);
    let h = (&h + h.transpose()) * 0.5;
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalKind {
    Minimum,
    Maximum,
    Saddle,
    Degenerate,
}

#[derive(Clone, Debug, Serialize)]
pub struct CriticalPoint {
    pub point: Vec<f64>,
    pub value: f64,
    pub kind: CriticalKind,
    /// Ascending Hessian eigenvalues of the interpolant.
    pub eigenvalues: Vec<f64>,
    pub gradient_norm: f64,
    /// False when Newton diverged and the grid point is reported as is.
    pub refined: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CriticalReport {
    pub points: Vec<CriticalPoint>,
    /// Samples constant to round-off: every point is critical.
    pub degenerate: bool,
}

impl CriticalReport {
    pub fn of_kind(&self, kind: CriticalKind) -> impl Iterator<Item = &CriticalPoint> + '_ {
        self.points.iter().filter(move |p| p.kind == kind)
    }

    /// Minimum with the smallest value.
    pub fn global_minimum(&self) -> Option<&CriticalPoint> {
        self.of_kind(CriticalKind::Minimum).min_by(|a, b| a.value.total_cmp(&b.value))
    }
}

fn neighbours(grid: &TorusGrid, idx: usize) -> Vec<usize> {
    let base = grid.multi_index(idx);
    let count = 3usize.pow(grid.n as u32);
    let mut out = Vec::with_capacity(count - 1);
    for code in 0..count {
        let mut c = code;
        let mut multi = base.clone();
        let mut moved = false;
        for m in multi.iter_mut() {
            let shift = c % 3;
            c /= 3;
            if shift != 1 {
                moved = true;
                *m = (*m + grid.m + shift - 1) % grid.m;
            }
        }
        if moved {
            out.push(grid.flat_index(&multi));
        }
    }
    out
}

fn newton_critical(series: &TrigSeries, start: &[f64], reach: f64, tol: f64) -> (Vec<f64>, bool) {
    let n = series.n;
    let mut x = start.to_vec();
    for _ in 0..60 {
        let (_, g, h) = series.eval_with_hessian(&x);
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm <= tol {
            return (x, true);
        }
        let hm = DMatrix::from_row_slice(n, n, &h);
        let Some(dx) = hm.lu().solve(&DVector::from_iterator(n, g.iter().map(|v| -v))) else {
            return (start.to_vec(), false);
        };
        for (xi, d) in x.iter_mut().zip(dx.iter()) {
            *xi += d;
        }
        let moved = x.iter().zip(start).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if !moved.is_finite() || moved > reach {
            return (start.to_vec(), false);
        }
        if dx.norm() < 1e-14 * (1.0 + x.iter().map(|v| v.abs()).fold(0.0, f64::max)) {
            return (x, true);
        }
    }
    (start.to_vec(), false)
}

/// Critical points of the Fourier interpolant of `values`: seeds are grid points where |∇|²
/// is a discrete local minimum, refined by Newton and classified by Hessian signature.
pub fn find_critical_points(grid: &TorusGrid, values: &[f64]) -> Result<CriticalReport> {
    if values.len() != grid.len() {
        return Err(Error::InvalidInput(format!("{} samples for a grid of {}", values.len(), grid.len())));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scale = lo.abs().max(hi.abs()).max(1.0);
    let spread = hi - lo;
    if spread <= 1e-12 * scale {
        return Ok(CriticalReport { points: Vec::new(), degenerate: true });
    }
    let series = interpolant(grid, values);
    let derivs: Vec<Vec<f64>> = (0..grid.n).map(|axis| grid.derivative(values, axis)).collect();
    let grad2: Vec<f64> = (0..grid.len()).map(|i| derivs.iter().map(|d| d[i] * d[i]).sum()).collect();
    let seeds: Vec<usize> =
        (0..grid.len()).filter(|&i| neighbours(grid, i).iter().all(|&j| grad2[i] <= grad2[j])).collect();
    let reach = 2.0 * grid.spacing() * (grid.n as f64).sqrt();
    let eig_tol = 1e-8 * spread;
    let mut found: Vec<CriticalPoint> = seeds
        .par_iter()
        .map(|&idx| {
            let start = grid.point(idx);
            let (x, refined) = newton_critical(&series, &start, reach, 1e-12 * spread);
            let x: Vec<f64> = x.iter().map(|v| v.rem_euclid(TAU)).collect();
            let (value, g, h) = series.eval_with_hessian(&x);
            let (eigenvalues, _) = symmetric_eigen(grid.n, &h);
            let kind = if eigenvalues.iter().any(|l| l.abs() <= eig_tol) {
                CriticalKind::Degenerate
            } else if eigenvalues.iter().all(|l| *l > 0.0) {
                CriticalKind::Minimum
            } else if eigenvalues.iter().all(|l| *l < 0.0) {
                CriticalKind::Maximum
            } else {
                CriticalKind::Saddle
            };
            CriticalPoint {
                point: x,
                value,
                kind,
                eigenvalues,
                gradient_norm: g.iter().map(|v| v * v).sum::<f64>().sqrt(),
                refined,
            }
        })
        .collect();
    found.sort_by(|a, b| a.gradient_norm.total_cmp(&b.gradient_norm));
    let mut points: Vec<CriticalPoint> = Vec::new();
    for p in found {
        let duplicate = points.iter().any(|q| {
            q.point.iter().zip(&p.point).map(|(a, b)| wrap_angle(a - b).powi(2)).sum::<f64>().sqrt() < 1e-6
        });
        if !duplicate {
            points.push(p);
        }
    }
    points.sort_by(|a, b| a.value.total_cmp(&b.value));
    Ok(CriticalReport { points, degenerate: false })
}

/// A sample with the axis-aligned box it stands for.
#[derive(Clone, Debug)]
struct Cell {
    key: Vec<i64>,
    x: Vec<f64>,
    half: Vec<f64>,
    value: f64,
}

fn box_gap(a: &Cell, b: &Cell) -> f64 {
    a.x.iter()
        .zip(&b.x)
        .zip(a.half.iter().zip(&b.half))
        .map(|((xa, xb), (ha, hb))| ((xa - xb).abs() - ha - hb).max(0.0).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Exhaustive lower bound on the distance between two unions of boxes, pruned along axis 0.
fn set_distance(sub: &[&Cell], sup: &[&Cell]) -> f64 {
    if sub.is_empty() || sup.is_empty() {
        return f64::INFINITY;
    }
    let mut sorted: Vec<&Cell> = sup.to_vec();
    sorted.sort_by(|a, b| a.x[0].total_cmp(&b.x[0]));
    let hmax = sorted.iter().map(|c| c.half[0]).fold(0.0, f64::max);
    sub.par_iter()
        .map(|s| {
            let pos = sorted.partition_point(|p| p.x[0] < s.x[0]);
            let mut best = f64::INFINITY;
            for p in &sorted[pos..] {
                if p.x[0] - s.x[0] - s.half[0] - hmax >= best {
                    break;
                }
                best = best.min(box_gap(s, p));
            }
            for p in sorted[..pos].iter().rev() {
                if s.x[0] - p.x[0] - s.half[0] - hmax >= best {
                    break;
                }
                best = best.min(box_gap(s, p));
            }
            best
        })
        .reduce(|| f64::INFINITY, f64::min)
}

/// Outcome of checking the three inequalities on one sample set.
#[derive(Clone, Debug, Serialize)]
pub struct Verification {
    pub samples: usize,
    pub interior_inf: f64,
    pub boundary_inf: f64,
    pub ball_sup: f64,
    /// Lower bound on the distance between the δ/2-sublevel and 3δ/4-superlevel cells.
    pub set_distance: f64,
    /// Slack of (i), (ii), (iii); all nonnegative when the inequalities hold.
    pub margins: [f64; 3],
}

impl Verification {
    pub fn passed(&self) -> bool {
        self.margins.iter().all(|m| *m >= 0.0)
    }

    pub fn first_violation(&self) -> Option<(&'static str, f64)> {
        ["(i)", "(ii)", "(iii)"].into_iter().zip(self.margins).find(|(_, m)| *m < 0.0)
    }

    fn violation(&self, radius: f64) -> Error {
        let (inequality, margin) = self.first_violation().unwrap_or(("(i)", self.margins[0]));
        Error::Violation { inequality: inequality.to_string(), margin, radius }
    }
}

/// Cells of `class` with a lattice neighbour outside it (or missing). A segment between the two
/// sets leaves each of them through such a cell, so the distance bound only needs these layers.
fn outer_layer<'a>(cells: &'a [Cell], classes: &HashMap<&[i64], u8>, class: u8) -> Vec<&'a Cell> {
    cells
        .par_iter()
        .zip(cells.par_iter().map(|c| classes[c.key.as_slice()]))
        .filter(|(_, c)| *c == class)
        .filter(|(cell, _)| {
            let n = cell.key.len();
            let mut key = cell.key.clone();
            (0..3usize.pow(n as u32)).any(|code| {
                let mut c = code;
                for (k, base) in key.iter_mut().zip(&cell.key) {
                    *k = base + (c % 3) as i64 - 1;
                    c /= 3;
                }
                classes.get(key.as_slice()) != Some(&class)
            })
        })
        .map(|(cell, _)| cell)
        .collect()
}

fn verify_cells(cells: &[Cell], boundary: &[f64], ball: &[f64], delta: f64, alpha: f64) -> Verification {
    let cell_inf = cells.iter().map(|c| c.value).fold(f64::INFINITY, f64::min);
    let boundary_inf = boundary.iter().copied().fold(f64::INFINITY, f64::min);
    let ball_inf = ball.iter().copied().fold(f64::INFINITY, f64::min);
    let ball_sup = ball.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let inf = cell_inf.min(boundary_inf).min(ball_inf);
    let classify = |v: f64| {
        if v <= inf + 0.5 * delta {
            1u8
        } else if v >= inf + 0.75 * delta {
            2
        } else {
            0
        }
    };
    let classes: HashMap<&[i64], u8> = cells.iter().map(|c| (c.key.as_slice(), classify(c.value))).collect();
    let sub = outer_layer(cells, &classes, 1);
    let sup = outer_layer(cells, &classes, 2);
    let distance = set_distance(&sub, &sup);
    Verification {
        samples: cells.len() + boundary.len() + ball.len(),
        interior_inf: inf,
        boundary_inf,
        ball_sup,
        set_distance: distance,
        margins: [boundary_inf - inf - delta, inf + 0.25 * delta - ball_sup, distance - 2.0 * alpha],
    }
}

/// Tensor grid of spacing `h` clipped to the closed ball of radius `r`, with integer keys.
fn keyed_lattice(n: usize, r: f64, h: f64) -> Vec<(Vec<i64>, Vec<f64>)> {
    let m = (r / h).floor() as i64;
    let side = (2 * m + 1) as usize;
    let total = side.pow(n as u32);
    let mut out = Vec::new();
    for code in 0..total {
        let mut c = code;
        let key: Vec<i64> = (0..n)
            .map(|_| {
                let j = (c % side) as i64 - m;
                c /= side;
                j
            })
            .collect();
        let y: Vec<f64> = key.iter().map(|j| *j as f64 * h).collect();
        if y.iter().map(|v| v * v).sum::<f64>() <= r * r {
            out.push((key, y));
        }
    }
    out
}

fn ball_lattice(n: usize, r: f64, h: f64) -> Vec<Vec<f64>> {
    keyed_lattice(n, r, h).into_iter().map(|(_, y)| y).collect()
}

fn sphere_points(n: usize, r: f64, h: f64) -> Vec<Vec<f64>> {
    match n {
        1 => vec![vec![-r], vec![r]],
        2 => {
            let count = ((TAU * r / h).ceil() as usize).max(16);
            (0..count)
                .map(|j| {
                    let t = TAU * j as f64 / count as f64;
                    vec![r * t.cos(), r * t.sin()]
                })
                .collect()
        }
        _ => ball_lattice(n, r, h)
            .into_iter()
            .filter_map(|y| {
                let len = y.iter().map(|v| v * v).sum::<f64>().sqrt();
                (len >= r - h && len > 0.0).then(|| y.iter().map(|v| v * r / len).collect())
            })
            .collect(),
    }
}

fn shifted(a0: &[f64], y: &[f64]) -> Vec<f64> {
    a0.iter().zip(y).map(|(a, b)| a + b).collect()
}

/// Checks the three inequalities on the ball B_ρ(A₀), sampled with spacing ρ·√(λ_min/λ_max)/resolution
/// (`aspect` is that square root).
pub fn verify_ball<G>(g: &G, a0: &[f64], radius: f64, delta: f64, alpha: f64, aspect: f64, resolution: usize) -> Verification
where
    G: Fn(&[f64]) -> f64 + Sync,
{
    let n = a0.len();
    let h = radius * aspect / resolution as f64;
    let cells: Vec<Cell> = keyed_lattice(n, radius - 0.5 * h, h)
        .into_par_iter()
        .map(|(key, y)| {
            let x = shifted(a0, &y);
            let value = g(&x);
            Cell { key, x, half: vec![0.5 * h; n], value }
        })
        .collect();
    let boundary: Vec<f64> = sphere_points(n, radius, h).par_iter().map(|y| g(&shifted(a0, y))).collect();
    let hb = (alpha / 8.0).max(f64::MIN_POSITIVE);
    let mut ball_pts = ball_lattice(n, alpha, hb);
    ball_pts.extend(sphere_points(n, alpha, hb));
    let ball: Vec<f64> = ball_pts.par_iter().map(|y| g(&shifted(a0, y))).collect();
    verify_cells(&cells, &boundary, &ball, delta, alpha)
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    Ball {
        radius: f64,
    },
    /// {|A₁ + φ(A₂) − π| < π/2, |A₂ − center| < half_width}, φ tabulated on `phase`.
    Slab {
        center: f64,
        half_width: f64,
        phase: Vec<(f64, f64)>,
    },
}

#[derive(Clone, Debug, Serialize)]
pub struct SplittingCertificate {
    pub a0: Vec<f64>,
    pub region: Region,
    pub delta: f64,
    pub alpha: f64,
    pub eigenvalues: Vec<f64>,
    pub verification: Verification,
    /// Same inequalities on a grid twice as fine.
    pub refined: Verification,
    pub attempts: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CertifyOptions {
    pub initial_radius: f64,
    pub shrink: f64,
    pub max_attempts: usize,
    pub resolution: usize,
    pub alpha_fraction: f64,
    /// Step of the central-difference Hessian when no analytic one is supplied.
    pub fd_step: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self { initial_radius: 1.0, shrink: 0.8, max_attempts: 40, resolution: 96, alpha_fraction: ALPHA_FRACTION, fd_step: 1e-2 }
    }
}

fn fd_hessian<G: Fn(&[f64]) -> f64>(g: &G, a0: &[f64], h: f64) -> Vec<f64> {
    let n = a0.len();
    let at = |di: usize, si: f64, dj: usize, sj: f64| {
        let mut x = a0.to_vec();
        x[di] += si * h;
        x[dj] += sj * h;
        g(&x)
    };
    let center = g(a0);
    let mut hess = vec![0.0; n * n];
    for i in 0..n {
        hess[i * n + i] = (at(i, 1.0, i, 0.0) - 2.0 * center + at(i, -1.0, i, 0.0)) / (h * h);
        for j in 0..i {
            let v = (at(i, 1.0, j, 1.0) - at(i, 1.0, j, -1.0) - at(i, -1.0, j, 1.0) + at(i, -1.0, j, -1.0)) / (4.0 * h * h);
            hess[i * n + j] = v;
            hess[j * n + i] = v;
        }
    }
    hess
}

/// Ball certificate around the strict local minimizer `a0`, Hessian by central differences.
pub fn certify<G>(g: &G, a0: &[f64], options: &CertifyOptions) -> Result<SplittingCertificate>
where
    G: Fn(&[f64]) -> f64 + Sync,
{
    let hess = fd_hessian(g, a0, options.fd_step);
    let noise = 1e3 * f64::EPSILON * g(a0).abs().max(1.0) / (options.fd_step * options.fd_step);
    certify_with_hessian(g, a0, &hess, noise, options)
}

/// Ball certificate on a Fourier interpolant with its analytic Hessian.
pub fn certify_series(series: &TrigSeries, a0: &[f64], options: &CertifyOptions) -> Result<SplittingCertificate> {
    let (value, _, hess) = series.eval_with_hessian(a0);
    let g = |x: &[f64]| series.eval(x);
    certify_with_hessian(&g, a0, &hess, 1e3 * f64::EPSILON * value.abs().max(1.0), options)
}

fn certify_with_hessian<G>(g: &G, a0: &[f64], hess: &[f64], noise: f64, options: &CertifyOptions) -> Result<SplittingCertificate>
where
    G: Fn(&[f64]) -> f64 + Sync,
{
    let n = a0.len();
    let (eigenvalues, _) = symmetric_eigen(n, hess);
    let lmin = eigenvalues[0];
    let lmax = eigenvalues[n - 1];
    if lmin <= noise {
        let probe = verify_ball(g, a0, options.initial_radius, noise.max(f64::MIN_POSITIVE), 0.0, 1.0, 32);
        if probe.margins[0] < 0.0 {
            return Err(Error::Violation {
                inequality: "(i)".into(),
                margin: probe.boundary_inf - probe.interior_inf,
                radius: options.initial_radius,
            });
        }
        return Err(Error::Certification(format!("degenerate Hessian at A0, eigenvalues {eigenvalues:?}")));
    }
    let aspect = (lmin / lmax).sqrt();
    let mut radius = options.initial_radius;
    let mut last = None;
    for attempt in 1..=options.max_attempts {
        let delta = 0.25 * lmin * radius * radius;
        let alpha = options.alpha_fraction * radius * aspect;
        let verification = verify_ball(g, a0, radius, delta, alpha, aspect, options.resolution);
        if verification.passed() {
            let refined = verify_ball(g, a0, radius, delta, alpha, aspect, 2 * options.resolution);
            if refined.passed() {
                return Ok(SplittingCertificate {
                    a0: a0.to_vec(),
                    region: Region::Ball { radius },
                    delta,
                    alpha,
                    eigenvalues,
                    verification,
                    refined,
                    attempts: attempt,
                });
            }
            last = Some((refined, radius));
        } else {
            last = Some((verification, radius));
        }
        radius *= options.shrink;
    }
    let (verification, radius) = last.expect("at least one attempt");
    Err(verification.violation(radius))
}

/// Tuning of the three-scale certificate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ThreeScaleOptions {
    /// Radius d₀ of the slow-angle ball.
    pub d0: f64,
    /// Torus grid size for the G̃ samples.
    pub grid: usize,
    pub step: f64,
    pub fast_points: usize,
    pub slow_points: usize,
    /// Fraction of the measured set distance granted to 2α.
    pub alpha_safety: f64,
}

impl Default for ThreeScaleOptions {
    fn default() -> Self {
        Self { d0: 1.0, grid: 32, step: 0.01, fast_points: 512, slow_points: 256, alpha_safety: 0.5 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ThreeScaleCertificate {
    pub epsilon: f64,
    pub mu: f64,
    pub certificate: SplittingCertificate,
    /// Minimizer of sign·Γ₀ (the center of the slow ball).
    pub a2_bar: f64,
    pub d0: f64,
    /// min(c₀ from hypothesis (i), c₀ from hypothesis (ii)).
    pub c0: f64,
    pub c0_first: f64,
    pub c0_second: f64,
    /// α·√ε·e^{π/(2√ε)}.
    pub c1: f64,
    /// min over the slow ball of |g̃₁|.
    pub g1_min: f64,
    /// 1 − sup|g̃₁ − sign·μΓ₁| / inf|μΓ₁| over the slow ball.
    pub first_order_margin: f64,
    pub ln_delta: f64,
    /// ln(μe^{−π/(2√ε)}/√ε).
    pub ln_scale: f64,
}

/// Slow-angle coefficients c_{k₁}(A₂) of a two-angle interpolant.
struct SlabModel {
    rows: Vec<(i64, Vec<(i64, Complex64)>)>,
}

impl SlabModel {
    fn new(series: &TrigSeries) -> Self {
        let mut rows: Vec<(i64, Vec<(i64, Complex64)>)> = Vec::new();
        for (k, c) in &series.terms {
            match rows.iter_mut().find(|(k1, _)| *k1 == k[0]) {
                Some((_, row)) => row.push((k[1], *c)),
                None => rows.push((k[0], vec![(k[1], *c)])),
            }
        }
        Self { rows }
    }

    fn coefficient(&self, k1: i64, a2: f64) -> Complex64 {
        self.rows
            .iter()
            .filter(|(r, _)| *r == k1)
            .flat_map(|(_, row)| row.iter())
            .map(|(k2, c)| c * Complex64::from_polar(1.0, *k2 as f64 * a2))
            .sum()
    }

    fn column(&self, a2: f64) -> Vec<(i64, Complex64)> {
        self.rows
            .iter()
            .map(|(k1, row)| (*k1, row.iter().map(|(k2, c)| c * Complex64::from_polar(1.0, *k2 as f64 * a2)).sum()))
            .collect()
    }

    fn eval_column(column: &[(i64, Complex64)], a1: f64) -> f64 {
        column.iter().map(|(k1, c)| (c * Complex64::from_polar(1.0, *k1 as f64 * a1)).re).sum()
    }
}

struct Phase<'a> {
    model: &'a SlabModel,
    nodes: Vec<f64>,
    values: Vec<f64>,
}

impl Phase<'_> {
    fn at(&self, a2: f64) -> f64 {
        let h = self.nodes[1] - self.nodes[0];
        let j = (((a2 - self.nodes[0]) / h).floor().max(0.0) as usize).min(self.nodes.len() - 2);
        let t = (a2 - self.nodes[j]) / h;
        let guess = self.values[j] * (1.0 - t) + self.values[j + 1] * t;
        guess + wrap_angle(self.model.coefficient(1, a2).arg() - guess)
    }
}

fn uniform(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..=count).map(|j| lo + (hi - lo) * j as f64 / count as f64).collect()
}

fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..80 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

struct SlabSamples {
    cells: Vec<Cell>,
    boundary: Vec<f64>,
    ball: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn slab_samples(
    model: &SlabModel,
    phase: &Phase,
    center: f64,
    d0: f64,
    a0: &[f64],
    band: f64,
    alpha: f64,
    fast: usize,
    slow: usize,
) -> SlabSamples {
    let mut slow_nodes = uniform(center - d0, center + d0, slow);
    let lo = (a0[1] - band).max(center - d0);
    let hi = (a0[1] + band).min(center + d0);
    slow_nodes.extend(uniform(lo, hi, 2 * slow));
    slow_nodes.sort_by(f64::total_cmp);
    slow_nodes.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    let shifts: Vec<f64> = slow_nodes.iter().map(|a2| PI - phase.at(*a2)).collect();
    let fast_lo = shifts.iter().copied().fold(f64::INFINITY, f64::min) - FRAC_PI_2;
    let fast_hi = shifts.iter().copied().fold(f64::NEG_INFINITY, f64::max) + FRAC_PI_2;
    let fast_nodes = uniform(fast_lo, fast_hi, fast);
    let hf = fast_nodes[1] - fast_nodes[0];
    let last = slow_nodes.len() - 1;
    let cells: Vec<Cell> = (1..last)
        .into_par_iter()
        .flat_map_iter(|j| {
            let a2 = slow_nodes[j];
            let half_slow = 0.5 * (slow_nodes[j + 1] - a2).max(a2 - slow_nodes[j - 1]);
            let column = model.column(a2);
            let shift = shifts[j];
            fast_nodes
                .iter()
                .enumerate()
                .filter(move |(_, a1)| (**a1 - shift).abs() < FRAC_PI_2)
                .map(move |(i, a1)| Cell {
                    key: vec![i as i64, j as i64],
                    x: vec![*a1, a2],
                    half: vec![0.5 * hf, half_slow],
                    value: SlabModel::eval_column(&column, *a1),
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let mut boundary: Vec<f64> = slow_nodes
        .par_iter()
        .zip(&shifts)
        .flat_map_iter(|(a2, shift)| {
            let column = model.column(*a2);
            [shift - FRAC_PI_2, shift + FRAC_PI_2].map(|a1| SlabModel::eval_column(&column, a1))
        })
        .collect();
    for (a2, shift) in [(slow_nodes[0], shifts[0]), (slow_nodes[last], shifts[last])] {
        let column = model.column(a2);
        boundary.extend(uniform(shift - FRAC_PI_2, shift + FRAC_PI_2, 2 * fast).iter().map(|a1| SlabModel::eval_column(&column, *a1)));
    }
    let hb = (alpha / 8.0).max(f64::MIN_POSITIVE);
    let mut ball_pts = ball_lattice(2, alpha, hb);
    ball_pts.extend(sphere_points(2, alpha, hb));
    let ball = ball_pts
        .par_iter()
        .map(|y| SlabModel::eval_column(&model.column(a0[1] + y[1]), a0[0] + y[0]))
        .collect();
    SlabSamples { cells, boundary, ball }
}

/// Certificate on the phase-aligned slab for the three-scale frequency (one fast, one slow angle),
/// with δ = c₀μe^{−π/(2√ε)}/(2√ε) and c₀ read off the first-order coefficients Γ₀, Γ₁.
pub fn three_scale_certify(
    cfg: &ThreeScaleConfig,
    f: &PerturbationSeries,
    mu: f64,
    options: &ThreeScaleOptions,
) -> Result<ThreeScaleCertificate> {
    cfg.validate(f)?;
    if f.n() != 2 {
        return Err(Error::InvalidInput("three-scale certificate supports one slow angle (n = 2)".into()));
    }
    let d0 = options.d0;
    let profile = |a2: f64| -> Result<(f64, Complex64)> {
        let c = three_scale_coeffs(cfg, f, &[vec![a2]])?;
        Ok((MELNIKOV_SIGN * c.profiles[0].gamma0, c.profiles[0].gamma1_rescaled))
    };
    // Center of the slow ball: global minimizer of sign·Γ₀.
    let coarse = uniform(0.0, TAU, 512);
    let mut best = (f64::INFINITY, 0.0);
    for a2 in &coarse[..512] {
        let v = profile(*a2)?.0;
        if v < best.0 {
            best = (v, *a2);
        }
    }
    let h = TAU / 512.0;
    let a2_bar = golden_min(|x| profile(x).map(|p| p.0).unwrap_or(f64::INFINITY), best.1 - h, best.1 + h);
    let center_value = profile(a2_bar)?.0;
    let ball_nodes = uniform(a2_bar - d0, a2_bar + d0, 512);
    let mut c0_first = f64::INFINITY;
    let mut gamma1_min = f64::INFINITY;
    for a2 in &ball_nodes {
        let g1 = profile(*a2)?.1.norm();
        c0_first = c0_first.min(4.0 * PI * g1);
        gamma1_min = gamma1_min.min(g1);
    }
    let c0_second = [a2_bar - d0, a2_bar + d0]
        .iter()
        .map(|a2| profile(*a2).map(|p| p.0 - center_value))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let c0 = c0_first.min(c0_second);
    if !(c0_second > 0.0) {
        return Err(Error::Violation { inequality: "hypothesis (ii)".into(), margin: c0_second, radius: d0 });
    }

    let system = PendulumSystem::new(cfg.frequency(), f.clone());
    let grid = TorusGrid::new(2, options.grid)?;
    let settings = OrbitSettings::default().with_step(options.step);
    let values = reduced_samples(&system, mu, &grid, &settings)?;
    let series = interpolant(&grid, &values);
    let model = SlabModel::new(&series);
    let top = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let floor = 1e3 * f64::EPSILON * top;
    let ln_fast = cfg.ln_fast_scale();
    let mut g1_min = (f64::INFINITY, a2_bar);
    let mut defect_max = 0.0f64;
    for a2 in &ball_nodes {
        let g1 = model.coefficient(1, *a2);
        if g1.norm() < g1_min.0 {
            g1_min = (g1.norm(), *a2);
        }
        let predicted = MELNIKOV_SIGN * mu * profile(*a2)?.1 * ln_fast.exp();
        defect_max = defect_max.max((g1 - predicted).norm());
    }
    if g1_min.0 <= floor {
        return Err(Error::Certification(format!(
            "|g1| vanishes at A2 = {:.6} (|g1| = {:e} below the noise floor {:e}); phase undefined",
            g1_min.1, g1_min.0, floor
        )));
    }
    let first_order_margin = 1.0 - defect_max / (mu * gamma1_min * ln_fast.exp());
    if first_order_margin <= 0.0 {
        return Err(Error::Violation { inequality: "first-order dominance".into(), margin: first_order_margin, radius: d0 });
    }

    let table = uniform(a2_bar - d0 - 0.1, a2_bar + d0 + 0.1, 2048);
    let mut unwrapped = Vec::with_capacity(table.len());
    for a2 in &table {
        let arg = model.coefficient(1, *a2).arg();
        let v = match unwrapped.last() {
            Some(prev) => prev + wrap_angle(arg - prev),
            None => arg,
        };
        unwrapped.push(v);
    }
    let phase = Phase { model: &model, nodes: table, values: unwrapped };

    let s = cfg.epsilon.sqrt();
    let ln_scale = mu.ln() - FRAC_PI_2 / s - s.ln();
    let ln_delta = c0.ln() + ln_scale - 2f64.ln();
    let delta = ln_delta.exp();

    // Minimizer of G̃ on the slab, from the predicted phase-aligned point.
    let start = [PI - phase.at(a2_bar), a2_bar];
    let (mut a0, ok) = newton_critical(&series, &start, d0, 0.0);
    if !ok || (a0[1] - a2_bar).abs() >= d0 || (a0[0] + phase.at(a0[1]) - PI).abs() >= FRAC_PI_2 {
        a0 = start.to_vec();
    }
    let (_, _, hess) = series.eval_with_hessian(&a0);
    let (eigenvalues, _) = symmetric_eigen(2, &hess);
    let schur = hess[3] - hess[1] * hess[2] / hess[0];
    if !(hess[0] > 0.0 && schur > 0.0) {
        return Err(Error::Certification(format!("G̃ has no nondegenerate minimum on the slab (Hessian {hess:?})")));
    }
    let band = (4.0 * (delta / schur).sqrt()).min(d0);

    let run = |alpha: f64, refine: usize| {
        let samples = slab_samples(
            &model,
            &phase,
            a2_bar,
            d0,
            &a0,
            band,
            alpha,
            refine * options.fast_points,
            refine * options.slow_points,
        );
        verify_cells(&samples.cells, &samples.boundary, &samples.ball, delta, alpha)
    };
    let probe = run(0.0, 1);
    if let Some((inequality, margin)) = probe.first_violation() {
        return Err(Error::Violation { inequality: inequality.into(), margin, radius: d0 });
    }
    let mut alpha = (options.alpha_safety * 0.5 * probe.set_distance).min(0.5 * d0);
    let mut verification = run(alpha, 1);
    for _ in 0..40 {
        if verification.passed() {
            break;
        }
        alpha *= 0.5;
        verification = run(alpha, 1);
    }
    if !verification.passed() {
        return Err(verification.violation(d0));
    }
    let refined = run(alpha, 2);
    if !refined.passed() {
        return Err(refined.violation(d0));
    }
    let c1 = alpha * s * (FRAC_PI_2 / s).exp();
    let phase_table = uniform(a2_bar - d0, a2_bar + d0, 32).into_iter().map(|a2| (a2, phase.at(a2))).collect();
    Ok(ThreeScaleCertificate {
        epsilon: cfg.epsilon,
        mu,
        certificate: SplittingCertificate {
            a0,
            region: Region::Slab { center: a2_bar, half_width: d0, phase: phase_table },
            delta,
            alpha,
            eigenvalues,
            verification,
            refined,
            attempts: 1,
        },
        a2_bar,
        d0,
        c0,
        c0_first,
        c0_second,
        c1,
        g1_min: g1_min.0,
        first_order_margin,
        ln_delta,
        ln_scale,
    })
}
