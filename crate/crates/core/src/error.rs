use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("resonant frequency vector: omega·k = {value:e} at k = {k:?}")]
    Resonance { k: Vec<i64>, value: f64 },
    #[error("no alpha-net hit in [{lo}, {hi}]; smallest torus distance {scan_min:e}")]
    IntervalTooShort { lo: f64, hi: f64, scan_min: f64 },
    #[error("complex argument outside the analyticity strip: |Im| = {imag} >= {limit}")]
    StripViolation { imag: f64, limit: f64 },
    #[error("Newton iteration did not converge after {iterations} steps (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("bump spacing {spacing} below the minimum {min}")]
    SpacingTooSmall { spacing: f64, min: f64 },
    #[error("small divisor |k·omega| = {divisor:e} at k = {k:?} with |g_k| = {magnitude:e}")]
    SmallDivisor { k: Vec<i64>, divisor: f64, magnitude: f64 },
    #[error("root not bracketed: {0}")]
    RootNotBracketed(String),
    #[error("energy defect omega·(I0' - I0) = {0:e} is not zero")]
    EnergyDefect(f64),
    #[error("under-resolved torus grid: {0}")]
    UnderResolved(String),
    #[error("certification failed: {0}")]
    Certification(String),
    #[error("inequality {inequality} violated by {margin:e} (radius {radius})")]
    Violation { inequality: String, margin: f64, radius: f64 },
    #[error("energy drift {drift:e} exceeds {bound:e} at t = {t}; reduce the step")]
    EnergyDrift { drift: f64, bound: f64, t: f64 },
    #[error("chain construction failed: {0}")]
    Chain(String),
}

pub type Result<T> = std::result::Result<T, Error>;
