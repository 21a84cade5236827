use isodiff::chain::{ChainSettings, PipelineOptions};
use isodiff::perturbation::GeneralPerturbation;
use isodiff::simulator::Scheme;
use isodiff::spectral::ThreeScaleConfig;
use isodiff::splitting::CertifyOptions;
use isodiff::{Frequency, OrbitSettings, PendulumSystem, PerturbationSeries};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: Problem,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub task: Task,
    #[serde(default)]
    pub output: Output,
}

/// One cosine term amp·cos(k·φ + phase), or amp·cos(k·φ + m·q + phase) for general perturbations.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub k: Vec<i64>,
    #[serde(default)]
    pub m: i64,
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Problem {
    pub n: usize,
    pub omega: Option<Vec<f64>>,
    pub three_scale: Option<ThreeScaleConfig>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    pub tau: Option<f64>,
    /// Depth of the diophantine scan; 0 skips it.
    #[serde(default)]
    pub k_check: usize,
    pub terms: Vec<Term>,
    /// Analyticity widths r_i; defaults to 1 in every direction.
    pub widths: Option<Vec<f64>>,
    /// Terms of a general perturbation f(φ, q); the product (1 − cos q)f(φ) is used when absent.
    #[serde(default)]
    pub general_terms: Vec<Term>,
    #[serde(default)]
    pub mu: f64,
    #[serde(default)]
    pub mu_list: Vec<f64>,
}

fn default_gamma() -> f64 {
    0.1
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    pub step: f64,
    pub half_length: f64,
    pub min_spacing: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Points per axis of torus grids.
    pub torus_grid: usize,
    /// Largest |k_i| in Fourier tables.
    pub fourier_bound: usize,
}

impl Default for Numerics {
    fn default() -> Self {
        let orbit = OrbitSettings::default();
        Self {
            step: orbit.step,
            half_length: orbit.half_length,
            min_spacing: orbit.min_spacing,
            newton_tol: orbit.newton.tol,
            newton_max_iter: orbit.newton.max_iter,
            torus_grid: 32,
            fourier_bound: 8,
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct Task {
    /// Torus point A.
    pub a: Option<Vec<f64>>,
    pub theta: f64,
    /// Sample the reduced function G̃ instead of G in `gmap`.
    pub reduced: bool,
    /// Strip loss δ of the splitting bound.
    pub delta: Option<f64>,
    pub i0: Option<Vec<f64>>,
    pub i0p: Option<Vec<f64>>,
    pub eta: Option<f64>,
    pub window: Option<f64>,
    pub initial: Option<InitialState>,
    pub duration: Option<f64>,
    pub dt: Option<f64>,
    pub scheme: Option<Scheme>,
    pub record_every: Option<usize>,
    /// Run the windowed shadowing check of a chain in `simulate`.
    pub shadow: bool,
    pub epsilons: Option<Vec<f64>>,
    pub slow_points: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    pub phi: Vec<f64>,
    pub action: Vec<f64>,
    pub q: f64,
    pub p: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct Output {
    pub dir: PathBuf,
}

impl Default for Output {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

/// A configuration error naming the offending field.
#[derive(Debug)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { field: field.to_string(), message: message.into() }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text).map_err(|e| {
            let field = e.span().map(|s| text[s].trim().to_string()).unwrap_or_default();
            ConfigError { field, message: e.message().to_string() }
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.problem;
        if p.n == 0 {
            return Err(invalid("problem.n", "must be positive"));
        }
        match (&p.omega, &p.three_scale) {
            (Some(_), Some(_)) => return Err(invalid("problem.omega", "give either omega or three_scale, not both")),
            (None, None) => return Err(invalid("problem.omega", "missing (or give problem.three_scale)")),
            (Some(w), None) if w.len() != p.n => {
                return Err(invalid("problem.omega", format!("has {} components, n = {}", w.len(), p.n)))
            }
            (None, Some(ts)) if ts.beta.len() + 1 != p.n => {
                return Err(invalid("problem.three_scale.beta", format!("needs n − 1 = {} entries", p.n - 1)))
            }
            _ => {}
        }
        if p.terms.is_empty() {
            return Err(invalid("problem.terms", "at least one term is required"));
        }
        for (i, t) in p.terms.iter().chain(&p.general_terms).enumerate() {
            if t.k.len() != p.n {
                return Err(invalid(&format!("problem.terms[{i}].k"), format!("has {} indices, n = {}", t.k.len(), p.n)));
            }
        }
        if let Some(w) = &p.widths {
            if w.len() != p.n {
                return Err(invalid("problem.widths", format!("has {} entries, n = {}", w.len(), p.n)));
            }
        }
        if let Some(mx) = p.terms.iter().flat_map(|t| t.k.iter()).map(|k| k.unsigned_abs() as usize).max() {
            if 4 * mx > self.numerics.torus_grid {
                return Err(invalid("numerics.torus_grid", format!("must be at least 4·max|k| = {}", 4 * mx)));
            }
        }
        if !(self.numerics.step > 0.0) || !(self.numerics.half_length > self.numerics.step) {
            return Err(invalid("numerics.step", "need 0 < step < half_length"));
        }
        let n = p.n;
        for (name, v) in [("task.a", &self.task.a), ("task.i0", &self.task.i0), ("task.i0p", &self.task.i0p)] {
            if let Some(v) = v {
                if v.len() != n {
                    return Err(invalid(name, format!("has {} entries, n = {n}", v.len())));
                }
            }
        }
        if let Some(s) = &self.task.initial {
            if s.phi.len() != n || s.action.len() != n {
                return Err(invalid("task.initial", format!("phi and action need {n} entries")));
            }
        }
        Ok(())
    }

    pub fn frequency(&self) -> Result<Frequency, ConfigError> {
        let p = &self.problem;
        if let Some(ts) = &p.three_scale {
            return Ok(ts.frequency());
        }
        let omega = p.omega.clone().expect("validated");
        let tau = p.tau.unwrap_or(p.n as f64 + 0.01);
        if p.n == 1 {
            return Ok(Frequency::unchecked(omega, p.gamma, tau));
        }
        Frequency::new(omega, p.gamma, tau, p.k_check).map_err(|e| invalid("problem.omega", e.to_string()))
    }

    pub fn perturbation(&self) -> Result<PerturbationSeries, ConfigError> {
        let p = &self.problem;
        let terms: Vec<(Vec<i64>, f64, f64)> = p.terms.iter().map(|t| (t.k.clone(), t.amplitude, t.phase)).collect();
        let widths = p.widths.clone().unwrap_or_else(|| vec![1.0; p.n]);
        PerturbationSeries::from_cosines(p.n, &terms, widths).map_err(|e| invalid("problem.terms", e.to_string()))
    }

    pub fn general_perturbation(&self) -> Result<GeneralPerturbation, ConfigError> {
        let p = &self.problem;
        if p.general_terms.is_empty() {
            return Ok(GeneralPerturbation::from_product(&self.perturbation()?));
        }
        let terms: Vec<(Vec<i64>, i64, f64, f64)> =
            p.general_terms.iter().map(|t| (t.k.clone(), t.m, t.amplitude, t.phase)).collect();
        GeneralPerturbation::from_cosines(p.n, &terms).map_err(|e| invalid("problem.general_terms", e.to_string()))
    }

    pub fn system(&self) -> Result<PendulumSystem, ConfigError> {
        Ok(PendulumSystem::new(self.frequency()?, self.perturbation()?))
    }

    pub fn orbit_settings(&self) -> OrbitSettings {
        let mut s = OrbitSettings::default().with_step(self.numerics.step).with_half_length(self.numerics.half_length);
        s.min_spacing = self.numerics.min_spacing;
        s.newton.tol = self.numerics.newton_tol;
        s.newton.max_iter = self.numerics.newton_max_iter;
        s
    }

    pub fn pipeline(&self) -> PipelineOptions {
        let defaults = PipelineOptions::default();
        PipelineOptions {
            grid: self.numerics.torus_grid,
            orbit: self.orbit_settings(),
            certify: CertifyOptions::default(),
            chain: ChainSettings { window: self.task.window.unwrap_or(defaults.chain.window), ..defaults.chain },
            eta: self.task.eta.unwrap_or(defaults.eta),
        }
    }

    pub fn mus(&self) -> Vec<f64> {
        if self.problem.mu_list.is_empty() {
            vec![self.problem.mu]
        } else {
            self.problem.mu_list.clone()
        }
    }

    pub fn a(&self) -> Vec<f64> {
        self.task.a.clone().unwrap_or_else(|| vec![0.0; self.problem.n])
    }

    /// Start and end actions of a chain; the default jump has size 0.1 along ω^⊥ (n = 2).
    pub fn jump_ends(&self, omega: &[f64]) -> Result<(Vec<f64>, Vec<f64>), ConfigError> {
        let i0 = self.task.i0.clone().unwrap_or_else(|| vec![0.0; self.problem.n]);
        let i0p = match &self.task.i0p {
            Some(v) => v.clone(),
            None if omega.len() == 2 => {
                let w = omega[0].hypot(omega[1]);
                vec![i0[0] - 0.1 * omega[1] / w, i0[1] + 0.1 * omega[0] / w]
            }
            None => return Err(invalid("task.i0p", "required for n ≠ 2")),
        };
        Ok((i0, i0p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[problem]
n = 2
omega = [1.0, 1.618033988749895]
terms = [{ k = [1, 0], amplitude = 1.0 }, { k = [0, 1], amplitude = 1.0 }]
mu = 1e-3
"#;

    #[test]
    fn parses_minimal_config() {
        let c = ExperimentConfig::parse(BASE).unwrap();
        assert_eq!(c.numerics.torus_grid, 32);
        assert_eq!(c.system().unwrap().n(), 2);
    }

    #[test]
    fn unknown_field_is_named() {
        let text = BASE.replace("mu = 1e-3", "mu = 1e-3\nmuu = 2.0");
        let err = ExperimentConfig::parse(&text).unwrap_err();
        assert!(err.message.contains("muu"), "{err}");
    }

    #[test]
    fn mode_length_is_checked() {
        let text = BASE.replace("k = [1, 0]", "k = [1, 0, 0]");
        let err = ExperimentConfig::parse(&text).unwrap_err();
        assert_eq!(err.field, "problem.terms[0].k");
    }
}
