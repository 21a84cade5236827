//! Numerical machinery for Arnold diffusion in pendulum-rotor systems
//! H = ω·I + p²/2 + (cos q − 1) + μ(1 − cos q)f(φ).

pub mod action;
pub mod chain;
pub mod conjugacy;
pub mod error;
pub mod fit;
pub mod frequency;
pub mod general;
pub mod green;
pub mod grid;
pub mod kbump;
pub mod onebump;
pub mod perturbation;
pub mod reduced;
pub mod scalar;
pub mod separatrix;
pub mod simulator;
pub mod spectral;
pub mod splitting;
pub mod system;
pub mod tori;
pub mod torus;

pub use error::{Error, Result};
pub use frequency::{alpha_net_time, diophantine_scan, Frequency};
pub use grid::TimeGrid;
pub use perturbation::{GeneralPerturbation, PerturbationSeries};
pub use scalar::Scalar;
pub use separatrix::{psi0, separatrix, separatrix_complex};
pub use system::{OrbitSettings, PendulumSystem};
