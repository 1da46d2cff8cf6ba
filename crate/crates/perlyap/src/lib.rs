//! Numerical laboratory for the stability of locally stable dynamical systems
//! under persistent white-noise perturbation.
//!
//! The library has three layers:
//!
//! * **Model + certification** ([`model`], [`certify`]): dynamical systems
//!   `dx/dt = f(x,t)` with an equilibrium at the origin, noise matrices
//!   `G(y,t)` driving the Itô perturbation `dy = f dt + mu G dw`, and local
//!   Lyapunov certificates `V` with constants `(A, B, C, gamma, r0)` that are
//!   verified numerically on a sampled ball.
//! * **Theory** ([`bounds`], [`oracles`]): perturbed-Lyapunov constructions
//!   `V_N` and the exit-probability bounds they imply on asymptotically long
//!   horizons `T = mu^(-2N+kappa)`, plus closed-form references (the Wiener
//!   supremum distribution, Ornstein-Uhlenbeck moments) used to validate the
//!   simulation layer.
//! * **Simulation** ([`simulate`], [`montecarlo`]): Euler-Maruyama integration
//!   with stopped-process semantics (first exit from a ball before a horizon),
//!   Brownian-bridge crossing correction, and batch estimation of exit
//!   probabilities with Wilson confidence intervals, compared against the
//!   theoretical bounds.
//!
//! The `perlyap` binary exposes all of this as an experiment runner emitting
//! CSV; see [`cli`].

pub mod bounds;
pub mod certify;
pub mod cli;
pub mod config;
pub mod mat;
pub mod model;
pub mod montecarlo;
pub mod oracles;
pub mod presets;
pub mod rng;
pub mod simulate;
pub mod special;

/// Errors shared across the crate.
///
/// The CLI maps these to exit code 2 (configuration / domain problems), while
/// verification or comparison *failures* are ordinary results and map to exit
/// code 1.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    /// The certificate has `gamma = 0`, so the coefficients `a_k` of the
    /// higher-order constructions are undefined. Callers are pointed at the
    /// damped-noise bound or the explicit-horizon advisory path.
    #[error("decay rate gamma = 0: {0}")]
    ZeroDecayRate(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no feasible (delta, Delta) region: {0}")]
    Infeasible(String),
    #[error("series did not converge: {0}")]
    NonConvergence(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code the CLI uses for this error.
    pub fn exit_code(&self) -> i32 {
        2
    }
}
