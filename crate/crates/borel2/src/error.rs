//! Error type shared by all engine stages.

use thiserror::Error;

/// Errors surfaced by the engine.
///
/// Validation failures are *not* errors: they are reported as data so a front
/// end can print every violated constraint at once. Errors here are conditions
/// under which an operation cannot produce a meaningful result at all.
#[derive(Debug, Error)]
pub enum EngineError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("interface error: {0}")]
    Interface(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("direction error in {variable}: cos(k({gamma} - arg(eps*t))) = {cosine:.3e} below margin {margin:.3e}")]
    LaplaceDecay {
        variable: &'static str,
        gamma: f64,
        cosine: f64,
        margin: f64,
    },

    #[error("tau1 too small for the shrinking-map precondition: {0}")]
    Tau1TooSmall(String),

    #[error("iteration did not converge within {max_iter} steps (last increment {last:.3e})")]
    NonConvergence { max_iter: usize, last: f64 },

    #[error("Picard iteration diverges (increment ratios {ratios:?}); reduce eps0 or the forcing amplitude")]
    Divergence { ratios: Vec<f64> },

    #[error("singular divisor: |P_m| = {pm_abs:.3e} below floor {floor:.3e} at node (|tau1|={r1:.3e}, |tau2|={r2:.3e}, m={m})")]
    SingularDivisor {
        pm_abs: f64,
        floor: f64,
        r1: f64,
        r2: f64,
        m: f64,
    },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("good-covering construction failed: {0}")]
    Covering(String),

    #[error("sector association failed: {0}")]
    Association(String),

    #[error("no admissible direction pair found: {0}")]
    Infeasible(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
