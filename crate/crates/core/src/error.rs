//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by dataset construction, the limit-process builder,
/// the trainers, and the analysis/verification routines.
#[derive(Debug, Error)]
pub enum Error {
    /// Requested dataset shape is impossible (d < n, or identity basis with d != n).
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A label is exactly zero and the caller asked for strict handling.
    #[error("label y[{index}] is zero")]
    ZeroLabel { index: usize },

    /// Two neurons tie for the next jump within relative tolerance (strict mode only).
    #[error("ambiguous argmax at stage {stage}: neurons {a} and {b} tie on ratio {ratio}")]
    AmbiguousArgmax {
        stage: usize,
        a: usize,
        b: usize,
        ratio: f64,
    },

    /// A scaled neuron's mantissas degenerated and can no longer be renormalized.
    #[error("collapsed neuron {index}: |v| = {v_norm}, b = {b}")]
    CollapsedNeuron { index: usize, v_norm: f64, b: f64 },

    /// A gradient step produced NaN or infinity.
    #[error("non-finite value in neuron {index} at epoch {epoch}")]
    NonFinite { index: usize, epoch: u64 },

    /// Accelerated-time conversion needs alpha_log < 0.
    #[error("bad scale: alpha_log = {alpha_log} must be negative")]
    BadScale { alpha_log: f64 },

    /// Jump clustering found a different number of clusters than the limit process has stages.
    #[error("cluster mismatch: found {found} jump clusters, expected {expected}")]
    ClusterMismatch { found: usize, expected: usize },

    /// Not enough trajectory samples to fit any slope window.
    #[error("too few samples: no inter-jump window has at least {min} interior samples")]
    TooFewSamples { min: usize },

    /// Log-log regression input is unusable (fewer than 3 points, or non-positive values).
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    /// Half-split delta outside the admissible range of the concentration bound.
    #[error("bad delta: {delta} not in (0, {limit})")]
    BadDelta { delta: f64, limit: f64 },

    /// Half-split rho outside (0, 1/2).
    #[error("bad rho: {rho} not in (0, 0.5)")]
    BadRho { rho: f64 },

    /// Mask entries are inconsistent with the label signs they were declared against.
    #[error("invalid mask: {0}")]
    InvalidMask(String),
}

pub type Result<T> = std::result::Result<T, Error>;
