//! Saddle-to-saddle dynamics of two-layer ReLU networks on orthonormal data.
//!
//! The crate has three pillars:
//!
//! * [`limit`] constructs the exact limit process of gradient flow from
//!   vanishing initialization — jump times, per-neuron norm exponents, and the
//!   final interpolator — in closed form, without training anything.
//! * [`trainer`] runs the actual full-batch gradient descent, including a
//!   log-domain weight representation ([`scaled`]) that makes initialization
//!   scales like e^-500 trainable in f64.
//! * [`analysis`] and [`verify`] check the two against each other and against
//!   the closed-form probability bounds, deterministically and by Monte Carlo.

pub mod analysis;
pub mod dataset;
pub mod error;
pub mod init;
pub mod limit;
pub mod mask;
pub mod network;
pub mod scaled;
pub mod trainer;
pub mod verify;

pub use analysis::{
    alignment, compare_jumps, detect_jumps, loglog_slope, network_sq_norm, segment_slopes,
    JumpComparison, LogLogFit, SlopeReport,
};
pub use dataset::{generate_dataset, Basis, BasisSpec, LabelSpec, OrthonormalDataset};
pub use error::{Error, Result};
pub use init::{sample_init, InitDraw};
pub use limit::{
    bias_bound, build, check_assumptions, opt_sq_norm, AssumptionReport, LimitProcess,
    StageRecord,
};
pub use mask::{mask_matrix, MaskMatrix};
pub use network::DenseNetwork;
pub use scaled::{gd_step, ScaledNetwork, ScaledNeuron};
pub use trainer::{
    accelerated_time, fit_events, train, train_dense, DenseRun, ScaledRun, StopReason,
    Trajectory, TrainerConfig,
};
pub use verify::{
    half_split_stats, mc_assumption, mc_bias_bound, prop42_bound, BiasLabels, HalfSplitSummary,
    McReport, SplitOrdering,
};
