//! Large-antenna statistics of linear MMSE MIMO receivers over
//! Kronecker-correlated Rayleigh channels.
//!
//! The crate has two halves that check each other:
//!
//! * asymptotic formulas: the deterministic-equivalent fixed point
//!   ([`fixed_point`]), the SINR covariance obtained by mixed differentiation of
//!   the log-det joint cumulant ([`covariance`]), and the Gaussian approximation
//!   of the mutual information and its outage probability ([`outage`]);
//! * an exact finite-dimensional simulator: channel sampling ([`channel`]),
//!   exact per-stream SINRs ([`mmse`]) and a seeded, schedule-independent Monte
//!   Carlo engine ([`montecarlo`]).
//!
//! All information quantities are in nats; [`units`] converts at the edges.

// `!(x > 0.0)` deliberately rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod covariance;
pub mod error;
pub mod fixed_point;
pub mod linalg;
pub mod mmse;
pub mod montecarlo;
pub mod outage;
pub mod par;
pub mod taylor;
pub mod units;

pub use channel::{
    build_exponential_correlation, psd_sqrt, sample_channel, ChannelSample, CorrelationPair,
    SystemConfig,
};
pub use covariance::{
    iid_closed_forms, joint_cumulant_a, sinr_covariance, CovarianceOptions, IidClosedForms,
    SigmaOrder, SinrCovariance,
};
pub use error::{Error, Result};
pub use fixed_point::{
    mean_logdet_asymptotic, mean_sinr_asymptotic, solve_fixed_point, FixedPointSolution,
    MeanSinrResult, SolverOptions,
};
pub use mmse::{
    mutual_info_mmse, mutual_info_optimal, sinr_exact, sinr_trace_identity, Deformation,
    SinrVector,
};
pub use montecarlo::{
    empirical_outage, ks_distance, run_trials, EmpiricalSummary, OutageEstimate, TrialBatchSpec,
};
pub use outage::{
    mmse_mi_gaussian, mmse_mi_mean, mmse_mi_model, mmse_mi_variance, optimal_mi_gaussian,
    outage_probability, MeanVariant, MutualInfoGaussian, Receiver,
};
pub use par::Workers;
