//! Off-policy evaluation for slate bandits.
//!
//! Logged data from a system that shows multi-slot *slates* (rankings,
//! widget layouts, multi-category pages) can be reused to evaluate a new
//! target policy offline. Full-slate importance sampling is hopeless at
//! realistic slot cardinalities, but when the logging policy factors over
//! slots and mean rewards decompose additively, the per-record weight
//!
//! ```text
//! G = 1 + sum_k (Y_k - 1),    Y_k = pi(A_k|X) / mu_k(A_k|X)
//! ```
//!
//! gives an unbiased estimate `E_n[G R]` of the target value whose
//! variance scales with the *sum*, not the product, of slot sizes. This
//! crate implements that estimator (PI), its self-normalized variant
//! (wPI), variance-optimal control-variate versions with fitted weights
//! (PICVs, PICVm), and a three-fold cross-fitted estimator that is
//! unbiased at every sample size ([`estimators`]).
//!
//! Alongside the estimators:
//!
//! * [`policy`] / [`data`] / [`jsonl`] — factored policies, logged
//!   records, propensity annotation, and a line-oriented dataset format;
//! * [`simulator`] — seeded synthetic instances and log generation;
//! * [`oracle`] — exact enumeration of population values, variance
//!   constants, and finite-sample estimator expectations on small
//!   instances;
//! * [`bench`] — a deterministic Monte Carlo harness reporting log-RMSE
//!   with standard errors.
//!
//! The mdbook guide under `book/` walks through the concepts; its code
//! snippets compile and run as doctests of this crate.

pub mod bench;
pub mod data;
pub mod error;
pub mod estimators;
pub mod jsonl;
pub mod numeric;
pub mod oracle;
pub mod policy;
pub mod rng;
pub mod schema;
pub mod simulator;

mod book;

pub use data::{LoggedRecord, RawRecord, SlateDataset};
pub use error::{Error, Result};
pub use estimators::{
    compute_ratios, delta_method_se, estimate_crossfit, estimate_fixed_weights, estimate_picvm,
    estimate_picvs, estimate_pi, estimate_wpi, fit_beta_star, fit_w_star, run_estimator,
    variance_report, EstimateReport, EstimatorKind, RatioVector, WeightVector,
};
pub use oracle::{
    enumerate_ground_truth, enumerate_moments, exact_estimator_expectation, GroundTruth,
    PopulationMoments,
};
pub use policy::{annotate_records, FactoredPolicy};
pub use schema::SlateSchema;
pub use simulator::{generate_logs, RewardKind, RewardModel, SimConfig};
