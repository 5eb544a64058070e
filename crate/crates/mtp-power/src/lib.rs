//! Bayesian predictive power analysis for families of hypothesis tests.
//!
//! This crate estimates, before data are collected, how a family of m
//! correlated test statistics will fare under a multiple-testing procedure
//! (MTP). It treats the unknown noncentralities, the correlation matrix of
//! the statistics, and (for the Dirichlet-process procedure) the rejection
//! thresholds themselves as random, and reports Monte Carlo summaries that
//! are valid under arbitrary dependence between the p-values:
//!
//! * `pmp` - per-test mean predictive power,
//! * `pap` - average power across the family,
//! * `pdp` - disjunctive power (at least one rejection),
//! * `pcp` - conjunctive power (all m rejected),
//!
//! together with derived p-value weights and a per-test "significance
//! chasing" diagnostic.
//!
//! Four procedures are built in: Bonferroni, Holm, Benjamini-Yekutieli, and
//! a Dirichlet-process MTP whose thresholds are drawn from a random measure
//! centered on the Benjamini-Yekutieli shape. All of them come in weighted
//! and unweighted forms.
//!
//! The crate is organized bottom-up:
//!
//! * [`special`] - special functions (normal and Student-t CDFs/quantiles,
//!   regularized incomplete beta) and the degrees-of-freedom type,
//! * [`rng`] - seeded, stream-addressable RNG plus scalar samplers,
//! * [`corr`] - random correlation matrices uniform over the elliptope,
//! * [`mv`] - multivariate normal/t statistic vectors and p-value
//!   conversions,
//! * [`mtp`] - classical step-up/step-down procedures and thresholds,
//! * [`dp`] - the Dirichlet-process procedure,
//! * [`power`] - the predictive power engine and sample-size search,
//! * [`study`] - study/report file formats,
//! * [`case_study`] - the bundled 41-test neuropsychological battery,
//! * [`cli`] - implementations of the command-line subcommands.
//!
//! The `guide` module mirrors the mdbook under `book/`; its code blocks are
//! compiled and run as doc-tests so the book cannot drift from the API.

pub mod case_study;
pub mod cli;
pub mod corr;
pub mod dp;
pub mod guide;
pub mod mtp;
pub mod mv;
pub mod power;
pub mod rng;
pub mod special;
pub mod study;

pub use special::Dof;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A vector or matrix had the wrong length for the operation.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// An argument fell outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A matrix failed the Cholesky factorization pivot test.
    #[error("not positive definite: pivot {pivot:.3e} at index {index} is below the floor {floor:.1e}")]
    NotPositiveDefinite {
        index: usize,
        pivot: f64,
        floor: f64,
    },

    /// Weighted step-down thresholds are undefined when every weight from
    /// some rank onward is zero.
    #[error("weights from sorted rank {rank} onward sum to zero; weighted step-down thresholds are undefined")]
    ZeroTailWeight { rank: usize },

    /// A step-up rule was given thresholds that decrease somewhere.
    #[error("step-up thresholds must be nondecreasing (violated at rank {rank})")]
    UnorderedThresholds { rank: usize },

    /// Every per-test mean power was zero, so p-value weights are undefined.
    #[error("all per-test mean powers are zero; p-value weights are undefined")]
    AllZeroPower,

    /// An operation on the observed family needed a p-value that the test
    /// specification does not carry.
    #[error("test {id} has no observed p-value")]
    MissingObservedP { id: u32 },

    /// The run configuration is inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A study or family file failed to parse or validate.
    #[error("study file: {0}")]
    Schema(String),

    /// The sample-size search target cannot be met inside the search domain.
    #[error("target power {target:.4} unreachable: power at kappa = {kappa_max} is {power:.4}")]
    Unreachable {
        target: f64,
        kappa_max: f64,
        power: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
