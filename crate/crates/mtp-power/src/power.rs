//! The predictive power engine: the outer Monte Carlo loop over effect
//! and correlation uncertainty, per-method power accumulation, p-value
//! weights, significance-chasing indices, Monte Carlo variance
//! diagnostics, shrinkage, and sample-size search.
//!
//! Reproducibility contract. Iteration s (0-based) draws everything from
//! its own generator stream s+1 in a fixed order: the m effect-center
//! normals; the correlation angles (none when the correlation is fixed);
//! the m noise normals; one chi-square per finite-dof test, ascending;
//! then, if a Dirichlet-process method runs with fresh draws, the N prior
//! draws. Observed-family quantities use stream 0 and the shared DP batch
//! uses its own reserved stream, so no statistic ever shares randomness
//! with the iteration loop. All cross-iteration aggregation is in exact
//! integer counters, which makes results independent of thread count and
//! parallel schedule.

use crate::corr::{CholeskyFactor, CorrelationMatrix, CorrelationSampler};
use crate::dp::{
    dp_prsig, dp_prsig_over_draws, sample_dp_batch, DpBaseline, DpPriorDraw, DpRule,
};
use crate::mtp::{run_mtp, sort_family, Method, PValueFamily, Procedure};
use crate::mv::{pvalue_from_stat, sample_mv_noncentral_t, TailType};
use crate::rng::{iteration_stream, sample_std_normal, stream_rng, STREAM_OBSERVED, STREAM_SHARED};
use crate::special::Dof;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

/// One hypothesis test of the study: its tail, reference distribution,
/// anticipated effect ratio (effect estimate over its standard error),
/// prior weight, and optionally the p-value actually observed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSpec {
    pub id: u32,
    pub label: String,
    pub tail: TailType,
    pub dof: Dof,
    pub effect_ratio: f64,
    pub weight: f64,
    pub observed_p: Option<f64>,
}

impl TestSpec {
    fn validate(&self) -> Result<()> {
        if !self.effect_ratio.is_finite() {
            return Err(Error::Config(format!(
                "test {}: effect ratio must be finite",
                self.id
            )));
        }
        if !(self.weight >= 0.0 && self.weight.is_finite()) {
            return Err(Error::Config(format!(
                "test {}: weight must be nonnegative and finite",
                self.id
            )));
        }
        if let Some(p) = self.observed_p {
            if !(0.0..=1.0).contains(&p) || p.is_nan() {
                return Err(Error::Config(format!(
                    "test {}: observed p-value must lie in [0, 1]",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

/// Prior on the correlation of the statistics: resample it uniformly over
/// correlation matrices every iteration, or fix it at a point mass.
#[derive(Debug, Clone)]
pub enum CorrelationModel {
    Uniform,
    Fixed(CorrelationMatrix),
}

/// Whether Dirichlet-process draws are regenerated inside every iteration
/// (the faithful default) or one batch is sampled up front and reused
/// across iterations (a documented fast approximation).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DpDrawMode {
    #[default]
    Fresh,
    Shared,
}

/// Everything a power run needs. `threads` of 1 runs serially; any other
/// value sizes a thread pool (0 = one thread per core), with bit-identical
/// results either way.
#[derive(Debug, Clone)]
pub struct PowerStudyConfig {
    pub tests: Vec<TestSpec>,
    pub alpha: f64,
    pub s_iters: u64,
    pub n_draws: u64,
    pub hyper_rate: f64,
    pub methods: Vec<Method>,
    pub shrinkage: Vec<f64>,
    pub seed: u64,
    pub correlation: CorrelationModel,
    pub dp_draw_mode: DpDrawMode,
    pub dp_rule: DpRule,
    pub literal_sig_chase: bool,
    pub threads: usize,
}

impl PowerStudyConfig {
    /// Defaults: alpha 0.05, 5000 iterations, 1000 DP draws, unit mass
    /// rate, the Dirichlet-process method, no shrinkage, uniform
    /// correlation prior, fresh DP draws, serial execution.
    pub fn new(tests: Vec<TestSpec>, seed: u64) -> Self {
        let m = tests.len();
        Self {
            tests,
            alpha: 0.05,
            s_iters: 5000,
            n_draws: 1000,
            hyper_rate: 1.0,
            methods: vec![Method::new(Procedure::DirichletProcess, false)],
            shrinkage: vec![0.0; m],
            seed,
            correlation: CorrelationModel::Uniform,
            dp_draw_mode: DpDrawMode::Fresh,
            dp_rule: DpRule::StepUp,
            literal_sig_chase: false,
            threads: 1,
        }
    }

    pub fn m(&self) -> usize {
        self.tests.len()
    }

    fn uses_dp(&self) -> bool {
        self.methods
            .iter()
            .any(|m| m.procedure == Procedure::DirichletProcess)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tests.is_empty() {
            return Err(Error::Config("the study has no tests".into()));
        }
        let mut seen = HashSet::new();
        for test in &self.tests {
            test.validate()?;
            if !seen.insert(test.id) {
                return Err(Error::Config(format!("duplicate test id {}", test.id)));
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "alpha must lie in (0, 1) (got {})",
                self.alpha
            )));
        }
        if self.s_iters == 0 {
            return Err(Error::Config("need at least one iteration".into()));
        }
        if self.s_iters > 10_000_000 {
            return Err(Error::Config(
                "more than 1e7 iterations would overflow the exact accumulators".into(),
            ));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        let mut method_seen = HashSet::new();
        for method in &self.methods {
            if !method_seen.insert(*method) {
                return Err(Error::Config(format!("method {method} selected twice")));
            }
        }
        if self.uses_dp() {
            if self.n_draws == 0 {
                return Err(Error::Config(
                    "the dirichlet-process method needs at least one draw".into(),
                ));
            }
            if self.n_draws > 1_000_000 {
                return Err(Error::Config(
                    "more than 1e6 DP draws would overflow the exact accumulators".into(),
                ));
            }
            if !(self.hyper_rate > 0.0 && self.hyper_rate.is_finite()) {
                return Err(Error::Config(format!(
                    "hyper rate must be positive and finite (got {})",
                    self.hyper_rate
                )));
            }
        }
        if self.shrinkage.len() != self.m() {
            return Err(Error::Config(format!(
                "shrinkage has {} entries for {} tests",
                self.shrinkage.len(),
                self.m()
            )));
        }
        for &s in &self.shrinkage {
            if !(0.0..=1.0).contains(&s) || s.is_nan() {
                return Err(Error::Config(format!(
                    "shrinkage entries must lie in [0, 1] (got {s})"
                )));
            }
        }
        let any_weighted = self.methods.iter().any(|m| m.weighted);
        if any_weighted {
            let total: f64 = self.tests.iter().map(|t| t.weight).sum();
            if total <= 0.0 {
                return Err(Error::Config(
                    "weighted methods need at least one positive test weight".into(),
                ));
            }
            let holm_weighted = self
                .methods
                .iter()
                .any(|m| m.weighted && m.procedure == Procedure::Holm);
            if holm_weighted && self.tests.iter().any(|t| t.weight == 0.0) {
                return Err(Error::Config(
                    "weighted Holm requires strictly positive weights: a zero weight can land at \
                     the end of the p-value ordering, where its step-down cutoff is undefined"
                        .into(),
                ));
            }
        }
        if let CorrelationModel::Fixed(mat) = &self.correlation {
            if mat.dim() != self.m() {
                return Err(Error::Config(format!(
                    "fixed correlation is {}x{0} but the study has {} tests",
                    mat.dim(),
                    self.m()
                )));
            }
        }
        Ok(())
    }
}

/// Variance diagnostic for one reported mean: the plug-in estimate of the
/// estimator's variance and the distribution-free bound 1/(4S).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McVariance {
    pub estimate: f64,
    pub bound: f64,
}

/// One method's share of the power report. Powers are in original test
/// order. `observed_significance` and `sig_chase` are present when every
/// test carries an observed p-value: the former is the method's decision
/// on the observed family (binary for the classical rules, the DP
/// significance probability otherwise), the latter the per-test Hellinger
/// index between that decision and the predictive marginal power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    pub pmp: Vec<f64>,
    pub pap: f64,
    pub pdp: f64,
    pub pcp: f64,
    pub pvalue_weights: Vec<f64>,
    pub observed_significance: Option<Vec<f64>>,
    pub sig_chase: Option<Vec<f64>>,
    pub pmp_variance: Vec<McVariance>,
    pub pap_variance: McVariance,
    pub pdp_variance: McVariance,
    pub pcp_variance: McVariance,
    pub clamp_events: u64,
}

/// The full output of one power run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerReport {
    pub seed: u64,
    pub s_iters: u64,
    pub n_draws: u64,
    pub methods: Vec<MethodReport>,
}

impl PowerReport {
    pub fn method(&self, method: Method) -> Option<&MethodReport> {
        self.methods.iter().find(|r| r.method == method)
    }
}

/// ratio_j <- (1 - s_j) * ratio_j. Shrinkage 0 keeps the anticipated
/// effects; 1 collapses the prior mean to the global null.
pub fn apply_shrinkage(effect_ratios: &[f64], shrinkage: &[f64]) -> Result<Vec<f64>> {
    if effect_ratios.len() != shrinkage.len() {
        return Err(Error::DimensionMismatch {
            expected: effect_ratios.len(),
            got: shrinkage.len(),
        });
    }
    shrinkage
        .iter()
        .zip(effect_ratios)
        .map(|(&s, &r)| {
            if !(0.0..=1.0).contains(&s) || s.is_nan() {
                return Err(Error::Domain(format!(
                    "shrinkage must lie in [0, 1] (got {s})"
                )));
            }
            Ok((1.0 - s) * r)
        })
        .collect()
}

/// Normalized weights from mean powers via the log-sum-exp form
/// exp(log h_j - a) / sum_k exp(log h_k - a) with a = max_k log h_k.
/// Algebraically this is h / sum(h); the stabilized form is what makes
/// that identity safe when the powers underflow.
pub fn pvalue_weights(pmp: &[f64]) -> Result<Vec<f64>> {
    if pmp.is_empty() {
        return Err(Error::Domain("no powers to weight".into()));
    }
    for &h in pmp {
        if !(0.0..=1.0).contains(&h) || h.is_nan() {
            return Err(Error::Domain(format!(
                "mean powers must lie in [0, 1] (got {h})"
            )));
        }
    }
    let a = pmp.iter().fold(f64::NEG_INFINITY, |acc, &h| acc.max(h.ln()));
    if a == f64::NEG_INFINITY {
        return Err(Error::AllZeroPower);
    }
    let scaled: Vec<f64> = pmp.iter().map(|&h| (h.ln() - a).exp()).collect();
    let total: f64 = scaled.iter().sum();
    Ok(scaled.into_iter().map(|v| v / total).collect())
}

/// Hellinger index between Bernoulli(observed) and Bernoulli(predicted).
/// The default reading applies the outer square root that makes the index
/// a distance in [0, 1]; the literal flag instead returns the displayed
/// bracket (squared distance over sqrt 2) for comparison.
pub fn sig_chase_index(observed: f64, predicted: f64, literal: bool) -> f64 {
    let a = (observed.sqrt() - predicted.sqrt()).powi(2);
    let b = ((1.0 - observed).sqrt() - (1.0 - predicted).sqrt()).powi(2);
    if literal {
        (a + b) / std::f64::consts::SQRT_2
    } else {
        (0.5 * (a + b)).sqrt()
    }
}

/// The plug-in Monte Carlo variance of a mean over iterations,
/// v = (1/S^2) * sum (h_s - mean)^2, and the bound 1/(4S) that holds
/// whenever every h_s lies in [0, 1].
pub fn mc_variance(per_iteration: &[f64]) -> Result<(f64, f64)> {
    let s = per_iteration.len();
    if s == 0 {
        return Err(Error::Domain("variance of an empty sequence".into()));
    }
    let sf = s as f64;
    let mean = per_iteration.iter().sum::<f64>() / sf;
    let ss: f64 = per_iteration.iter().map(|&h| (h - mean).powi(2)).sum();
    Ok((ss / (sf * sf), 1.0 / (4.0 * sf)))
}

fn observed_pvalues(config: &PowerStudyConfig) -> Result<Vec<f64>> {
    config
        .tests
        .iter()
        .map(|t| t.observed_p.ok_or(Error::MissingObservedP { id: t.id }))
        .collect()
}

fn observed_family(config: &PowerStudyConfig, weighted: bool) -> Result<PValueFamily> {
    let pvals = observed_pvalues(config)?;
    if weighted {
        let weights: Vec<f64> = config.tests.iter().map(|t| t.weight).collect();
        PValueFamily::weighted(pvals, &weights)
    } else {
        PValueFamily::unweighted(pvals)
    }
}

/// The method's decision on the observed p-values, per test in original
/// order: a 0/1 rejection indicator for the classical rules, or the
/// N-draw significance probability for the Dirichlet process (drawn from
/// the reserved observed-family stream).
pub fn observed_significance(config: &PowerStudyConfig, method: Method) -> Result<Vec<f64>> {
    let family = observed_family(config, method.weighted)?;
    match method.procedure {
        Procedure::DirichletProcess => {
            let mut rng = stream_rng(config.seed, STREAM_OBSERVED);
            let v = dp_prsig(
                &family,
                config.alpha,
                config.n_draws,
                config.hyper_rate,
                method.weighted,
                config.dp_rule,
                &mut rng,
            )?;
            Ok(v.probabilities_original_order())
        }
        _ => {
            let dec = run_mtp(&family, config.alpha, method)?;
            Ok((0..config.m())
                .map(|j| if dec.rejects(j) { 1.0 } else { 0.0 })
                .collect())
        }
    }
}

/// Per-test significance-chasing indices for one method: the Hellinger
/// index between the observed decision and the predictive marginal power.
/// Needs an observed p-value on every test.
pub fn sig_chase(config: &PowerStudyConfig, method: Method, pmp: &[f64]) -> Result<Vec<f64>> {
    if pmp.len() != config.m() {
        return Err(Error::DimensionMismatch {
            expected: config.m(),
            got: pmp.len(),
        });
    }
    let observed = observed_significance(config, method)?;
    Ok(observed
        .iter()
        .zip(pmp)
        .map(|(&d, &h)| sig_chase_index(d, h, config.literal_sig_chase))
        .collect())
}

// Exact per-method accumulator. A binary method is the n = 1 case of the
// fractional one: c_{j,s} is the 0/1 rejection indicator for B/H/BY and
// the DP rejection count out of n = N draws, so every derived statistic
// reads c/(S n). u_s = sum_j c_{j,s} drives the averaged statistics:
// disjunctive means u_s >= n, conjunctive means u_s = m n. All fields are
// integers, so merging partial accumulators is exact and the totals are
// independent of iteration order and thread schedule.
#[derive(Debug, Clone, PartialEq)]
struct MethodAccum {
    per_test: Vec<u64>,
    per_test_sq: Vec<u64>,
    tot_u: u64,
    totsq_u: u128,
    disj: u64,
    conj: u64,
    clamps: u64,
}

impl MethodAccum {
    fn zero(m: usize) -> Self {
        Self {
            per_test: vec![0; m],
            per_test_sq: vec![0; m],
            tot_u: 0,
            totsq_u: 0,
            disj: 0,
            conj: 0,
            clamps: 0,
        }
    }

    fn absorb(&mut self, other: &MethodAccum) {
        for (a, b) in self.per_test.iter_mut().zip(&other.per_test) {
            *a += b;
        }
        for (a, b) in self.per_test_sq.iter_mut().zip(&other.per_test_sq) {
            *a += b;
        }
        self.tot_u += other.tot_u;
        self.totsq_u += other.totsq_u;
        self.disj += other.disj;
        self.conj += other.conj;
        self.clamps += other.clamps;
    }

    fn push_iteration(&mut self, u: u64, n: u64, m: u64) {
        self.tot_u += u;
        self.totsq_u += (u as u128) * (u as u128);
        if u >= n {
            self.disj += 1;
        }
        if u == m * n {
            self.conj += 1;
        }
    }
}

struct MethodPlan {
    method: Method,
    n: u64,
}

enum CorrPlan {
    Sampler(CorrelationSampler),
    Fixed(CholeskyFactor),
}

struct DpPlan {
    baseline: DpBaseline,
    hyper_rate: f64,
    n_draws: u64,
    rule: DpRule,
    shared: Option<Vec<DpPriorDraw>>,
}

struct EngineCtx {
    seed: u64,
    alpha: f64,
    m: usize,
    shrunk: Vec<f64>,
    dofs: Vec<Dof>,
    tails: Vec<TailType>,
    raw_weights: Vec<f64>,
    any_unweighted: bool,
    any_weighted: bool,
    plans: Vec<MethodPlan>,
    corr: CorrPlan,
    dp: Option<DpPlan>,
}

fn simulate_iteration(s: u64, ctx: &EngineCtx, accums: &mut [MethodAccum]) -> Result<()> {
    let mut rng = stream_rng(ctx.seed, iteration_stream(s));
    let mu: Vec<f64> = ctx
        .shrunk
        .iter()
        .map(|&r| r + sample_std_normal(&mut rng))
        .collect();
    let sampled_chol;
    let chol: &CholeskyFactor = match &ctx.corr {
        CorrPlan::Sampler(sampler) => {
            sampled_chol = sampler.sample_cholesky(&mut rng);
            &sampled_chol
        }
        CorrPlan::Fixed(chol) => chol,
    };
    let t = sample_mv_noncentral_t(&mu, chol, &ctx.dofs, &mut rng)?;
    let pvals: Vec<f64> = t
        .iter()
        .zip(ctx.dofs.iter().zip(&ctx.tails))
        .map(|(&tj, (&dof, &tail))| pvalue_from_stat(tj, dof, tail))
        .collect();
    let fam_unweighted = if ctx.any_unweighted {
        Some(PValueFamily::unweighted(pvals.clone())?)
    } else {
        None
    };
    let fam_weighted = if ctx.any_weighted {
        Some(PValueFamily::weighted(pvals.clone(), &ctx.raw_weights)?)
    } else {
        None
    };
    let fresh_batch = match &ctx.dp {
        Some(dp) if dp.shared.is_none() => {
            Some(sample_dp_batch(&dp.baseline, dp.hyper_rate, dp.n_draws, &mut rng)?)
        }
        _ => None,
    };

    for (plan, acc) in ctx.plans.iter().zip(accums.iter_mut()) {
        let family = if plan.method.weighted {
            fam_weighted.as_ref()
        } else {
            fam_unweighted.as_ref()
        }
        .expect("family prepared for every selected weighting");
        match plan.method.procedure {
            Procedure::DirichletProcess => {
                let dp = ctx.dp.as_ref().expect("dp plan exists for dp methods");
                let batch = dp
                    .shared
                    .as_deref()
                    .or(fresh_batch.as_deref())
                    .expect("dp batch prepared");
                let sorted = sort_family(family);
                let sig = dp_prsig_over_draws(
                    &sorted,
                    ctx.alpha,
                    plan.method.weighted,
                    dp.rule,
                    batch,
                )?;
                let mut u = 0u64;
                for (rank, &orig) in sig.permutation().iter().enumerate() {
                    let c = sig.counts()[rank];
                    acc.per_test[orig] += c;
                    acc.per_test_sq[orig] += c * c;
                    u += c;
                }
                acc.clamps += sig.clamp_events();
                acc.push_iteration(u, plan.n, ctx.m as u64);
            }
            _ => {
                let dec = run_mtp(family, ctx.alpha, plan.method)?;
                for &id in &dec.rejected_ids {
                    acc.per_test[id] += 1;
                    acc.per_test_sq[id] += 1;
                }
                acc.push_iteration(dec.rejection_count as u64, plan.n, ctx.m as u64);
            }
        }
    }
    Ok(())
}

fn binary_mean_variance(count: u64, s_iters: u64) -> McVariance {
    let s = s_iters as f64;
    let c = count as f64;
    McVariance {
        estimate: (c - c * c / s) / (s * s),
        bound: 1.0 / (4.0 * s),
    }
}

fn assemble_method_report(
    config: &PowerStudyConfig,
    plan: &MethodPlan,
    acc: &MethodAccum,
) -> Result<MethodReport> {
    let m = config.m();
    let s = config.s_iters as f64;
    let n = plan.n as f64;
    let sn = s * n;
    let pmp: Vec<f64> = acc.per_test.iter().map(|&c| c as f64 / sn).collect();
    let pmp_variance: Vec<McVariance> = acc
        .per_test
        .iter()
        .zip(&acc.per_test_sq)
        .map(|(&c, &csq)| {
            let mean = c as f64 / sn;
            McVariance {
                estimate: (csq as f64 / (n * n) - s * mean * mean) / (s * s),
                bound: 1.0 / (4.0 * s),
            }
        })
        .collect();
    let pap = pmp.iter().sum::<f64>() / m as f64;
    let mn = m as f64 * n;
    let pap_mean = acc.tot_u as f64 / (s * mn);
    let pap_variance = McVariance {
        estimate: (acc.totsq_u as f64 / (mn * mn) - s * pap_mean * pap_mean) / (s * s),
        bound: 1.0 / (4.0 * s),
    };
    let pdp = acc.disj as f64 / s;
    let pcp = acc.conj as f64 / s;
    let weights = pvalue_weights(&pmp)?;
    let all_observed = config.tests.iter().all(|t| t.observed_p.is_some());
    let (observed, chase) = if all_observed {
        let observed = observed_significance(config, plan.method)?;
        let chase = observed
            .iter()
            .zip(&pmp)
            .map(|(&d, &h)| sig_chase_index(d, h, config.literal_sig_chase))
            .collect();
        (Some(observed), Some(chase))
    } else {
        (None, None)
    };
    Ok(MethodReport {
        method: plan.method,
        pmp,
        pap,
        pdp,
        pcp,
        pvalue_weights: weights,
        observed_significance: observed,
        sig_chase: chase,
        pmp_variance,
        pap_variance,
        pdp_variance: binary_mean_variance(acc.disj, config.s_iters),
        pcp_variance: binary_mean_variance(acc.conj, config.s_iters),
        clamp_events: acc.clamps,
    })
}

/// Run the full predictive power analysis. Per iteration: draw the effect
/// centers, draw (or reuse) the correlation, draw the statistic vector,
/// convert to p-values, and apply every selected procedure; accumulate
/// exact rejection counts; then summarize into per-method reports.
pub fn run_power_analysis(config: &PowerStudyConfig) -> Result<PowerReport> {
    config.validate()?;
    let m = config.m();
    let ratios: Vec<f64> = config.tests.iter().map(|t| t.effect_ratio).collect();
    let shrunk = apply_shrinkage(&ratios, &config.shrinkage)?;
    let dofs: Vec<Dof> = config.tests.iter().map(|t| t.dof).collect();
    let tails: Vec<TailType> = config.tests.iter().map(|t| t.tail).collect();
    let raw_weights: Vec<f64> = config.tests.iter().map(|t| t.weight).collect();
    let plans: Vec<MethodPlan> = config
        .methods
        .iter()
        .map(|&method| MethodPlan {
            method,
            n: if method.procedure == Procedure::DirichletProcess {
                config.n_draws
            } else {
                1
            },
        })
        .collect();
    let corr = match &config.correlation {
        CorrelationModel::Uniform => CorrPlan::Sampler(CorrelationSampler::new(m)?),
        CorrelationModel::Fixed(mat) => CorrPlan::Fixed(mat.cholesky()?),
    };
    let dp = if config.uses_dp() {
        let baseline = DpBaseline::new(m)?;
        let shared = match config.dp_draw_mode {
            DpDrawMode::Fresh => None,
            DpDrawMode::Shared => {
                let mut rng = stream_rng(config.seed, STREAM_SHARED);
                Some(sample_dp_batch(
                    &baseline,
                    config.hyper_rate,
                    config.n_draws,
                    &mut rng,
                )?)
            }
        };
        Some(DpPlan {
            baseline,
            hyper_rate: config.hyper_rate,
            n_draws: config.n_draws,
            rule: config.dp_rule,
            shared,
        })
    } else {
        None
    };
    let ctx = EngineCtx {
        seed: config.seed,
        alpha: config.alpha,
        m,
        shrunk,
        dofs,
        tails,
        raw_weights,
        any_unweighted: config.methods.iter().any(|m| !m.weighted),
        any_weighted: config.methods.iter().any(|m| m.weighted),
        plans,
        corr,
        dp,
    };

    let zero = || vec![MethodAccum::zero(m); ctx.plans.len()];
    let accums: Vec<MethodAccum> = if config.threads == 1 {
        let mut acc = zero();
        for s in 0..config.s_iters {
            simulate_iteration(s, &ctx, &mut acc)?;
        }
        acc
    } else {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| {
            (0..config.s_iters)
                .into_par_iter()
                .try_fold(
                    &zero,
                    |mut acc, s| {
                        simulate_iteration(s, &ctx, &mut acc)?;
                        Ok::<_, Error>(acc)
                    },
                )
                .try_reduce(
                    &zero,
                    |mut a, b| {
                        for (x, y) in a.iter_mut().zip(&b) {
                            x.absorb(y);
                        }
                        Ok(a)
                    },
                )
        })?
    };

    let methods = ctx
        .plans
        .iter()
        .zip(&accums)
        .map(|(plan, acc)| assemble_method_report(config, plan, acc))
        .collect::<Result<Vec<_>>>()?;
    Ok(PowerReport {
        seed: config.seed,
        s_iters: config.s_iters,
        n_draws: config.n_draws,
        methods,
    })
}

/// How finite degrees of freedom respond to the sample-size multiplier:
/// scale linearly with it, or stay fixed. Infinite degrees of freedom
/// always stay infinite, and effect ratios always scale by sqrt(kappa).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DofGrowth {
    #[default]
    Linear,
    Fixed,
}

/// A minimum marginal power demand: for one test, or for every test when
/// `test_id` is None.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleSizeTarget {
    pub test_id: Option<u32>,
    pub power: f64,
}

/// The search outcome: the multiplier and the achieved marginal power of
/// every targeted test at that multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSizeResult {
    pub kappa: f64,
    pub achieved: Vec<(u32, f64)>,
}

fn scaled_config(config: &PowerStudyConfig, kappa: f64, growth: DofGrowth) -> PowerStudyConfig {
    let mut probe = config.clone();
    probe.methods = vec![config.methods[0]];
    for test in &mut probe.tests {
        test.effect_ratio *= kappa.sqrt();
        if growth == DofGrowth::Linear {
            if let Some(nu) = test.dof.finite() {
                test.dof = Dof::Finite(nu * kappa);
            }
        }
        // Probes only need marginal powers; dropping the observed
        // p-values skips the significance-chasing work.
        test.observed_p = None;
    }
    probe
}

/// Find the smallest sample-size multiplier kappa in [1, kappa_max] whose
/// power run meets every target, by bisection to width 0.01 on a monotone
/// growth model, with every probe reusing the same seed (common random
/// numbers). A probe whose powers are all zero counts as failing. Errors
/// with Unreachable when even kappa_max falls short.
pub fn sample_size_search(
    config: &PowerStudyConfig,
    targets: &[SampleSizeTarget],
    kappa_max: f64,
    growth: DofGrowth,
) -> Result<SampleSizeResult> {
    config.validate()?;
    if targets.is_empty() {
        return Err(Error::Config("no power targets given".into()));
    }
    for target in targets {
        if !(target.power > 0.0 && target.power < 1.0) {
            return Err(Error::Config(format!(
                "target power must lie in (0, 1) (got {})",
                target.power
            )));
        }
    }
    if !(kappa_max > 1.0 && kappa_max.is_finite()) {
        return Err(Error::Config(format!(
            "kappa_max must exceed 1 (got {kappa_max})"
        )));
    }
    // Resolve targets to (test index, required power), taking the
    // strictest demand per test.
    let mut required: Vec<Option<f64>> = vec![None; config.m()];
    for target in targets {
        match target.test_id {
            None => {
                for slot in required.iter_mut() {
                    let cur = slot.get_or_insert(target.power);
                    *cur = cur.max(target.power);
                }
            }
            Some(id) => {
                let idx = config
                    .tests
                    .iter()
                    .position(|t| t.id == id)
                    .ok_or_else(|| Error::Config(format!("no test with id {id}")))?;
                let cur = required[idx].get_or_insert(target.power);
                *cur = cur.max(target.power);
            }
        }
    }
    let targeted: Vec<(usize, f64)> = required
        .iter()
        .enumerate()
        .filter_map(|(idx, req)| req.map(|p| (idx, p)))
        .collect();

    let probe = |kappa: f64| -> Result<Vec<f64>> {
        match run_power_analysis(&scaled_config(config, kappa, growth)) {
            Ok(report) => Ok(report.methods[0].pmp.clone()),
            // An all-null probe has no defined weights but a perfectly
            // defined answer for the search: zero power everywhere.
            Err(Error::AllZeroPower) => Ok(vec![0.0; config.m()]),
            Err(e) => Err(e),
        }
    };
    let meets = |pmp: &[f64]| targeted.iter().all(|&(idx, req)| pmp[idx] >= req);
    let achieved = |pmp: &[f64]| -> Vec<(u32, f64)> {
        targeted
            .iter()
            .map(|&(idx, _)| (config.tests[idx].id, pmp[idx]))
            .collect()
    };

    let at_one = probe(1.0)?;
    if meets(&at_one) {
        return Ok(SampleSizeResult {
            kappa: 1.0,
            achieved: achieved(&at_one),
        });
    }
    let at_max = probe(kappa_max)?;
    if !meets(&at_max) {
        let (idx, req) = targeted
            .iter()
            .copied()
            .max_by(|a, b| {
                let short_a = a.1 - at_max[a.0];
                let short_b = b.1 - at_max[b.0];
                short_a.partial_cmp(&short_b).expect("powers are finite")
            })
            .expect("at least one target");
        return Err(Error::Unreachable {
            target: req,
            kappa_max,
            power: at_max[idx],
        });
    }
    let mut lo = 1.0;
    let mut hi = kappa_max;
    let mut at_hi = at_max;
    while hi - lo > 0.01 {
        let mid = 0.5 * (lo + hi);
        let at_mid = probe(mid)?;
        if meets(&at_mid) {
            hi = mid;
            at_hi = at_mid;
        } else {
            lo = mid;
        }
    }
    Ok(SampleSizeResult {
        kappa: hi,
        achieved: achieved(&at_hi),
    })
}
