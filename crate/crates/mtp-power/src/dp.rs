//! The Dirichlet-process multiple-testing procedure: random measures on
//! the rank partition centered on the Benjamini-Yekutieli baseline, the
//! random thresholds they induce, and Monte Carlo significance
//! probabilities over those thresholds.
//!
//! Draw-order contract: one prior draw consumes one exponential (the
//! total mass) followed by m gammas (the Dirichlet components), in rank
//! order. Only the astronomically unlikely event that every gamma
//! underflows consumes one extra uniform for the vertex fallback.

use crate::mtp::{sort_family, step_up_count, PValueFamily, SortedFamily, ThresholdVector};
use crate::rng::{sample_dirichlet, sample_exponential};
use crate::{Error, Result};
use rand::Rng;

/// The baseline measure: nu0(r) = 1/(r * H_m) on the partition cell
/// (r-1, r]. Its rank-weighted partial sums reproduce the linear
/// Benjamini-Yekutieli shape r/H_m, which is what centers the random
/// thresholds on the BY thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct DpBaseline {
    m: usize,
    nu0: Vec<f64>,
}

impl DpBaseline {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::Domain("baseline needs at least one rank".into()));
        }
        let h = crate::mtp::harmonic_number(m);
        let nu0 = (1..=m).map(|r| 1.0 / (r as f64 * h)).collect();
        Ok(Self { m, nu0 })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn nu0(&self) -> &[f64] {
        &self.nu0
    }
}

/// One realization of the random measure: total mass M and the cell
/// probabilities of the Dirichlet draw with concentrations M * nu0.
#[derive(Debug, Clone, PartialEq)]
pub struct DpPriorDraw {
    mass: f64,
    masses: Vec<f64>,
}

impl DpPriorDraw {
    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn m(&self) -> usize {
        self.masses.len()
    }
}

/// Mass first, then the Dirichlet components. The two max() guards keep
/// concentrations strictly positive through f64 underflow; the gamma
/// sampler's own vertex fallback covers the remaining degenerate region,
/// which is the exact total-mass-to-zero limit of the process.
pub fn sample_dp_draw<R: Rng + ?Sized>(
    baseline: &DpBaseline,
    hyper_rate: f64,
    rng: &mut R,
) -> Result<DpPriorDraw> {
    let mass = sample_exponential(hyper_rate, rng)?.max(f64::MIN_POSITIVE);
    let conc: Vec<f64> = baseline
        .nu0()
        .iter()
        .map(|&v| (mass * v).max(f64::MIN_POSITIVE))
        .collect();
    let masses = sample_dirichlet(&conc, rng)?;
    Ok(DpPriorDraw { mass, masses })
}

/// A reusable batch of prior draws; the shared-draws power mode samples
/// one batch up front and evaluates every iteration against it.
pub fn sample_dp_batch<R: Rng + ?Sized>(
    baseline: &DpBaseline,
    hyper_rate: f64,
    n_draws: u64,
    rng: &mut R,
) -> Result<Vec<DpPriorDraw>> {
    if n_draws == 0 {
        return Err(Error::Domain("need at least one DP draw".into()));
    }
    (0..n_draws)
        .map(|_| sample_dp_draw(baseline, hyper_rate, rng))
        .collect()
}

/// The realized shape at rank r (1-based): sum of j * masses(j) for
/// j <= r. Nondecreasing in r by construction.
pub fn dp_shape(draw: &DpPriorDraw, r: usize) -> Result<f64> {
    if r == 0 || r > draw.m() {
        return Err(Error::Domain(format!(
            "rank {r} out of range 1..={}",
            draw.m()
        )));
    }
    Ok(draw
        .masses()
        .iter()
        .take(r)
        .enumerate()
        .map(|(j, &mass)| (j + 1) as f64 * mass)
        .sum())
}

/// Random rejection cutoffs Delta(r) = alpha * w_(r) * shape(r), aligned
/// to sorted p order. With equal weights the sequence is nondecreasing as
/// computed; with unequal weights it is repaired by the running-maximum
/// clamp, and the result records that the repair fired.
pub fn dp_thresholds(draw: &DpPriorDraw, alpha: f64, weights: &[f64]) -> Result<ThresholdVector> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!(
            "alpha must lie in (0, 1) (got {alpha})"
        )));
    }
    if weights.len() != draw.m() {
        return Err(Error::DimensionMismatch {
            expected: draw.m(),
            got: weights.len(),
        });
    }
    let mut beta = 0.0;
    let deltas = draw
        .masses()
        .iter()
        .zip(weights)
        .enumerate()
        .map(|(j, (&mass, &w))| {
            beta += (j + 1) as f64 * mass;
            alpha * w * beta
        })
        .collect();
    ThresholdVector::new_running_max(deltas)
}

/// Which rejection rule converts a threshold draw into indicators. The
/// step-up rule (reject every rank up to the largest qualifying one) is
/// the definitional default and yields nonincreasing significance
/// probabilities along ranks; the per-rank rule compares each rank to its
/// own cutoff in isolation and is kept for comparison, where it can break
/// that monotone pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DpRule {
    #[default]
    StepUp,
    PerRank,
}

/// Monte Carlo significance probabilities, held as exact integer counts
/// so that aggregation over iterations stays independent of summation
/// order. `counts[r]` is the number of draws on which sorted rank r+1 was
/// rejected; probabilities are counts / n_draws.
#[derive(Debug, Clone, PartialEq)]
pub struct PrSigVector {
    counts: Vec<u64>,
    n_draws: u64,
    permutation: Vec<usize>,
    clamp_events: u64,
}

impl PrSigVector {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn n_draws(&self) -> u64 {
        self.n_draws
    }

    /// Sorted-rank to original-index map inherited from the family sort.
    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    /// Number of draws whose weighted threshold sequence needed the
    /// running-maximum repair (always 0 under equal weights or the
    /// per-rank rule).
    pub fn clamp_events(&self) -> u64 {
        self.clamp_events
    }

    /// Probabilities in sorted p order.
    pub fn probabilities(&self) -> Vec<f64> {
        let n = self.n_draws as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    /// Probabilities rearranged back to the original test order.
    pub fn probabilities_original_order(&self) -> Vec<f64> {
        let n = self.n_draws as f64;
        let mut out = vec![0.0; self.counts.len()];
        for (rank, &orig) in self.permutation.iter().enumerate() {
            out[orig] = self.counts[rank] as f64 / n;
        }
        out
    }
}

/// Evaluate significance probabilities for a presorted family against an
/// existing batch of prior draws. The fresh-draw entry point below is
/// equivalent to sampling a batch and calling this, and the shared-draws
/// power mode calls it directly with its one reused batch.
pub fn dp_prsig_over_draws(
    sorted: &SortedFamily,
    alpha: f64,
    weighted: bool,
    rule: DpRule,
    draws: &[DpPriorDraw],
) -> Result<PrSigVector> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!(
            "alpha must lie in (0, 1) (got {alpha})"
        )));
    }
    if draws.is_empty() {
        return Err(Error::Domain("need at least one DP draw".into()));
    }
    let m = sorted.len();
    for draw in draws {
        if draw.m() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: draw.m(),
            });
        }
    }
    let uniform = vec![1.0 / m as f64; m];
    let weights: &[f64] = if weighted { sorted.weights() } else { &uniform };
    let pvals = sorted.values();
    let mut counts = vec![0u64; m];
    let mut clamp_events = 0u64;
    match rule {
        DpRule::StepUp => {
            // Histogram of rejection counts, then suffix sums: counts[r]
            // = #{draws with R >= r+1}.
            let mut hist = vec![0u64; m + 1];
            let mut deltas = vec![0.0f64; m];
            for draw in draws {
                let mut beta = 0.0;
                let mut run = 0.0f64;
                let mut clamped = false;
                for (j, (&mass, &w)) in draw.masses().iter().zip(weights).enumerate() {
                    beta += (j + 1) as f64 * mass;
                    let raw = alpha * w * beta;
                    if raw < run {
                        clamped = true;
                    } else {
                        run = raw;
                    }
                    deltas[j] = run;
                }
                if clamped {
                    clamp_events += 1;
                }
                let r = step_up_count(pvals, &deltas);
                hist[r] += 1;
            }
            let mut acc = 0u64;
            for r in (1..=m).rev() {
                acc += hist[r];
                counts[r - 1] = acc;
            }
        }
        DpRule::PerRank => {
            // Literal per-rank comparison against the unrepaired cutoffs;
            // no monotonicity is needed or imposed.
            for draw in draws {
                let mut beta = 0.0;
                for (j, (&mass, &w)) in draw.masses().iter().zip(weights).enumerate() {
                    beta += (j + 1) as f64 * mass;
                    if pvals[j] <= alpha * w * beta {
                        counts[j] += 1;
                    }
                }
            }
        }
    }
    Ok(PrSigVector {
        counts,
        n_draws: draws.len() as u64,
        permutation: sorted.permutation().to_vec(),
        clamp_events,
    })
}

/// Significance probabilities with fresh prior draws from `rng`:
/// PrSig(r) = (1/N) * #{draws g : rank r rejected under draw g}.
pub fn dp_prsig<R: Rng + ?Sized>(
    family: &PValueFamily,
    alpha: f64,
    n_draws: u64,
    hyper_rate: f64,
    weighted: bool,
    rule: DpRule,
    rng: &mut R,
) -> Result<PrSigVector> {
    let sorted = sort_family(family);
    let baseline = DpBaseline::new(family.len())?;
    let draws = sample_dp_batch(&baseline, hyper_rate, n_draws, rng)?;
    dp_prsig_over_draws(&sorted, alpha, weighted, rule, &draws)
}
