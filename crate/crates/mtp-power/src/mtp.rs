//! Classical multiple-testing procedures on a family of p-values:
//! Bonferroni, Holm, and Benjamini-Yekutieli, in unweighted and weighted
//! form, built on the sorted-threshold machinery that the
//! Dirichlet-process procedure reuses.
//!
//! Weights attach to hypotheses and ride along when the family is sorted
//! by raw p-value; w_(r) below always means the weight of the rank-r
//! p-value. Sorting is by p alone, never by p/w.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// A family of m p-values with per-hypothesis prior weights on the
/// simplex. The unweighted constructor fills in the uniform 1/m weights
/// so every procedure can read weights unconditionally.
#[derive(Debug, Clone, PartialEq)]
pub struct PValueFamily {
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl PValueFamily {
    pub fn unweighted(values: Vec<f64>) -> Result<Self> {
        let m = values.len();
        Self::validate_values(&values)?;
        let w = 1.0 / m as f64;
        Ok(Self {
            values,
            weights: vec![w; m],
        })
    }

    /// Weights may come in on any positive scale; they are normalized to
    /// sum to 1 here so the threshold formulas can assume a simplex.
    pub fn weighted(values: Vec<f64>, raw_weights: &[f64]) -> Result<Self> {
        Self::validate_values(&values)?;
        if raw_weights.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: values.len(),
                got: raw_weights.len(),
            });
        }
        let mut total = 0.0;
        for &w in raw_weights {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Domain(format!(
                    "weights must be nonnegative and finite (got {w})"
                )));
            }
            total += w;
        }
        if total <= 0.0 {
            return Err(Error::Domain(
                "weights must not all be zero".into(),
            ));
        }
        Ok(Self {
            values,
            weights: raw_weights.iter().map(|&w| w / total).collect(),
        })
    }

    fn validate_values(values: &[f64]) -> Result<()> {
        if values.is_empty() {
            return Err(Error::Domain("a family needs at least one p-value".into()));
        }
        for &p in values {
            if !(0.0..=1.0).contains(&p) || p.is_nan() {
                return Err(Error::Domain(format!(
                    "p-values must lie in [0, 1] (got {p})"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// The family rearranged into p-value order. `permutation[r]` is the
/// original index of the rank-r p-value (ranks 0-based here; prose and
/// error messages use 1-based ranks).
#[derive(Debug, Clone, PartialEq)]
pub struct SortedFamily {
    values: Vec<f64>,
    weights: Vec<f64>,
    permutation: Vec<usize>,
}

impl SortedFamily {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }
}

/// Stable ascending sort by p; ties keep their original order, so tied
/// ranks are deterministic and reports never depend on sort internals.
pub fn sort_family(family: &PValueFamily) -> SortedFamily {
    let mut order: Vec<usize> = (0..family.len()).collect();
    order.sort_by(|&a, &b| {
        family.values[a]
            .partial_cmp(&family.values[b])
            .expect("family p-values are validated finite")
    });
    SortedFamily {
        values: order.iter().map(|&i| family.values[i]).collect(),
        weights: order.iter().map(|&i| family.weights[i]).collect(),
        permutation: order,
    }
}

/// Per-rank rejection cutoffs aligned to sorted order. Entries are
/// validated into [0, 1]; monotonicity is NOT a construction invariant,
/// because the single-step and step-down procedures are well defined
/// without it. The step-up applier checks its own nondecreasing
/// precondition. `was_clamped` records whether a running-maximum repair
/// fired in `new_running_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdVector {
    deltas: Vec<f64>,
    clamped: bool,
}

impl ThresholdVector {
    pub fn new(deltas: Vec<f64>) -> Result<Self> {
        Self::validate(&deltas)?;
        Ok(Self {
            deltas,
            clamped: false,
        })
    }

    /// Caps entries at 1 and lifts each to the running maximum of its
    /// predecessors, the minimal repair that restores the step-up
    /// precondition for weighted threshold sequences. The flag reports
    /// whether anything actually moved.
    pub fn new_running_max(mut deltas: Vec<f64>) -> Result<Self> {
        let mut clamped = false;
        let mut run = 0.0f64;
        for d in &mut deltas {
            if *d > 1.0 {
                *d = 1.0;
                clamped = true;
            }
            if *d < run {
                *d = run;
                clamped = true;
            } else {
                run = *d;
            }
        }
        Self::validate(&deltas)?;
        Ok(Self { deltas, clamped })
    }

    fn validate(deltas: &[f64]) -> Result<()> {
        if deltas.is_empty() {
            return Err(Error::Domain("thresholds must be nonempty".into()));
        }
        for &d in deltas {
            if !(0.0..=1.0).contains(&d) || d.is_nan() {
                return Err(Error::Domain(format!(
                    "thresholds must lie in [0, 1] (got {d})"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.deltas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    pub fn was_clamped(&self) -> bool {
        self.clamped
    }

    fn check_nondecreasing(&self) -> Result<()> {
        for r in 1..self.deltas.len() {
            if self.deltas[r] < self.deltas[r - 1] {
                return Err(Error::UnorderedThresholds { rank: r + 1 });
            }
        }
        Ok(())
    }
}

/// Outcome of one procedure on one family. `rejected_ranks` is in sorted
/// order and is a prefix for step-up and step-down procedures; the
/// single-step weighted Bonferroni can reject a non-prefix set.
/// `rejected_ids` are original (0-based) input positions, ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct MtpDecision {
    pub rejection_count: usize,
    pub rejected_ranks: Vec<bool>,
    pub rejected_ids: Vec<usize>,
    pub thresholds: ThresholdVector,
    pub sort_permutation: Vec<usize>,
}

impl MtpDecision {
    pub fn rejects(&self, original_index: usize) -> bool {
        self.rejected_ids.binary_search(&original_index).is_ok()
    }

    fn assemble(sorted: &SortedFamily, thresholds: ThresholdVector, ranks: Vec<bool>) -> Self {
        let mut ids: Vec<usize> = ranks
            .iter()
            .zip(sorted.permutation())
            .filter_map(|(&hit, &orig)| hit.then_some(orig))
            .collect();
        ids.sort_unstable();
        MtpDecision {
            rejection_count: ranks.iter().filter(|&&b| b).count(),
            rejected_ranks: ranks,
            rejected_ids: ids,
            thresholds,
            sort_permutation: sorted.permutation().to_vec(),
        }
    }
}

/// The procedures this crate implements. The first three are the
/// classical deterministic rules; the Dirichlet-process procedure draws
/// its thresholds at random and lives in the dp module.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Procedure {
    Bonferroni,
    Holm,
    BenjaminiYekutieli,
    DirichletProcess,
}

/// A procedure plus the weighted/unweighted toggle; parsed from and
/// displayed as "b", "h", "by", "dp", each optionally ":weighted".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Method {
    pub procedure: Procedure,
    pub weighted: bool,
}

impl Method {
    pub const fn new(procedure: Procedure, weighted: bool) -> Self {
        Self {
            procedure,
            weighted,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let base = match self.procedure {
            Procedure::Bonferroni => "b",
            Procedure::Holm => "h",
            Procedure::BenjaminiYekutieli => "by",
            Procedure::DirichletProcess => "dp",
        };
        if self.weighted {
            write!(f, "{base}:weighted")
        } else {
            f.write_str(base)
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (base, weighted) = match s.strip_suffix(":weighted") {
            Some(base) => (base, true),
            None => (s, false),
        };
        let procedure = match base {
            "b" | "bonferroni" => Procedure::Bonferroni,
            "h" | "holm" => Procedure::Holm,
            "by" | "benjamini-yekutieli" => Procedure::BenjaminiYekutieli,
            "dp" | "dirichlet-process" => Procedure::DirichletProcess,
            other => {
                return Err(Error::Config(format!(
                    "unknown method '{other}' (expected b, h, by, or dp, optionally :weighted)"
                )))
            }
        };
        Ok(Method {
            procedure,
            weighted,
        })
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// H_m = sum of 1/j for j = 1..=m, accumulated smallest term first so the
/// value is as close to correctly rounded as plain summation gets.
pub fn harmonic_number(m: usize) -> f64 {
    (1..=m).rev().map(|j| 1.0 / j as f64).sum()
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!(
            "alpha must lie in (0, 1) (got {alpha})"
        )));
    }
    Ok(())
}

/// Bonferroni cutoffs: constant alpha/m unweighted, alpha*w_(r) weighted.
/// These are per-hypothesis cutoffs for a single-step comparison, so no
/// monotonicity repair is applied to the weighted form.
pub fn thresholds_bonferroni(
    sorted: &SortedFamily,
    alpha: f64,
    weighted: bool,
) -> Result<ThresholdVector> {
    check_alpha(alpha)?;
    let m = sorted.len();
    let deltas = if weighted {
        sorted.weights().iter().map(|&w| alpha * w).collect()
    } else {
        vec![alpha / m as f64; m]
    };
    ThresholdVector::new(deltas)
}

/// Holm cutoffs: alpha/(m-r+1) unweighted; weighted, each rank divides
/// its weight by the tail sum of weights from that rank on. The weighted
/// sequence is applied literally by the step-down rule and is not forced
/// monotone. A zero tail sum leaves the cutoff undefined, which is
/// reported eagerly for the first offending rank whether or not the
/// step-down walk would reach it.
pub fn thresholds_holm(
    sorted: &SortedFamily,
    alpha: f64,
    weighted: bool,
) -> Result<ThresholdVector> {
    check_alpha(alpha)?;
    let m = sorted.len();
    let deltas = if weighted {
        let mut tails = vec![0.0f64; m];
        let mut acc = 0.0;
        for r in (0..m).rev() {
            acc += sorted.weights()[r];
            tails[r] = acc;
        }
        let mut deltas = Vec::with_capacity(m);
        for (r, &tail) in tails.iter().enumerate() {
            if tail <= 0.0 {
                return Err(Error::ZeroTailWeight { rank: r + 1 });
            }
            deltas.push(alpha * sorted.weights()[r] / tail);
        }
        deltas
    } else {
        (0..m).map(|r| alpha / (m - r) as f64).collect()
    };
    ThresholdVector::new(deltas)
}

/// Benjamini-Yekutieli cutoffs: alpha*r/(m*H_m) unweighted. The weighted
/// form multiplies the linear shape r/H_m by the rank-r weight in place
/// of the uniform 1/m; because that product need not be monotone, it is
/// clamped to its running maximum (and capped at 1) so the step-up rule's
/// precondition holds, with the repair recorded on the result.
pub fn thresholds_by(sorted: &SortedFamily, alpha: f64, weighted: bool) -> Result<ThresholdVector> {
    check_alpha(alpha)?;
    let m = sorted.len();
    let h = harmonic_number(m);
    if weighted {
        let raw = sorted
            .weights()
            .iter()
            .enumerate()
            .map(|(r, &w)| alpha * w * (r + 1) as f64 / h)
            .collect();
        ThresholdVector::new_running_max(raw)
    } else {
        let scale = alpha / (m as f64 * h);
        ThresholdVector::new((1..=m).map(|r| scale * r as f64).collect())
    }
}

/// Rejection count of the step-up rule on presorted inputs. Hot-loop
/// form: assumes (debug-asserts) nondecreasing thresholds and equal
/// lengths, which the public applier and the dp threshold constructor
/// both guarantee.
pub(crate) fn step_up_count(sorted_p: &[f64], deltas: &[f64]) -> usize {
    debug_assert_eq!(sorted_p.len(), deltas.len());
    debug_assert!(deltas.windows(2).all(|w| w[0] <= w[1]));
    for r in (1..=sorted_p.len()).rev() {
        if sorted_p[r - 1] <= deltas[r - 1] {
            return r;
        }
    }
    0
}

/// Step-up rule: R is the largest rank r with p_(r) <= delta_(r) (zero if
/// none), and every rank up to R is rejected, including ranks whose own
/// p-value exceeds their cutoff. Requires nondecreasing thresholds.
pub fn apply_step_up(sorted: &SortedFamily, thresholds: ThresholdVector) -> Result<MtpDecision> {
    check_lengths(sorted, &thresholds)?;
    thresholds.check_nondecreasing()?;
    let r = step_up_count(sorted.values(), thresholds.deltas());
    let ranks: Vec<bool> = (0..sorted.len()).map(|i| i < r).collect();
    Ok(MtpDecision::assemble(sorted, thresholds, ranks))
}

/// Step-down rule: walk ranks in order and stop at the first p_(r) above
/// its cutoff; R is the number of ranks passed before the stop. Applied
/// literally to whatever threshold sequence it is given.
pub fn apply_step_down(sorted: &SortedFamily, thresholds: ThresholdVector) -> Result<MtpDecision> {
    check_lengths(sorted, &thresholds)?;
    let mut r = sorted.len();
    for (i, (&p, &d)) in sorted.values().iter().zip(thresholds.deltas()).enumerate() {
        if p > d {
            r = i;
            break;
        }
    }
    let ranks: Vec<bool> = (0..sorted.len()).map(|i| i < r).collect();
    Ok(MtpDecision::assemble(sorted, thresholds, ranks))
}

/// Single-step rule: each rank is compared to its own cutoff in
/// isolation. With unequal per-hypothesis cutoffs the rejected set need
/// not be a prefix of the sorted order.
pub fn apply_single_step(sorted: &SortedFamily, thresholds: ThresholdVector) -> Result<MtpDecision> {
    check_lengths(sorted, &thresholds)?;
    let ranks: Vec<bool> = sorted
        .values()
        .iter()
        .zip(thresholds.deltas())
        .map(|(&p, &d)| p <= d)
        .collect();
    Ok(MtpDecision::assemble(sorted, thresholds, ranks))
}

fn check_lengths(sorted: &SortedFamily, thresholds: &ThresholdVector) -> Result<()> {
    if sorted.len() != thresholds.len() {
        return Err(Error::DimensionMismatch {
            expected: sorted.len(),
            got: thresholds.len(),
        });
    }
    Ok(())
}

/// One classical procedure end to end: sort, build the method's cutoffs,
/// apply its rule (Bonferroni single-step, Holm step-down,
/// Benjamini-Yekutieli step-up). The Dirichlet-process method is not a
/// deterministic rule and must go through the dp module instead.
pub fn run_mtp(family: &PValueFamily, alpha: f64, method: Method) -> Result<MtpDecision> {
    let sorted = sort_family(family);
    match method.procedure {
        Procedure::Bonferroni => {
            let t = thresholds_bonferroni(&sorted, alpha, method.weighted)?;
            apply_single_step(&sorted, t)
        }
        Procedure::Holm => {
            let t = thresholds_holm(&sorted, alpha, method.weighted)?;
            apply_step_down(&sorted, t)
        }
        Procedure::BenjaminiYekutieli => {
            let t = thresholds_by(&sorted, alpha, method.weighted)?;
            apply_step_up(&sorted, t)
        }
        Procedure::DirichletProcess => Err(Error::Config(
            "the dirichlet-process procedure draws random thresholds; run it through the dp module"
                .into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn family(values: &[f64]) -> PValueFamily {
        PValueFamily::unweighted(values.to_vec()).unwrap()
    }

    #[test]
    fn sorting_is_stable_and_reports_the_permutation() {
        let sorted = sort_family(&family(&[0.3, 0.1, 0.2]));
        assert_eq!(sorted.values(), &[0.1, 0.2, 0.3]);
        assert_eq!(sorted.permutation(), &[1, 2, 0]);

        let tied = sort_family(&family(&[0.5, 0.5]));
        assert_eq!(tied.permutation(), &[0, 1]);

        let mixed = sort_family(&family(&[0.2, 0.001, 0.2, 0.001]));
        assert_eq!(mixed.permutation(), &[1, 3, 0, 2]);
    }

    #[test]
    fn weights_ride_along_with_the_sort() {
        let fam = PValueFamily::weighted(vec![0.3, 0.1, 0.2], &[1.0, 2.0, 3.0]).unwrap();
        assert!((fam.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let sorted = sort_family(&fam);
        let expect = [2.0 / 6.0, 3.0 / 6.0, 1.0 / 6.0];
        for (got, want) in sorted.weights().iter().zip(expect) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn family_validation_rejects_bad_inputs() {
        assert!(PValueFamily::unweighted(vec![]).is_err());
        assert!(PValueFamily::unweighted(vec![1.2]).is_err());
        assert!(PValueFamily::unweighted(vec![-0.1]).is_err());
        assert!(PValueFamily::unweighted(vec![f64::NAN]).is_err());
        assert!(PValueFamily::weighted(vec![0.5], &[]).is_err());
        assert!(PValueFamily::weighted(vec![0.5, 0.5], &[1.0, -1.0]).is_err());
        assert!(PValueFamily::weighted(vec![0.5, 0.5], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn harmonic_numbers_match_closed_forms() {
        assert_eq!(harmonic_number(1), 1.0);
        assert_eq!(harmonic_number(2), 1.5);
        assert!((harmonic_number(4) - 25.0 / 12.0).abs() < 1e-15);
        assert!((harmonic_number(41) - 4.302933282838815).abs() < 1e-14);
    }

    #[test]
    fn bonferroni_thresholds_match_direct_arithmetic() {
        let sorted = sort_family(&family(&[0.5; 41]));
        let t = thresholds_bonferroni(&sorted, 0.05, false).unwrap();
        for &d in t.deltas() {
            assert!((d - 0.05 / 41.0).abs() < 1e-18);
        }
        let one = sort_family(&family(&[0.2]));
        let t1 = thresholds_bonferroni(&one, 0.05, true).unwrap();
        assert_eq!(t1.deltas(), &[0.05]);
        let half = PValueFamily::weighted(vec![0.1, 0.2], &[0.5, 0.5]).unwrap();
        let th = thresholds_bonferroni(&sort_family(&half), 0.05, true).unwrap();
        assert_eq!(th.deltas(), &[0.025, 0.025]);
    }

    #[test]
    fn holm_thresholds_match_direct_arithmetic() {
        let sorted = sort_family(&family(&[0.5; 41]));
        let t = thresholds_holm(&sorted, 0.05, false).unwrap();
        assert!((t.deltas()[0] - 0.05 / 41.0).abs() < 1e-18);
        assert!((t.deltas()[1] - 0.05 / 40.0).abs() < 1e-18);
        assert!((t.deltas()[2] - 0.05 / 39.0).abs() < 1e-18);
        assert_eq!(t.deltas()[40], 0.05);

        let equal = PValueFamily::weighted(vec![0.5; 41], &[1.0; 41]).unwrap();
        let tw = thresholds_holm(&sort_family(&equal), 0.05, true).unwrap();
        for (a, b) in tw.deltas().iter().zip(t.deltas()) {
            assert!((a / b - 1.0).abs() < 1e-12, "weighted {a} vs unweighted {b}");
        }
    }

    #[test]
    fn weighted_holm_is_applied_literally_even_when_not_monotone() {
        let fam = PValueFamily::weighted(vec![0.01, 0.04, 0.02], &[0.5, 0.1, 0.4]).unwrap();
        let sorted = sort_family(&fam);
        let t = thresholds_holm(&sorted, 0.05, true).unwrap();
        let d = t.deltas();
        assert!((d[0] - 0.025).abs() < 1e-15);
        assert!((d[1] - 0.05 * 0.4 / 0.5).abs() < 1e-15);
        assert!((d[2] - 0.05).abs() < 1e-15);
        assert!(d[1] > d[0], "this example is monotone after sorting");

        // Force the non-monotone alignment: tiny weight at rank 2.
        let fam2 = PValueFamily::weighted(vec![0.01, 0.02, 0.04], &[0.5, 0.1, 0.4]).unwrap();
        let sorted2 = sort_family(&fam2);
        let t2 = thresholds_holm(&sorted2, 0.05, true).unwrap();
        let d2 = t2.deltas();
        assert!(d2[1] < d2[0], "weighted Holm cutoffs can dip: {d2:?}");
        let dec = apply_step_down(&sorted2, t2).unwrap();
        assert_eq!(dec.rejection_count, 1);
        assert_eq!(dec.rejected_ids, vec![0]);
    }

    #[test]
    fn holm_zero_tail_weight_is_reported_eagerly() {
        let fam = PValueFamily::weighted(vec![0.01, 0.9, 0.02], &[0.5, 0.0, 0.5]).unwrap();
        let sorted = sort_family(&fam);
        match thresholds_holm(&sorted, 0.05, true) {
            Err(Error::ZeroTailWeight { rank }) => assert_eq!(rank, 3),
            other => panic!("expected ZeroTailWeight, got {other:?}"),
        }
    }

    #[test]
    fn by_thresholds_match_direct_arithmetic() {
        let one = sort_family(&family(&[0.2]));
        assert_eq!(thresholds_by(&one, 0.05, false).unwrap().deltas(), &[0.05]);

        let two = sort_family(&family(&[0.2, 0.3]));
        let t2 = thresholds_by(&two, 0.05, false).unwrap();
        assert!((t2.deltas()[0] - 0.05 / 3.0).abs() < 1e-15);
        assert!((t2.deltas()[1] - 0.10 / 3.0).abs() < 1e-15);

        let sorted = sort_family(&family(&[0.5; 41]));
        let t = thresholds_by(&sorted, 0.05, false).unwrap();
        assert!((t.deltas()[0] - 2.834e-4).abs() < 1e-7);
        assert!((t.deltas()[1] - 5.668e-4).abs() < 1e-7);
        assert!(!t.was_clamped());
        for w in t.deltas().windows(2) {
            assert!(w[0] <= w[1]);
        }
    }

    #[test]
    fn weighted_by_clamps_to_running_max_and_says_so() {
        let fam = PValueFamily::weighted(vec![0.01, 0.02, 0.03], &[0.7, 0.2, 0.1]).unwrap();
        let sorted = sort_family(&fam);
        let t = thresholds_by(&sorted, 0.3, true).unwrap();
        assert!(t.was_clamped());
        let h3 = harmonic_number(3);
        let first = 0.3 * 0.7 / h3;
        for &d in t.deltas() {
            assert!((d - first).abs() < 1e-15, "all lifted to the first cutoff");
        }
        // Equal weights never clamp and collapse to the unweighted form.
        let eq = PValueFamily::weighted(vec![0.01, 0.02, 0.03], &[1.0; 3]).unwrap();
        let te = thresholds_by(&sort_family(&eq), 0.3, true).unwrap();
        assert!(!te.was_clamped());
        let tu = thresholds_by(&sorted, 0.3, false).unwrap();
        for (a, b) in te.deltas().iter().zip(tu.deltas()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn step_up_takes_the_largest_qualifying_rank() {
        let sorted = sort_family(&family(&[0.01, 0.04]));
        let t = ThresholdVector::new(vec![0.025, 0.05]).unwrap();
        let dec = apply_step_up(&sorted, t).unwrap();
        assert_eq!(dec.rejection_count, 2);

        // Rank 1 fails its own cutoff but rank 2 passes, so both reject.
        let skip = sort_family(&family(&[0.03, 0.04]));
        let t = ThresholdVector::new(vec![0.025, 0.05]).unwrap();
        let dec = apply_step_up(&skip, t).unwrap();
        assert_eq!(dec.rejection_count, 2);
        assert_eq!(dec.rejected_ranks, vec![true, true]);

        let none = sort_family(&family(&[1.0, 1.0]));
        let t = ThresholdVector::new(vec![0.2, 0.4]).unwrap();
        assert_eq!(apply_step_up(&none, t).unwrap().rejection_count, 0);
    }

    #[test]
    fn step_up_rejects_unordered_thresholds() {
        let sorted = sort_family(&family(&[0.01, 0.04]));
        let t = ThresholdVector::new(vec![0.05, 0.01]).unwrap();
        match apply_step_up(&sorted, t) {
            Err(Error::UnorderedThresholds { rank }) => assert_eq!(rank, 2),
            other => panic!("expected UnorderedThresholds, got {other:?}"),
        }
    }

    #[test]
    fn step_down_stops_at_the_first_exceedance() {
        let sorted = sort_family(&family(&[0.001, 0.5]));
        let t = ThresholdVector::new(vec![0.025, 0.05]).unwrap();
        let dec = apply_step_down(&sorted, t).unwrap();
        assert_eq!(dec.rejection_count, 1);
        assert_eq!(dec.rejected_ids, vec![0]);

        let all = sort_family(&family(&[0.01, 0.02]));
        let t = ThresholdVector::new(vec![0.025, 0.05]).unwrap();
        assert_eq!(apply_step_down(&all, t).unwrap().rejection_count, 2);

        let none = sort_family(&family(&[1.0, 1.0]));
        let t = ThresholdVector::new(vec![0.2, 0.4]).unwrap();
        assert_eq!(apply_step_down(&none, t).unwrap().rejection_count, 0);
    }

    #[test]
    fn weighted_bonferroni_can_reject_a_non_prefix_set() {
        let fam = PValueFamily::weighted(vec![0.01, 0.02, 0.03], &[0.05, 0.9, 0.05]).unwrap();
        let dec = run_mtp(&fam, 0.05, Method::new(Procedure::Bonferroni, true)).unwrap();
        assert_eq!(dec.rejected_ranks, vec![false, true, false]);
        assert_eq!(dec.rejection_count, 1);
        assert_eq!(dec.rejected_ids, vec![1]);
        assert!(dec.rejects(1) && !dec.rejects(0) && !dec.rejects(2));
    }

    #[test]
    fn run_mtp_handles_the_single_test_family() {
        let fam = family(&[0.04]);
        for proc_ in [
            Procedure::Bonferroni,
            Procedure::Holm,
            Procedure::BenjaminiYekutieli,
        ] {
            let dec = run_mtp(&fam, 0.05, Method::new(proc_, false)).unwrap();
            assert_eq!(dec.rejected_ids, vec![0], "{proc_:?}");
        }
    }

    #[test]
    fn run_mtp_refuses_the_dirichlet_process_method() {
        let fam = family(&[0.04]);
        assert!(matches!(
            run_mtp(&fam, 0.05, Method::new(Procedure::DirichletProcess, false)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn bonferroni_rejections_nest_inside_holm() {
        let fam = family(&[0.0011, 0.012, 0.017, 0.3, 0.04, 0.006]);
        let b = run_mtp(&fam, 0.05, Method::new(Procedure::Bonferroni, false)).unwrap();
        let h = run_mtp(&fam, 0.05, Method::new(Procedure::Holm, false)).unwrap();
        for id in &b.rejected_ids {
            assert!(h.rejects(*id), "Bonferroni rejected {id} but Holm did not");
        }
        assert!(h.rejection_count >= b.rejection_count);
    }

    #[test]
    fn decisions_report_consistent_ids_and_counts() {
        let fam = PValueFamily::weighted(
            vec![0.02, 0.001, 0.4, 0.03, 0.001],
            &[0.1, 0.3, 0.2, 0.1, 0.3],
        )
        .unwrap();
        for method in ["b", "h", "by", "b:weighted", "h:weighted", "by:weighted"] {
            let method: Method = method.parse().unwrap();
            let dec = run_mtp(&fam, 0.05, method).unwrap();
            assert_eq!(dec.rejected_ids.len(), dec.rejection_count);
            assert!(dec.rejected_ids.windows(2).all(|w| w[0] < w[1]));
            assert_eq!(
                dec.rejected_ranks.iter().filter(|&&b| b).count(),
                dec.rejection_count
            );
            assert_eq!(dec.sort_permutation.len(), fam.len());
        }
    }

    #[test]
    fn method_strings_round_trip() {
        for s in ["b", "h", "by", "dp", "b:weighted", "h:weighted", "by:weighted", "dp:weighted"] {
            let m: Method = s.parse().unwrap();
            assert_eq!(m.to_string(), s);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(serde_json::from_str::<Method>(&json).unwrap(), m);
        }
        assert_eq!(
            "bonferroni".parse::<Method>().unwrap(),
            Method::new(Procedure::Bonferroni, false)
        );
        assert!("bh".parse::<Method>().is_err());
        assert!("b:wtd".parse::<Method>().is_err());
    }

    #[test]
    fn alpha_is_validated() {
        let sorted = sort_family(&family(&[0.5]));
        for bad in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(thresholds_bonferroni(&sorted, bad, false).is_err());
            assert!(thresholds_holm(&sorted, bad, false).is_err());
            assert!(thresholds_by(&sorted, bad, false).is_err());
        }
    }

    #[test]
    fn threshold_vector_validates_and_clamps() {
        assert!(ThresholdVector::new(vec![]).is_err());
        assert!(ThresholdVector::new(vec![-0.1]).is_err());
        assert!(ThresholdVector::new(vec![1.1]).is_err());
        assert!(ThresholdVector::new(vec![f64::NAN]).is_err());
        let t = ThresholdVector::new_running_max(vec![0.3, 0.1, 0.4, 0.2]).unwrap();
        assert_eq!(t.deltas(), &[0.3, 0.3, 0.4, 0.4]);
        assert!(t.was_clamped());
        let clean = ThresholdVector::new_running_max(vec![0.1, 0.2, 0.3]).unwrap();
        assert!(!clean.was_clamped());
    }
}
