//! The bundled case study: 41 two-tailed p-values from Needleman et
//! al.'s 1979 study of childhood lead exposure (teacher behavior
//! ratings, Wechsler IQ scales, Seashore and Token verbal-processing
//! scores, and reaction times), a family reanalyzed repeatedly in the
//! multiple-testing literature. Tests 1 through 11 are z-tests of equal
//! proportions; tests 12 through 41 are ANCOVA t-tests on 151 degrees of
//! freedom. Anticipated effect ratios are backed out of the published
//! p-values through each test's own reference distribution.
//!
//! The module embeds the published analysis columns so a reproduction
//! run can be compared cell by cell: marginal power, p-value weight,
//! significance probability, and the significance-chasing index per
//! test, plus a weighted second pass and the shrinkage sweep.

use crate::mtp::{Method, Procedure};
use crate::power::{
    run_power_analysis, MethodReport, PowerReport, PowerStudyConfig, pvalue_weights,
};
use crate::special::Dof;
use crate::study::{StudyFile, TestEntry, SCHEMA_VERSION};
use crate::{Error, Result};

/// Seed of record for the bundled reproduction: the year of the source
/// study.
pub const DEFAULT_SEED: u64 = 1979;

/// The shrinkage factors of the published sensitivity sweep.
pub const SHRINKAGE_SWEEP: [f64; 4] = [0.0, 0.25, 0.5, 0.75];

/// One published row: the observed two-tailed p-value, the derived
/// statistic, and the five analysis columns, all at the printed
/// precision (two decimals; three for the smallest p-values).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PublishedRow {
    pub id: u32,
    pub label: &'static str,
    pub observed_p: f64,
    pub t_stat: f64,
    pub marg_pwr: f64,
    pub p_weight: f64,
    pub pr_sig: f64,
    pub pr_sig_weighted: f64,
    pub sig_chase: f64,
}

// One positional argument per table column keeps the 41-row literal below
// readable; a struct literal per row would bury the numbers in field names.
#[allow(clippy::too_many_arguments)]
const fn row(
    id: u32,
    label: &'static str,
    observed_p: f64,
    t_stat: f64,
    marg_pwr: f64,
    p_weight: f64,
    pr_sig: f64,
    pr_sig_weighted: f64,
    sig_chase: f64,
) -> PublishedRow {
    PublishedRow {
        id,
        label,
        observed_p,
        t_stat,
        marg_pwr,
        p_weight,
        pr_sig,
        pr_sig_weighted,
        sig_chase,
    }
}

/// The 41 published rows, in table order.
pub const PUBLISHED: [PublishedRow; 41] = [
    row(1, "Behavior 1", 0.003, 2.97, 0.46, 0.05, 0.28, 0.53, 0.13),
    row(2, "Behavior 2", 0.05, 1.96, 0.23, 0.02, 0.00, 0.00, 0.35),
    row(3, "Behavior 3", 0.05, 1.96, 0.23, 0.02, 0.00, 0.00, 0.35),
    row(4, "Behavior 4", 0.14, 1.48, 0.15, 0.01, 0.00, 0.00, 0.28),
    row(5, "Behavior 5", 0.08, 1.75, 0.18, 0.02, 0.00, 0.00, 0.31),
    row(6, "Behavior 6", 0.01, 2.58, 0.37, 0.04, 0.02, 0.08, 0.35),
    row(7, "Behavior 7", 0.04, 2.05, 0.25, 0.03, 0.00, 0.00, 0.37),
    row(8, "Behavior 8", 0.01, 2.58, 0.38, 0.04, 0.02, 0.08, 0.36),
    row(9, "Behavior 9", 0.05, 1.96, 0.23, 0.02, 0.00, 0.00, 0.35),
    row(10, "Behavior 10", 0.003, 2.97, 0.47, 0.05, 0.28, 0.53, 0.14),
    row(11, "Behavior 11", 0.003, 2.97, 0.47, 0.05, 0.28, 0.53, 0.14),
    row(12, "Sum Behavior", 0.02, 2.35, 0.30, 0.03, 0.00, 0.00, 0.40),
    row(13, "Verbal IQ 1", 0.04, 2.07, 0.25, 0.03, 0.00, 0.00, 0.37),
    row(14, "Verbal IQ 2", 0.05, 1.98, 0.23, 0.02, 0.00, 0.00, 0.35),
    row(15, "Verbal IQ 3", 0.02, 2.35, 0.31, 0.03, 0.00, 0.00, 0.41),
    row(16, "Verbal IQ 4", 0.49, 0.69, 0.06, 0.01, 0.00, 0.00, 0.18),
    row(17, "Verbal IQ 5", 0.08, 1.76, 0.18, 0.02, 0.00, 0.00, 0.30),
    row(18, "Verbal IQ 6", 0.36, 0.92, 0.08, 0.01, 0.00, 0.00, 0.20),
    row(19, "Performance IQ 1", 0.03, 2.19, 0.28, 0.03, 0.00, 0.00, 0.39),
    row(20, "Performance IQ 2", 0.38, 0.88, 0.07, 0.01, 0.00, 0.00, 0.19),
    row(21, "Performance IQ 3", 0.15, 1.45, 0.14, 0.01, 0.00, 0.00, 0.27),
    row(22, "Performance IQ 4", 0.54, 0.61, 0.05, 0.01, 0.00, 0.00, 0.17),
    row(23, "Performance IQ 5", 0.90, 0.13, 0.03, 0.00, 0.00, 0.00, 0.13),
    row(24, "Performance IQ 6", 0.37, 0.90, 0.08, 0.01, 0.00, 0.00, 0.20),
    row(25, "Full Verbal IQ", 0.03, 2.19, 0.27, 0.03, 0.00, 0.00, 0.38),
    row(26, "Full Perf. IQ", 0.03, 2.19, 0.28, 0.03, 0.00, 0.00, 0.39),
    row(27, "Full VerbalPerf.IQ", 0.08, 1.76, 0.20, 0.02, 0.00, 0.00, 0.32),
    row(28, "Seashore 1", 0.002, 3.15, 0.50, 0.05, 0.38, 0.70, 0.09),
    row(29, "Seashore 2", 0.03, 2.19, 0.26, 0.03, 0.00, 0.00, 0.37),
    row(30, "Seashore 3", 0.07, 1.82, 0.19, 0.02, 0.00, 0.00, 0.32),
    row(31, "Total Seashore", 0.002, 3.15, 0.51, 0.05, 0.38, 0.70, 0.09),
    row(32, "Token 1", 0.37, 0.90, 0.07, 0.01, 0.00, 0.00, 0.19),
    row(33, "Token 2", 0.90, 0.13, 0.04, 0.00, 0.00, 0.00, 0.14),
    row(34, "Token 3", 0.42, 0.81, 0.07, 0.01, 0.00, 0.00, 0.19),
    row(35, "Token 4", 0.05, 1.98, 0.21, 0.02, 0.00, 0.00, 0.34),
    row(36, "Total Token", 0.09, 1.71, 0.18, 0.02, 0.00, 0.00, 0.30),
    row(37, "Sentence", 0.04, 2.07, 0.24, 0.02, 0.00, 0.00, 0.36),
    row(38, "Reaction Time 1", 0.32, 1.00, 0.08, 0.01, 0.00, 0.00, 0.20),
    row(39, "Reaction Time 2", 0.001, 3.36, 0.56, 0.06, 0.57, 0.76, 0.01),
    row(40, "Reaction Time 3", 0.001, 3.36, 0.55, 0.05, 0.57, 0.76, 0.02),
    row(41, "Reaction Time 4", 0.01, 2.61, 0.37, 0.04, 0.02, 0.08, 0.35),
];

fn dof_for(id: u32) -> Dof {
    if id <= 11 {
        Dof::Infinite
    } else {
        Dof::Finite(151.0)
    }
}

/// The 41 observed p-values in table order.
pub fn observed_pvalues() -> Vec<f64> {
    PUBLISHED.iter().map(|r| r.observed_p).collect()
}

/// The case study as a study file: alpha 0.05, S = 5000 iterations,
/// N = 1000 prior draws, all four procedures, ratios derived from the
/// observed p-values.
pub fn needleman_study_file() -> StudyFile {
    StudyFile {
        schema_version: SCHEMA_VERSION,
        alpha: 0.05,
        s_iters: 5000,
        n_draws: 1000,
        hyper_rate: 1.0,
        seed: DEFAULT_SEED,
        methods: ["dp", "b", "h", "by"]
            .iter()
            .map(|s| s.parse().expect("method literals parse"))
            .collect(),
        shrinkage: None,
        tests: PUBLISHED
            .iter()
            .map(|r| TestEntry {
                id: r.id,
                label: r.label.to_string(),
                tail: crate::mv::TailType::TwoSided,
                dof: dof_for(r.id),
                effect_ratio: None,
                observed_p: Some(r.observed_p),
                derive_ratio: true,
                weight: None,
            })
            .collect(),
    }
}

/// The case study lowered to an engine configuration.
pub fn needleman_study() -> PowerStudyConfig {
    needleman_study_file()
        .to_config()
        .expect("the embedded study is valid")
}

/// One compared cell: the published value and the reproduced one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonCell {
    pub published: f64,
    pub reproduced: f64,
}

impl ComparisonCell {
    pub fn deviation(&self) -> f64 {
        (self.reproduced - self.published).abs()
    }
}

/// One row of the reproduction comparison, in table order.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub id: u32,
    pub label: &'static str,
    pub marg_pwr: ComparisonCell,
    pub p_weight: ComparisonCell,
    pub pr_sig: ComparisonCell,
    pub sig_chase: ComparisonCell,
}

/// The full comparison against the embedded published columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseStudyComparison {
    pub rows: Vec<ComparisonRow>,
}

impl CaseStudyComparison {
    /// Largest absolute deviation per column, in the order marginal
    /// power, weight, significance probability, chasing index.
    pub fn max_deviations(&self) -> [f64; 4] {
        let mut out = [0.0f64; 4];
        for row in &self.rows {
            out[0] = out[0].max(row.marg_pwr.deviation());
            out[1] = out[1].max(row.p_weight.deviation());
            out[2] = out[2].max(row.pr_sig.deviation());
            out[3] = out[3].max(row.sig_chase.deviation());
        }
        out
    }
}

/// Compare a reproduction run against the published columns. The report
/// must contain the unweighted Dirichlet-process method (the published
/// per-test columns are all DP quantities) and must have been run with
/// observed p-values present, so that the significance and chasing
/// columns exist.
pub fn compare_with_published(report: &PowerReport) -> Result<CaseStudyComparison> {
    let dp = report
        .method(Method::new(Procedure::DirichletProcess, false))
        .ok_or_else(|| {
            Error::Config("comparison needs the unweighted dirichlet-process method".into())
        })?;
    if dp.pmp.len() != PUBLISHED.len() {
        return Err(Error::DimensionMismatch {
            expected: PUBLISHED.len(),
            got: dp.pmp.len(),
        });
    }
    let observed = dp.observed_significance.as_ref().ok_or_else(|| {
        Error::Config("comparison needs observed p-values on every test".into())
    })?;
    let chase = dp
        .sig_chase
        .as_ref()
        .expect("sig_chase accompanies observed_significance");
    let rows = PUBLISHED
        .iter()
        .enumerate()
        .map(|(j, published)| ComparisonRow {
            id: published.id,
            label: published.label,
            marg_pwr: ComparisonCell {
                published: published.marg_pwr,
                reproduced: dp.pmp[j],
            },
            p_weight: ComparisonCell {
                published: published.p_weight,
                reproduced: dp.pvalue_weights[j],
            },
            pr_sig: ComparisonCell {
                published: published.pr_sig,
                reproduced: observed[j],
            },
            sig_chase: ComparisonCell {
                published: published.sig_chase,
                reproduced: chase[j],
            },
        })
        .collect();
    Ok(CaseStudyComparison { rows })
}

/// The weighted second pass: turn a first run's marginal powers into
/// p-value weights, install them on the tests, and rerun the weighted
/// variant of every selected procedure. This is how the published
/// weighted significance column is produced.
pub fn weighted_pass(config: &PowerStudyConfig, pmp: &[f64]) -> Result<PowerReport> {
    if pmp.len() != config.m() {
        return Err(Error::DimensionMismatch {
            expected: config.m(),
            got: pmp.len(),
        });
    }
    let weights = pvalue_weights(pmp)?;
    let mut weighted = config.clone();
    for (test, w) in weighted.tests.iter_mut().zip(&weights) {
        test.weight = *w;
    }
    weighted.methods = config
        .methods
        .iter()
        .map(|m| Method::new(m.procedure, true))
        .collect();
    // Deduplicate in case the caller already mixed weighted variants in.
    weighted.methods.dedup();
    run_power_analysis(&weighted)
}

/// One point of the shrinkage sensitivity sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub shrinkage: f64,
    pub report: PowerReport,
}

/// Rerun the study under each shrinkage factor, reusing the base seed so
/// the sweep points share their random numbers and differences are due
/// to shrinkage alone.
pub fn shrinkage_sweep(base: &PowerStudyConfig, factors: &[f64]) -> Result<Vec<SweepPoint>> {
    factors
        .iter()
        .map(|&s| {
            let mut config = base.clone();
            config.shrinkage = vec![s; base.m()];
            Ok(SweepPoint {
                shrinkage: s,
                report: run_power_analysis(&config)?,
            })
        })
        .collect()
}

/// Average-power curve of a sweep for one method, for the plot series.
pub fn sweep_series(points: &[SweepPoint], method: Method) -> Result<Vec<(f64, f64)>> {
    points
        .iter()
        .map(|p| {
            let report: &MethodReport = p
                .report
                .method(method)
                .ok_or_else(|| Error::Config(format!("sweep did not run method {method}")))?;
            Ok((p.shrinkage, report.pap))
        })
        .collect()
}
