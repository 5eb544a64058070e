//! The command-line surface: argument definitions, dispatch, and the
//! table and report renderers. Every command is a pure function of its
//! input files, flags, and seed, so reruns write byte-identical output
//! (timing is opt-in for exactly this reason).

use crate::case_study::{
    compare_with_published, needleman_study_file, shrinkage_sweep, sweep_series, weighted_pass,
    CaseStudyComparison, SweepPoint, PUBLISHED, SHRINKAGE_SWEEP,
};
use crate::dp::{dp_prsig, DpRule};
use crate::mtp::{run_mtp, Method, MtpDecision, Procedure};
use crate::power::{
    run_power_analysis, sample_size_search, CorrelationModel, DofGrowth, DpDrawMode,
    MethodReport, PowerStudyConfig, SampleSizeResult, SampleSizeTarget,
};
use crate::rng::{stream_rng, STREAM_OBSERVED};
use crate::study::{
    config_hash, read_correlation_csv, read_family_csv, read_study, FamilyTable, PlotSeries,
    ReportFile, ShrinkageSpec, StudyFile,
};
use crate::{Error, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Debug, Parser)]
#[command(
    name = "mtp-power",
    version,
    about = "Bayesian predictive power analysis for multiple-testing procedures"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Apply classical procedures (Bonferroni, Holm, Benjamini-Yekutieli)
    /// to a family of observed p-values
    Mtp(MtpArgs),
    /// Dirichlet-process significance probabilities for a family of
    /// observed p-values
    Dpmtp(DpmtpArgs),
    /// Full predictive power analysis of a study file
    Power(PowerArgs),
    /// Reproduce the bundled 41-test lead-exposure case study
    #[command(name = "case-study")]
    CaseStudy(CaseStudyArgs),
    /// Smallest sample-size multiplier meeting marginal power targets
    #[command(name = "sample-size")]
    SampleSize(SampleSizeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    /// Human-readable aligned tables
    Table,
    /// Machine-readable JSON report
    Report,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Write output to this file instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Table)]
    pub format: OutputFormat,
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_target(s: &str) -> std::result::Result<SampleSizeTarget, String> {
    let (id, power) = match s.split_once('=') {
        Some((id, p)) => {
            let id = id
                .trim()
                .parse()
                .map_err(|_| format!("bad test id in target {s:?}"))?;
            (Some(id), p)
        }
        None => (None, s),
    };
    let power: f64 = power
        .trim()
        .parse()
        .map_err(|_| format!("bad power in target {s:?}"))?;
    Ok(SampleSizeTarget { test_id: id, power })
}

#[derive(Debug, Args)]
pub struct MtpArgs {
    /// Family CSV: a `p` column, optionally `id`, `label`, `weight`
    pub family: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Procedure to apply: b, h, or by, each optionally :weighted.
    /// Repeatable; defaults to all three unweighted.
    #[arg(long = "method", value_parser = parse_method)]
    pub methods: Vec<Method>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct DpmtpArgs {
    /// Family CSV: a `p` column, optionally `id`, `label`, `weight`
    pub family: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Prior draws per p-value family
    #[arg(long = "n-draws", default_value_t = 1000)]
    pub n_draws: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Rate of the exponential prior on the total prior mass
    #[arg(long = "hyper-rate", default_value_t = 1.0)]
    pub hyper_rate: f64,
    /// Use the family's weight column instead of uniform weights
    #[arg(long)]
    pub weighted: bool,
    /// Evaluate each rank against its own raw threshold instead of the
    /// step-up rule
    #[arg(long = "per-rank-dp")]
    pub per_rank_dp: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct PowerArgs {
    /// Study file (TOML)
    pub study: PathBuf,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Override the study's methods: b, h, by, dp, each optionally
    /// :weighted. Repeatable.
    #[arg(long = "method", value_parser = parse_method)]
    pub methods: Vec<Method>,
    /// Outer sampling iterations
    #[arg(long = "s-iters")]
    pub s_iters: Option<u64>,
    /// Dirichlet-process prior draws per iteration
    #[arg(long = "n-draws")]
    pub n_draws: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (1 = serial; 0 = one per core); never changes results
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Shrink every anticipated effect by this factor
    #[arg(long)]
    pub shrinkage: Option<f64>,
    /// Sample one prior batch up front and reuse it across iterations
    #[arg(long = "shared-dp-draws")]
    pub shared_dp_draws: bool,
    /// Report the literal squared-distance chasing index instead of the
    /// Hellinger distance
    #[arg(long = "literal-sigchase")]
    pub literal_sigchase: bool,
    #[arg(long = "per-rank-dp")]
    pub per_rank_dp: bool,
    /// Fix the correlation matrix to the one in this CSV instead of
    /// resampling it uniformly
    #[arg(long = "fixed-correlation")]
    pub fixed_correlation: Option<PathBuf>,
    /// Record wall time in the report (makes reruns differ)
    #[arg(long)]
    pub timing: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct CaseStudyArgs {
    /// Rerun under the published shrinkage factors 0, 1/4, 1/2, 3/4
    #[arg(long)]
    pub sweep: bool,
    /// Rerun weighted variants with weights from the first pass's
    /// marginal powers
    #[arg(long = "weighted-pass")]
    pub weighted_pass: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "s-iters")]
    pub s_iters: Option<u64>,
    #[arg(long = "n-draws")]
    pub n_draws: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    #[arg(long = "shared-dp-draws")]
    pub shared_dp_draws: bool,
    #[arg(long = "literal-sigchase")]
    pub literal_sigchase: bool,
    #[arg(long = "per-rank-dp")]
    pub per_rank_dp: bool,
    #[arg(long)]
    pub timing: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DofGrowthArg {
    Linear,
    Fixed,
}

#[derive(Debug, Args)]
pub struct SampleSizeArgs {
    /// Study file (TOML)
    pub study: PathBuf,
    /// Marginal power target: "0.8" for every test, "39=0.8" for one.
    /// Repeatable; the strictest demand per test wins.
    #[arg(long = "target", value_parser = parse_target, required = true)]
    pub targets: Vec<SampleSizeTarget>,
    /// Upper end of the multiplier search range
    #[arg(long = "kappa-max", default_value_t = 8.0)]
    pub kappa_max: f64,
    /// Whether finite degrees of freedom scale with the multiplier
    #[arg(long = "dof-growth", value_enum, default_value_t = DofGrowthArg::Linear)]
    pub dof_growth: DofGrowthArg,
    #[arg(long = "s-iters")]
    pub s_iters: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Search with this method (default: the study's first method)
    #[arg(long = "method", value_parser = parse_method)]
    pub method: Option<Method>,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Run a parsed invocation and write its output.
pub fn run(cli: Cli) -> Result<()> {
    let (text, output) = match &cli.command {
        Command::Mtp(args) => (cmd_mtp(args)?, &args.output),
        Command::Dpmtp(args) => (cmd_dpmtp(args)?, &args.output),
        Command::Power(args) => (cmd_power(args)?, &args.output),
        Command::CaseStudy(args) => (cmd_case_study(args)?, &args.output),
        Command::SampleSize(args) => (cmd_sample_size(args)?, &args.output),
    };
    match &output.out {
        Some(path) => std::fs::write(path, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(())
}

/// Process exit code for an error: 3 for an unreachable sample-size
/// target, 1 for output I/O failures, 2 for everything a user can fix in
/// their inputs.
pub fn exit_code(error: &Error) -> i32 {
    match error {
        Error::Unreachable { .. } => 3,
        Error::Io(_) => 1,
        _ => 2,
    }
}

// Aligned fixed-width table. Columns flagged left-align hold text; the
// rest right-align, which keeps decimal columns readable.
fn render_table(headers: &[&str], left: &[bool], rows: &[Vec<String>]) -> String {
    let cols = headers.len();
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (c, cell) in row.iter().enumerate() {
            widths[c] = widths[c].max(cell.len());
        }
    }
    let mut out = String::new();
    let mut emit = |cells: &[String]| {
        for (c, cell) in cells.iter().enumerate() {
            if c > 0 {
                out.push_str("  ");
            }
            if left[c] {
                out.push_str(&format!("{cell:<width$}", width = widths[c]));
            } else {
                out.push_str(&format!("{cell:>width$}", width = widths[c]));
            }
        }
        while out.ends_with(' ') {
            out.pop();
        }
        out.push('\n');
    };
    let header_cells: Vec<String> = headers.iter().map(|h| h.to_string()).collect();
    emit(&header_cells);
    let rule: Vec<String> = (0..cols).map(|c| "-".repeat(widths[c])).collect();
    emit(&rule);
    for row in rows {
        emit(row);
    }
    out
}

fn fmt_p(v: f64) -> String {
    format!("{v}")
}

fn f4(v: f64) -> String {
    format!("{v:.4}")
}

fn f6(v: f64) -> String {
    format!("{v:.6}")
}

fn yes_no(v: bool) -> &'static str {
    if v {
        "yes"
    } else {
        "no"
    }
}

// Per-test (rank, threshold, rejected) of a decision, in original order.
fn decision_rows(table: &FamilyTable, dec: &MtpDecision) -> Vec<(u64, f64, bool)> {
    let m = table.len();
    let mut inverse = vec![0usize; m];
    for (rank, &orig) in dec.sort_permutation.iter().enumerate() {
        inverse[orig] = rank;
    }
    (0..m)
        .map(|j| {
            let rank = inverse[j];
            (
                (rank + 1) as u64,
                dec.thresholds.deltas()[rank],
                dec.rejects(j),
            )
        })
        .collect()
}

fn cmd_mtp(args: &MtpArgs) -> Result<String> {
    let table = read_family_csv(&args.family)?;
    let methods = if args.methods.is_empty() {
        vec![
            Method::new(Procedure::Bonferroni, false),
            Method::new(Procedure::Holm, false),
            Method::new(Procedure::BenjaminiYekutieli, false),
        ]
    } else {
        args.methods.clone()
    };
    let mut decisions = Vec::new();
    for &method in &methods {
        let family = table.family(method.weighted)?;
        decisions.push((method, run_mtp(&family, args.alpha, method)?));
    }
    match args.output.format {
        OutputFormat::Report => {
            let methods_json: Vec<_> = decisions
                .iter()
                .map(|(method, dec)| {
                    let rows = decision_rows(&table, dec);
                    json!({
                        "method": method.to_string(),
                        "rejected_ids": dec
                            .rejected_ids
                            .iter()
                            .map(|&j| table.ids[j])
                            .collect::<Vec<_>>(),
                        "thresholds_clamped": dec.thresholds.was_clamped(),
                        "tests": table.ids.iter().enumerate().map(|(j, &id)| {
                            json!({
                                "id": id,
                                "label": table.labels[j],
                                "p": table.pvalues[j],
                                "rank": rows[j].0,
                                "threshold": rows[j].1,
                                "rejected": rows[j].2,
                            })
                        }).collect::<Vec<_>>(),
                    })
                })
                .collect();
            let doc = json!({
                "alpha": args.alpha,
                "methods": methods_json,
            });
            Ok(format!("{}\n", serde_json::to_string_pretty(&doc).expect("json")))
        }
        OutputFormat::Table => {
            let mut out = String::new();
            for (method, dec) in &decisions {
                let rejected: Vec<String> = dec
                    .rejected_ids
                    .iter()
                    .map(|&j| table.ids[j].to_string())
                    .collect();
                writeln!(
                    out,
                    "procedure {method} at alpha {}: rejects {} of {}{}{}",
                    args.alpha,
                    dec.rejection_count,
                    table.len(),
                    if rejected.is_empty() { "" } else { ": " },
                    rejected.join(", ")
                )
                .expect("write to string");
                let rows_info = decision_rows(&table, dec);
                let rows: Vec<Vec<String>> = (0..table.len())
                    .map(|j| {
                        vec![
                            table.ids[j].to_string(),
                            table.labels[j].clone(),
                            fmt_p(table.pvalues[j]),
                            rows_info[j].0.to_string(),
                            f6(rows_info[j].1),
                            yes_no(rows_info[j].2).to_string(),
                        ]
                    })
                    .collect();
                out.push_str(&render_table(
                    &["id", "label", "p", "rank", "threshold", "reject"],
                    &[false, true, false, false, false, false],
                    &rows,
                ));
                out.push('\n');
            }
            Ok(out)
        }
    }
}

fn cmd_dpmtp(args: &DpmtpArgs) -> Result<String> {
    let table = read_family_csv(&args.family)?;
    let family = table.family(args.weighted)?;
    let rule = if args.per_rank_dp {
        DpRule::PerRank
    } else {
        DpRule::StepUp
    };
    let mut rng = stream_rng(args.seed, STREAM_OBSERVED);
    let prsig = dp_prsig(
        &family,
        args.alpha,
        args.n_draws,
        args.hyper_rate,
        args.weighted,
        rule,
        &mut rng,
    )?;
    let probs = prsig.probabilities_original_order();
    match args.output.format {
        OutputFormat::Report => {
            let doc = json!({
                "alpha": args.alpha,
                "n_draws": args.n_draws,
                "seed": args.seed,
                "hyper_rate": args.hyper_rate,
                "weighted": args.weighted,
                "rule": if args.per_rank_dp { "per-rank" } else { "step-up" },
                "clamp_events": prsig.clamp_events(),
                "tests": table.ids.iter().enumerate().map(|(j, &id)| {
                    json!({
                        "id": id,
                        "label": table.labels[j],
                        "p": table.pvalues[j],
                        "pr_sig": probs[j],
                    })
                }).collect::<Vec<_>>(),
            });
            Ok(format!("{}\n", serde_json::to_string_pretty(&doc).expect("json")))
        }
        OutputFormat::Table => {
            let mut out = String::new();
            writeln!(
                out,
                "dirichlet-process significance probabilities: alpha {}, N = {}, seed {}{}",
                args.alpha,
                args.n_draws,
                args.seed,
                if args.weighted { ", weighted" } else { "" }
            )
            .expect("write to string");
            writeln!(out, "threshold clamp events: {}", prsig.clamp_events())
                .expect("write to string");
            let rows: Vec<Vec<String>> = (0..table.len())
                .map(|j| {
                    vec![
                        table.ids[j].to_string(),
                        table.labels[j].clone(),
                        fmt_p(table.pvalues[j]),
                        f4(probs[j]),
                    ]
                })
                .collect();
            out.push_str(&render_table(
                &["id", "label", "p", "PrSig"],
                &[false, true, false, false],
                &rows,
            ));
            Ok(out)
        }
    }
}

struct EngineFlags {
    threads: usize,
    shared_dp_draws: bool,
    literal_sigchase: bool,
    per_rank_dp: bool,
    fixed_correlation: Option<PathBuf>,
}

fn apply_engine_flags(config: &mut PowerStudyConfig, flags: &EngineFlags) -> Result<()> {
    config.threads = flags.threads;
    config.dp_draw_mode = if flags.shared_dp_draws {
        DpDrawMode::Shared
    } else {
        DpDrawMode::Fresh
    };
    config.dp_rule = if flags.per_rank_dp {
        DpRule::PerRank
    } else {
        DpRule::StepUp
    };
    config.literal_sig_chase = flags.literal_sigchase;
    if let Some(path) = &flags.fixed_correlation {
        config.correlation = CorrelationModel::Fixed(read_correlation_csv(path)?);
    }
    Ok(())
}

fn render_method_report(out: &mut String, mr: &MethodReport, ids: &[u32], labels: &[String]) {
    writeln!(out, "method {}", mr.method).expect("write to string");
    writeln!(
        out,
        "  average power {}  disjunctive {}  conjunctive {}",
        f4(mr.pap),
        f4(mr.pdp),
        f4(mr.pcp)
    )
    .expect("write to string");
    let max_var = mr
        .pmp_variance
        .iter()
        .map(|v| v.estimate)
        .fold(0.0f64, f64::max);
    writeln!(
        out,
        "  mc variance: max per-test {:.2e}, bound 1/(4S) = {}",
        max_var,
        f6(mr.pmp_variance[0].bound)
    )
    .expect("write to string");
    if mr.clamp_events > 0 {
        writeln!(out, "  threshold clamp events: {}", mr.clamp_events).expect("write to string");
    }
    let observed = mr.observed_significance.as_ref();
    let chase = mr.sig_chase.as_ref();
    let mut headers = vec!["id", "label", "MargPwr", "weight"];
    let mut left = vec![false, true, false, false];
    if observed.is_some() {
        headers.push("PrSig");
        headers.push("sigChase");
        left.push(false);
        left.push(false);
    }
    let rows: Vec<Vec<String>> = (0..mr.pmp.len())
        .map(|j| {
            let mut row = vec![
                ids[j].to_string(),
                labels[j].clone(),
                f4(mr.pmp[j]),
                f4(mr.pvalue_weights[j]),
            ];
            if let (Some(obs), Some(ch)) = (observed, chase) {
                row.push(f4(obs[j]));
                row.push(f4(ch[j]));
            }
            row
        })
        .collect();
    out.push_str(&render_table(&headers, &left, &rows));
    out.push('\n');
}

fn render_report_tables(file: &ReportFile, study: &StudyFile) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "predictive power analysis: {} tests, S = {}, N = {}, seed {}",
        study.tests.len(),
        file.report.s_iters,
        file.report.n_draws,
        file.report.seed
    )
    .expect("write to string");
    writeln!(out, "config sha256 {}", file.provenance.config_hash).expect("write to string");
    if let Some(ms) = file.provenance.wall_ms {
        writeln!(out, "wall time {ms} ms").expect("write to string");
    }
    out.push('\n');
    let ids: Vec<u32> = study.tests.iter().map(|t| t.id).collect();
    let labels: Vec<String> = study.tests.iter().map(|t| t.label.clone()).collect();
    for mr in &file.report.methods {
        render_method_report(&mut out, mr, &ids, &labels);
    }
    for series in &file.plots {
        writeln!(out, "series: {}", series.name).expect("write to string");
        let rows: Vec<Vec<String>> = series
            .x
            .iter()
            .zip(&series.y)
            .map(|(&x, &y)| vec![fmt_p(x), f4(y)])
            .collect();
        out.push_str(&render_table(&["x", "y"], &[false, false], &rows));
        out.push('\n');
    }
    out
}

fn cmd_power(args: &PowerArgs) -> Result<String> {
    let mut study = read_study(&args.study)?;
    if let Some(alpha) = args.alpha {
        study.alpha = alpha;
    }
    if !args.methods.is_empty() {
        study.methods = args.methods.clone();
    }
    if let Some(v) = args.s_iters {
        study.s_iters = v;
    }
    if let Some(v) = args.n_draws {
        study.n_draws = v;
    }
    if let Some(v) = args.seed {
        study.seed = v;
    }
    if let Some(s) = args.shrinkage {
        study.shrinkage = Some(ShrinkageSpec::Scalar(s));
    }
    let mut config = study.to_config()?;
    apply_engine_flags(
        &mut config,
        &EngineFlags {
            threads: args.threads,
            shared_dp_draws: args.shared_dp_draws,
            literal_sigchase: args.literal_sigchase,
            per_rank_dp: args.per_rank_dp,
            fixed_correlation: args.fixed_correlation.clone(),
        },
    )?;
    let start = Instant::now();
    let report = run_power_analysis(&config)?;
    let mut file = ReportFile::new(&study, report)?;
    if args.timing {
        file.provenance.wall_ms = Some(start.elapsed().as_millis() as u64);
    }
    match args.output.format {
        OutputFormat::Report => Ok(format!("{}\n", file.to_json()?)),
        OutputFormat::Table => Ok(render_report_tables(&file, &study)),
    }
}

fn comparison_json(comparison: &CaseStudyComparison) -> serde_json::Value {
    let cell = |c: &crate::case_study::ComparisonCell| {
        json!({
            "published": c.published,
            "reproduced": c.reproduced,
            "deviation": c.deviation(),
        })
    };
    json!(comparison
        .rows
        .iter()
        .map(|row| {
            json!({
                "id": row.id,
                "label": row.label,
                "marg_pwr": cell(&row.marg_pwr),
                "p_weight": cell(&row.p_weight),
                "pr_sig": cell(&row.pr_sig),
                "sig_chase": cell(&row.sig_chase),
            })
        })
        .collect::<Vec<_>>())
}

fn render_comparison_table(comparison: &CaseStudyComparison) -> String {
    let mut out = String::new();
    out.push_str("comparison with the published columns (dp):\n");
    let rows: Vec<Vec<String>> = comparison
        .rows
        .iter()
        .map(|row| {
            vec![
                row.id.to_string(),
                row.label.to_string(),
                format!("{:.2}", row.marg_pwr.published),
                f4(row.marg_pwr.reproduced),
                format!("{:.2}", row.p_weight.published),
                f4(row.p_weight.reproduced),
                format!("{:.2}", row.pr_sig.published),
                f4(row.pr_sig.reproduced),
                format!("{:.2}", row.sig_chase.published),
                f4(row.sig_chase.reproduced),
            ]
        })
        .collect();
    out.push_str(&render_table(
        &[
            "id", "label", "MargPwr", "got", "weight", "got", "PrSig", "got", "sigChase", "got",
        ],
        &[false, true, false, false, false, false, false, false, false, false],
        &rows,
    ));
    let max = comparison.max_deviations();
    writeln!(
        out,
        "max deviations: MargPwr {} weight {} PrSig {} sigChase {}",
        f4(max[0]),
        f4(max[1]),
        f4(max[2]),
        f4(max[3])
    )
    .expect("write to string");
    out
}

fn sweep_summary(points: &[SweepPoint], method: Method) -> Result<Vec<(f64, f64, f64, f64)>> {
    points
        .iter()
        .map(|p| {
            let mr = p
                .report
                .method(method)
                .ok_or_else(|| Error::Config(format!("sweep did not run method {method}")))?;
            Ok((p.shrinkage, mr.pap, mr.pdp, mr.pcp))
        })
        .collect()
}

fn cmd_case_study(args: &CaseStudyArgs) -> Result<String> {
    let mut study = needleman_study_file();
    if let Some(v) = args.seed {
        study.seed = v;
    }
    if let Some(v) = args.s_iters {
        study.s_iters = v;
    }
    if let Some(v) = args.n_draws {
        study.n_draws = v;
    }
    let mut config = study.to_config()?;
    apply_engine_flags(
        &mut config,
        &EngineFlags {
            threads: args.threads,
            shared_dp_draws: args.shared_dp_draws,
            literal_sigchase: args.literal_sigchase,
            per_rank_dp: args.per_rank_dp,
            fixed_correlation: None,
        },
    )?;
    let start = Instant::now();
    let report = run_power_analysis(&config)?;
    let comparison = compare_with_published(&report)?;
    let dp_method: Method = "dp".parse().expect("method literal");
    let dp_pmp = report
        .method(dp_method)
        .expect("case study always runs dp")
        .pmp
        .clone();
    let weighted = if args.weighted_pass {
        Some(weighted_pass(&config, &dp_pmp)?)
    } else {
        None
    };
    let sweep = if args.sweep {
        let points = shrinkage_sweep(&config, &SHRINKAGE_SWEEP)?;
        Some(points)
    } else {
        None
    };
    let mut file = ReportFile::new(&study, report)?;
    if let Some(points) = &sweep {
        let series = sweep_series(points, dp_method)?;
        file.plots.push(PlotSeries {
            name: "dp average power vs shrinkage".into(),
            x: series.iter().map(|&(x, _)| x).collect(),
            y: series.iter().map(|&(_, y)| y).collect(),
        });
        let summary = sweep_summary(points, dp_method)?;
        file.plots.push(PlotSeries {
            name: "dp disjunctive power vs shrinkage".into(),
            x: summary.iter().map(|&(x, ..)| x).collect(),
            y: summary.iter().map(|&(_, _, d, _)| d).collect(),
        });
    }
    if args.timing {
        file.provenance.wall_ms = Some(start.elapsed().as_millis() as u64);
    }
    match args.output.format {
        OutputFormat::Report => {
            let doc = json!({
                "report_file": serde_json::to_value(&file).expect("report serializes"),
                "comparison": comparison_json(&comparison),
                "weighted_report": weighted
                    .as_ref()
                    .map(|w| serde_json::to_value(w).expect("report serializes")),
                "sweep": sweep.as_ref().map(|points| {
                    let summary = sweep_summary(points, dp_method).expect("dp ran in sweep");
                    json!(summary
                        .iter()
                        .map(|&(s, pap, pdp, pcp)| json!({
                            "shrinkage": s,
                            "pap": pap,
                            "pdp": pdp,
                            "pcp": pcp,
                        }))
                        .collect::<Vec<_>>())
                }),
            });
            Ok(format!("{}\n", serde_json::to_string_pretty(&doc).expect("json")))
        }
        OutputFormat::Table => {
            let mut out = String::new();
            writeln!(
                out,
                "case study: {} tests, S = {}, N = {}, seed {}",
                study.tests.len(),
                study.s_iters,
                study.n_draws,
                study.seed
            )
            .expect("write to string");
            writeln!(out, "config sha256 {}", file.provenance.config_hash)
                .expect("write to string");
            if let Some(ms) = file.provenance.wall_ms {
                writeln!(out, "wall time {ms} ms").expect("write to string");
            }
            out.push('\n');
            out.push_str("method averages:\n");
            let rows: Vec<Vec<String>> = file
                .report
                .methods
                .iter()
                .map(|mr| {
                    vec![
                        mr.method.to_string(),
                        f4(mr.pap),
                        f4(mr.pdp),
                        f4(mr.pcp),
                    ]
                })
                .collect();
            out.push_str(&render_table(
                &["method", "avg", "disj", "conj"],
                &[true, false, false, false],
                &rows,
            ));
            out.push('\n');
            out.push_str(&render_comparison_table(&comparison));
            if let Some(weighted) = &weighted {
                out.push('\n');
                out.push_str("weighted pass (weights from dp marginal powers):\n");
                let rows: Vec<Vec<String>> = weighted
                    .methods
                    .iter()
                    .map(|mr| {
                        vec![
                            mr.method.to_string(),
                            f4(mr.pap),
                            f4(mr.pdp),
                            f4(mr.pcp),
                        ]
                    })
                    .collect();
                out.push_str(&render_table(
                    &["method", "avg", "disj", "conj"],
                    &[true, false, false, false],
                    &rows,
                ));
                let dpw: Method = "dp:weighted".parse().expect("method literal");
                if let Some(mr) = weighted.method(dpw) {
                    if let Some(obs) = &mr.observed_significance {
                        out.push('\n');
                        out.push_str("weighted significance probabilities vs published:\n");
                        let rows: Vec<Vec<String>> = PUBLISHED
                            .iter()
                            .enumerate()
                            .map(|(j, row)| {
                                vec![
                                    row.id.to_string(),
                                    row.label.to_string(),
                                    format!("{:.2}", row.pr_sig_weighted),
                                    f4(obs[j]),
                                ]
                            })
                            .collect();
                        out.push_str(&render_table(
                            &["id", "label", "PrSig.w", "got"],
                            &[false, true, false, false],
                            &rows,
                        ));
                    }
                }
            }
            if let Some(points) = &sweep {
                out.push('\n');
                out.push_str("shrinkage sweep (dp):\n");
                let summary = sweep_summary(points, dp_method)?;
                let rows: Vec<Vec<String>> = summary
                    .iter()
                    .map(|&(s, pap, pdp, pcp)| {
                        vec![format!("{s:.2}"), f4(pap), f4(pdp), f4(pcp)]
                    })
                    .collect();
                out.push_str(&render_table(
                    &["shrinkage", "avg", "disj", "conj"],
                    &[false, false, false, false],
                    &rows,
                ));
            }
            Ok(out)
        }
    }
}

fn cmd_sample_size(args: &SampleSizeArgs) -> Result<String> {
    let mut study = read_study(&args.study)?;
    if let Some(v) = args.s_iters {
        study.s_iters = v;
    }
    if let Some(v) = args.seed {
        study.seed = v;
    }
    if let Some(method) = args.method {
        study.methods = vec![method];
    }
    let mut config = study.to_config()?;
    config.threads = args.threads;
    let growth = match args.dof_growth {
        DofGrowthArg::Linear => DofGrowth::Linear,
        DofGrowthArg::Fixed => DofGrowth::Fixed,
    };
    let result: SampleSizeResult =
        sample_size_search(&config, &args.targets, args.kappa_max, growth)?;
    let scaled_dof = |dof: crate::Dof| match (dof, growth) {
        (crate::Dof::Finite(v), DofGrowth::Linear) => crate::Dof::Finite(v * result.kappa),
        (d, _) => d,
    };
    match args.output.format {
        OutputFormat::Report => {
            let doc = json!({
                "kappa": result.kappa,
                "kappa_max": args.kappa_max,
                "method": config.methods[0].to_string(),
                "dof_growth": match growth {
                    DofGrowth::Linear => "linear",
                    DofGrowth::Fixed => "fixed",
                },
                "config_hash": config_hash(&study)?,
                "seed": config.seed,
                "achieved": result.achieved.iter().map(|&(id, power)| {
                    let test = config.tests.iter().find(|t| t.id == id).expect("id from config");
                    json!({
                        "id": id,
                        "label": test.label,
                        "power": power,
                        "dof": test.dof.to_string(),
                        "scaled_dof": scaled_dof(test.dof).to_string(),
                    })
                }).collect::<Vec<_>>(),
            });
            Ok(format!("{}\n", serde_json::to_string_pretty(&doc).expect("json")))
        }
        OutputFormat::Table => {
            let mut out = String::new();
            writeln!(
                out,
                "sample-size search with method {}: kappa range [1, {}], dof growth {}",
                config.methods[0],
                args.kappa_max,
                match growth {
                    DofGrowth::Linear => "linear",
                    DofGrowth::Fixed => "fixed",
                }
            )
            .expect("write to string");
            writeln!(
                out,
                "smallest multiplier meeting every target: kappa = {:.3}",
                result.kappa
            )
            .expect("write to string");
            writeln!(
                out,
                "scale each test's sample size by kappa (effect ratios grow by sqrt kappa)"
            )
            .expect("write to string");
            out.push('\n');
            let rows: Vec<Vec<String>> = result
                .achieved
                .iter()
                .map(|&(id, power)| {
                    let test = config
                        .tests
                        .iter()
                        .find(|t| t.id == id)
                        .expect("id from config");
                    vec![
                        id.to_string(),
                        test.label.clone(),
                        f4(power),
                        test.dof.to_string(),
                        scaled_dof(test.dof).to_string(),
                    ]
                })
                .collect();
            out.push_str(&render_table(
                &["id", "label", "power", "dof", "scaled dof"],
                &[false, true, false, false, false],
                &rows,
            ));
            Ok(out)
        }
    }
}
