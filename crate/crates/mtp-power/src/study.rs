//! File formats: the TOML study file describing a power analysis, the
//! flat CSV family of bare p-values for single-shot procedure runs, and
//! the JSON report that a power run emits.
//!
//! Parsing is strict: unknown fields, duplicate ids, and malformed
//! numbers are schema errors with positions where the underlying parser
//! provides them. A parsed study serializes back to an equivalent file
//! (parse of the output equals the original parse), which is what lets a
//! report's provenance hash stand for the whole configuration.

use crate::mtp::{Method, PValueFamily};
use crate::mv::{stat_from_pvalue, TailType};
use crate::power::{PowerReport, PowerStudyConfig, TestSpec};
use crate::special::Dof;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::Read;
use std::path::Path;

/// Version tag every study and report file carries. Readers reject other
/// versions outright rather than guessing at field semantics.
pub const SCHEMA_VERSION: u32 = 1;

fn default_alpha() -> f64 {
    0.05
}
fn default_s_iters() -> u64 {
    5000
}
fn default_n_draws() -> u64 {
    1000
}
fn default_hyper_rate() -> f64 {
    1.0
}
fn default_tail() -> TailType {
    TailType::TwoSided
}
fn default_methods() -> Vec<Method> {
    vec![Method::new(crate::mtp::Procedure::DirichletProcess, false)]
}
fn is_false(v: &bool) -> bool {
    !v
}

/// Shrinkage as written in a study file: one factor for every test, or a
/// per-test list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ShrinkageSpec {
    Scalar(f64),
    PerTest(Vec<f64>),
}

/// One `[[tests]]` block. The anticipated effect comes from exactly one
/// source: an explicit `effect_ratio`, or `derive_ratio = true` which
/// back-solves the ratio from `observed_p` through the test's own tail
/// and degrees of freedom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestEntry {
    pub id: u32,
    pub label: String,
    #[serde(default = "default_tail")]
    pub tail: TailType,
    pub dof: Dof,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effect_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed_p: Option<f64>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub derive_ratio: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

/// A complete study file. Omitted scalars take the defaults of
/// [`PowerStudyConfig`]: alpha 0.05, 5000 iterations, 1000 prior draws,
/// unit mass rate, seed 0, the Dirichlet-process method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyFile {
    pub schema_version: u32,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_s_iters")]
    pub s_iters: u64,
    #[serde(default = "default_n_draws")]
    pub n_draws: u64,
    #[serde(default = "default_hyper_rate")]
    pub hyper_rate: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shrinkage: Option<ShrinkageSpec>,
    pub tests: Vec<TestEntry>,
}

impl StudyFile {
    /// Structural checks that do not need a full engine config: the
    /// version tag, nonempty unique tests, one ratio source per test,
    /// and a shrinkage list of the right length.
    pub fn check(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "unsupported schema_version {} (this tool reads version {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.tests.is_empty() {
            return Err(Error::Schema("the study has no tests".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for test in &self.tests {
            if !seen.insert(test.id) {
                return Err(Error::Schema(format!("duplicate test id {}", test.id)));
            }
            match (test.effect_ratio, test.derive_ratio) {
                (Some(_), true) => {
                    return Err(Error::Schema(format!(
                        "test {}: effect_ratio and derive_ratio are mutually exclusive",
                        test.id
                    )));
                }
                (None, true) if test.observed_p.is_none() => {
                    return Err(Error::Schema(format!(
                        "test {}: derive_ratio = true needs an observed_p to derive from",
                        test.id
                    )));
                }
                (None, false) => {
                    return Err(Error::Schema(format!(
                        "test {}: give an effect_ratio, or an observed_p with derive_ratio = true",
                        test.id
                    )));
                }
                _ => {}
            }
        }
        if let Some(ShrinkageSpec::PerTest(v)) = &self.shrinkage {
            if v.len() != self.tests.len() {
                return Err(Error::Schema(format!(
                    "shrinkage lists {} factors for {} tests",
                    v.len(),
                    self.tests.len()
                )));
            }
        }
        Ok(())
    }

    /// Lower the file to an engine configuration, deriving ratios from
    /// observed p-values where requested and running the engine's own
    /// validation at the end.
    pub fn to_config(&self) -> Result<PowerStudyConfig> {
        self.check()?;
        let tests = self
            .tests
            .iter()
            .map(|entry| {
                let effect_ratio = match entry.effect_ratio {
                    Some(r) => r,
                    None => {
                        let p = entry.observed_p.expect("check() demands observed_p here");
                        stat_from_pvalue(p, entry.dof, entry.tail).map_err(|e| {
                            Error::Schema(format!("test {}: {e}", entry.id))
                        })?
                    }
                };
                Ok(TestSpec {
                    id: entry.id,
                    label: entry.label.clone(),
                    tail: entry.tail,
                    dof: entry.dof,
                    effect_ratio,
                    weight: entry.weight.unwrap_or(1.0),
                    observed_p: entry.observed_p,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let m = tests.len();
        let mut config = PowerStudyConfig::new(tests, self.seed);
        config.alpha = self.alpha;
        config.s_iters = self.s_iters;
        config.n_draws = self.n_draws;
        config.hyper_rate = self.hyper_rate;
        config.methods = self.methods.clone();
        config.shrinkage = match &self.shrinkage {
            None => vec![0.0; m],
            Some(ShrinkageSpec::Scalar(s)) => vec![*s; m],
            Some(ShrinkageSpec::PerTest(v)) => v.clone(),
        };
        config.validate()?;
        Ok(config)
    }
}

pub fn parse_study(text: &str) -> Result<StudyFile> {
    let study: StudyFile = toml::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    study.check()?;
    Ok(study)
}

pub fn read_study(path: &Path) -> Result<StudyFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_study(&text).map_err(|e| match e {
        Error::Schema(msg) => Error::Schema(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn study_to_toml(study: &StudyFile) -> Result<String> {
    toml::to_string_pretty(study).map_err(|e| Error::Schema(e.to_string()))
}

/// Hex SHA-256 of the study's canonical serialization. Two configs hash
/// equal exactly when their parsed studies are equal, so the hash in a
/// report pins the full configuration, not the incidental formatting of
/// the input file.
pub fn config_hash(study: &StudyFile) -> Result<String> {
    let canonical = study_to_toml(study)?;
    let digest = Sha256::digest(canonical.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// A parsed family CSV: p-values with optional ids, labels, and weights.
/// Ids default to the 1-based row order.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyTable {
    pub ids: Vec<u32>,
    pub labels: Vec<String>,
    pub pvalues: Vec<f64>,
    pub weights: Option<Vec<f64>>,
}

impl FamilyTable {
    pub fn len(&self) -> usize {
        self.pvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pvalues.is_empty()
    }

    pub fn family(&self, weighted: bool) -> Result<PValueFamily> {
        if weighted {
            let weights = self.weights.as_ref().ok_or_else(|| {
                Error::Schema("weighted run asked of a family file with no weight column".into())
            })?;
            PValueFamily::weighted(self.pvalues.clone(), weights)
        } else {
            PValueFamily::unweighted(self.pvalues.clone())
        }
    }
}

/// Parse a family CSV. The header must name a `p` column; `id`, `label`,
/// and `weight` columns are recognized when present, and anything else is
/// rejected so a typo cannot silently drop a column.
pub fn parse_family_csv<R: Read>(reader: R) -> Result<FamilyTable> {
    let mut csv = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = csv
        .headers()
        .map_err(|e| Error::Schema(format!("family file header: {e}")))?
        .clone();
    let mut p_col = None;
    let mut id_col = None;
    let mut label_col = None;
    let mut weight_col = None;
    for (idx, name) in headers.iter().enumerate() {
        let slot = match name.to_ascii_lowercase().as_str() {
            "p" | "pvalue" | "p_value" => &mut p_col,
            "id" => &mut id_col,
            "label" => &mut label_col,
            "weight" => &mut weight_col,
            other => {
                return Err(Error::Schema(format!(
                    "family file has an unrecognized column {other:?}"
                )));
            }
        };
        if slot.replace(idx).is_some() {
            return Err(Error::Schema(format!(
                "family file repeats the {name:?} column"
            )));
        }
    }
    let p_col =
        p_col.ok_or_else(|| Error::Schema("family file needs a 'p' column".into()))?;

    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut pvalues = Vec::new();
    let mut weights = Vec::new();
    let mut seen_ids = std::collections::HashSet::new();
    for (row, record) in csv.records().enumerate() {
        let fallback_line = (row + 2) as u64;
        let record = record.map_err(|e| Error::Schema(format!("family file: {e}")))?;
        let line = record
            .position()
            .map(|p| p.line())
            .unwrap_or(fallback_line);
        let field = |col: usize| -> Result<&str> {
            record.get(col).ok_or_else(|| {
                Error::Schema(format!("line {line}: row has too few fields"))
            })
        };
        let p: f64 = field(p_col)?.parse().map_err(|_| {
            Error::Schema(format!("line {line}: cannot parse p-value {:?}", record.get(p_col).unwrap_or("")))
        })?;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Schema(format!(
                "line {line}: p-value {p} outside [0, 1]"
            )));
        }
        let id = match id_col {
            Some(col) => field(col)?.parse().map_err(|_| {
                Error::Schema(format!("line {line}: cannot parse id {:?}", record.get(col).unwrap_or("")))
            })?,
            None => (row + 1) as u32,
        };
        if !seen_ids.insert(id) {
            return Err(Error::Schema(format!("line {line}: duplicate id {id}")));
        }
        let label = match label_col {
            Some(col) => field(col)?.to_string(),
            None => format!("test {id}"),
        };
        if let Some(col) = weight_col {
            let w: f64 = field(col)?.parse().map_err(|_| {
                Error::Schema(format!("line {line}: cannot parse weight {:?}", record.get(col).unwrap_or("")))
            })?;
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Schema(format!(
                    "line {line}: weight {w} must be nonnegative and finite"
                )));
            }
            weights.push(w);
        }
        ids.push(id);
        labels.push(label);
        pvalues.push(p);
    }
    if pvalues.is_empty() {
        return Err(Error::Schema("family file has no tests".into()));
    }
    Ok(FamilyTable {
        ids,
        labels,
        pvalues,
        weights: weight_col.map(|_| weights),
    })
}

pub fn read_family_csv(path: &Path) -> Result<FamilyTable> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_family_csv(file).map_err(|e| match e {
        Error::Schema(msg) => Error::Schema(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Parse a bare correlation matrix: one row per line, entries separated
/// by commas or whitespace, `#` starting a comment line. Symmetry, unit
/// diagonal, and positive definiteness are checked downstream by the
/// matrix type itself.
pub fn parse_correlation(text: &str) -> Result<crate::corr::CorrelationMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let entries = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse().map_err(|_| {
                    Error::Schema(format!(
                        "line {}: cannot parse correlation entry {s:?}",
                        lineno + 1
                    ))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(entries);
    }
    let m = rows.len();
    if m == 0 {
        return Err(Error::Schema("correlation file has no rows".into()));
    }
    let mut entries = Vec::with_capacity(m * m);
    for row in &rows {
        if row.len() != m {
            return Err(Error::Schema(format!(
                "correlation matrix is not square: {m} rows but a row of {} entries",
                row.len()
            )));
        }
        entries.extend_from_slice(row);
    }
    crate::corr::CorrelationMatrix::new(m, entries)
}

pub fn read_correlation_csv(path: &Path) -> Result<crate::corr::CorrelationMatrix> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_correlation(&text).map_err(|e| match e {
        Error::Schema(msg) => Error::Schema(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Run provenance embedded in every report. `wall_ms` is null unless
/// timing was explicitly requested, keeping default reports byte-stable
/// across reruns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub wall_ms: Option<u64>,
}

/// A named curve attached to a report, e.g. average power against the
/// shrinkage factor or against the sample-size multiplier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSeries {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// The machine-readable output of a power run: the report itself plus
/// provenance and any plot series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub schema_version: u32,
    pub provenance: Provenance,
    pub report: PowerReport,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub plots: Vec<PlotSeries>,
}

impl ReportFile {
    pub fn new(study: &StudyFile, report: PowerReport) -> Result<Self> {
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            provenance: Provenance {
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                config_hash: config_hash(study)?,
                seed: report.seed,
                wall_ms: None,
            },
            report,
            plots: Vec::new(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Schema(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: Self =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "unsupported schema_version {} (this tool reads version {SCHEMA_VERSION})",
                file.schema_version
            )));
        }
        Ok(file)
    }
}
