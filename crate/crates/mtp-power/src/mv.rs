//! Multivariate normal and t vectors behind the Monte Carlo engine, plus
//! the scalar maps between test statistics and p-values.
//!
//! Draw-order contract (reproducibility depends on it): every sampler
//! consumes its generator in coordinate order. The normal part draws the
//! m components of z first; the t samplers then draw one chi-square per
//! finite-dof coordinate, ascending, and nothing for infinite-dof ones,
//! whose divisor is exactly 1.

use crate::corr::CholeskyFactor;
use crate::rng::{sample_chi_square, sample_std_normal};
use crate::special::{student_t_cdf, student_t_quantile, Dof};
use crate::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Which tail of the reference distribution a test rejects in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailType {
    Lower,
    Upper,
    TwoSided,
}

impl TailType {
    pub fn as_str(&self) -> &'static str {
        match self {
            TailType::Lower => "lower",
            TailType::Upper => "upper",
            TailType::TwoSided => "two-sided",
        }
    }
}

impl fmt::Display for TailType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TailType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lower" => Ok(TailType::Lower),
            "upper" => Ok(TailType::Upper),
            "two-sided" | "two_sided" => Ok(TailType::TwoSided),
            other => Err(Error::Config(format!(
                "unknown tail '{other}' (expected lower, upper, or two-sided)"
            ))),
        }
    }
}

/// y = mu + L z with z standard normal. The factor comes from a
/// correlation or covariance matrix; with a correlation factor the
/// marginals are N(mu_j, 1).
pub fn sample_mv_normal<R: Rng + ?Sized>(
    mu: &[f64],
    chol: &CholeskyFactor,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if mu.len() != chol.dim() {
        return Err(Error::DimensionMismatch {
            expected: chol.dim(),
            got: mu.len(),
        });
    }
    let z: Vec<f64> = (0..mu.len()).map(|_| sample_std_normal(rng)).collect();
    let mut y = chol.matvec(&z)?;
    for (yj, &mj) in y.iter_mut().zip(mu) {
        *yj += mj;
    }
    Ok(y)
}

/// One sqrt(V_j / nu_j) divisor per coordinate, V_j ~ chi-square(nu_j)
/// independent. Infinite dof contributes the constant 1 and consumes no
/// randomness.
fn hadamard_divisors<R: Rng + ?Sized>(dofs: &[Dof], rng: &mut R) -> Vec<f64> {
    dofs.iter()
        .map(|&dof| match sample_chi_square(dof, rng) {
            None => 1.0,
            Some(v) => {
                let nu = dof.finite().expect("Some(v) implies finite dof");
                (v / nu).sqrt()
            }
        })
        .collect()
}

/// Location-shifted multivariate t with per-coordinate degrees of
/// freedom: only the correlated noise is divided, so the center stays at
/// exactly `mu` and each deviation (y_j - mu_j) has a central t marginal.
pub fn sample_mvt_vector_dof<R: Rng + ?Sized>(
    mu: &[f64],
    chol: &CholeskyFactor,
    dofs: &[Dof],
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_dims(mu, chol, dofs)?;
    let z: Vec<f64> = (0..mu.len()).map(|_| sample_std_normal(rng)).collect();
    let noise = chol.matvec(&z)?;
    let div = hadamard_divisors(dofs, rng);
    Ok(mu
        .iter()
        .zip(noise.iter().zip(&div))
        .map(|(&mj, (&nj, &dj))| mj + nj / dj)
        .collect())
}

/// Statistic vector whose coordinates are noncentral t: center and noise
/// are divided together, so coordinate j is (mu_j + noise_j) / sqrt(V_j /
/// nu_j), marginally noncentral t(nu_j) with noncentrality mu_j. This is
/// the predictive law the power engine integrates over.
pub fn sample_mv_noncentral_t<R: Rng + ?Sized>(
    mu: &[f64],
    chol: &CholeskyFactor,
    dofs: &[Dof],
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_dims(mu, chol, dofs)?;
    let z: Vec<f64> = (0..mu.len()).map(|_| sample_std_normal(rng)).collect();
    let noise = chol.matvec(&z)?;
    let div = hadamard_divisors(dofs, rng);
    Ok(mu
        .iter()
        .zip(noise.iter().zip(&div))
        .map(|(&mj, (&nj, &dj))| (mj + nj) / dj)
        .collect())
}

fn check_dims(mu: &[f64], chol: &CholeskyFactor, dofs: &[Dof]) -> Result<()> {
    if mu.len() != chol.dim() {
        return Err(Error::DimensionMismatch {
            expected: chol.dim(),
            got: mu.len(),
        });
    }
    if dofs.len() != mu.len() {
        return Err(Error::DimensionMismatch {
            expected: mu.len(),
            got: dofs.len(),
        });
    }
    Ok(())
}

/// P-value of an observed statistic under the central reference law.
/// Upper and two-sided tails are computed through the lower tail of the
/// mirrored argument so small p-values keep full relative precision.
pub fn pvalue_from_stat(stat: f64, dof: Dof, tail: TailType) -> f64 {
    match tail {
        TailType::Lower => student_t_cdf(stat, dof),
        TailType::Upper => student_t_cdf(-stat, dof),
        TailType::TwoSided => 2.0 * student_t_cdf(-stat.abs(), dof),
    }
}

/// Inverse of `pvalue_from_stat`: the statistic whose p-value is `p`.
/// Two-sided inputs recover the nonnegative branch, matching the usual
/// reporting convention for |t|. Accepts p in (0, 1]; p = 1 maps to 0 for
/// two-sided tests and is rejected for one-sided ones, where it has no
/// finite preimage.
pub fn stat_from_pvalue(p: f64, dof: Dof, tail: TailType) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Domain(format!(
            "p-value must lie in (0, 1] (got {p})"
        )));
    }
    match tail {
        TailType::TwoSided => {
            if p == 1.0 {
                return Ok(0.0);
            }
            // -quantile(p/2) rather than quantile(1 - p/2): the latter
            // collapses to quantile(1.0) once p is below one ulp of 2.
            Ok(normalize_zero(-student_t_quantile(0.5 * p, dof)?))
        }
        TailType::Lower => {
            if p == 1.0 {
                return Err(Error::Domain(
                    "a one-sided p-value of 1 has no finite statistic".into(),
                ));
            }
            Ok(student_t_quantile(p, dof)?)
        }
        TailType::Upper => {
            if p == 1.0 {
                return Err(Error::Domain(
                    "a one-sided p-value of 1 has no finite statistic".into(),
                ));
            }
            Ok(normalize_zero(-student_t_quantile(p, dof)?))
        }
    }
}

/// Negating a quantile can manufacture -0.0 (e.g. upper tail at p = 0.5);
/// collapse it so serialized reports never distinguish the two zeros.
fn normalize_zero(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x
    }
}
