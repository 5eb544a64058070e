//! Uniform sampling over correlation matrices, and Cholesky factorization.
//!
//! The sampler draws the Cholesky factor directly through the spherical
//! angle parameterization: row j of the factor is the unit vector with
//! coordinates built from angles theta_{j,1..j-1}, and choosing the angle
//! in column k (1-based) with density proportional to sin^(m-k) on (0, pi)
//! makes the induced matrix law uniform over the set of valid correlation
//! matrices. Two consequences pin that choice down and are tested: the
//! m = 2 off-diagonal is uniform on [-1, 1], and in general every
//! off-diagonal margin is Beta(m/2, m/2) rescaled to [-1, 1].
//!
//! Angle draws use inverse-CDF tables cached per sine exponent, so the
//! per-draw cost is linear in the number of angles after a one-time build.

use crate::{Error, Result};
use rand::Rng;

/// Pivot floor for Cholesky: a diagonal pivot at or below this is treated
/// as a failure of positive definiteness rather than silently repaired.
pub const DEFAULT_PIVOT_FLOOR: f64 = 1e-12;

/// Symmetric positive-definite matrix with unit diagonal, stored dense
/// row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    dim: usize,
    entries: Vec<f64>,
}

impl CorrelationMatrix {
    /// Validates symmetry, the unit diagonal, off-diagonal range, and
    /// positive definiteness (a Cholesky run with the default floor).
    pub fn new(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Domain("correlation dimension must be >= 1".into()));
        }
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: entries.len(),
            });
        }
        for (i, &v) in entries.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Domain(format!(
                    "correlation entry {v} at flat index {i} is not finite"
                )));
            }
        }
        for i in 0..dim {
            let d = entries[i * dim + i];
            if (d - 1.0).abs() > 1e-12 {
                return Err(Error::Domain(format!(
                    "diagonal entry ({i},{i}) = {d} is not 1"
                )));
            }
            for j in 0..i {
                let a = entries[i * dim + j];
                let b = entries[j * dim + i];
                if (a - b).abs() > 1e-12 {
                    return Err(Error::Domain(format!(
                        "asymmetry at ({i},{j}): {a} vs {b}"
                    )));
                }
                if a.abs() > 1.0 + 1e-12 {
                    return Err(Error::Domain(format!(
                        "off-diagonal ({i},{j}) = {a} outside [-1, 1]"
                    )));
                }
            }
        }
        let m = Self { dim, entries };
        m.cholesky()?;
        Ok(m)
    }

    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = 1.0;
        }
        Self { dim, entries }
    }

    /// Reassembles L * L^T. The product of a unit-row lower factor is a
    /// valid correlation matrix, so no validation pass is run.
    pub fn from_cholesky(chol: &CholeskyFactor) -> Self {
        let m = chol.dim;
        let mut entries = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..=i {
                let mut s = 0.0;
                for k in 0..=j {
                    s += chol.lower[i * m + k] * chol.lower[j * m + k];
                }
                entries[i * m + j] = s;
                entries[j * m + i] = s;
            }
        }
        Self { dim: m, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Factorization with the default pivot floor.
    pub fn cholesky(&self) -> Result<CholeskyFactor> {
        cholesky(&self.entries, self.dim, DEFAULT_PIVOT_FLOOR)
    }
}

/// Lower-triangular factor with strictly positive diagonal; A * A^T
/// reconstructs the source matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    dim: usize,
    lower: Vec<f64>,
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.lower[i * self.dim + j]
    }

    /// y = A z for lower-triangular A.
    pub fn matvec(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: z.len(),
            });
        }
        let mut y = vec![0.0; self.dim];
        for (i, out) in y.iter_mut().enumerate() {
            let row = &self.lower[i * self.dim..i * self.dim + i + 1];
            *out = row.iter().zip(z).map(|(a, b)| a * b).sum();
        }
        Ok(y)
    }
}

/// Cholesky factorization of a symmetric matrix given row-major.
///
/// Any diagonal pivot at or below `pivot_floor` fails with
/// [`Error::NotPositiveDefinite`]; the floor guards downstream division
/// without silently repairing bad input.
pub fn cholesky(entries: &[f64], dim: usize, pivot_floor: f64) -> Result<CholeskyFactor> {
    if entries.len() != dim * dim {
        return Err(Error::DimensionMismatch {
            expected: dim * dim,
            got: entries.len(),
        });
    }
    for i in 0..dim {
        for j in 0..i {
            let a = entries[i * dim + j];
            let b = entries[j * dim + i];
            if (a - b).abs() > 1e-12 {
                return Err(Error::Domain(format!(
                    "cholesky input asymmetric at ({i},{j}): {a} vs {b}"
                )));
            }
        }
    }
    let mut lower = vec![0.0; dim * dim];
    for j in 0..dim {
        for k in 0..=j {
            let mut s = entries[j * dim + k];
            for i in 0..k {
                s -= lower[j * dim + i] * lower[k * dim + i];
            }
            if k == j {
                if s <= pivot_floor {
                    return Err(Error::NotPositiveDefinite {
                        index: j,
                        pivot: s,
                        floor: pivot_floor,
                    });
                }
                lower[j * dim + j] = s.sqrt();
            } else {
                lower[j * dim + k] = s / lower[k * dim + k];
            }
        }
    }
    Ok(CholeskyFactor { dim, lower })
}

// Inverse-CDF table for the density proportional to sin^e on (0, pi).
// knots[i] is the quantile at probability i / INV_KNOTS; sampling is
// linear interpolation between knots, which keeps the CDF error of the
// sampled law below 1/INV_KNOTS everywhere.
#[derive(Debug, Clone)]
struct SinPowerTable {
    knots: Vec<f64>,
}

const QUAD_CELLS: usize = 8192;
const INV_KNOTS: usize = 4096;

// Gauss-Legendre 5-point rule on [-1, 1].
const GL5_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL5_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_08,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_08,
];

fn build_sin_power_table(exponent: i32) -> SinPowerTable {
    let h = std::f64::consts::PI / QUAD_CELLS as f64;
    // cum[c] = integral of sin^e over (0, c*h), unnormalized.
    let mut cum = Vec::with_capacity(QUAD_CELLS + 1);
    cum.push(0.0);
    let mut total = 0.0;
    for c in 0..QUAD_CELLS {
        let center = (c as f64 + 0.5) * h;
        let half = 0.5 * h;
        let mut cell = 0.0;
        for (x, w) in GL5_NODES.iter().zip(GL5_WEIGHTS) {
            cell += w * (center + half * x).sin().powi(exponent);
        }
        total += cell * half;
        cum.push(total);
    }
    let mut knots = Vec::with_capacity(INV_KNOTS + 1);
    let mut cell = 0;
    for i in 0..=INV_KNOTS {
        let q = total * (i as f64 / INV_KNOTS as f64);
        while cell + 1 < QUAD_CELLS && cum[cell + 1] < q {
            cell += 1;
        }
        let span = cum[cell + 1] - cum[cell];
        let frac = if span > 0.0 { (q - cum[cell]) / span } else { 0.0 };
        knots.push((cell as f64 + frac.clamp(0.0, 1.0)) * h);
    }
    knots[0] = 0.0;
    knots[INV_KNOTS] = std::f64::consts::PI;
    SinPowerTable { knots }
}

impl SinPowerTable {
    fn sample_at(&self, u: f64) -> f64 {
        let pos = u * INV_KNOTS as f64;
        let i = (pos as usize).min(INV_KNOTS - 1);
        let frac = pos - i as f64;
        self.knots[i] + frac * (self.knots[i + 1] - self.knots[i])
    }
}

/// Sampler for the uniform distribution over m x m correlation matrices,
/// with the per-exponent angle tables built once at construction. Sampling
/// borrows the tables immutably, so one sampler serves many concurrent
/// streams.
///
/// Draw-order contract (relied on by the power engine's reproducibility
/// guarantee): one uniform variate per angle, rows in increasing order and
/// columns in increasing order within a row; m = 1 consumes no randomness.
#[derive(Debug, Clone)]
pub struct CorrelationSampler {
    m: usize,
    // tables[e - 1] holds the table for sine exponent e; the angle in
    // 1-based column k uses exponent m - k.
    tables: Vec<SinPowerTable>,
}

impl CorrelationSampler {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::Domain("correlation dimension must be >= 1".into()));
        }
        let tables = (1..m as i32).map(build_sin_power_table).collect();
        Ok(Self { m, tables })
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    /// Draws the Cholesky factor of a uniform correlation matrix.
    pub fn sample_cholesky<R: Rng + ?Sized>(&self, rng: &mut R) -> CholeskyFactor {
        let m = self.m;
        let mut lower = vec![0.0; m * m];
        lower[0] = 1.0;
        for j in 1..m {
            let mut sin_prod = 1.0;
            for k in 0..j {
                // 1-based column k+1 has sine exponent m - (k+1).
                let table = &self.tables[m - k - 2];
                let theta = table.sample_at(rng.random::<f64>());
                lower[j * m + k] = theta.cos() * sin_prod;
                sin_prod *= theta.sin();
            }
            lower[j * m + j] = sin_prod;
        }
        CholeskyFactor { dim: m, lower }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> CorrelationMatrix {
        CorrelationMatrix::from_cholesky(&self.sample_cholesky(rng))
    }
}

/// One-off draw of a uniform correlation matrix. Loops that need many
/// draws should hold a [`CorrelationSampler`] instead, so the angle
/// tables are built once.
pub fn sample_uniform_correlation<R: Rng + ?Sized>(
    m: usize,
    rng: &mut R,
) -> Result<CorrelationMatrix> {
    Ok(CorrelationSampler::new(m)?.sample(rng))
}
