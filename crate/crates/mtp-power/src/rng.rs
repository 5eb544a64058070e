//! Deterministic randomness plumbing and scalar distribution samplers.
//!
//! Every randomized computation in this crate draws from a ChaCha8 stream
//! addressed by a `(seed, stream)` pair, and the stream ids are allocated
//! once, here: Monte Carlo iteration `s` (zero-based) owns stream `s + 1`,
//! single-shot commands and the observed-family significance pass own
//! [`STREAM_OBSERVED`], and the threshold batch shared across iterations
//! (when that mode is on) owns [`STREAM_SHARED`]. Workers therefore never
//! share a stream, and results cannot depend on the thread schedule.

use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma, StandardNormal};

/// Stream for single-shot commands and the observed-family pass.
pub const STREAM_OBSERVED: u64 = 0;

/// Stream for a threshold batch shared by every iteration of a run.
pub const STREAM_SHARED: u64 = u64::MAX;

/// Stream owned by Monte Carlo iteration `s` (zero-based).
pub fn iteration_stream(s: u64) -> u64 {
    s + 1
}

/// A generator positioned on `stream` of the cipher keyed by `seed`.
/// Equal pairs reproduce the exact draw sequence; distinct streams are
/// independent by the cipher's counter construction.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One standard normal draw (ziggurat).
pub fn sample_std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Gamma(shape, scale 1) draw. Valid for every positive shape, including
/// the sub-unit shapes that dominate Dirichlet-process concentrations.
/// Shapes small enough that the boost factor underflows can return 0.0;
/// callers that care (see the Dirichlet sampler) must handle that.
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> Result<f64> {
    if !(shape > 0.0 && shape.is_finite()) {
        return Err(Error::Domain(format!(
            "gamma shape must be positive and finite (got {shape})"
        )));
    }
    let dist = Gamma::new(shape, 1.0)
        .map_err(|e| Error::Domain(format!("gamma shape {shape}: {e}")))?;
    Ok(dist.sample(rng))
}

/// Exponential(rate) draw; mean 1/rate.
pub fn sample_exponential<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> Result<f64> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::Domain(format!(
            "exponential rate must be positive and finite (got {rate})"
        )));
    }
    let dist = Exp::new(rate).map_err(|e| Error::Domain(format!("exponential rate {rate}: {e}")))?;
    Ok(dist.sample(rng))
}

/// Chi-square draw for the Hadamard divisors of the multivariate t
/// samplers. `None` encodes the infinite-degrees-of-freedom case, where
/// the caller contract is that the divisor sqrt(V/nu) is exactly 1; no
/// randomness is consumed for such coordinates.
pub fn sample_chi_square<R: Rng + ?Sized>(dof: crate::Dof, rng: &mut R) -> Option<f64> {
    match dof {
        crate::Dof::Infinite => None,
        crate::Dof::Finite(nu) => {
            // chi-square(nu) = Gamma(nu/2, scale 2); nu > 0 by Dof's invariant.
            let dist = Gamma::new(0.5 * nu, 2.0).expect("Dof guarantees nu > 0");
            Some(dist.sample(rng))
        }
    }
}

/// Dirichlet draw via normalized gammas.
///
/// When the concentrations are so small that every gamma component
/// underflows to zero, the draw falls back to the exact limiting law: as
/// the total concentration tends to 0 the Dirichlet converges to a point
/// mass on a vertex chosen with probabilities proportional to the
/// concentrations, so a categorical draw replaces the failed normalization.
pub fn sample_dirichlet<R: Rng + ?Sized>(
    concentrations: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    if concentrations.is_empty() {
        return Err(Error::Domain(
            "dirichlet needs at least one concentration".into(),
        ));
    }
    for &c in concentrations {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Domain(format!(
                "dirichlet concentrations must be positive and finite (got {c})"
            )));
        }
    }
    let mut draws: Vec<f64> = Vec::with_capacity(concentrations.len());
    let mut total = 0.0;
    for &c in concentrations {
        let g = sample_gamma(c, rng)?;
        total += g;
        draws.push(g);
    }
    if total > 0.0 {
        for g in &mut draws {
            *g /= total;
        }
        return Ok(draws);
    }
    let vertex = sample_categorical(concentrations, rng);
    draws.fill(0.0);
    draws[vertex] = 1.0;
    Ok(draws)
}

// Index draw with probabilities proportional to the (positive) weights.
fn sample_categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let u: f64 = rng.random::<f64>() * total;
    let mut cum = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        cum += w;
        if u < cum {
            return i;
        }
    }
    weights.len() - 1
}
