//! Corruption-rate estimation over a population of compressed units.
//!
//! The model: every bit (or byte, see [`LengthUnit`]) of every stored unit is
//! flipped independently with probability `p`. A unit survives only if none
//! of its positions flipped, so a unit of `e` positions is corrupted with
//! probability `1 - (1-p)^e`. Observing how many units fail out of a
//! population with known lengths pins `p` down; concentration bounds turn the
//! single observation into an interval.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which positions count as independent corruption trials within a unit.
///
/// Physical bit errors argue for `Bits`, and the observed flip spacing in
/// real dumps is consistent with that reading, so `Bits` is the default
/// everywhere. `Bytes` is kept selectable for comparison runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LengthUnit {
    #[default]
    Bits,
    Bytes,
}

impl LengthUnit {
    /// Number of independent trials in a unit of `len_bytes` stored bytes.
    pub fn trials(self, len_bytes: u64) -> f64 {
        match self {
            LengthUnit::Bits => 8.0 * len_bytes as f64,
            LengthUnit::Bytes => len_bytes as f64,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("population of unit lengths is empty")]
    EmptyPopulation,
    #[error("corrupted count {target} outside attainable range [0, {max}]")]
    TargetOutOfRange { target: f64, max: f64 },
    #[error("tail probability must be positive, got {0}")]
    InvalidTail(f64),
}

/// (1-p)^trials, computed in log space so tiny rates keep full precision.
fn survival(p: f64, trials: f64) -> f64 {
    if trials == 0.0 || p <= 0.0 {
        1.0
    } else if p >= 1.0 {
        0.0
    } else {
        (trials * (-p).ln_1p()).exp()
    }
}

/// Expected number of corrupted units at per-trial rate `p`.
pub fn expected_corrupted(lengths: &[u64], p: f64, unit: LengthUnit) -> f64 {
    lengths.iter().map(|&l| 1.0 - survival(p, unit.trials(l))).sum()
}

/// Maximum attainable expected corrupted count: units of zero length can
/// never corrupt, everything else can.
fn max_corrupted(lengths: &[u64]) -> f64 {
    lengths.iter().filter(|&&l| l > 0).count() as f64
}

/// Rate estimate from an observed corrupted-unit count.
///
/// Solves `expected_corrupted(lengths, p) == corrupted` for `p`. The left
/// side is continuous and strictly increasing in `p` (where any length is
/// nonzero), so bisection converges unconditionally; it runs to a relative
/// width of 1e-12 or 120 halvings, whichever comes first.
pub fn estimate_rate(lengths: &[u64], corrupted: usize, unit: LengthUnit) -> Result<f64, StatsError> {
    solve_rate(lengths, corrupted as f64, unit)
}

/// [`estimate_rate`] for fractional targets, which interval endpoints need.
pub fn solve_rate(lengths: &[u64], target: f64, unit: LengthUnit) -> Result<f64, StatsError> {
    if lengths.is_empty() {
        return Err(StatsError::EmptyPopulation);
    }
    let max = max_corrupted(lengths);
    if !(0.0..=max).contains(&target) {
        return Err(StatsError::TargetOutOfRange { target, max });
    }
    if target == 0.0 {
        return Ok(0.0);
    }
    if target == max {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..120 {
        let mid = 0.5 * (lo + hi);
        if expected_corrupted(lengths, mid, unit) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Two-sided concentration radius for a sum of `n` independent 0/1 outcomes:
/// the observed corrupted count lies within `t` of its expectation except
/// with probability at most `tail`, where `t = sqrt(n ln(2/tail) / 2)`.
///
/// `tail >= 2` makes the bound vacuous and returns 0.
pub fn hoeffding_t(n: usize, tail: f64) -> Result<f64, StatsError> {
    if tail <= 0.0 {
        return Err(StatsError::InvalidTail(tail));
    }
    if tail >= 2.0 {
        return Ok(0.0);
    }
    Ok((n as f64 * (2.0 / tail).ln() / 2.0).sqrt())
}

/// Alternative radius from summed per-unit variances: `t = sqrt(Var / tail)`
/// (second-moment tail bound). Reported alongside the distribution-free
/// radius; whichever is smaller gives the tighter interval.
pub fn variance_t(lengths: &[u64], p: f64, tail: f64, unit: LengthUnit) -> Result<f64, StatsError> {
    if tail <= 0.0 {
        return Err(StatsError::InvalidTail(tail));
    }
    let var: f64 = lengths
        .iter()
        .map(|&l| {
            let q = 1.0 - survival(p, unit.trials(l));
            q * (1.0 - q)
        })
        .sum();
    Ok((var / tail).sqrt())
}

/// A rate estimate with its confidence band.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateInterval {
    /// Rate solving for the observed count exactly.
    pub best: f64,
    /// Rate at the count lowered by `t` (clamped to the attainable range).
    pub low: f64,
    /// Rate at the count raised by `t` (clamped likewise).
    pub high: f64,
    /// Concentration radius used, in units of corrupted-unit counts.
    pub t: f64,
    pub corrupted: usize,
    pub population: usize,
    pub unit: LengthUnit,
}

/// Interval estimate: solve the rate at `corrupted`, `corrupted - t`, and
/// `corrupted + t`, where `t` is the two-sided radius at probability `tail`.
pub fn rate_interval(
    lengths: &[u64],
    corrupted: usize,
    tail: f64,
    unit: LengthUnit,
) -> Result<RateInterval, StatsError> {
    if lengths.is_empty() {
        return Err(StatsError::EmptyPopulation);
    }
    let max = max_corrupted(lengths);
    let t = hoeffding_t(lengths.len(), tail)?;
    let best = solve_rate(lengths, corrupted as f64, unit)?;
    let low = solve_rate(lengths, (corrupted as f64 - t).max(0.0), unit)?;
    let high = solve_rate(lengths, (corrupted as f64 + t).min(max), unit)?;
    Ok(RateInterval { best, low, high, t, corrupted, population: lengths.len(), unit })
}

/// Expected number of units carrying exactly `k` flips at rate `p`:
/// the sum over units of `C(e, k) p^k (1-p)^(e-k)`, evaluated in log space
/// term by term so huge `e` and tiny `p` cannot underflow intermediate
/// factors. `k` is unbounded; in practice only small `k` matter.
pub fn expected_k_flip_count(lengths: &[u64], p: f64, k: usize, unit: LengthUnit) -> f64 {
    lengths.iter().map(|&l| binomial_pmf(unit.trials(l), k, p)).sum()
}

/// P[Binomial(n, p) = k] for real-valued n >= 0.
fn binomial_pmf(n: f64, k: usize, p: f64) -> f64 {
    let kf = k as f64;
    if kf > n {
        return 0.0;
    }
    if p <= 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p >= 1.0 {
        return if kf == n { 1.0 } else { 0.0 };
    }
    // ln C(n, k) as a falling factorial; k stays small so the loop is cheap.
    let mut ln_term = 0.0f64;
    for j in 0..k {
        ln_term += (n - j as f64).ln();
        ln_term -= ((j + 1) as f64).ln();
    }
    ln_term += kf * p.ln();
    ln_term += (n - kf) * (-p).ln_1p();
    ln_term.exp()
}

/// Mean stored bytes between flips at per-trial rate `p`. The reciprocal
/// rate quoted in summaries: one flip per this many bytes.
pub fn bytes_per_flip(p: f64, unit: LengthUnit) -> f64 {
    match unit {
        LengthUnit::Bits => 1.0 / (8.0 * p),
        LengthUnit::Bytes => 1.0 / p,
    }
}
