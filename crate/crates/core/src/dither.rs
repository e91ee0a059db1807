//! Sinusoidal probe and demodulation signals.
//!
//! Tone `i` runs at `ωᵢ = ωᵢ′ ω` where the multipliers `ωᵢ′` are exact
//! rationals, so the common period and the frequency exclusion rule are
//! evaluated without floating-point comparisons.

use std::f64::consts::TAU;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_integer::Integer;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

pub type Rational = Ratio<i64>;

/// Default number of Simpson intervals per period.
pub const DEFAULT_QUADRATURE_POINTS: usize = 4096;
pub const MIN_QUADRATURE_POINTS: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct DitherSpec {
    amplitudes: DVector<f64>,
    multipliers: Vec<Rational>,
    base_frequency: f64,
    frequencies: DVector<f64>,
}

impl DitherSpec {
    pub fn new(amplitudes: DVector<f64>, multipliers: Vec<Rational>, base_frequency: f64) -> Result<Self> {
        check_dim("dither multipliers", amplitudes.len(), multipliers.len())?;
        if amplitudes.is_empty() {
            return Err(Error::InvalidInput("dither needs at least one tone".into()));
        }
        if amplitudes.iter().any(|a| *a == 0.0 || !a.is_finite()) {
            return Err(Error::InvalidInput("dither amplitudes must be finite and nonzero".into()));
        }
        if !(base_frequency.is_finite() && base_frequency > 0.0) {
            return Err(Error::InvalidInput(format!("base frequency must be positive, got {base_frequency}")));
        }
        let report = validate_frequencies(&multipliers)?;
        if !report.valid {
            return Err(Error::InvalidInput(format!("dither frequencies violate exclusion rule: {report}")));
        }
        let frequencies = DVector::from_iterator(
            multipliers.len(),
            multipliers.iter().map(|m| ratio_to_f64(m) * base_frequency),
        );
        Ok(Self {
            amplitudes,
            multipliers,
            base_frequency,
            frequencies,
        })
    }

    /// Same tones with the base frequency multiplied by `factor`.
    pub fn scaled_frequency(&self, factor: f64) -> Result<Self> {
        Self::new(self.amplitudes.clone(), self.multipliers.clone(), self.base_frequency * factor)
    }

    /// Same frequencies with every amplitude multiplied by `factor`.
    pub fn scaled_amplitude(&self, factor: f64) -> Result<Self> {
        Self::new(&self.amplitudes * factor, self.multipliers.clone(), self.base_frequency)
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &DVector<f64> {
        &self.amplitudes
    }

    pub fn multipliers(&self) -> &[Rational] {
        &self.multipliers
    }

    pub fn base_frequency(&self) -> f64 {
        self.base_frequency
    }

    /// Actual tone frequencies `ωᵢ` in rad/s.
    pub fn frequencies(&self) -> &DVector<f64> {
        &self.frequencies
    }

    pub fn max_frequency(&self) -> f64 {
        self.frequencies.max()
    }

    /// Largest absolute amplitude.
    pub fn max_amplitude(&self) -> f64 {
        self.amplitudes.amax()
    }
}

/// `S(t)`, with `Sᵢ = aᵢ sin(ωᵢ t)`.
pub fn probe_signal(spec: &DitherSpec, t: f64) -> DVector<f64> {
    spec.amplitudes
        .zip_map(&spec.frequencies, |a, w| a * (w * t).sin())
}

/// `Ṡ(t)`.
pub fn probe_rate(spec: &DitherSpec, t: f64) -> DVector<f64> {
    spec.amplitudes
        .zip_map(&spec.frequencies, |a, w| a * w * (w * t).cos())
}

/// `M(t)`, with `Mᵢ = (2 / aᵢ) sin(ωᵢ t)`.
pub fn demod_signal(spec: &DitherSpec, t: f64) -> DVector<f64> {
    spec.amplitudes
        .zip_map(&spec.frequencies, |a, w| 2.0 / a * (w * t).sin())
}

/// `Ṁ(t)`.
pub fn demod_rate(spec: &DitherSpec, t: f64) -> DVector<f64> {
    spec.amplitudes
        .zip_map(&spec.frequencies, |a, w| 2.0 / a * w * (w * t).cos())
}

/// `Δ(t) = M(t) S(t)ᵀ − I` in closed form.
pub fn delta_matrix(spec: &DitherSpec, hess_dim: usize, t: f64) -> Result<DMatrix<f64>> {
    check_dim("Hessian dimension", spec.dim(), hess_dim)?;
    let a = &spec.amplitudes;
    let w = &spec.frequencies;
    Ok(DMatrix::from_fn(hess_dim, hess_dim, |i, j| {
        if i == j {
            -(2.0 * w[i] * t).cos()
        } else {
            a[j] / a[i] * (((w[i] - w[j]) * t).cos() - ((w[i] + w[j]) * t).cos())
        }
    }))
}

/// `Ω(t) = (I + Δ(t)) H`.
pub fn omega_matrix(spec: &DitherSpec, hessian: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    let n = hessian.nrows();
    let delta = delta_matrix(spec, n, t)?;
    Ok((DMatrix::identity(n, n) + delta) * hessian)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodInfo {
    /// Common period `T` in seconds.
    pub period: f64,
    /// `2π / T`.
    pub base_frequency: f64,
}

impl PeriodInfo {
    pub fn from_period(period: f64) -> Result<Self> {
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::InvalidInput(format!("period must be positive, got {period}")));
        }
        Ok(Self {
            period,
            base_frequency: TAU / period,
        })
    }
}

/// Smallest `T > 0` making every tone `T`-periodic, via the exact rational LCM of the
/// individual periods.
pub fn common_period(spec: &DitherSpec) -> PeriodInfo {
    period_of(&spec.multipliers, spec.base_frequency)
}

/// Common period of `sin(m·ω·t)` over the given multipliers, with no validity
/// requirement on the tone set.
pub fn period_of(multipliers: &[Rational], base_frequency: f64) -> PeriodInfo {
    // period_i = (2π/ω) · qᵢ/pᵢ for ωᵢ′ = pᵢ/qᵢ in lowest terms
    let (num_lcm, den_gcd) = multipliers
        .iter()
        .fold((1_i64, 0_i64), |(l, g), m| (l.lcm(m.denom()), g.gcd(m.numer())));
    let period = TAU / base_frequency * (num_lcm as f64) / (den_gcd as f64);
    PeriodInfo {
        period,
        base_frequency: TAU / period,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionRule {
    /// Coincides with another tone.
    Duplicate,
    /// Equals the mean of two tones.
    HalfSum,
    /// Equals the sum of two tones.
    Sum,
    /// Equals the difference of two tones.
    Difference,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyViolation {
    pub index: usize,
    /// The offending multiplier, as an exact rational string.
    pub value: String,
    pub rule: ExclusionRule,
    /// Indices of the tones that produced the excluded value.
    pub operands: (usize, usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyReport {
    pub valid: bool,
    pub violations: Vec<FrequencyViolation>,
}

impl fmt::Display for FrequencyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.valid {
            return write!(f, "valid");
        }
        let parts: Vec<String> = self
            .violations
            .iter()
            .map(|v| format!("ω'[{}] = {} hits {:?} of tones {:?}", v.index, v.value, v.rule, v.operands))
            .collect();
        write!(f, "{}", parts.join("; "))
    }
}

/// Checks each multiplier against the excluded set built from the tones:
/// other tones, pairwise means, pairwise sums and pairwise differences.
pub fn validate_frequencies(multipliers: &[Rational]) -> Result<FrequencyReport> {
    if let Some(m) = multipliers.iter().find(|m| **m <= Rational::from_integer(0)) {
        return Err(Error::InvalidInput(format!("frequency multiplier {m} must be positive")));
    }
    let n = multipliers.len();
    let two = Rational::from_integer(2);
    let mut violations = Vec::new();
    for (i, wi) in multipliers.iter().enumerate() {
        let mut hit = |rule, operands| {
            violations.push(FrequencyViolation {
                index: i,
                value: wi.to_string(),
                rule,
                operands,
            })
        };
        for j in (0..n).filter(|&j| j != i) {
            if multipliers[j] == *wi {
                hit(ExclusionRule::Duplicate, (j, j));
            }
        }
        for k in 0..n {
            for l in (k + 1)..n {
                let (a, b) = (multipliers[k], multipliers[l]);
                if (a + b) / two == *wi && k != i && l != i {
                    hit(ExclusionRule::HalfSum, (k, l));
                }
                if a + b == *wi {
                    hit(ExclusionRule::Sum, (k, l));
                }
                if (a - b == *wi) || (b - a == *wi) {
                    hit(ExclusionRule::Difference, (k, l));
                }
            }
        }
    }
    Ok(FrequencyReport {
        valid: violations.is_empty(),
        violations,
    })
}

/// `(1/T) ∫₀ᵀ f(t) dt` by composite Simpson on `quadrature_points` intervals
/// (rounded up to even).
pub fn signal_average<F>(f: F, period: &PeriodInfo, quadrature_points: usize) -> Result<DMatrix<f64>>
where
    F: Fn(f64) -> DMatrix<f64>,
{
    if quadrature_points < MIN_QUADRATURE_POINTS {
        return Err(Error::InvalidInput(format!(
            "quadrature needs at least {MIN_QUADRATURE_POINTS} points, got {quadrature_points}"
        )));
    }
    let m = quadrature_points + quadrature_points % 2;
    let h = period.period / m as f64;
    let mut acc = f(0.0) + f(period.period);
    for k in 1..m {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += f(k as f64 * h) * w;
    }
    Ok(acc * (h / 3.0) / period.period)
}

pub(crate) fn ratio_to_f64(r: &Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}
