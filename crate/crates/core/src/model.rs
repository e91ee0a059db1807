//! Static quadratic map, actuator nonlinearities and the polytopic Hessian set.
//!
//! The map is `y = Q* + ½ (θ − θ*)ᵀ H(α) (θ − θ*)` where the curvature `H(α)`
//! is an unknown convex combination of known vertex matrices.

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg;

const SYMMETRY_TOL: f64 = 1e-12;
const DEFINITENESS_TOL: f64 = 1e-10;
const SIMPLEX_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Definiteness {
    /// Minimization: the map has a global minimum at θ*.
    Positive,
    /// Maximization.
    Negative,
}

/// Convex hull of known symmetric vertex matrices sharing one definiteness sign.
#[derive(Clone, Debug, PartialEq)]
pub struct PolytopicHessian {
    vertices: Vec<DMatrix<f64>>,
    sign: Definiteness,
}

impl PolytopicHessian {
    pub fn new(vertices: Vec<DMatrix<f64>>, sign: Definiteness) -> Result<Self> {
        let first = vertices
            .first()
            .ok_or_else(|| Error::InvalidInput("Hessian polytope needs at least one vertex".into()))?;
        let n = first.nrows();
        if n == 0 {
            return Err(Error::InvalidInput("Hessian dimension must be positive".into()));
        }
        for (i, h) in vertices.iter().enumerate() {
            if h.nrows() != n || h.ncols() != n {
                return Err(Error::InvalidInput(format!(
                    "vertex {i} is {}x{}, expected {n}x{n}",
                    h.nrows(),
                    h.ncols()
                )));
            }
            let scale = h.amax();
            if (h - h.transpose()).amax() > SYMMETRY_TOL * scale.max(f64::MIN_POSITIVE) {
                return Err(Error::InvalidInput(format!("vertex {i} is not symmetric")));
            }
            let eig = linalg::sym_eigenvalues(h);
            let norm = eig.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            let floor = DEFINITENESS_TOL * norm;
            let ok = match sign {
                Definiteness::Positive => eig.iter().all(|&v| v > floor),
                Definiteness::Negative => eig.iter().all(|&v| v < -floor),
            };
            if !ok || norm == 0.0 {
                return Err(Error::InvalidInput(format!(
                    "vertex {i} is not {} definite (eigenvalues {eig:?})",
                    match sign {
                        Definiteness::Positive => "positive",
                        Definiteness::Negative => "negative",
                    }
                )));
            }
        }
        Ok(Self { vertices, sign })
    }

    /// Two-vertex family `{(1 − δ) H₀, (1 + δ) H₀}`.
    pub fn scaled_interval(h0: &DMatrix<f64>, delta: f64, sign: Definiteness) -> Result<Self> {
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::InvalidInput(format!("scaling delta {delta} outside [0, 1)")));
        }
        Self::new(vec![h0 * (1.0 - delta), h0 * (1.0 + delta)], sign)
    }

    pub fn dim(&self) -> usize {
        self.vertices[0].nrows()
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices(&self) -> &[DMatrix<f64>] {
        &self.vertices
    }

    pub fn sign(&self) -> Definiteness {
        self.sign
    }

    /// `H(α) = Σ αᵢ Hᵢ`.
    pub fn at(&self, alpha: &SimplexWeight) -> Result<DMatrix<f64>> {
        check_dim("simplex weight", self.n_vertices(), alpha.len())?;
        let n = self.dim();
        let mut h = DMatrix::zeros(n, n);
        for (w, v) in alpha.weights().iter().zip(&self.vertices) {
            h += v * *w;
        }
        // exact symmetry regardless of rounding order
        Ok((&h + h.transpose()) * 0.5)
    }

    /// Smallest and largest eigenvalue over all vertices.
    pub fn eigen_bounds(&self) -> (f64, f64) {
        self.vertices
            .iter()
            .flat_map(linalg::sym_eigenvalues)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    }

    /// Largest spectral norm among the vertices.
    pub fn max_norm(&self) -> f64 {
        self.vertices
            .iter()
            .map(linalg::spectral_norm)
            .fold(0.0, f64::max)
    }
}

/// A point of the unit simplex Λ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SimplexWeight(Vec<f64>);

impl SimplexWeight {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidInput("simplex weight must be non-empty".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput(format!("simplex weights must be nonnegative: {weights:?}")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidInput(format!("simplex weights sum to {sum}, not 1")));
        }
        Ok(Self(weights))
    }

    /// Unit weight on a single vertex.
    pub fn vertex(n: usize, index: usize) -> Result<Self> {
        if index >= n {
            return Err(Error::InvalidInput(format!("vertex {index} out of range for {n} vertices")));
        }
        let mut w = vec![0.0; n];
        w[index] = 1.0;
        Ok(Self(w))
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for SimplexWeight {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SimplexWeight> for Vec<f64> {
    fn from(w: SimplexWeight) -> Self {
        w.0
    }
}

/// Uniform draw from the unit simplex with `n` vertices (normalized exponentials).
pub fn sample_simplex(n: usize, seed: u64) -> Result<SimplexWeight> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_simplex_with(n, &mut rng)
}

pub fn sample_simplex_with<R: RngExt + ?Sized>(n: usize, rng: &mut R) -> Result<SimplexWeight> {
    if n == 0 {
        return Err(Error::InvalidInput("simplex needs at least one vertex".into()));
    }
    if n == 1 {
        return Ok(SimplexWeight(vec![1.0]));
    }
    let draws: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = draws.iter().sum();
    let mut w: Vec<f64> = draws.iter().map(|d| d / total).collect();
    // push the rounding residue onto the largest entry so the sum is 1 to within an ulp
    let residue = 1.0 - w.iter().sum::<f64>();
    let imax = w
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    w[imax] += residue;
    SimplexWeight::new(w)
}

/// Ground-truth plant: quadratic map plus actuator rate limits.
#[derive(Clone, Debug, PartialEq)]
pub struct PlantSpec {
    optimum_value: f64,
    optimizer: DVector<f64>,
    hessian: PolytopicHessian,
    sat_limits: DVector<f64>,
}

impl PlantSpec {
    pub fn new(
        optimum_value: f64,
        optimizer: DVector<f64>,
        hessian: PolytopicHessian,
        sat_limits: DVector<f64>,
    ) -> Result<Self> {
        let n = hessian.dim();
        check_dim("optimizer", n, optimizer.len())?;
        check_dim("saturation limits", n, sat_limits.len())?;
        if !optimum_value.is_finite() || optimizer.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("plant parameters must be finite".into()));
        }
        // +inf is accepted as "no limit"
        if sat_limits.iter().any(|u| u.is_nan() || *u <= 0.0) {
            return Err(Error::InvalidInput(format!(
                "saturation limits must be strictly positive: {:?}",
                sat_limits.as_slice()
            )));
        }
        Ok(Self {
            optimum_value,
            optimizer,
            hessian,
            sat_limits,
        })
    }

    pub fn dim(&self) -> usize {
        self.hessian.dim()
    }

    pub fn optimum_value(&self) -> f64 {
        self.optimum_value
    }

    pub fn optimizer(&self) -> &DVector<f64> {
        &self.optimizer
    }

    pub fn hessian(&self) -> &PolytopicHessian {
        &self.hessian
    }

    pub fn sat_limits(&self) -> &DVector<f64> {
        &self.sat_limits
    }

    /// Map output `y = Q(θ)` for the Hessian weight `alpha`.
    pub fn map_eval(&self, alpha: &SimplexWeight, theta: &DVector<f64>) -> Result<f64> {
        check_dim("theta", self.dim(), theta.len())?;
        let h = self.hessian.at(alpha)?;
        Ok(quadratic_map(self.optimum_value, &self.optimizer, &h, theta))
    }
}

/// `q + ½ (θ − θ*)ᵀ H (θ − θ*)` without dimension checks.
pub(crate) fn quadratic_map(q: f64, optimizer: &DVector<f64>, h: &DMatrix<f64>, theta: &DVector<f64>) -> f64 {
    let e = theta - optimizer;
    q + 0.5 * e.dot(&(h * &e))
}

/// Elementwise clamp to `[−ū, ū]`.
pub fn saturate(u: &DVector<f64>, limits: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim("saturation limits", u.len(), limits.len())?;
    Ok(saturate_unchecked(u, limits))
}

pub(crate) fn saturate_unchecked(u: &DVector<f64>, limits: &DVector<f64>) -> DVector<f64> {
    u.zip_map(limits, |v, lim| v.clamp(-lim, lim))
}

/// Dead-zone `ψ(u) = u − sat(u)`, rounded so that `sat(u) + ψ(u) == u` holds
/// exactly whenever some double achieves it.
pub fn deadzone(u: &DVector<f64>, limits: &DVector<f64>) -> Result<DVector<f64>> {
    let s = saturate(u, limits)?;
    Ok(u.zip_map(&s, exact_remainder))
}

/// A float `d` with `s + d == u` after rounding, as close as possible to `u − s`.
fn exact_remainder(u: f64, s: f64) -> f64 {
    let mut d = u - s;
    for _ in 0..8 {
        let r = s + d;
        if r == u || !r.is_finite() {
            break;
        }
        d = if r < u { d.next_up() } else { d.next_down() };
    }
    d
}
