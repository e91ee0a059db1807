//! Ellipsoids `{x : xᵀ P x ≤ 1}`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::Certificate;
use crate::error::{Error, Result};
use crate::linalg::{self, serde_rows};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    #[serde(with = "serde_rows")]
    pub p: DMatrix<f64>,
    /// `1/√λ` over the eigenvalues of `P`, ascending.
    pub semi_axes: Vec<f64>,
    /// `det(P)^{-1/2}`, proportional to the volume.
    pub volume_factor: f64,
}

impl Ellipsoid {
    pub fn new(p: &DMatrix<f64>) -> Result<Self> {
        let ev = linalg::sym_eigenvalues(p);
        if ev.first().is_none_or(|v| *v <= 0.0) {
            return Err(Error::InvalidInput("ellipsoid matrix is not positive definite".into()));
        }
        let mut semi_axes: Vec<f64> = ev.iter().map(|v| 1.0 / v.sqrt()).collect();
        semi_axes.sort_by(f64::total_cmp);
        let volume_factor = ev.iter().map(|v| 1.0 / v.sqrt()).product();
        Ok(Self {
            p: (p + p.transpose()) * 0.5,
            semi_axes,
            volume_factor,
        })
    }

    pub fn dim(&self) -> usize {
        self.p.nrows()
    }

    /// `xᵀ P x`.
    pub fn level(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.p * x))
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        self.level(x) <= 1.0
    }

    /// Boundary point in the direction `P^{-1/2} d`.
    pub fn boundary_point(&self, direction: &DVector<f64>) -> Result<DVector<f64>> {
        let norm = direction.norm();
        if norm == 0.0 {
            return Err(Error::InvalidInput("zero direction".into()));
        }
        Ok(linalg::inv_sqrt_spd(&self.p)? * direction / norm)
    }

    /// Whether `self ⊆ other`, i.e. `P_self ⪰ P_other` up to `tol`.
    pub fn is_subset_of(&self, other: &Ellipsoid, tol: f64) -> bool {
        linalg::min_sym_eigenvalue(&(&self.p - &other.p)) >= -tol
    }
}

pub fn ellipsoid_of(cert: &Certificate) -> Result<Ellipsoid> {
    Ellipsoid::new(&cert.p)
}
