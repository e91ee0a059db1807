//! Matrix-inequality conditions for the averaged saturated loop: stability
//! analysis for a fixed gain, ellipsoid inclusion in the sector region, and
//! robust gain synthesis over a Hessian polytope.

mod analysis;
pub mod backend;
mod ellipsoid;
pub mod expr;
pub mod objective;
pub mod problem;
mod synthesis;

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use self::analysis::{
    analysis_matrix, analysis_problem, check_analysis, check_inclusion, check_inclusion_with, solve_analysis,
    AnalysisReport, AnalysisSolution, InclusionReport, InclusionRow, VertexMargin, DEFAULT_INCLUSION_SAMPLES,
};
pub use self::backend::{BackendRegistry, Capabilities, ConicBackend};
pub use self::ellipsoid::{ellipsoid_of, Ellipsoid};
pub use self::objective::{ObjectiveRegistry, VolumeObjective};
pub use self::problem::{ConicProblem, ConicSolution, SolveStatus};
pub use self::synthesis::{
    solve_synthesis, solve_synthesis_search, synthesis_matrix, synthesis_problem, SynthesisResult,
    EPSILON_GRID,
};
use crate::error::{Error, Result};
use crate::linalg::{self, serde_rows};
use crate::model::PolytopicHessian;

/// Strictness margin for `≺`/`≻` conditions: `1e-7 · (1 + max ‖Hᵢ‖)`.
pub fn default_margin_tol(hess: &PolytopicHessian) -> f64 {
    1e-7 * (1.0 + hess.max_norm())
}

/// Lyapunov matrix `P`, sector multipliers `L` and diagonal `U`, and decay rate `η`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    #[serde(with = "serde_rows")]
    pub p: DMatrix<f64>,
    #[serde(with = "serde_rows")]
    pub l: DMatrix<f64>,
    #[serde(with = "serde_rows")]
    pub u: DMatrix<f64>,
    pub eta: f64,
}

impl Certificate {
    pub fn new(p: DMatrix<f64>, l: DMatrix<f64>, u: DMatrix<f64>, eta: f64) -> Result<Self> {
        let cert = Self { p, l, u, eta };
        cert.validate()?;
        Ok(cert)
    }

    pub fn dim(&self) -> usize {
        self.p.nrows()
    }

    /// Shape, symmetry and sign checks.
    pub fn validate(&self) -> Result<()> {
        let n = self.p.nrows();
        if n == 0 || self.p.ncols() != n {
            return Err(Error::InvalidInput("P must be square and non-empty".into()));
        }
        if self.l.shape() != (n, n) || self.u.shape() != (n, n) {
            return Err(Error::InvalidInput(format!("L and U must be {n}x{n}")));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidInput(format!("decay rate must be positive, got {}", self.eta)));
        }
        let scale = self.p.amax().max(f64::MIN_POSITIVE);
        if (&self.p - self.p.transpose()).amax() > 1e-9 * scale {
            return Err(Error::InvalidInput("P is not symmetric".into()));
        }
        if linalg::min_sym_eigenvalue(&self.p) <= 0.0 {
            return Err(Error::InvalidInput("P is not positive definite".into()));
        }
        for i in 0..n {
            for j in 0..n {
                if i != j && self.u[(i, j)] != 0.0 {
                    return Err(Error::InvalidInput("U must be diagonal".into()));
                }
            }
            if self.u[(i, i)] <= 0.0 {
                return Err(Error::InvalidInput("U must be positive".into()));
            }
        }
        Ok(())
    }

    /// `√(λmax(P)/λmin(P))`, the transient constant of the state bound.
    pub fn kappa(&self) -> f64 {
        let ev = linalg::sym_eigenvalues(&self.p);
        (ev[ev.len() - 1] / ev[0]).sqrt()
    }

    /// Same ratio for `P̄ = HᵀPH`, the constant for the parameter error.
    pub fn kappa_bar(&self, h: &DMatrix<f64>) -> f64 {
        let pbar = h.transpose() * &self.p * h;
        let ev = linalg::sym_eigenvalues(&pbar);
        (ev[ev.len() - 1] / ev[0]).sqrt()
    }
}

/// Solve outcome where infeasibility is an expected answer rather than an error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Feasibility<T> {
    Feasible(T),
    Infeasible { status: SolveStatus, detail: String },
}

impl<T> Feasibility<T> {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible(_))
    }

    pub fn feasible(self) -> Option<T> {
        match self {
            Feasibility::Feasible(v) => Some(v),
            Feasibility::Infeasible { .. } => None,
        }
    }
}

/// Lower-left block of the synthesis inequality.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block31Variant {
    /// `Y − V Hᵢ`, consistent with the congruence that recovers `L = Y·slack⁻¹`.
    #[default]
    Proof,
    /// `Z + Y − V Hᵢ`.
    AsPrinted,
}

/// Solver plumbing shared by the analysis and synthesis programs.
#[derive(Clone)]
pub struct LmiSettings {
    pub backend: Arc<dyn ConicBackend>,
    pub objective: Arc<dyn VolumeObjective>,
    /// Overrides [`default_margin_tol`].
    pub margin_tol: Option<f64>,
    pub block31: Block31Variant,
    /// Seed for the boundary sampling of the inclusion check.
    pub seed: u64,
}

impl LmiSettings {
    /// Backend from `SATSEEK_BACKEND` (default otherwise) and the best objective it supports.
    pub fn from_env() -> Result<Self> {
        let backend = BackendRegistry::builtin().from_env()?;
        Self::with_backend(backend)
    }

    pub fn with_backend(backend: Arc<dyn ConicBackend>) -> Result<Self> {
        let objective = ObjectiveRegistry::builtin()
            .best_for(backend.capabilities())
            .ok_or_else(|| Error::Capability {
                backend: backend.name().to_string(),
                missing: "any volume objective cone",
            })?;
        Ok(Self {
            backend,
            objective,
            margin_tol: None,
            block31: Block31Variant::default(),
            seed: 0,
        })
    }

    pub fn margin_for(&self, hess: &PolytopicHessian) -> f64 {
        self.margin_tol.unwrap_or_else(|| default_margin_tol(hess))
    }
}

impl Default for LmiSettings {
    fn default() -> Self {
        Self::with_backend(Arc::new(backend::ClarabelBackend::default())).expect("builtin backend has all cones")
    }
}

impl std::fmt::Debug for LmiSettings {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LmiSettings")
            .field("backend", &self.backend.name())
            .field("objective", &self.objective.name())
            .field("margin_tol", &self.margin_tol)
            .field("block31", &self.block31)
            .field("seed", &self.seed)
            .finish()
    }
}

/// Solves `problem`; when the backend fails numerically, the problem is solved
/// again without its objective so that infeasibility is still recognized (an
/// unbounded volume surrogate can stall interior-point iterations on
/// infeasible problems).
pub(crate) fn solve_classified(backend: &dyn ConicBackend, problem: &ConicProblem) -> Result<ConicSolution> {
    let sol = backend.solve(problem)?;
    if sol.status != SolveStatus::NumericalFailure || problem.objective.is_none() {
        return Ok(sol);
    }
    let mut plain = problem.clone();
    plain.objective = None;
    let check = backend.solve(&plain)?;
    if check.status == SolveStatus::Infeasible {
        Ok(ConicSolution {
            detail: format!("{} (objective solve: {})", check.detail, sol.detail),
            ..check
        })
    } else {
        Ok(sol)
    }
}

/// Maps a solver answer without a point to a result: infeasibility is reported,
/// anything else is an error.
pub(crate) fn no_point<T>(sol: &ConicSolution) -> Result<Feasibility<T>> {
    match sol.status {
        SolveStatus::Infeasible => Ok(Feasibility::Infeasible {
            status: sol.status,
            detail: sol.detail.clone(),
        }),
        status => Err(Error::Solver {
            status,
            detail: sol.detail.clone(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    #[test]
    fn certificate_validation_and_kappa() {
        let c = Certificate::new(dmatrix![4.0, 0.0; 0.0, 1.0], DMatrix::zeros(2, 2), DMatrix::identity(2, 2), 1.0)
            .unwrap();
        assert_relative_eq!(c.kappa(), 2.0, epsilon = 1e-12);
        assert_relative_eq!(c.kappa_bar(&DMatrix::identity(2, 2)), 2.0, epsilon = 1e-12);
        let bad_u = Certificate::new(DMatrix::identity(2, 2), DMatrix::zeros(2, 2), dmatrix![1.0, 0.1; 0.0, 1.0], 1.0);
        assert!(bad_u.is_err());
        let bad_p = Certificate::new(dmatrix![1.0, 2.0; 2.0, 1.0], DMatrix::zeros(2, 2), DMatrix::identity(2, 2), 1.0);
        assert!(bad_p.is_err());
        assert!(Certificate::new(DMatrix::identity(1, 1), DMatrix::zeros(1, 1), DMatrix::identity(1, 1), 0.0).is_err());
    }

    #[test]
    fn certificate_json_roundtrip() {
        let c = Certificate::new(dmatrix![2.0, 0.1; 0.1, 1.0], dmatrix![0.3, -0.2; 0.0, 1.5], dmatrix![0.5, 0.0; 0.0, 2.0], 0.7)
            .unwrap();
        let text = serde_json::to_string(&c).unwrap();
        assert!(text.contains("\"p\":[[2.0,0.1],[0.1,1.0]]"));
        let back: Certificate = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn settings_default_objective() {
        let s = LmiSettings::default();
        assert_eq!(s.backend.name(), "clarabel");
        assert_eq!(s.objective.name(), "logdet");
    }
}
