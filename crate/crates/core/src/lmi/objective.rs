//! Concave volume surrogates for a symmetric matrix variable, registered by name.
//!
//! Both encodings introduce a lower-triangular `Δ` with
//! `[[X, Δ], [Δᵀ, diag(Δ)]] ⪰ 0`, which forces `det X ≥ Π Δᵢᵢ`, and then bound a
//! concave function of the diagonal of `Δ` with scalar cones.

use std::sync::Arc;

use super::backend::Capabilities;
use super::expr::{AffMat, LinExpr};
use super::problem::{ProblemBuilder, Structure};
use crate::error::{Error, Result};

pub trait VolumeObjective: Send + Sync {
    fn name(&self) -> &'static str;

    /// Cones needed beyond the semidefinite one.
    fn requires(&self) -> Capabilities;

    /// Adds the epigraph constraints for `x` (square, symmetric) and returns the
    /// expression to maximize.
    fn encode(&self, builder: &mut ProblemBuilder, x: &AffMat, label: &str) -> LinExpr;

    /// Human-readable form of the maximized quantity.
    fn describe(&self, label: &str) -> String;
}

/// Adds the triangular factor block and returns `Δ`.
fn triangular_factor(builder: &mut ProblemBuilder, x: &AffMat, label: &str) -> AffMat {
    let n = x.nrows();
    let delta = builder.matrix_var(&format!("{label}_factor"), n, n, Structure::LowerTriangular);
    let diag = AffMat::from_fn(n, n, |i, j| {
        if i == j {
            delta.get(i, i).clone()
        } else {
            LinExpr::default()
        }
    });
    let block = AffMat::block(&[vec![x.clone(), delta.clone()], vec![delta.transpose(), diag]]);
    builder.psd(format!("{label} determinant factor"), &block, 0.0);
    delta
}

/// `Σ log Δᵢᵢ`, a lower bound on `log det X` that is tight at the optimum.
#[derive(Clone, Copy, Debug, Default)]
pub struct LogDet;

impl VolumeObjective for LogDet {
    fn name(&self) -> &'static str {
        "logdet"
    }

    fn requires(&self) -> Capabilities {
        Capabilities {
            semidefinite: true,
            log_determinant: true,
            ..Capabilities::default()
        }
    }

    fn encode(&self, builder: &mut ProblemBuilder, x: &AffMat, label: &str) -> LinExpr {
        let delta = triangular_factor(builder, x, label);
        let mut total = LinExpr::default();
        for i in 0..x.nrows() {
            let t = builder.scalar_var(&format!("{label}_log{i}"));
            // t ≤ log Δᵢᵢ
            builder.exponential(
                format!("{label} log bound {i}"),
                [t.clone(), LinExpr::constant(1.0), delta.get(i, i).clone()],
            );
            total = &total + &t;
        }
        total
    }

    fn describe(&self, label: &str) -> String {
        format!("logdet({label})")
    }
}

/// `(Π Δᵢᵢ)^{1/n}`, a lower bound on `det(X)^{1/n}`, built from a chain of power cones.
#[derive(Clone, Copy, Debug, Default)]
pub struct GeoMean;

impl VolumeObjective for GeoMean {
    fn name(&self) -> &'static str {
        "geomean"
    }

    fn requires(&self) -> Capabilities {
        Capabilities {
            semidefinite: true,
            power: true,
            ..Capabilities::default()
        }
    }

    fn encode(&self, builder: &mut ProblemBuilder, x: &AffMat, label: &str) -> LinExpr {
        let delta = triangular_factor(builder, x, label);
        // t₁ = Δ₁₁; t_k ≤ t_{k−1}^{(k−1)/k} Δ_kk^{1/k} gives t_k ≤ (Δ₁₁⋯Δ_kk)^{1/k}
        let mut prev = delta.get(0, 0).clone();
        builder.nonneg(format!("{label} factor 0"), prev.clone());
        for k in 2..=x.nrows() {
            let t = builder.scalar_var(&format!("{label}_gm{k}"));
            builder.power(
                format!("{label} geometric mean {k}"),
                (k - 1) as f64 / k as f64,
                [prev, delta.get(k - 1, k - 1).clone(), t.clone()],
            );
            prev = t;
        }
        prev
    }

    fn describe(&self, label: &str) -> String {
        format!("det({label})^(1/n)")
    }
}

#[derive(Clone)]
pub struct ObjectiveRegistry {
    entries: Vec<Arc<dyn VolumeObjective>>,
}

impl ObjectiveRegistry {
    /// `logdet` first, so it is the default.
    pub fn builtin() -> Self {
        Self {
            entries: vec![Arc::new(LogDet), Arc::new(GeoMean)],
        }
    }

    pub fn register(&mut self, objective: Arc<dyn VolumeObjective>) {
        self.entries.retain(|o| o.name() != objective.name());
        self.entries.push(objective);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|o| o.name()).collect()
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn VolumeObjective>> {
        self.entries
            .iter()
            .find(|o| o.name().eq_ignore_ascii_case(name))
            .cloned()
            .ok_or_else(|| Error::InvalidInput(format!("unknown volume objective `{name}`")))
    }

    pub fn default_objective(&self) -> Arc<dyn VolumeObjective> {
        self.entries[0].clone()
    }

    /// First registered objective whose cones `caps` supports.
    pub fn best_for(&self, caps: Capabilities) -> Option<Arc<dyn VolumeObjective>> {
        self.entries
            .iter()
            .find(|o| {
                let r = o.requires();
                (!r.log_determinant || caps.log_determinant) && (!r.power || caps.power)
            })
            .cloned()
    }
}

impl Default for ObjectiveRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl std::fmt::Debug for ObjectiveRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.names()).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lmi::backend::{ClarabelBackend, ConicBackend};
    use crate::lmi::problem::Sense;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    /// Maximize the surrogate of X subject to X ⪯ C; the optimum is X = C.
    fn maximize_under(objective: &dyn VolumeObjective, c: &nalgebra::DMatrix<f64>) -> (f64, nalgebra::DMatrix<f64>) {
        let mut b = ProblemBuilder::new("volume");
        let x = b.matrix_var("X", c.nrows(), c.ncols(), Structure::Symmetric);
        b.psd("cap", &AffMat::constant(c).sub(&x), 0.0);
        let obj = objective.encode(&mut b, &x, "X");
        b.objective(Sense::Maximize, obj, objective.describe("X"));
        let sol = ClarabelBackend::default().solve(&b.finish()).unwrap();
        assert!(sol.has_point(), "{:?}", sol.status);
        (sol.objective_value, sol.value(&x))
    }

    #[test]
    fn logdet_matches_determinant() {
        let c = dmatrix![2.0, 0.5; 0.5, 1.0];
        let (value, x) = maximize_under(&LogDet, &c);
        assert_relative_eq!(value, c.determinant().ln(), epsilon = 1e-6);
        assert!((x - &c).amax() < 1e-5);
    }

    #[test]
    fn geomean_matches_determinant_root() {
        let c = dmatrix![3.0, 0.2, 0.0; 0.2, 1.0, 0.1; 0.0, 0.1, 0.5];
        let (value, _) = maximize_under(&GeoMean, &c);
        assert_relative_eq!(value, c.determinant().powf(1.0 / 3.0), epsilon = 1e-6);
        let (value, _) = maximize_under(&GeoMean, &dmatrix![4.0]);
        assert_relative_eq!(value, 4.0, epsilon = 1e-6);
    }

    #[test]
    fn registry_selects_by_name_and_capability() {
        let r = ObjectiveRegistry::builtin();
        assert_eq!(r.names(), vec!["logdet", "geomean"]);
        assert_eq!(r.default_objective().name(), "logdet");
        assert_eq!(r.get("GEOMEAN").unwrap().name(), "geomean");
        assert!(r.get("trace").is_err());
        let power_only = Capabilities {
            semidefinite: true,
            power: true,
            ..Capabilities::default()
        };
        assert_eq!(r.best_for(power_only).unwrap().name(), "geomean");
        assert!(r.best_for(Capabilities::default()).is_none());
    }
}
