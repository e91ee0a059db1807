//! Robust gain synthesis over the Hessian polytope.
//!
//! Decision variables are `W` (symmetric), `V` (diagonal), `Z`, `Y`, the slack
//! matrix `T` (full) and `Q₀` (symmetric). With fixed scalars `η, ε > 0`, each
//! vertex `Hᵢ` must satisfy
//!
//! ```text
//! [ HᵢZ + ZᵀHᵢ + 2ηW     ⋆             ⋆   ]
//! [ W − Tᵀ + εHᵢZ        −ε(Tᵀ + T)    ⋆   ]  ≺ 0
//! [ Y − VHᵢ              −εVHᵢ         −2V ]
//! ```
//!
//! together with `[W, (Z − Y)₍ₗ₎ᵀ; ⋆, ūₗ²] ⪰ 0` per actuator row and `W ⪰ Q₀ ≻ 0`.
//! The gain and certificate are recovered as `K = Z T⁻¹`, `L = Y T⁻¹`,
//! `P = T⁻ᵀ W T⁻¹`, `U = V⁻¹`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::analysis::{check_analysis, check_inclusion_with, AnalysisReport, InclusionReport, DEFAULT_INCLUSION_SAMPLES};
use super::expr::{AffMat, LinExpr};
use super::problem::{ConicProblem, ProblemBuilder, Sense, SolveStatus, Structure};
use super::{no_point, solve_classified, Block31Variant, Certificate, Feasibility, LmiSettings};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, serde_rows};
use crate::model::PolytopicHessian;

/// Largest acceptable condition number of the slack matrix.
pub const MAX_SLACK_CONDITION: f64 = 1e10;

/// Fallback values of `ε` tried by [`solve_synthesis_search`].
pub const EPSILON_GRID: [f64; 13] = [
    1e-2, 2e-2, 5e-2, 1e-1, 2e-1, 5e-1, 1.0, 2.0, 5.0, 10.0, 3e-2, 3e-1, 3.0,
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisResult {
    #[serde(with = "serde_rows")]
    pub gain: DMatrix<f64>,
    #[serde(with = "serde_rows")]
    pub w: DMatrix<f64>,
    #[serde(with = "serde_rows")]
    pub v: DMatrix<f64>,
    #[serde(with = "serde_rows")]
    pub z: DMatrix<f64>,
    #[serde(with = "serde_rows")]
    pub y: DMatrix<f64>,
    #[serde(with = "serde_rows")]
    pub slack: DMatrix<f64>,
    #[serde(with = "serde_rows")]
    pub q0: DMatrix<f64>,
    pub epsilon: f64,
    pub eta: f64,
    pub block31: Block31Variant,
    pub certificate: Certificate,
    pub status: SolveStatus,
    pub objective: String,
    pub objective_value: f64,
    pub slack_condition: f64,
    /// Vertex margins of the recovered certificate, checked at zero margin.
    pub analysis: AnalysisReport,
    pub inclusion: InclusionReport,
}

/// The `3n × 3n` synthesis matrix at vertex `h`, as an affine expression.
fn vertex_block(
    h: &DMatrix<f64>,
    vars: &Vars,
    eta: f64,
    epsilon: f64,
    block31: Block31Variant,
) -> AffMat {
    let Vars { w, v, z, y, t, .. } = vars;
    let hz = z.lmul(h);
    let a11 = hz.add(&hz.transpose()).add(&w.scale(2.0 * eta));
    let a21 = w.sub(&t.transpose()).add(&hz.scale(epsilon));
    let a22 = t.transpose().add(t).scale(-epsilon);
    let vh = v.rmul(h);
    let a31 = match block31 {
        Block31Variant::Proof => y.sub(&vh),
        Block31Variant::AsPrinted => z.add(y).sub(&vh),
    };
    let a32 = vh.scale(-epsilon);
    let a33 = v.scale(-2.0);
    AffMat::block(&[
        vec![a11, a21.transpose(), a31.transpose()],
        vec![a21, a22, a32.transpose()],
        vec![a31, a32, a33],
    ])
}

struct Vars {
    w: AffMat,
    v: AffMat,
    z: AffMat,
    y: AffMat,
    t: AffMat,
}

/// Numeric synthesis matrix at `h` for given variable values.
#[allow(clippy::too_many_arguments)]
pub fn synthesis_matrix(
    h: &DMatrix<f64>,
    w: &DMatrix<f64>,
    v: &DMatrix<f64>,
    z: &DMatrix<f64>,
    y: &DMatrix<f64>,
    slack: &DMatrix<f64>,
    eta: f64,
    epsilon: f64,
    block31: Block31Variant,
) -> DMatrix<f64> {
    let vars = Vars {
        w: AffMat::constant(w),
        v: AffMat::constant(v),
        z: AffMat::constant(z),
        y: AffMat::constant(y),
        t: AffMat::constant(slack),
    };
    vertex_block(h, &vars, eta, epsilon, block31).eval(&[])
}

fn check_scalars(eta: f64, epsilon: f64) -> Result<()> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidInput(format!("decay rate must be positive, got {eta}")));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidInput(format!("epsilon must be positive, got {epsilon}")));
    }
    Ok(())
}

/// Builds the synthesis program, which is also the problem dump.
pub fn synthesis_problem(
    hess: &PolytopicHessian,
    limits: &DVector<f64>,
    eta: f64,
    epsilon: f64,
    settings: &LmiSettings,
) -> Result<ConicProblem> {
    let n = hess.dim();
    check_dim("saturation limits", n, limits.len())?;
    check_scalars(eta, epsilon)?;
    let margin = settings.margin_for(hess);
    let mut b = ProblemBuilder::new(format!("synthesis eta={eta} epsilon={epsilon}"));
    let vars = Vars {
        w: b.matrix_var("W", n, n, Structure::Symmetric),
        v: b.matrix_var("V", n, n, Structure::Diagonal),
        z: b.matrix_var("Z", n, n, Structure::Full),
        y: b.matrix_var("Y", n, n, Structure::Full),
        t: b.matrix_var("T", n, n, Structure::Full),
    };
    let q0 = b.matrix_var("Q0", n, n, Structure::Symmetric);

    for (i, h) in hess.vertices().iter().enumerate() {
        let block = vertex_block(h, &vars, eta, epsilon, settings.block31);
        b.nsd(format!("decay at vertex {i}"), &block, margin);
    }
    let z_minus_y = vars.z.sub(&vars.y);
    for (row, &ubar) in limits.iter().enumerate() {
        if ubar.is_infinite() {
            continue;
        }
        let r = z_minus_y.row(row);
        let block = AffMat::block(&[
            vec![vars.w.clone(), r.transpose()],
            vec![r, AffMat::constant(&DMatrix::from_element(1, 1, ubar * ubar))],
        ]);
        b.psd(format!("inclusion row {row}"), &block, margin);
    }
    b.psd("W dominates Q0", &vars.w.sub(&q0), 0.0);
    b.psd("Q0 positive", &q0, margin);
    for i in 0..n {
        b.nonneg(format!("V[{i}] positive"), &vars.v.get(i, i).clone() - &LinExpr::constant(margin));
    }
    let obj = settings.objective.encode(&mut b, &q0, "Q0");
    b.objective(Sense::Maximize, obj, settings.objective.describe("Q0"));
    Ok(b.finish())
}

/// Solves the synthesis program for fixed `ε` and cross-validates the result.
///
/// Infeasibility is an `Ok(Infeasible)`; a singular slack or a recovered
/// certificate failing the analysis conditions is an error.
pub fn solve_synthesis(
    hess: &PolytopicHessian,
    limits: &DVector<f64>,
    eta: f64,
    epsilon: f64,
    settings: &LmiSettings,
) -> Result<Feasibility<SynthesisResult>> {
    let problem = synthesis_problem(hess, limits, eta, epsilon, settings)?;
    let sol = solve_classified(settings.backend.as_ref(), &problem)?;
    if !sol.has_point() {
        return no_point(&sol);
    }
    let value = |name: &str| {
        let var = problem.variable(name).expect("declared variable");
        sol.value(&problem.variable_expr(var))
    };
    let (w, v, z, y, slack, q0) = (value("W"), value("V"), value("Z"), value("Y"), value("T"), value("Q0"));

    let slack_condition = linalg::condition_number(&slack);
    if slack_condition.is_nan() || slack_condition > MAX_SLACK_CONDITION {
        return Err(Error::Synthesis(format!(
            "slack matrix is numerically singular (condition number {slack_condition:e})"
        )));
    }
    let t_inv = slack
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Synthesis("slack matrix is singular".into()))?;
    let gain = &z * &t_inv;
    let l = &y * &t_inv;
    let p = t_inv.transpose() * &w * &t_inv;
    let p = (&p + p.transpose()) * 0.5;
    let u = DMatrix::from_diagonal(&v.diagonal().map(|d| 1.0 / d));
    let certificate = Certificate::new(p, l, u, eta)
        .map_err(|e| Error::Synthesis(format!("recovered certificate is malformed: {e}")))?;

    let analysis = check_analysis(hess, &gain, &certificate, 0.0)?;
    let inclusion = check_inclusion_with(&certificate, &gain, limits, DEFAULT_INCLUSION_SAMPLES, settings.seed)?;
    if !(analysis.pass && inclusion.pass) {
        return Err(Error::CrossValidation {
            analysis: Box::new(analysis),
            inclusion: Box::new(inclusion),
        });
    }
    Ok(Feasibility::Feasible(SynthesisResult {
        gain,
        w,
        v,
        z,
        y,
        slack,
        q0,
        epsilon,
        eta,
        block31: settings.block31,
        certificate,
        status: sol.status,
        objective: settings.objective.describe("Q0"),
        objective_value: sol.objective_value,
        slack_condition,
        analysis,
        inclusion,
    }))
}

/// Tries `epsilon` first, then every grid value, returning the feasible result
/// with the largest objective among the grid when the first attempt fails.
pub fn solve_synthesis_search(
    hess: &PolytopicHessian,
    limits: &DVector<f64>,
    eta: f64,
    epsilon: f64,
    settings: &LmiSettings,
) -> Result<Feasibility<SynthesisResult>> {
    let first = solve_synthesis(hess, limits, eta, epsilon, settings);
    if let Ok(Feasibility::Feasible(_)) = first {
        return first;
    }
    let mut grid = EPSILON_GRID.to_vec();
    grid.sort_by(f64::total_cmp);
    let mut best: Option<SynthesisResult> = None;
    for eps in grid {
        if eps == epsilon {
            continue;
        }
        if let Ok(Feasibility::Feasible(res)) = solve_synthesis(hess, limits, eta, eps, settings) {
            if best.as_ref().is_none_or(|b| res.objective_value > b.objective_value) {
                best = Some(res);
            }
        }
    }
    match best {
        Some(res) => Ok(Feasibility::Feasible(res)),
        None => first,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Definiteness;
    use nalgebra::{dmatrix, dvector};

    fn scalar_family() -> PolytopicHessian {
        PolytopicHessian::new(vec![dmatrix![0.9], dmatrix![1.1]], Definiteness::Positive).unwrap()
    }

    #[test]
    fn scalar_synthesis_gives_negative_gain() {
        let res = solve_synthesis(&scalar_family(), &dvector![1.0], 0.5, 0.5, &LmiSettings::default())
            .unwrap()
            .feasible()
            .expect("scalar family is feasible");
        assert!(res.gain[(0, 0)] < 0.0);
        assert!(res.analysis.pass && res.inclusion.pass);
        // recovery identities
        assert!((&res.gain * &res.slack - &res.z).amax() < 1e-8);
        assert!((&res.certificate.l * &res.slack - &res.y).amax() < 1e-8);
        assert!((&res.certificate.u * &res.v - DMatrix::identity(1, 1)).amax() < 1e-8);
        assert!(linalg::min_sym_eigenvalue(&(&res.w - &res.q0)) > -1e-8);
    }

    #[test]
    fn objective_grows_with_limits() {
        let settings = LmiSettings::default();
        let mut last = f64::NEG_INFINITY;
        for ubar in [0.5, 1.0, 2.0, 4.0] {
            let res = solve_synthesis(&scalar_family(), &dvector![ubar], 0.5, 0.5, &settings)
                .unwrap()
                .feasible()
                .unwrap();
            assert!(res.objective_value >= last - 1e-6, "{} < {last}", res.objective_value);
            last = res.objective_value;
        }
    }

    #[test]
    fn numeric_block_matches_affine_assembly() {
        let h = dmatrix![2.0, 0.3; 0.3, 1.0];
        let w = dmatrix![1.0, 0.1; 0.1, 2.0];
        let v = dmatrix![0.5, 0.0; 0.0, 0.7];
        let z = dmatrix![-0.2, 0.1; 0.0, -0.3];
        let y = dmatrix![0.05, 0.0; 0.02, 0.01];
        let t = dmatrix![1.0, 0.2; -0.1, 0.9];
        let m = synthesis_matrix(&h, &w, &v, &z, &y, &t, 1.0, 0.5, Block31Variant::Proof);
        assert_eq!(m.shape(), (6, 6));
        assert!((&m - m.transpose()).amax() < 1e-15);
        let a31 = m.view((4, 0), (2, 2)).clone_owned();
        assert!((a31 - (&y - &v * &h)).amax() < 1e-15);
        let printed = synthesis_matrix(&h, &w, &v, &z, &y, &t, 1.0, 0.5, Block31Variant::AsPrinted);
        let a31 = printed.view((4, 0), (2, 2)).clone_owned();
        assert!((a31 - (&z + &y - &v * &h)).amax() < 1e-15);
        let a22 = m.view((2, 2), (2, 2)).clone_owned();
        assert!((a22 + (t.transpose() + &t) * 0.5).amax() < 1e-15);
    }
}
