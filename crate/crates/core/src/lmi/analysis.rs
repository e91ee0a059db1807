//! Stability analysis of the averaged loop `Ġ = H sat(K G)` for a fixed gain.
//!
//! For a certificate `(P, L, U, η)` the condition at every Hessian vertex is
//!
//! ```text
//! [ KᵀHP + PHK + 2ηP   LᵀU − PH ]
//! [ UL − HP            −2U      ]  ≺ 0
//! ```
//!
//! and the ellipsoid `{G : GᵀPG ≤ 1}` must lie inside the sector region
//! `{G : |(K − L)₍ₗ₎ G| ≤ ūₗ}`, row by row `[P, (K−L)₍ₗ₎ᵀ; ⋆, ūₗ²] ≻ 0`.
//!
//! The search over `(P, L, U)` is made convex by the congruence
//! `diag(P⁻¹, U⁻¹)` with `Q = P⁻¹`, `Y = L Q`, `S = U⁻¹`.

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::expr::AffMat;
use super::problem::{ConicProblem, ProblemBuilder, Sense, SolveStatus, Structure};
use super::{no_point, solve_classified, Certificate, Feasibility, LmiSettings};
use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::model::PolytopicHessian;

pub const DEFAULT_INCLUSION_SAMPLES: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VertexMargin {
    pub vertex: usize,
    pub max_eigenvalue: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub vertices: Vec<VertexMargin>,
    pub margin_tol: f64,
    /// Largest eigenvalue over all vertices.
    pub worst: f64,
    /// Every vertex matrix has all eigenvalues below `−margin_tol`.
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InclusionRow {
    pub row: usize,
    /// `None` for an unbounded actuator channel.
    pub limit: Option<f64>,
    /// Smallest eigenvalue of the row matrix; `None` when unbounded.
    pub min_eigenvalue: Option<f64>,
    /// `max over the ellipsoid of |(K − L)₍ₗ₎ G|`, equal to `√(r P⁻¹ rᵀ)`.
    pub exact_bound: f64,
    /// Largest `|(K − L)₍ₗ₎ G|` over the sampled boundary points.
    pub sampled_max: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InclusionReport {
    pub rows: Vec<InclusionRow>,
    pub samples: usize,
    pub pass: bool,
}

/// Result of [`solve_analysis`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSolution {
    pub certificate: Certificate,
    pub status: SolveStatus,
    pub objective: String,
    pub objective_value: f64,
    pub analysis: AnalysisReport,
    pub inclusion: InclusionReport,
}

fn check_square(name: &'static str, m: &DMatrix<f64>, n: usize) -> Result<()> {
    check_dim(name, n, m.nrows())?;
    check_dim(name, n, m.ncols())
}

/// The `2n × 2n` analysis matrix at one Hessian `h`.
pub fn analysis_matrix(h: &DMatrix<f64>, k: &DMatrix<f64>, cert: &Certificate) -> DMatrix<f64> {
    let n = h.nrows();
    let (p, l, u) = (&cert.p, &cert.l, &cert.u);
    let a11 = k.transpose() * h * p + p * h * k + p * (2.0 * cert.eta);
    let a21 = u * l - h * p;
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&a11);
    m.view_mut((n, 0), (n, n)).copy_from(&a21);
    m.view_mut((0, n), (n, n)).copy_from(&a21.transpose());
    m.view_mut((n, n), (n, n)).copy_from(&(u * -2.0));
    m
}

pub fn check_analysis(
    hess: &PolytopicHessian,
    k: &DMatrix<f64>,
    cert: &Certificate,
    margin_tol: f64,
) -> Result<AnalysisReport> {
    let n = hess.dim();
    check_square("gain", k, n)?;
    check_square("certificate", &cert.p, n)?;
    cert.validate()?;
    let vertices: Vec<VertexMargin> = hess
        .vertices()
        .iter()
        .enumerate()
        .map(|(vertex, h)| VertexMargin {
            vertex,
            max_eigenvalue: linalg::max_sym_eigenvalue(&analysis_matrix(h, k, cert)),
        })
        .collect();
    let worst = vertices
        .iter()
        .map(|v| v.max_eigenvalue)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(AnalysisReport {
        pass: worst < -margin_tol,
        vertices,
        margin_tol,
        worst,
    })
}

pub fn check_inclusion(cert: &Certificate, k: &DMatrix<f64>, limits: &DVector<f64>) -> Result<InclusionReport> {
    check_inclusion_with(cert, k, limits, DEFAULT_INCLUSION_SAMPLES, 0)
}

/// Row-wise inclusion check plus `samples` random boundary points of the ellipsoid.
pub fn check_inclusion_with(
    cert: &Certificate,
    k: &DMatrix<f64>,
    limits: &DVector<f64>,
    samples: usize,
    seed: u64,
) -> Result<InclusionReport> {
    let n = cert.dim();
    check_square("gain", k, n)?;
    check_dim("saturation limits", n, limits.len())?;
    cert.validate()?;
    let p_inv = cert
        .p
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidInput("P is singular".into()))?;
    let p_inv_sqrt = linalg::inv_sqrt_spd(&cert.p)?;
    let diff = k - &cert.l;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let boundary: Vec<DVector<f64>> = (0..samples)
        .map(|_| {
            let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let norm = z.norm().max(f64::MIN_POSITIVE);
            &p_inv_sqrt * z / norm
        })
        .collect();

    let rows: Vec<InclusionRow> = (0..n)
        .map(|row| {
            let r = diff.row(row).transpose();
            let exact_bound = r.dot(&(&p_inv * &r)).max(0.0).sqrt();
            let sampled_max = boundary.iter().map(|g| r.dot(g).abs()).fold(0.0, f64::max);
            let ubar = limits[row];
            if ubar.is_infinite() {
                return InclusionRow {
                    row,
                    limit: None,
                    min_eigenvalue: None,
                    exact_bound,
                    sampled_max,
                    pass: true,
                };
            }
            let mut m = DMatrix::zeros(n + 1, n + 1);
            m.view_mut((0, 0), (n, n)).copy_from(&cert.p);
            for j in 0..n {
                m[(j, n)] = r[j];
                m[(n, j)] = r[j];
            }
            m[(n, n)] = ubar * ubar;
            let min_eigenvalue = linalg::min_sym_eigenvalue(&m);
            InclusionRow {
                row,
                limit: Some(ubar),
                min_eigenvalue: Some(min_eigenvalue),
                exact_bound,
                sampled_max,
                pass: min_eigenvalue > 0.0 && sampled_max <= ubar,
            }
        })
        .collect();
    Ok(InclusionReport {
        pass: rows.iter().all(|r| r.pass),
        rows,
        samples,
    })
}

/// Convex analysis program in `Q = P⁻¹`, `Y = L Q`, `S = U⁻¹`, maximizing the
/// volume of the certified ellipsoid.
pub fn analysis_problem(
    hess: &PolytopicHessian,
    k: &DMatrix<f64>,
    eta: f64,
    limits: &DVector<f64>,
    settings: &LmiSettings,
) -> Result<ConicProblem> {
    let n = hess.dim();
    check_square("gain", k, n)?;
    check_dim("saturation limits", n, limits.len())?;
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidInput(format!("decay rate must be positive, got {eta}")));
    }
    let margin = settings.margin_for(hess);
    let mut b = ProblemBuilder::new("analysis");
    let q = b.matrix_var("Q", n, n, Structure::Symmetric);
    let y = b.matrix_var("Y", n, n, Structure::Full);
    let s = b.matrix_var("S", n, n, Structure::Diagonal);

    for (i, h) in hess.vertices().iter().enumerate() {
        let hkq = q.lmul(&(h * k));
        let a11 = hkq.add(&hkq.transpose()).add(&q.scale(2.0 * eta));
        let a21 = y.sub(&s.rmul(h));
        let block = AffMat::block(&[vec![a11, a21.transpose()], vec![a21, s.scale(-2.0)]]);
        b.nsd(format!("decay at vertex {i}"), &block, margin);
    }
    let kq_minus_y = q.lmul(k).sub(&y);
    for (row, &ubar) in limits.iter().enumerate() {
        if ubar.is_infinite() {
            continue;
        }
        let r = kq_minus_y.row(row);
        let block = AffMat::block(&[
            vec![q.clone(), r.transpose()],
            vec![r, AffMat::constant(&DMatrix::from_element(1, 1, ubar * ubar))],
        ]);
        b.psd(format!("inclusion row {row}"), &block, margin);
    }
    for i in 0..n {
        b.nonneg(format!("S[{i}] positive"), &s.get(i, i).clone() - &super::expr::LinExpr::constant(margin));
    }
    b.psd("Q positive", &q, margin);
    let obj = settings.objective.encode(&mut b, &q, "Q");
    b.objective(Sense::Maximize, obj, settings.objective.describe("Q"));
    Ok(b.finish())
}

/// Searches a certificate for the fixed gain `k`.
pub fn solve_analysis(
    hess: &PolytopicHessian,
    k: &DMatrix<f64>,
    eta: f64,
    limits: &DVector<f64>,
    settings: &LmiSettings,
) -> Result<Feasibility<AnalysisSolution>> {
    let problem = analysis_problem(hess, k, eta, limits, settings)?;
    let sol = solve_classified(settings.backend.as_ref(), &problem)?;
    if !sol.has_point() {
        return no_point(&sol);
    }
    let value = |name: &str| {
        let var = problem.variable(name).expect("declared variable");
        sol.value(&problem.variable_expr(var))
    };
    let q = value("Q");
    let q = (&q + q.transpose()) * 0.5;
    let p = q
        .try_inverse()
        .ok_or_else(|| Error::Synthesis("analysis returned a singular Q".into()))?;
    let p = (&p + p.transpose()) * 0.5;
    let l = value("Y") * &p;
    let u = DMatrix::from_diagonal(&value("S").diagonal().map(|s| 1.0 / s));
    let certificate = Certificate::new(p, l, u, eta)?;
    let analysis = check_analysis(hess, k, &certificate, 0.0)?;
    let inclusion = check_inclusion_with(&certificate, k, limits, DEFAULT_INCLUSION_SAMPLES, settings.seed)?;
    Ok(Feasibility::Feasible(AnalysisSolution {
        certificate,
        status: sol.status,
        objective: settings.objective.describe("Q"),
        objective_value: sol.objective_value,
        analysis,
        inclusion,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Definiteness;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector};

    fn scalar_hess(h: f64) -> PolytopicHessian {
        PolytopicHessian::new(vec![dmatrix![h]], Definiteness::Positive).unwrap()
    }

    fn scalar_cert(p: f64, l: f64, u: f64, eta: f64) -> Certificate {
        Certificate::new(dmatrix![p], dmatrix![l], dmatrix![u], eta).unwrap()
    }

    #[test]
    fn scalar_analysis_matrix_by_hand() {
        let cert = scalar_cert(1.0, 0.0, 1.0, 0.1);
        let m = analysis_matrix(&dmatrix![1.0], &dmatrix![-1.0], &cert);
        assert_eq!(m, dmatrix![-1.8, -1.0; -1.0, -2.0]);
        // trace −3.8, det 2.6: both eigenvalues negative
        let report = check_analysis(&scalar_hess(1.0), &dmatrix![-1.0], &cert, 1e-7).unwrap();
        assert!(report.pass);
        let expected = (-3.8 + (3.8f64 * 3.8 - 4.0 * 2.6).sqrt()) / 2.0;
        assert_relative_eq!(report.worst, expected, epsilon = 1e-12);
    }

    #[test]
    fn destabilizing_gain_fails() {
        for &k in &[0.5, 1.0, 3.0] {
            for &eta in &[0.01, 1.0] {
                let cert = scalar_cert(1.0, 0.0, 1.0, eta);
                let report = check_analysis(&scalar_hess(1.0), &dmatrix![k], &cert, 0.0).unwrap();
                assert!(!report.pass);
                assert!(report.vertices[0].max_eigenvalue > 0.0);
            }
        }
    }

    #[test]
    fn inclusion_determinant_cases() {
        let k = dmatrix![3.0];
        let limits = dvector![2.0];
        let fail = check_inclusion(&scalar_cert(1.0, 0.0, 1.0, 1.0), &k, &limits).unwrap();
        // [[1, 3], [3, 4]] has det −5
        assert!(!fail.pass);
        assert!(fail.rows[0].min_eigenvalue.unwrap() < 0.0);
        assert_relative_eq!(fail.rows[0].exact_bound, 3.0, epsilon = 1e-12);
        let pass = check_inclusion(&scalar_cert(4.0, 0.0, 1.0, 1.0), &k, &limits).unwrap();
        // [[4, 3], [3, 4]] has det 7
        assert!(pass.pass);
        assert_relative_eq!(pass.rows[0].exact_bound, 1.5, epsilon = 1e-12);
        assert!(pass.rows[0].sampled_max <= 1.5 + 1e-12);
        // L = K leaves only [P, 0; 0, ū²]
        let same = check_inclusion(&scalar_cert(0.01, 3.0, 1.0, 1.0), &k, &limits).unwrap();
        assert!(same.pass);
        assert_eq!(same.rows[0].exact_bound, 0.0);
    }

    #[test]
    fn unbounded_channel_is_skipped() {
        let cert = Certificate::new(DMatrix::identity(2, 2), DMatrix::zeros(2, 2), DMatrix::identity(2, 2), 1.0).unwrap();
        let k = dmatrix![-5.0, 0.0; 0.0, -5.0];
        let report = check_inclusion(&cert, &k, &dvector![f64::INFINITY, 1.0]).unwrap();
        assert!(report.rows[0].pass && report.rows[0].limit.is_none());
        assert!(!report.rows[1].pass);
        assert!(!report.pass);
    }

    #[test]
    fn scalar_solve_feasible_and_infeasible() {
        let settings = LmiSettings::default();
        let hess = scalar_hess(1.0);
        let sol = solve_analysis(&hess, &dmatrix![-1.0], 0.1, &dvector![2.0], &settings)
            .unwrap()
            .feasible()
            .expect("stabilizing scalar gain is certifiable");
        assert!(sol.analysis.pass);
        assert!(sol.inclusion.pass);
        let res = solve_analysis(&hess, &dmatrix![1.0], 0.1, &dvector![2.0], &settings).unwrap();
        assert!(!res.is_feasible());
    }
}
