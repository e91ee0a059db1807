//! Interior-point backend built on the `clarabel` crate.

use std::f64::consts::SQRT_2;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use super::{check_capabilities, Capabilities, ConicBackend};
use crate::error::{Error, Result};
use crate::lmi::expr::LinExpr;
use crate::lmi::problem::{ConicProblem, ConicSolution, ScalarConstraint, Sense, SolveStatus};

#[derive(Clone, Debug)]
pub struct ClarabelBackend {
    pub max_iter: u32,
    pub tol_feas: f64,
    pub tol_gap: f64,
    pub verbose: bool,
}

impl Default for ClarabelBackend {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol_feas: 1e-9,
            tol_gap: 1e-9,
            verbose: false,
        }
    }
}

/// Rows of `s = b − A x` accumulated cone by cone.
#[derive(Default)]
struct Rows {
    i: Vec<usize>,
    j: Vec<usize>,
    v: Vec<f64>,
    b: Vec<f64>,
    cones: Vec<SupportedConeT<f64>>,
}

impl Rows {
    /// Appends the row `s_r = scale · expr(x)`.
    fn push(&mut self, expr: &LinExpr, scale: f64) {
        let r = self.b.len();
        self.b.push(scale * expr.constant);
        for (var, coef) in &expr.terms {
            self.i.push(r);
            self.j.push(*var);
            self.v.push(-scale * coef);
        }
    }
}

fn map_status(status: SolverStatus) -> SolveStatus {
    match status {
        SolverStatus::Solved => SolveStatus::Optimal,
        SolverStatus::AlmostSolved => SolveStatus::Feasible,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
        _ => SolveStatus::NumericalFailure,
    }
}

impl ConicBackend for ClarabelBackend {
    fn name(&self) -> &'static str {
        "clarabel"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            semidefinite: true,
            linear_equalities: true,
            log_determinant: true,
            power: true,
        }
    }

    fn solve(&self, problem: &ConicProblem) -> Result<ConicSolution> {
        check_capabilities(self, problem)?;
        let n = problem.n_scalars;
        let mut rows = Rows::default();

        // equalities first so the zero cone is contiguous
        let eqs: Vec<&LinExpr> = problem
            .scalar_constraints
            .iter()
            .filter_map(|c| match c {
                ScalarConstraint::Equality { expr, .. } => Some(expr),
                _ => None,
            })
            .collect();
        if !eqs.is_empty() {
            for e in &eqs {
                rows.push(e, 1.0);
            }
            rows.cones.push(SupportedConeT::ZeroConeT(eqs.len()));
        }
        for c in &problem.scalar_constraints {
            match c {
                ScalarConstraint::Equality { .. } => {}
                ScalarConstraint::Nonnegative { expr, .. } => {
                    rows.push(expr, 1.0);
                    rows.cones.push(SupportedConeT::NonnegativeConeT(1));
                }
                ScalarConstraint::Exponential { args, .. } => {
                    for a in args {
                        rows.push(a, 1.0);
                    }
                    rows.cones.push(SupportedConeT::ExponentialConeT());
                }
                ScalarConstraint::Power { alpha, args, .. } => {
                    for a in args {
                        rows.push(a, 1.0);
                    }
                    rows.cones.push(SupportedConeT::PowerConeT(*alpha));
                }
            }
        }
        for lmi in &problem.lmis {
            // scaled upper triangle, column-major, of F(x) − margin·I
            for col in 0..lmi.size {
                for row in 0..=col {
                    let mut e = lmi.entry(row, col);
                    if row == col {
                        e.constant -= lmi.margin;
                        rows.push(&e, 1.0);
                    } else {
                        rows.push(&e, SQRT_2);
                    }
                }
            }
            rows.cones.push(SupportedConeT::PSDTriangleConeT(lmi.size));
        }

        let m = rows.b.len();
        let a = CscMatrix::new_from_triplets(m, n, rows.i, rows.j, rows.v);
        let p = CscMatrix::<f64>::zeros((n, n));
        let mut q = vec![0.0; n];
        let sign = match &problem.objective {
            Some(obj) => {
                let sign = match obj.sense {
                    Sense::Minimize => 1.0,
                    Sense::Maximize => -1.0,
                };
                for (var, coef) in &obj.expr.terms {
                    q[*var] += sign * coef;
                }
                sign
            }
            None => 1.0,
        };

        let settings = DefaultSettingsBuilder::default()
            .verbose(self.verbose)
            .max_iter(self.max_iter)
            .tol_feas(self.tol_feas)
            .tol_gap_abs(self.tol_gap)
            .tol_gap_rel(self.tol_gap)
            .build()
            .map_err(|e| Error::Solver {
                status: SolveStatus::NumericalFailure,
                detail: format!("bad solver settings: {e}"),
            })?;
        let mut solver = DefaultSolver::new(&p, &q, &a, &rows.b, &rows.cones, settings).map_err(|e| Error::Solver {
            status: SolveStatus::NumericalFailure,
            detail: format!("problem setup rejected: {e:?}"),
        })?;
        solver.solve();
        let sol = &solver.solution;
        let status = map_status(sol.status);
        let has_point = matches!(status, SolveStatus::Optimal | SolveStatus::Feasible);
        let constant = problem.objective.as_ref().map_or(0.0, |o| o.expr.constant);
        Ok(ConicSolution {
            status,
            x: if has_point { sol.x.clone() } else { Vec::new() },
            objective_value: if has_point { sign * sol.obj_val + constant } else { f64::NAN },
            iterations: sol.iterations,
            detail: format!("{:?}", sol.status),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lmi::expr::AffMat;
    use crate::lmi::problem::{ProblemBuilder, Structure};
    use approx::assert_relative_eq;

    #[test]
    fn small_sdp() {
        // max t  s.t. [[1, t], [t, 1]] ⪰ 0  → t = 1
        let mut b = ProblemBuilder::new("sdp");
        let t = b.scalar_var("t");
        let m = AffMat::from_fn(2, 2, |i, j| if i == j { LinExpr::constant(1.0) } else { t.clone() });
        b.psd("m", &m, 0.0);
        b.objective(Sense::Maximize, t, "t");
        let sol = ClarabelBackend::default().solve(&b.finish()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_relative_eq!(sol.x[0], 1.0, epsilon = 1e-6);
        assert_relative_eq!(sol.objective_value, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn exponential_and_power_orientation() {
        // max t with t ≤ ln 2
        let mut b = ProblemBuilder::new("exp");
        let t = b.scalar_var("t");
        b.exponential("log", [t.clone(), LinExpr::constant(1.0), LinExpr::constant(2.0)]);
        b.objective(Sense::Maximize, t, "t");
        let sol = ClarabelBackend::default().solve(&b.finish()).unwrap();
        assert_relative_eq!(sol.x[0], 2f64.ln(), epsilon = 1e-6);

        // max z with z ≤ sqrt(2 · 8)
        let mut b = ProblemBuilder::new("pow");
        let z = b.scalar_var("z");
        b.power("gm", 0.5, [LinExpr::constant(2.0), LinExpr::constant(8.0), z.clone()]);
        b.objective(Sense::Maximize, z, "z");
        let sol = ClarabelBackend::default().solve(&b.finish()).unwrap();
        assert_relative_eq!(sol.x[0], 4.0, epsilon = 1e-6);
    }

    #[test]
    fn margin_and_infeasibility() {
        // X ⪰ 0.5 I and X ⪯ 0.25 I cannot both hold
        let mut b = ProblemBuilder::new("infeasible");
        let x = b.matrix_var("X", 2, 2, Structure::Symmetric);
        b.psd("lower", &x, 0.5);
        b.psd("upper", &AffMat::identity(2).scale(0.25).sub(&x), 0.0);
        let sol = ClarabelBackend::default().solve(&b.finish()).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
        assert!(!sol.has_point());
    }

    #[test]
    fn equality_rows() {
        let mut b = ProblemBuilder::new("eq");
        let x = b.scalar_var("x");
        let y = b.scalar_var("y");
        b.equality("sum", &(&x + &y) - &LinExpr::constant(3.0));
        b.nonneg("x>=1", &x - &LinExpr::constant(1.0));
        b.nonneg("y>=0", y.clone());
        b.objective(Sense::Maximize, y, "y");
        let sol = ClarabelBackend::default().solve(&b.finish()).unwrap();
        assert_relative_eq!(sol.x[1], 2.0, epsilon = 1e-6);
    }
}
