//! Backend-independent description of a conic program with LMI blocks.
//!
//! The serialized form of [`ConicProblem`] is the problem dump: every matrix
//! variable with its structure, every LMI as a list of affine entries of its
//! upper triangle, the scalar cone constraints and the objective.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::expr::{AffMat, LinExpr};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    Symmetric,
    Diagonal,
    Full,
    LowerTriangular,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixVariable {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub structure: Structure,
    /// Index of the first scalar belonging to this variable.
    pub offset: usize,
    /// Number of scalars.
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmiEntry {
    pub row: usize,
    pub col: usize,
    #[serde(flatten)]
    pub expr: LinExpr,
}

/// `F(x) ⪰ margin · I` for the symmetric affine matrix `F`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmiConstraint {
    pub name: String,
    pub size: usize,
    pub margin: f64,
    /// Upper triangle, `row ≤ col`.
    pub entries: Vec<LmiEntry>,
}

impl LmiConstraint {
    pub fn entry(&self, row: usize, col: usize) -> LinExpr {
        let (r, c) = if row <= col { (row, col) } else { (col, row) };
        self.entries
            .iter()
            .find(|e| e.row == r && e.col == c)
            .map(|e| e.expr.clone())
            .unwrap_or_default()
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.size, self.size);
        for e in &self.entries {
            let v = e.expr.eval(x);
            m[(e.row, e.col)] = v;
            m[(e.col, e.row)] = v;
        }
        m
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarConstraint {
    /// `expr ≥ 0`.
    Nonnegative { name: String, expr: LinExpr },
    /// `expr = 0`.
    Equality { name: String, expr: LinExpr },
    /// `(a, b, c)` with `b · exp(a / b) ≤ c`, `b > 0`.
    Exponential { name: String, args: [LinExpr; 3] },
    /// `(a, b, c)` with `a^α b^(1−α) ≥ |c|`, `a, b ≥ 0`.
    Power { name: String, alpha: f64, args: [LinExpr; 3] },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub sense: Sense,
    pub expr: LinExpr,
    /// Human-readable description, e.g. `logdet(Q0)`.
    pub description: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConicProblem {
    pub name: String,
    pub n_scalars: usize,
    pub variables: Vec<MatrixVariable>,
    pub lmis: Vec<LmiConstraint>,
    pub scalar_constraints: Vec<ScalarConstraint>,
    pub objective: Option<Objective>,
}

impl ConicProblem {
    pub fn variable(&self, name: &str) -> Option<&MatrixVariable> {
        self.variables.iter().find(|v| v.name == name)
    }

    /// Rebuilds the affine matrix for a declared variable.
    pub fn variable_expr(&self, var: &MatrixVariable) -> AffMat {
        variable_matrix(var)
    }

    pub fn needs_exponential(&self) -> bool {
        self.scalar_constraints
            .iter()
            .any(|c| matches!(c, ScalarConstraint::Exponential { .. }))
    }

    pub fn needs_power(&self) -> bool {
        self.scalar_constraints
            .iter()
            .any(|c| matches!(c, ScalarConstraint::Power { .. }))
    }

    pub fn needs_equalities(&self) -> bool {
        self.scalar_constraints
            .iter()
            .any(|c| matches!(c, ScalarConstraint::Equality { .. }))
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

fn variable_matrix(var: &MatrixVariable) -> AffMat {
    let (rows, cols, off) = (var.rows, var.cols, var.offset);
    match var.structure {
        Structure::Full => AffMat::from_fn(rows, cols, |i, j| LinExpr::var(off + i * cols + j)),
        Structure::Diagonal => AffMat::from_fn(rows, cols, |i, j| {
            if i == j {
                LinExpr::var(off + i)
            } else {
                LinExpr::default()
            }
        }),
        Structure::Symmetric => AffMat::from_fn(rows, cols, |i, j| {
            let (r, c) = if i <= j { (i, j) } else { (j, i) };
            // upper triangle, column-major
            LinExpr::var(off + c * (c + 1) / 2 + r)
        }),
        Structure::LowerTriangular => AffMat::from_fn(rows, cols, |i, j| {
            if i >= j {
                LinExpr::var(off + i * (i + 1) / 2 + j)
            } else {
                LinExpr::default()
            }
        }),
    }
}

/// Incrementally assembles a [`ConicProblem`].
#[derive(Debug)]
pub struct ProblemBuilder {
    problem: ConicProblem,
}

impl ProblemBuilder {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            problem: ConicProblem {
                name: name.into(),
                n_scalars: 0,
                variables: Vec::new(),
                lmis: Vec::new(),
                scalar_constraints: Vec::new(),
                objective: None,
            },
        }
    }

    pub fn matrix_var(&mut self, name: &str, rows: usize, cols: usize, structure: Structure) -> AffMat {
        let count = match structure {
            Structure::Full => rows * cols,
            Structure::Diagonal => {
                assert_eq!(rows, cols, "diagonal variable must be square");
                rows
            }
            Structure::Symmetric | Structure::LowerTriangular => {
                assert_eq!(rows, cols, "structured variable must be square");
                rows * (rows + 1) / 2
            }
        };
        let var = MatrixVariable {
            name: name.to_string(),
            rows,
            cols,
            structure,
            offset: self.problem.n_scalars,
            count,
        };
        self.problem.n_scalars += count;
        let expr = variable_matrix(&var);
        self.problem.variables.push(var);
        expr
    }

    pub fn scalar_var(&mut self, name: &str) -> LinExpr {
        self.matrix_var(name, 1, 1, Structure::Full).get(0, 0).clone()
    }

    /// Adds `sym(m) ⪰ margin · I`.
    pub fn psd(&mut self, name: impl Into<String>, m: &AffMat, margin: f64) {
        let s = m.sym();
        let size = s.nrows();
        let mut entries = Vec::with_capacity(size * (size + 1) / 2);
        for col in 0..size {
            for row in 0..=col {
                entries.push(LmiEntry {
                    row,
                    col,
                    expr: s.get(row, col).clone(),
                });
            }
        }
        self.problem.lmis.push(LmiConstraint {
            name: name.into(),
            size,
            margin,
            entries,
        });
    }

    /// Adds `sym(m) ⪯ −margin · I`.
    pub fn nsd(&mut self, name: impl Into<String>, m: &AffMat, margin: f64) {
        self.psd(name, &m.scale(-1.0), margin);
    }

    pub fn nonneg(&mut self, name: impl Into<String>, expr: LinExpr) {
        self.problem.scalar_constraints.push(ScalarConstraint::Nonnegative {
            name: name.into(),
            expr,
        });
    }

    pub fn equality(&mut self, name: impl Into<String>, expr: LinExpr) {
        self.problem.scalar_constraints.push(ScalarConstraint::Equality {
            name: name.into(),
            expr,
        });
    }

    pub fn exponential(&mut self, name: impl Into<String>, args: [LinExpr; 3]) {
        self.problem.scalar_constraints.push(ScalarConstraint::Exponential {
            name: name.into(),
            args,
        });
    }

    pub fn power(&mut self, name: impl Into<String>, alpha: f64, args: [LinExpr; 3]) {
        self.problem.scalar_constraints.push(ScalarConstraint::Power {
            name: name.into(),
            alpha,
            args,
        });
    }

    pub fn objective(&mut self, sense: Sense, expr: LinExpr, description: impl Into<String>) {
        self.problem.objective = Some(Objective {
            sense,
            expr,
            description: description.into(),
        });
    }

    pub fn finish(self) -> ConicProblem {
        self.problem
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    /// A point satisfying the constraints at reduced accuracy.
    Feasible,
    Infeasible,
    NumericalFailure,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConicSolution {
    pub status: SolveStatus,
    /// Primal values of all scalars; empty unless the status is optimal or feasible.
    pub x: Vec<f64>,
    pub objective_value: f64,
    pub iterations: u32,
    pub detail: String,
}

impl ConicSolution {
    pub fn has_point(&self) -> bool {
        matches!(self.status, SolveStatus::Optimal | SolveStatus::Feasible) && !self.x.is_empty()
    }

    pub fn value(&self, m: &AffMat) -> DMatrix<f64> {
        m.eval(&self.x)
    }
}
