//! Affine expressions over scalar decision variables.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// `constant + Σ coef · x[var]`, terms sorted by variable index with no repeats.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LinExpr {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl LinExpr {
    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            terms: Vec::new(),
        }
    }

    pub fn var(index: usize) -> Self {
        Self {
            constant: 0.0,
            terms: vec![(index, 1.0)],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.terms.is_empty()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().fold(self.constant, |acc, (i, c)| acc + c * x[*i])
    }

    pub fn scaled(&self, s: f64) -> Self {
        if s == 0.0 {
            return Self::default();
        }
        Self {
            constant: self.constant * s,
            terms: self.terms.iter().map(|(i, c)| (*i, c * s)).collect(),
        }
    }

    /// `self + s · other`, merging terms.
    pub fn add_scaled(&self, other: &LinExpr, s: f64) -> Self {
        if s == 0.0 {
            return self.clone();
        }
        let mut terms = Vec::with_capacity(self.terms.len() + other.terms.len());
        let (mut a, mut b) = (self.terms.iter().peekable(), other.terms.iter().peekable());
        loop {
            match (a.peek(), b.peek()) {
                (Some(&&(ia, ca)), Some(&&(ib, cb))) => {
                    if ia < ib {
                        terms.push((ia, ca));
                        a.next();
                    } else if ib < ia {
                        terms.push((ib, cb * s));
                        b.next();
                    } else {
                        let c = ca + cb * s;
                        if c != 0.0 {
                            terms.push((ia, c));
                        }
                        a.next();
                        b.next();
                    }
                }
                (Some(&&(ia, ca)), None) => {
                    terms.push((ia, ca));
                    a.next();
                }
                (None, Some(&&(ib, cb))) => {
                    terms.push((ib, cb * s));
                    b.next();
                }
                (None, None) => break,
            }
        }
        terms.retain(|(_, c)| *c != 0.0);
        Self {
            constant: self.constant + other.constant * s,
            terms,
        }
    }
}

impl Add for &LinExpr {
    type Output = LinExpr;
    fn add(self, rhs: &LinExpr) -> LinExpr {
        self.add_scaled(rhs, 1.0)
    }
}

impl Sub for &LinExpr {
    type Output = LinExpr;
    fn sub(self, rhs: &LinExpr) -> LinExpr {
        self.add_scaled(rhs, -1.0)
    }
}

impl Neg for &LinExpr {
    type Output = LinExpr;
    fn neg(self) -> LinExpr {
        self.scaled(-1.0)
    }
}

impl Mul<f64> for &LinExpr {
    type Output = LinExpr;
    fn mul(self, s: f64) -> LinExpr {
        self.scaled(s)
    }
}

/// Dense matrix of [`LinExpr`], row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct AffMat {
    rows: usize,
    cols: usize,
    data: Vec<LinExpr>,
}

impl AffMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![LinExpr::default(); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> LinExpr) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn constant(m: &DMatrix<f64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| LinExpr::constant(m[(i, j)]))
    }

    pub fn identity(n: usize) -> Self {
        Self::constant(&DMatrix::identity(n, n))
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &LinExpr {
        &self.data[i * self.cols + j]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i).clone())
    }

    /// Row `l` as a `1 × cols` matrix.
    pub fn row(&self, l: usize) -> Self {
        Self::from_fn(1, self.cols, |_, j| self.get(l, j).clone())
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| self.get(i, j).scaled(s))
    }

    pub fn add(&self, other: &AffMat) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch");
        Self::from_fn(self.rows, self.cols, |i, j| self.get(i, j) + other.get(i, j))
    }

    pub fn sub(&self, other: &AffMat) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch");
        Self::from_fn(self.rows, self.cols, |i, j| self.get(i, j) - other.get(i, j))
    }

    /// `c · self` for a constant matrix `c`.
    pub fn lmul(&self, c: &DMatrix<f64>) -> Self {
        assert_eq!(c.ncols(), self.rows, "shape mismatch");
        Self::from_fn(c.nrows(), self.cols, |i, j| {
            (0..self.rows).fold(LinExpr::default(), |acc, k| acc.add_scaled(self.get(k, j), c[(i, k)]))
        })
    }

    /// `self · c` for a constant matrix `c`.
    pub fn rmul(&self, c: &DMatrix<f64>) -> Self {
        assert_eq!(self.cols, c.nrows(), "shape mismatch");
        Self::from_fn(self.rows, c.ncols(), |i, j| {
            (0..self.cols).fold(LinExpr::default(), |acc, k| acc.add_scaled(self.get(i, k), c[(k, j)]))
        })
    }

    /// `(self + selfᵀ) / 2`.
    pub fn sym(&self) -> Self {
        assert_eq!(self.rows, self.cols, "sym of non-square matrix");
        Self::from_fn(self.rows, self.cols, |i, j| (self.get(i, j) + self.get(j, i)).scaled(0.5))
    }

    /// Assembles a block matrix; every block row must share a height and every block
    /// column a width.
    pub fn block(blocks: &[Vec<AffMat>]) -> Self {
        let heights: Vec<usize> = blocks.iter().map(|r| r[0].rows).collect();
        let widths: Vec<usize> = blocks[0].iter().map(|b| b.cols).collect();
        let rows = heights.iter().sum();
        let cols = widths.iter().sum();
        let mut out = Self::zeros(rows, cols);
        let mut r0 = 0;
        for (bi, brow) in blocks.iter().enumerate() {
            let mut c0 = 0;
            assert_eq!(brow.len(), widths.len(), "ragged block row");
            for (bj, b) in brow.iter().enumerate() {
                assert_eq!((b.rows, b.cols), (heights[bi], widths[bj]), "block shape mismatch");
                for i in 0..b.rows {
                    for j in 0..b.cols {
                        out.data[(r0 + i) * cols + c0 + j] = b.get(i, j).clone();
                    }
                }
                c0 += b.cols;
            }
            r0 += heights[bi];
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).eval(x))
    }
}
