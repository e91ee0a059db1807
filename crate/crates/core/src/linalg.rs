//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn max_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    *sym_eigenvalues(m).last().expect("non-empty matrix")
}

pub fn min_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m)[0]
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().iter().fold(0.0, |a, s| a.max(*s))
}

/// Ratio of extreme singular values; infinite for singular input.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.iter().fold(0.0_f64, |a, s| a.max(*s));
    let min = sv.iter().fold(f64::INFINITY, |a, s| a.min(*s));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// `P^{-1/2}` for symmetric positive definite `P`.
pub fn inv_sqrt_spd(p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new((p + p.transpose()) * 0.5);
    if eig.eigenvalues.iter().any(|v| *v <= 0.0) {
        return Err(Error::InvalidInput("matrix is not positive definite".into()));
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt()));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

pub fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::InvalidInput("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Row-major serde adapter for `DMatrix<f64>`.
pub mod serde_rows {
    use nalgebra::DMatrix;
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        super::matrix_to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        super::rows_to_matrix(&rows).map_err(D::Error::custom)
    }
}

/// Serde adapter for `DVector<f64>` as a flat list.
pub mod serde_vec {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}
