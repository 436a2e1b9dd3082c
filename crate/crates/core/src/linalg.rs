//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative symmetry tolerance for covariance-like inputs.
pub const SYMMETRY_TOL: f64 = 1e-12;

pub fn is_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > rel_tol * scale {
                return false;
            }
        }
    }
    true
}

/// Symmetrizes, then checks positive definiteness through the eigenvalues.
pub fn spd_eigen(m: &DMatrix<f64>, what: &str) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    if !m.is_square() {
        return Err(Error::NotSpd(format!("{what} is {}x{}", m.nrows(), m.ncols())));
    }
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::NotSpd(format!("{what} has non-finite entries")));
    }
    if !is_symmetric(m, SYMMETRY_TOL) {
        return Err(Error::NotSpd(format!("{what} is not symmetric")));
    }
    let sym = symmetrize(m);
    let eig = SymmetricEigen::new(sym);
    let min = eig.eigenvalues.min();
    if min.is_nan() || min <= 0.0 {
        return Err(Error::NotSpd(format!(
            "{what} has smallest eigenvalue {min:e}"
        )));
    }
    Ok(eig)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// `U diag(f(λ)) Uᵀ` for a symmetric eigendecomposition.
pub fn spectral_map(
    vals: &DVector<f64>,
    vecs: &DMatrix<f64>,
    f: impl Fn(f64) -> f64,
) -> DMatrix<f64> {
    let d = vals.len();
    let mut scaled = vecs.clone();
    for j in 0..d {
        let s = f(vals[j]);
        scaled.column_mut(j).scale_mut(s);
    }
    scaled * vecs.transpose()
}

/// Cholesky-based inverse and log-determinant of an SPD matrix.
pub fn spd_inverse_logdet(m: &DMatrix<f64>, what: &str) -> Result<(DMatrix<f64>, f64)> {
    let chol = nalgebra::Cholesky::new(symmetrize(m))
        .ok_or_else(|| Error::NotSpd(format!("{what}: Cholesky failed")))?;
    let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Ok((chol.inverse(), logdet))
}

/// Lower Cholesky factor; symmetrizes first.
pub fn cholesky_lower(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    nalgebra::Cholesky::new(symmetrize(m))
        .map(|c| c.l())
        .ok_or_else(|| Error::NotSpd(format!("{what}: Cholesky failed")))
}

/// True when `m` is exactly `s·I` for some scalar `s` (bitwise zero off-diagonal,
/// bitwise equal diagonal).
pub fn as_scalar_identity(m: &DMatrix<f64>) -> Option<f64> {
    if !m.is_square() || m.nrows() == 0 {
        return None;
    }
    let s = m[(0, 0)];
    let n = m.nrows();
    for i in 0..n {
        for j in 0..n {
            let expect = if i == j { s } else { 0.0 };
            if m[(i, j)] != expect {
                return None;
            }
        }
    }
    Some(s)
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::InvalidArgument("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn log_sum_exp(xs: impl IntoIterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.into_iter().collect();
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
