//! Small dense linear-algebra helpers shared by the solvers.

use nalgebra::{DMatrix, DVector};

/// Ridge added to an information matrix that fails its Cholesky factorization.
pub const RIDGE: f64 = 1e-8;

/// Solves `info * x = rhs` for a symmetric positive definite `info`, retrying
/// once with `RIDGE * I` added when the factorization fails.
pub fn solve_spd(info: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = info.clone().cholesky() {
        return Some(ch.solve(rhs));
    }
    let n = info.nrows();
    let ridged = info + DMatrix::<f64>::identity(n, n) * RIDGE * (1.0 + max_abs_diag(info));
    ridged.cholesky().map(|ch| ch.solve(rhs))
}

/// Inverse of a symmetric positive definite matrix (same ridge fallback).
pub fn inverse_spd(info: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if info.nrows() == 0 {
        return Some(DMatrix::zeros(0, 0));
    }
    let inv = match info.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => {
            let n = info.nrows();
            let ridged =
                info + DMatrix::<f64>::identity(n, n) * RIDGE * (1.0 + max_abs_diag(info));
            ridged.cholesky()?.inverse()
        }
    };
    Some(symmetrize(&inv))
}

/// Moore–Penrose pseudo-inverse of a symmetric matrix via its eigen
/// decomposition. Eigenvalues below `1e-10` times the largest magnitude are
/// treated as zero.
pub fn pseudo_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let eig = symmetrize(m).symmetric_eigen();
    let lmax = eig.eigenvalues.amax();
    let eps = (lmax * 1e-10).max(f64::MIN_POSITIVE);
    let mut pinv = DMatrix::zeros(n, n);
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        if l.abs() > eps {
            let v = eig.eigenvectors.column(k);
            pinv += (&v * v.transpose()) / l;
        }
    }
    symmetrize(&pinv)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn max_abs_diag(m: &DMatrix<f64>) -> f64 {
    m.diagonal().iter().fold(0.0_f64, |a, v| a.max(v.abs()))
}

/// Jacobian of a vector-valued function by central differences; column `k`
/// uses the step `steps[k]`.
pub fn central_jacobian<F>(f: F, x: &[f64], steps: &[f64]) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let m = x.len();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut xp = x.to_vec();
    for k in 0..m {
        let h = steps[k];
        xp[k] = x[k] + h;
        let up = f(&xp);
        xp[k] = x[k] - h;
        let dn = f(&xp);
        xp[k] = x[k];
        cols.push(up.iter().zip(&dn).map(|(a, b)| (a - b) / (2.0 * h)).collect());
    }
    let rows = cols.first().map_or(0, Vec::len);
    DMatrix::from_fn(rows, m, |i, k| cols[k][i])
}

/// Gradient of a scalar function by central differences.
pub fn central_gradient<F>(f: F, x: &[f64], steps: &[f64]) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|k| {
            let h = steps[k];
            xp[k] = x[k] + h;
            let up = f(&xp);
            xp[k] = x[k] - h;
            let dn = f(&xp);
            xp[k] = x[k];
            (up - dn) / (2.0 * h)
        })
        .collect()
}

/// Quadratic form `gᵀ Σ g`.
pub fn quad_form(g: &[f64], cov: &DMatrix<f64>) -> f64 {
    let v = DVector::from_column_slice(g);
    (v.transpose() * cov * &v)[(0, 0)]
}

/// Row-major nested vectors, as used in JSON documents.
pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(n, m, |i, j| rows[i][j])
}

/// Serde adapter storing a matrix as nested rows.
pub mod serde_rows {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        super::to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        if rows.iter().any(|r| r.len() != rows[0].len()) {
            return Err(serde::de::Error::custom("ragged matrix rows"));
        }
        Ok(super::from_rows(&rows))
    }
}
