//! Small dense linear-algebra helpers on top of `faer`.
//!
//! `faer` is built without its rayon feature, so every kernel here runs
//! sequentially and produces bit-identical results regardless of how many
//! worker threads the caller uses.

use faer::{Mat, MatRef, Side};

use crate::error::{Error, Result};

/// Eigenvalues in ascending order with the matching eigenvectors as columns.
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Mat<f64>,
}

pub fn check_square(m: MatRef<'_, f64>) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(m.nrows())
}

pub fn check_finite(m: MatRef<'_, f64>, what: &'static str) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(Error::NonFinite { what });
            }
        }
    }
    Ok(())
}

/// Largest `|m[i,j] - m[j,i]|`.
pub fn asymmetry(m: MatRef<'_, f64>) -> f64 {
    let n = m.nrows().min(m.ncols());
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// `(M + M') / 2`.
pub fn symmetrize(m: MatRef<'_, f64>) -> Mat<f64> {
    let n = m.nrows();
    Mat::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
}

/// Overwrites the upper triangle with the mirror of the lower one, averaging
/// both halves so the result is exactly symmetric.
pub fn make_symmetric_in_place(m: &mut Mat<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Elementwise max norm of `a - b`.
pub fn max_abs_diff(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> f64 {
    debug_assert_eq!(a.nrows(), b.nrows());
    debug_assert_eq!(a.ncols(), b.ncols());
    let mut worst = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            worst = worst.max((a[(i, j)] - b[(i, j)]).abs());
        }
    }
    worst
}

/// Symmetric eigendecomposition of `(M + M')/2`, eigenvalues ascending.
pub fn sym_eigen(m: MatRef<'_, f64>) -> Result<SymEigen> {
    check_square(m)?;
    let sym = symmetrize(m);
    let evd = sym
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::EigenFailure)?;
    let s = evd.S();
    let values = (0..sym.nrows()).map(|k| s[k]).collect();
    Ok(SymEigen {
        values,
        vectors: evd.U().to_owned(),
    })
}

/// Eigenvalues of `(M + M')/2` in ascending order.
pub fn sym_eigenvalues(m: MatRef<'_, f64>) -> Result<Vec<f64>> {
    check_square(m)?;
    let sym = symmetrize(m);
    let mut values = sym
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|_| Error::EigenFailure)?;
    values.sort_by(f64::total_cmp);
    Ok(values)
}

pub fn min_eigenvalue(m: MatRef<'_, f64>) -> Result<f64> {
    Ok(sym_eigenvalues(m)?.first().copied().unwrap_or(0.0))
}

/// Projection onto the PSD cone in Frobenius norm: eigenvalues clipped at
/// zero. Rebuilds from whichever eigenspace (positive or negative) is smaller.
pub(crate) fn clip_from_eigen(sym: MatRef<'_, f64>, eig: &SymEigen) -> Mat<f64> {
    let n = sym.nrows();
    let negatives: Vec<usize> = (0..n).filter(|&k| eig.values[k] < 0.0).collect();
    if negatives.is_empty() {
        let mut out = sym.to_owned();
        make_symmetric_in_place(&mut out);
        return out;
    }
    let positives: Vec<usize> = (0..n).filter(|&k| eig.values[k] > 0.0).collect();
    let (cols, subtract) = if negatives.len() <= positives.len() {
        (negatives, true)
    } else {
        (positives, false)
    };
    let k = cols.len();
    let basis = Mat::from_fn(n, k, |i, c| eig.vectors[(i, cols[c])]);
    let scaled = Mat::from_fn(n, k, |i, c| eig.vectors[(i, cols[c])] * eig.values[cols[c]]);
    let low_rank = &scaled * basis.transpose();
    let mut out = if subtract {
        sym.to_owned() - &low_rank
    } else {
        low_rank
    };
    make_symmetric_in_place(&mut out);
    out
}

/// Frobenius-nearest PSD matrix of `(M + M')/2`.
pub fn clip_psd(m: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let sym = symmetrize(m);
    let eig = sym_eigen(sym.as_ref())?;
    Ok(clip_from_eigen(sym.as_ref(), &eig))
}

/// `Z'Z / n` for a row-major `n x p` block.
pub fn gram_row_major(z: &[f64], n: usize, p: usize) -> Mat<f64> {
    assert_eq!(z.len(), n * p);
    let zr = MatRef::from_row_major_slice(z, n, p);
    let mut g = zr.transpose() * zr;
    let scale = 1.0 / n as f64;
    for j in 0..p {
        for i in 0..p {
            g[(i, j)] *= scale;
        }
    }
    make_symmetric_in_place(&mut g);
    g
}

/// `Z' v / n` for a row-major `n x p` block.
pub fn cross_row_major(z: &[f64], v: &[f64], p: usize) -> Vec<f64> {
    let n = v.len();
    assert_eq!(z.len(), n * p);
    let mut out = vec![0.0; p];
    for (row, &vi) in z.chunks_exact(p).zip(v) {
        for (o, &zij) in out.iter_mut().zip(row) {
            *o += zij * vi;
        }
    }
    let scale = 1.0 / n as f64;
    out.iter_mut().for_each(|o| *o *= scale);
    out
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Quadratic form `x' M x` for symmetric `M`.
pub fn quad_form(m: MatRef<'_, f64>, x: &[f64]) -> f64 {
    let n = x.len();
    let mut total = 0.0;
    for j in 0..n {
        if x[j] == 0.0 {
            continue;
        }
        let mut col = 0.0;
        for i in 0..n {
            col += m[(i, j)] * x[i];
        }
        total += x[j] * col;
    }
    total
}

/// `M x` for square `M`.
pub fn mat_vec(m: MatRef<'_, f64>, x: &[f64]) -> Vec<f64> {
    let n = m.nrows();
    let mut out = vec![0.0; n];
    for (j, &xj) in x.iter().enumerate() {
        if xj == 0.0 {
            continue;
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o += m[(i, j)] * xj;
        }
    }
    out
}

/// Spectral norm of a symmetric matrix.
pub fn sym_operator_norm(m: MatRef<'_, f64>) -> Result<f64> {
    let values = sym_eigenvalues(m)?;
    Ok(values
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_of_psd_is_identity_map() {
        let m = Mat::from_fn(3, 3, |i, j| if i == j { 2.0 } else { 0.5 });
        let c = clip_psd(m.as_ref()).unwrap();
        assert!(max_abs_diff(c.as_ref(), m.as_ref()) < 1e-12);
    }

    #[test]
    fn clip_zeroes_negative_part() {
        let m = Mat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) => 1.0,
            (1, 1) => -0.5,
            _ => 0.0,
        });
        let c = clip_psd(m.as_ref()).unwrap();
        assert!((c[(0, 0)] - 1.0).abs() < 1e-12);
        assert!(c[(1, 1)].abs() < 1e-12);
        assert!(c[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn gram_matches_naive_sum() {
        let z = [1.0, 2.0, -1.0, 0.5, 3.0, 0.0];
        let g = gram_row_major(&z, 3, 2);
        assert!((g[(0, 0)] - (1.0 + 1.0 + 9.0) / 3.0).abs() < 1e-12);
        assert!((g[(0, 1)] - (2.0 - 0.5 + 0.0) / 3.0).abs() < 1e-12);
        assert_eq!(g[(0, 1)], g[(1, 0)]);
    }
}
