//! Ordinary least squares through a Householder QR factorisation.

use crate::scalar::Scalar;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OlsError {
    #[error("design matrix is rank deficient (column {column})")]
    RankDeficient { column: usize },
    #[error("need more observations ({rows}) than regressors ({cols})")]
    Underdetermined { rows: usize, cols: usize },
    #[error("response has {got} rows, design has {expected}")]
    ShapeMismatch { expected: usize, got: usize },
}

/// Dense row-major design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Design<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Scalar> Design<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![F::zero(); rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<F>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut d = Self::zeros(rows.len(), cols);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), cols, "ragged design row {i}");
            d.data[i * cols..(i + 1) * cols].copy_from_slice(r);
        }
        d
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> F {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: F) {
        self.data[r * self.cols + c] = v;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit<F> {
    pub coefficients: Vec<F>,
    pub rss: F,
    pub dof: usize,
}

/// Fits `y ≈ X b` and returns the coefficients and residual sum of squares.
pub fn fit<F: Scalar>(x: &Design<F>, y: &[F]) -> Result<OlsFit<F>, OlsError> {
    let (n, p) = (x.rows, x.cols);
    if y.len() != n {
        return Err(OlsError::ShapeMismatch { expected: n, got: y.len() });
    }
    if n <= p {
        return Err(OlsError::Underdetermined { rows: n, cols: p });
    }

    // column-major working copy
    let mut a: Vec<Vec<F>> = (0..p).map(|c| (0..n).map(|r| x.get(r, c)).collect()).collect();
    let mut qty = y.to_vec();

    let max_norm = a
        .iter()
        .map(|col| norm(col))
        .fold(F::zero(), |m, v| if v > m { v } else { m });
    let tol = F::epsilon() * F::from_count(n.max(p)) * F::lit(1e3) * max_norm;

    let mut diag = vec![F::zero(); p];
    for k in 0..p {
        let alpha_norm = norm(&a[k][k..]);
        if alpha_norm <= tol {
            return Err(OlsError::RankDeficient { column: k });
        }
        let alpha = if a[k][k] > F::zero() { -alpha_norm } else { alpha_norm };
        // v = x - alpha e1, stored in place of column k
        let mut v: Vec<F> = a[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm2: F = v.iter().map(|&t| t * t).sum();
        if vnorm2 > F::zero() {
            let two = F::lit(2.0);
            for col in a.iter_mut().skip(k + 1) {
                reflect(&v, vnorm2, two, &mut col[k..]);
            }
            reflect(&v, vnorm2, two, &mut qty[k..]);
        }
        diag[k] = alpha;
        if diag[k].abs() <= tol {
            return Err(OlsError::RankDeficient { column: k });
        }
    }

    // back substitution on R b = (Q^T y)[..p]
    let mut coef = vec![F::zero(); p];
    for k in (0..p).rev() {
        let mut s = qty[k];
        for j in k + 1..p {
            s -= a[j][k] * coef[j];
        }
        coef[k] = s / diag[k];
    }
    let rss: F = qty[p..].iter().map(|&r| r * r).sum();
    Ok(OlsFit { coefficients: coef, rss, dof: n - p })
}

fn reflect<F: Scalar>(v: &[F], vnorm2: F, two: F, target: &mut [F]) {
    let dot: F = v.iter().zip(target.iter()).map(|(&a, &b)| a * b).sum();
    let scale = two * dot / vnorm2;
    for (t, &vi) in target.iter_mut().zip(v) {
        *t -= scale * vi;
    }
}

fn norm<F: Scalar>(v: &[F]) -> F {
    // scaled to avoid overflow on large counts
    let m = v.iter().fold(F::zero(), |m, &t| if t.abs() > m { t.abs() } else { m });
    if m == F::zero() {
        return F::zero();
    }
    let s: F = v.iter().map(|&t| (t / m) * (t / m)).sum();
    m * s.sqrt()
}
