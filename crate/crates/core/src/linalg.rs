//! Small dense complex linear-algebra layer over `faer`.
//!
//! Everything in the crate works with [`CMat`] / [`CVec`]; the helpers here add
//! the conventions the propagators rely on (descending spectra, fixed
//! eigenvector phases, polar factors) on top of the raw decompositions.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Col, Mat, MatRef, Side};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub type CMat = Mat<C64>;
pub type CVec = Col<C64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn identity(n: usize) -> CMat {
    Mat::from_fn(
        n,
        n,
        |i, j| if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) },
    )
}

pub fn adjoint(a: MatRef<'_, C64>) -> CMat {
    a.adjoint().to_owned()
}

pub fn max_abs(a: MatRef<'_, C64>) -> f64 {
    let mut m = 0.0_f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

pub fn max_abs_diff(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut m = 0.0_f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    m
}

/// Largest elementwise deviation of `a` from the identity.
pub fn identity_defect(a: MatRef<'_, C64>) -> f64 {
    assert_eq!(a.nrows(), a.ncols());
    max_abs_diff(a, identity(a.nrows()).as_ref())
}

pub fn hermiticity_defect(a: MatRef<'_, C64>) -> f64 {
    max_abs_diff(a, adjoint(a).as_ref())
}

pub fn frobenius(a: MatRef<'_, C64>) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)].norm_sqr();
        }
    }
    s.sqrt()
}

pub fn vec_norm(v: &CVec) -> f64 {
    let mut s = 0.0;
    for i in 0..v.nrows() {
        s += v[i].norm_sqr();
    }
    s.sqrt()
}

/// `a† b` for column vectors.
pub fn dot(a: &CVec, b: &CVec) -> C64 {
    assert_eq!(a.nrows(), b.nrows());
    let mut s = C64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        s += a[i].conj() * b[i];
    }
    s
}

/// Quadratic form `a† M b`.
pub fn sandwich(a: &CVec, m: MatRef<'_, C64>, b: &CVec) -> C64 {
    let mb: CVec = m * b;
    dot(a, &mb)
}

pub fn all_finite(a: MatRef<'_, C64>) -> bool {
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            if !(a[(i, j)].re.is_finite() && a[(i, j)].im.is_finite()) {
                return false;
            }
        }
    }
    true
}

pub fn vec_finite(v: &CVec) -> bool {
    (0..v.nrows()).all(|i| v[i].re.is_finite() && v[i].im.is_finite())
}

/// Makes the largest-magnitude component of every column real and positive.
/// Ties go to the lowest row index.
pub fn fix_column_phases(v: &mut CMat) {
    for j in 0..v.ncols() {
        let mut best = 0;
        let mut best_abs = -1.0;
        for i in 0..v.nrows() {
            let a = v[(i, j)].norm();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        if best_abs <= 0.0 {
            continue;
        }
        let phase = v[(best, j)].conj() / best_abs;
        for i in 0..v.nrows() {
            v[(i, j)] *= phase;
        }
        v[(best, j)] = C64::new(v[(best, j)].re, 0.0);
    }
}

/// Eigendecomposition of a Hermitian matrix with eigenvalues sorted in
/// descending order and eigenvector phases fixed by [`fix_column_phases`].
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

impl HermitianEigen {
    pub fn new(a: MatRef<'_, C64>) -> Result<Self> {
        let n = a.nrows();
        if n != a.ncols() {
            return Err(Error::Dimension {
                context: "hermitian eigendecomposition",
                expected: n,
                got: a.ncols(),
            });
        }
        if n == 0 {
            return Ok(Self {
                values: Vec::new(),
                vectors: Mat::zeros(0, 0),
            });
        }
        let evd = a.self_adjoint_eigen(Side::Lower).map_err(|_| Error::Decomposition {
            routine: "self-adjoint eigendecomposition",
            rows: n,
            cols: n,
            max_abs: max_abs(a),
        })?;
        let s = evd.S().column_vector();
        let u = evd.U();
        let mut order: Vec<usize> = (0..n).collect();
        // descending; stable so equal eigenvalues keep the solver's index order
        order.sort_by(|&x, &y| s[y].re.partial_cmp(&s[x].re).unwrap_or(std::cmp::Ordering::Equal));
        let values: Vec<f64> = order.iter().map(|&k| s[k].re).collect();
        let mut vectors = Mat::from_fn(n, n, |i, j| u[(i, order[j])]);
        fix_column_phases(&mut vectors);
        if values.iter().any(|v| !v.is_finite()) || !all_finite(vectors.as_ref()) {
            return Err(Error::Decomposition {
                routine: "self-adjoint eigendecomposition",
                rows: n,
                cols: n,
                max_abs: max_abs(a),
            });
        }
        Ok(Self { values, vectors })
    }

    /// Leading `k` eigenvectors as an `n x k` matrix.
    pub fn leading(&self, k: usize) -> CMat {
        self.vectors.as_ref().subcols(0, k).to_owned()
    }

    /// `V f(Λ) V†` for a real scalar map applied to the eigenvalues.
    pub fn matrix_function(&self, f: impl Fn(f64) -> f64) -> CMat {
        let n = self.values.len();
        let scaled = Mat::from_fn(n, n, |i, j| self.vectors[(i, j)] * f(self.values[j]));
        &scaled * self.vectors.adjoint()
    }

    /// `V† x`.
    pub fn components(&self, x: &CVec) -> CVec {
        self.vectors.adjoint() * x
    }

    /// `a† A b` from components `V†a`, `V†b`. Avoids the cancellation of the
    /// direct product when `a` and `b` have large entries.
    pub fn form(&self, va: &CVec, vb: &CVec) -> C64 {
        self.values
            .iter()
            .enumerate()
            .map(|(i, &l)| va[i].conj() * vb[i] * l)
            .sum()
    }
}

/// Singular value decomposition `A = X Σ Y†` (thin).
pub struct Svd {
    pub x: CMat,
    pub sigma: Vec<f64>,
    pub y: CMat,
}

pub fn svd(a: MatRef<'_, C64>) -> Result<Svd> {
    let (m, n) = (a.nrows(), a.ncols());
    let fail = || Error::Decomposition {
        routine: "singular value decomposition",
        rows: m,
        cols: n,
        max_abs: max_abs(a),
    };
    if !all_finite(a) {
        return Err(fail());
    }
    let dec = a.thin_svd().map_err(|_| fail())?;
    let sigma: Vec<f64> = {
        let s = dec.S().column_vector();
        (0..s.nrows()).map(|k| s[k].re).collect()
    };
    Ok(Svd {
        x: dec.U().to_owned(),
        sigma,
        y: dec.V().to_owned(),
    })
}

/// Closest (semi-)unitary matrix `X Y†` in Frobenius norm, with the singular
/// values of `a`.
pub fn polar_factor(a: MatRef<'_, C64>) -> Result<(CMat, Vec<f64>)> {
    let d = svd(a)?;
    let u = &d.x * d.y.adjoint();
    Ok((u, d.sigma))
}

/// LU solve of `a x = b` with partial pivoting. Failures carry the ratio of
/// the largest to smallest pivot magnitude as a condition figure.
pub fn lu_solve(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> Result<CMat> {
    let n = a.nrows();
    if n != a.ncols() || b.nrows() != n {
        return Err(Error::Dimension {
            context: "lu_solve",
            expected: n,
            got: b.nrows(),
        });
    }
    let lu = a.partial_piv_lu();
    let u = lu.U();
    let mut pmax = 0.0_f64;
    let mut pmin = f64::INFINITY;
    for k in 0..n {
        let p = u[(k, k)].norm();
        pmax = pmax.max(p);
        pmin = pmin.min(p);
    }
    let condition = if pmin > 0.0 { pmax / pmin } else { f64::INFINITY };
    if !condition.is_finite() {
        return Err(Error::Solve {
            condition,
            reason: "zero pivot".into(),
        });
    }
    let x = lu.solve(b);
    if !all_finite(x.as_ref()) {
        return Err(Error::Solve {
            condition,
            reason: "non-finite solution".into(),
        });
    }
    Ok(x)
}

/// Explicit inverse through LU.
pub fn lu_inverse(a: MatRef<'_, C64>) -> Result<CMat> {
    let lu = a.partial_piv_lu();
    let inv = lu.inverse();
    if !all_finite(inv.as_ref()) {
        return Err(Error::Solve {
            condition: f64::INFINITY,
            reason: "non-finite inverse".into(),
        });
    }
    Ok(inv)
}

/// Modified Gram-Schmidt over the given vectors; vectors whose residual norm
/// falls below `tol` times their original norm are dropped.
pub fn orthonormalize(vectors: &[CVec], tol: f64) -> CMat {
    let n = vectors.first().map_or(0, |v| v.nrows());
    let mut basis: Vec<CVec> = Vec::with_capacity(vectors.len());
    for v in vectors {
        let orig = vec_norm(v);
        if orig == 0.0 {
            continue;
        }
        let mut w = v.clone();
        // two passes for numerical orthogonality
        for _ in 0..2 {
            for b in &basis {
                let c = dot(b, &w);
                for i in 0..n {
                    w[i] -= c * b[i];
                }
            }
        }
        let r = vec_norm(&w);
        if r > tol * orig {
            for i in 0..n {
                w[i] /= r;
            }
            basis.push(w);
        }
    }
    Mat::from_fn(n, basis.len(), |i, j| basis[j][i])
}

pub fn column(a: &CMat, j: usize) -> CVec {
    Col::from_fn(a.nrows(), |i| a[(i, j)])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn eigen_is_descending_and_phase_fixed() {
        let a = Mat::from_fn(3, 3, |i, j| match (i, j) {
            (0, 0) => c(1.0, 0.0),
            (1, 1) => c(3.0, 0.0),
            (2, 2) => c(2.0, 0.0),
            (0, 1) => c(0.1, 0.2),
            (1, 0) => c(0.1, -0.2),
            _ => c(0.0, 0.0),
        });
        let e = HermitianEigen::new(a.as_ref()).unwrap();
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
        for j in 0..3 {
            let col = column(&e.vectors, j);
            let (imax, _) = (0..3)
                .map(|i| (i, col[i].norm()))
                .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            assert!(col[imax].im == 0.0 && col[imax].re > 0.0);
        }
        let rec = e.matrix_function(|x| x);
        assert!(max_abs_diff(rec.as_ref(), a.as_ref()) < 1e-14);

        let x = Col::from_fn(3, |i| c(i as f64 - 0.5, 0.3 * i as f64));
        let y = Col::from_fn(3, |i| c(0.2, 1.0 - i as f64));
        let direct = sandwich(&x, a.as_ref(), &y);
        let via = e.form(&e.components(&x), &e.components(&y));
        assert!((direct - via).norm() < 1e-14);
    }

    #[test]
    fn polar_of_diagonal_is_identity() {
        let a = Mat::from_fn(2, 2, |i, j| if i == j { c([3.0, 0.2][i], 0.0) } else { c(0.0, 0.0) });
        let (u, s) = polar_factor(a.as_ref()).unwrap();
        assert!(identity_defect(u.as_ref()) < 1e-14);
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn gram_schmidt_drops_dependent_vectors() {
        let v1 = Col::from_fn(3, |i| c([1.0, 1.0, 0.0][i], 0.0));
        let v2 = Col::from_fn(3, |i| c([2.0, 2.0, 0.0][i], 0.0));
        let v3 = Col::from_fn(3, |i| c([0.0, 0.0, 1.0][i], 1.0));
        let q = orthonormalize(&[v1, v2, v3], 1e-12);
        assert_eq!(q.ncols(), 2);
        assert!(identity_defect((q.adjoint() * &q).as_ref()) < 1e-14);
    }
}
