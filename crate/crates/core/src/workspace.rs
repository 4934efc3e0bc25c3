//! Linearly independent working space of a (possibly singular) Gaussian basis.
//!
//! The overlap `S = V s V† + W ζ W†` is split at the absolute threshold
//! `eps_S`; the retained eigenvectors define orthonormal states
//! `φ = g Φ` with `Φ = V s^{-1/2}`, and coefficients map through
//! `Φ⁻ = s^{1/2} V†`.

use faer::Mat;

use crate::error::{Error, Result};
use crate::linalg::{hermiticity_defect, max_abs, CMat, CVec, HermitianEigen};

#[derive(Clone, Debug)]
pub struct WorkingSpace {
    /// Retained eigenvectors, `N_g x M`.
    pub v: CMat,
    /// Retained eigenvalues, descending.
    pub s: Vec<f64>,
    /// `V s^{-1/2}`.
    pub phi: CMat,
    /// `s^{1/2} V†`.
    pub phi_minus: CMat,
    pub eps_s: f64,
    /// Eigenvalues below `eps_s`, descending.
    pub discarded: Vec<f64>,
}

impl WorkingSpace {
    /// Working space from an already computed overlap eigendecomposition.
    pub fn from_eigen(eig: &HermitianEigen, eps_s: f64) -> Result<Self> {
        if !(eps_s > 0.0) {
            return Err(Error::Precondition(format!("eps_S must be positive, got {eps_s}")));
        }
        let n = eig.values.len();
        let m = eig.values.iter().take_while(|&&x| x >= eps_s).count();
        if m == 0 {
            return Err(Error::EmptyWorkingSpace {
                n,
                eps: eps_s,
                largest: eig.values.first().copied().unwrap_or(f64::NAN),
            });
        }
        let s: Vec<f64> = eig.values[..m].to_vec();
        let v = eig.leading(m);
        let phi = Mat::from_fn(n, m, |i, j| v[(i, j)] / s[j].sqrt());
        let phi_minus = Mat::from_fn(m, n, |i, j| v[(j, i)].conj() * s[i].sqrt());
        Ok(Self {
            v,
            s,
            phi,
            phi_minus,
            eps_s,
            discarded: eig.values[m..].to_vec(),
        })
    }

    pub fn n_g(&self) -> usize {
        self.v.nrows()
    }

    pub fn m(&self) -> usize {
        self.s.len()
    }

    pub fn s_min(&self) -> f64 {
        *self.s.last().expect("non-empty working space")
    }
}

pub fn build_working_space(s: &CMat, eps_s: f64) -> Result<WorkingSpace> {
    if s.nrows() != s.ncols() {
        return Err(Error::Dimension {
            context: "overlap matrix",
            expected: s.nrows(),
            got: s.ncols(),
        });
    }
    let defect = hermiticity_defect(s.as_ref());
    if defect > 1e-8 * max_abs(s.as_ref()).max(1.0) {
        return Err(Error::Precondition(format!(
            "overlap matrix is not Hermitian (defect {defect:e})"
        )));
    }
    let eig = HermitianEigen::new(s.as_ref())?;
    WorkingSpace::from_eigen(&eig, eps_s)
}

/// `C̄ = Φ⁻ C`.
pub fn restrict(ws: &WorkingSpace, c: &CVec) -> Result<CVec> {
    if c.nrows() != ws.n_g() {
        return Err(Error::Dimension {
            context: "restrict",
            expected: ws.n_g(),
            got: c.nrows(),
        });
    }
    Ok(&ws.phi_minus * c)
}

/// `C = Φ C̄`.
pub fn lift(ws: &WorkingSpace, cbar: &CVec) -> Result<CVec> {
    if cbar.nrows() != ws.m() {
        return Err(Error::Dimension {
            context: "lift",
            expected: ws.m(),
            got: cbar.nrows(),
        });
    }
    Ok(&ws.phi * cbar)
}

/// `Φ_bra† A Φ_ket`.
pub fn transform_operator(ws_bra: &WorkingSpace, ws_ket: &WorkingSpace, a: &CMat) -> Result<CMat> {
    if a.nrows() != ws_bra.n_g() || a.ncols() != ws_ket.n_g() {
        return Err(Error::Dimension {
            context: "transform_operator",
            expected: ws_bra.n_g() * ws_ket.n_g(),
            got: a.nrows() * a.ncols(),
        });
    }
    let right: CMat = a * &ws_ket.phi;
    Ok(ws_bra.phi.adjoint() * &right)
}

/// Least-squares coefficients of a state given its projections
/// `b_k = <g_k|ψ>`: `C = Φ Φ† b`.
pub fn project_onto(ws: &WorkingSpace, b: &CVec) -> Result<CVec> {
    if b.nrows() != ws.n_g() {
        return Err(Error::Dimension {
            context: "project_onto",
            expected: ws.n_g(),
            got: b.nrows(),
        });
    }
    let cbar: CVec = ws.phi.adjoint() * b;
    Ok(&ws.phi * &cbar)
}
