//! Finite-step variational propagator.
//!
//! A step from `t₁` to `t₂` assembles a Crank-Nicolson-like approximation `Ũ₂₁`
//! of the propagator between the working spaces at the two times, then replaces
//! it by the closest unitary (equal dimensions) or semi-unitary matrix. When the
//! dimensions differ, the larger space is first truncated variationally: at
//! `t₂` by the dominant left singular subspace of `Ũ₂₁`, at `t₁` by a subspace
//! that is forced to contain the current coefficient vector.

use faer::Mat;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec, HermitianEigen, I};
use crate::model::{cross_matrices_z, ModelSpec, OperatorSet};
use crate::observables::WavepacketState;
use crate::trajectories::GaussianFrame;
use crate::workspace::{build_working_space, restrict, transform_operator, WorkingSpace};

/// Relative tolerance below which a pinned vector is considered dependent.
const PIN_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StepCase {
    /// `M₂ = M₁`.
    Equal,
    /// `M₂ > M₁`.
    Grow,
    /// `M₂ < M₁`.
    Shrink,
}

impl StepCase {
    pub fn classify(m2: usize, m1: usize) -> Self {
        use std::cmp::Ordering::*;
        match m2.cmp(&m1) {
            Equal => StepCase::Equal,
            Greater => StepCase::Grow,
            Less => StepCase::Shrink,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StepCase::Equal => "equal",
            StepCase::Grow => "grow",
            StepCase::Shrink => "shrink",
        }
    }
}

/// Diagnostics of one projection onto the Stiefel manifold.
#[derive(Clone, Debug)]
pub struct StiefelStep {
    pub case: StepCase,
    pub utilde: CMat,
    /// Truncation isometry (grow: `M₂ x M₁`, shrink: `M₁ x M₂`).
    pub r: Option<CMat>,
    /// Pinned orthonormal vectors in the `t₁` working space (shrink only).
    pub d: Option<CMat>,
    pub ubar: CMat,
    pub singular_values: Vec<f64>,
}

impl StiefelStep {
    pub fn m1(&self) -> usize {
        self.ubar.ncols()
    }

    pub fn m2(&self) -> usize {
        self.ubar.nrows()
    }

    pub fn min_singular_value(&self) -> f64 {
        self.singular_values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// `Ũ₂₁ = ½{[1 - iH̄₂δ][S̄₂₁ - iH̄₂₁δ] + [S̄₂₁ - iH̄₂₁δ][1 - iH̄₁δ]}`, `δ = dt/2`.
pub fn assemble_utilde(dt: f64, hbar1: &CMat, hbar2: &CMat, sbar21: &CMat, hbar21: &CMat) -> Result<CMat> {
    let (m2, m1) = (sbar21.nrows(), sbar21.ncols());
    let check = |ctx: &'static str, r: usize, c: usize, er: usize, ec: usize| {
        if r != er || c != ec {
            Err(Error::Dimension {
                context: ctx,
                expected: er * ec,
                got: r * c,
            })
        } else {
            Ok(())
        }
    };
    check("assemble_utilde H̄₁", hbar1.nrows(), hbar1.ncols(), m1, m1)?;
    check("assemble_utilde H̄₂", hbar2.nrows(), hbar2.ncols(), m2, m2)?;
    check("assemble_utilde H̄₂₁", hbar21.nrows(), hbar21.ncols(), m2, m1)?;

    let half = 0.5 * dt;
    let a21: CMat = Mat::from_fn(m2, m1, |i, j| sbar21[(i, j)] - I * half * hbar21[(i, j)]);
    let left2: CMat = Mat::from_fn(m2, m2, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        C64::new(id, 0.0) - I * half * hbar2[(i, j)]
    });
    let right1: CMat = Mat::from_fn(m1, m1, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        C64::new(id, 0.0) - I * half * hbar1[(i, j)]
    });
    let p: CMat = &left2 * &a21;
    let q: CMat = &a21 * &right1;
    Ok(Mat::from_fn(m2, m1, |i, j| 0.5 * (p[(i, j)] + q[(i, j)])))
}

/// Closest unitary to a square matrix: `Ũ = X Σ Y†  ↦  X Y†`.
pub fn closest_unitary(utilde: &CMat) -> Result<(CMat, Vec<f64>)> {
    if utilde.nrows() != utilde.ncols() {
        return Err(Error::Dimension {
            context: "closest_unitary",
            expected: utilde.nrows(),
            got: utilde.ncols(),
        });
    }
    linalg::polar_factor(utilde.as_ref())
}

/// Result of a truncation followed by the square polar step.
#[derive(Clone, Debug)]
pub struct Truncation {
    pub r: CMat,
    pub ubar: CMat,
    pub singular_values: Vec<f64>,
}

/// `M₂ > M₁`: keep the `M₁` dominant eigenvectors `R` of `Ũ Ũ†`, then
/// `Ū = R X' Y'†` from the SVD of `R† Ũ`.
pub fn truncate_grow(utilde: &CMat) -> Result<Truncation> {
    let (m2, m1) = (utilde.nrows(), utilde.ncols());
    if m2 <= m1 {
        return Err(Error::Precondition(format!(
            "truncate_grow needs M₂ > M₁, got {m2} x {m1}"
        )));
    }
    let gram: CMat = utilde * utilde.adjoint();
    // eigenvalues of -ŨŨ† are -σ² <= 0; largest magnitude = largest σ²
    let eig = HermitianEigen::new(gram.as_ref())?;
    let r = eig.leading(m1);
    let reduced: CMat = r.adjoint() * utilde;
    let (u, sv) = closest_unitary(&reduced)?;
    let ubar: CMat = &r * &u;
    Ok(Truncation {
        r,
        ubar,
        singular_values: sv,
    })
}

/// `M₂ < M₁`: `R = (D E)` with `E` the dominant eigenvectors of
/// `(1 - DD†) Ũ†Ũ (1 - DD†)`, then `Ū = X' Y'† R†` from the SVD of `Ũ R`.
pub fn truncate_shrink(utilde: &CMat, d: &CMat) -> Result<Truncation> {
    let (m2, m1) = (utilde.nrows(), utilde.ncols());
    if m2 >= m1 {
        return Err(Error::Precondition(format!(
            "truncate_shrink needs M₂ < M₁, got {m2} x {m1}"
        )));
    }
    if d.nrows() != m1 {
        return Err(Error::Dimension {
            context: "truncate_shrink pinned vectors",
            expected: m1,
            got: d.nrows(),
        });
    }
    let n_c = d.ncols();
    if n_c > m2 {
        return Err(Error::InfeasiblePinning {
            pinned: n_c,
            target: m2,
        });
    }
    let dd: CMat = d * d.adjoint();
    let proj: CMat = Mat::from_fn(m1, m1, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        C64::new(id, 0.0) - dd[(i, j)]
    });
    let gram: CMat = utilde.adjoint() * utilde;
    let tmp: CMat = &gram * &proj;
    let mut k: CMat = &proj * &tmp;
    // symmetrize round-off before the Hermitian solver
    for i in 0..m1 {
        for j in 0..i {
            let avg = 0.5 * (k[(i, j)] + k[(j, i)].conj());
            k[(i, j)] = avg;
            k[(j, i)] = avg.conj();
        }
        k[(i, i)] = C64::new(k[(i, i)].re, 0.0);
    }
    let eig = HermitianEigen::new(k.as_ref())?;
    // Greedy completion of D by the eigenvectors in descending order. Vectors
    // with nonzero eigenvalue are already orthogonal to D; the re-orthogonalization
    // only matters for the zero-eigenvalue tail.
    let mut candidates: Vec<CVec> = (0..n_c).map(|j| linalg::column(d, j)).collect();
    candidates.extend((0..m1).map(|j| linalg::column(&eig.vectors, j)));
    let full = linalg::orthonormalize(&candidates, PIN_TOL);
    if full.ncols() < m2 {
        return Err(Error::Decomposition {
            routine: "shrink truncation basis",
            rows: m1,
            cols: full.ncols(),
            max_abs: linalg::max_abs(utilde.as_ref()),
        });
    }
    let r = full.as_ref().subcols(0, m2).to_owned();
    let reduced: CMat = utilde * &r;
    let (u, sv) = closest_unitary(&reduced)?;
    let ubar: CMat = &u * r.adjoint();
    Ok(Truncation {
        r,
        ubar,
        singular_values: sv,
    })
}

/// Projects `Ũ₂₁` onto the (semi-)unitary matrices, dispatching on shape.
/// `pins` are vectors in the `t₁` working space that must survive a shrink;
/// the first one is normally `C̄₁`.
pub fn stiefel_project(utilde: CMat, pins: &[CVec]) -> Result<StiefelStep> {
    let (m2, m1) = (utilde.nrows(), utilde.ncols());
    for p in pins {
        if p.nrows() != m1 {
            return Err(Error::Dimension {
                context: "pinned vector",
                expected: m1,
                got: p.nrows(),
            });
        }
    }
    let case = StepCase::classify(m2, m1);
    match case {
        StepCase::Equal => {
            let (ubar, sv) = closest_unitary(&utilde)?;
            Ok(StiefelStep {
                case,
                utilde,
                r: None,
                d: None,
                ubar,
                singular_values: sv,
            })
        }
        StepCase::Grow => {
            let t = truncate_grow(&utilde)?;
            Ok(StiefelStep {
                case,
                utilde,
                r: Some(t.r),
                d: None,
                ubar: t.ubar,
                singular_values: t.singular_values,
            })
        }
        StepCase::Shrink => {
            let d = linalg::orthonormalize(pins, PIN_TOL);
            let t = truncate_shrink(&utilde, &d)?;
            Ok(StiefelStep {
                case,
                utilde,
                r: Some(t.r),
                d: Some(d),
                ubar: t.ubar,
                singular_values: t.singular_values,
            })
        }
    }
}

/// Reduced operators of one step between two working spaces.
#[derive(Clone, Debug)]
pub struct ReducedStep {
    pub hbar1: CMat,
    pub hbar2: CMat,
    pub sbar21: CMat,
    pub hbar21: CMat,
}

impl ReducedStep {
    /// `h1`, `h2` are same-time Hamiltonians; `s21`, `h21` have bras at `t₂`.
    pub fn new(ws1: &WorkingSpace, ws2: &WorkingSpace, h1: &CMat, h2: &CMat, s21: &CMat, h21: &CMat) -> Result<Self> {
        Ok(Self {
            hbar1: transform_operator(ws1, ws1, h1)?,
            hbar2: transform_operator(ws2, ws2, h2)?,
            sbar21: transform_operator(ws2, ws1, s21)?,
            hbar21: transform_operator(ws2, ws1, h21)?,
        })
    }

    pub fn project(&self, dt: f64, pins: &[CVec]) -> Result<StiefelStep> {
        let ut = assemble_utilde(dt, &self.hbar1, &self.hbar2, &self.sbar21, &self.hbar21)?;
        stiefel_project(ut, pins)
    }
}

/// One variational step of `state1` onto `frame2`:
/// `C₂ = Φ₂ Ū₂₁ Φ₁⁻ C₁`. Extra `pins` (full-basis coefficient vectors at `t₁`)
/// are kept alongside `C₁` in a shrinking step.
pub fn var_step(
    state1: &WavepacketState,
    frame2: &GaussianFrame,
    model: &ModelSpec,
    dt: f64,
    eps_s: f64,
    pins: &[CVec],
) -> Result<(WavepacketState, StiefelStep)> {
    let frame1 = &state1.frame;
    if state1.c.nrows() != frame1.len() {
        return Err(Error::Dimension {
            context: "var_step coefficients",
            expected: frame1.len(),
            got: state1.c.nrows(),
        });
    }
    let ops = OperatorSet::new(model)?;
    let m11 = cross_matrices_z(&frame1.z, &frame1.z, &ops);
    let m22 = cross_matrices_z(&frame2.z, &frame2.z, &ops);
    let m21 = cross_matrices_z(&frame2.z, &frame1.z, &ops);
    let ws1 = build_working_space(&m11.s, eps_s)?;
    let ws2 = build_working_space(&m22.s, eps_s)?;
    let red = ReducedStep::new(&ws1, &ws2, &m11.h, &m22.h, &m21.s, &m21.h)?;
    let cbar1 = restrict(&ws1, &state1.c)?;
    let mut all_pins = vec![cbar1.clone()];
    for p in pins {
        all_pins.push(restrict(&ws1, p)?);
    }
    let step = red.project(dt, &all_pins)?;
    let cbar2: CVec = &step.ubar * &cbar1;
    let c2: CVec = &ws2.phi * &cbar2;
    let state2 = WavepacketState {
        time: state1.time + dt,
        c: c2,
        frame: frame2.clone(),
    };
    Ok((state2, step))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{identity, identity_defect, max_abs_diff};
    use faer::Col;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn scalar(v: C64) -> CMat {
        Mat::from_fn(1, 1, |_, _| v)
    }

    #[test]
    fn zero_step_gives_overlap() {
        let s = Mat::from_fn(2, 3, |i, j| c(0.1 * (i + j) as f64, 0.05 * i as f64));
        let h1 = identity(3);
        let h2 = identity(2);
        let h21 = Mat::from_fn(2, 3, |i, j| c(i as f64, j as f64));
        let ut = assemble_utilde(0.0, &h1, &h2, &s, &h21).unwrap();
        assert!(max_abs_diff(ut.as_ref(), s.as_ref()) < 1e-15);
    }

    #[test]
    fn scalar_utilde() {
        let (e, dt) = (0.7, 0.1);
        let one = scalar(c(1.0, 0.0));
        let h = scalar(c(e, 0.0));
        let ut = assemble_utilde(dt, &h, &h, &one, &h).unwrap();
        let expect = (c(1.0, 0.0) - I * e * dt / 2.0).powu(2);
        assert!((ut[(0, 0)] - expect).norm() < 1e-15);
        let (u, _) = closest_unitary(&ut).unwrap();
        let phase = u[(0, 0)].arg();
        assert!((phase + 2.0 * (e * dt / 2.0).atan()).abs() < 1e-14);
    }

    #[test]
    fn closest_unitary_examples() {
        let d = Mat::from_fn(2, 2, |i, j| if i == j { c([3.0, 0.2][i], 0.0) } else { c(0.0, 0.0) });
        let (u, sv) = closest_unitary(&d).unwrap();
        assert!(identity_defect(u.as_ref()) < 1e-14);
        assert!((sv[0] - 3.0).abs() < 1e-14 && (sv[1] - 0.2).abs() < 1e-14);
        let (ct, st) = (0.3f64.cos(), 0.3f64.sin());
        let rot = Mat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) => c(ct, 0.0),
            (0, 1) => c(0.0, -st),
            (1, 0) => c(0.0, -st),
            _ => c(ct, 0.0),
        });
        let (u, _) = closest_unitary(&rot).unwrap();
        assert!(max_abs_diff(u.as_ref(), rot.as_ref()) < 1e-12);
        assert!(closest_unitary(&Mat::zeros(2, 3)).is_err());
    }

    #[test]
    fn grow_examples() {
        let u = Mat::from_fn(2, 1, |i, _| c([1.0, 0.0][i], 0.0));
        let t = truncate_grow(&u).unwrap();
        assert!(max_abs_diff(t.ubar.as_ref(), u.as_ref()) < 1e-14);
        let (a, b) = (c(0.6, 0.2), c(-0.3, 0.5));
        let u = Mat::from_fn(2, 1, |i, _| [a, b][i]);
        let t = truncate_grow(&u).unwrap();
        let n = (a.norm_sqr() + b.norm_sqr()).sqrt();
        // Ū equals the normalized column exactly (no phase freedom left)
        assert!((t.ubar[(0, 0)] - a / n).norm() < 1e-14);
        assert!((t.ubar[(1, 0)] - b / n).norm() < 1e-14);
        // R is the same direction up to a phase
        let overlap = t.r[(0, 0)].conj() * a / n + t.r[(1, 0)].conj() * b / n;
        assert!((overlap.norm() - 1.0).abs() < 1e-14);
        assert!(truncate_grow(&Mat::zeros(2, 2)).is_err());
    }

    #[test]
    fn shrink_examples() {
        let d = Mat::from_fn(2, 1, |i, _| c([1.0, 0.0][i], 0.0));
        let u = Mat::from_fn(1, 2, |_, j| c([1.0, 0.0][j], 0.0));
        let t = truncate_shrink(&u, &d).unwrap();
        assert!(max_abs_diff(t.r.as_ref(), d.as_ref()) < 1e-15);
        assert!(max_abs_diff(t.ubar.as_ref(), u.as_ref()) < 1e-15);

        let u = Mat::from_fn(1, 2, |_, j| c([0.8, 0.3][j], 0.0));
        let t = truncate_shrink(&u, &d).unwrap();
        assert!((t.ubar[(0, 0)] - c(1.0, 0.0)).norm() < 1e-15);
        assert!(t.ubar[(0, 1)].norm() < 1e-15);
        assert!((t.singular_values[0] - 0.8).abs() < 1e-15);

        let d2 = Mat::from_fn(2, 2, |i, j| if i == j { c(1.0, 0.0) } else { c(0.0, 0.0) });
        assert!(matches!(
            truncate_shrink(&u, &d2),
            Err(Error::InfeasiblePinning { pinned: 2, target: 1 })
        ));
    }

    #[test]
    fn stiefel_dispatch_and_norms() {
        let ut = Mat::from_fn(2, 3, |i, j| {
            c(0.3 + 0.1 * (i * 3 + j) as f64, 0.2 * (j as f64 - i as f64))
        });
        let pin = Col::from_fn(3, |i| c(0.2 * i as f64 + 0.1, -0.3));
        let st = stiefel_project(ut, std::slice::from_ref(&pin)).unwrap();
        assert_eq!(st.case, StepCase::Shrink);
        let uu: CMat = &st.ubar * st.ubar.adjoint();
        assert!(identity_defect(uu.as_ref()) < 1e-12);
        let moved: CVec = &st.ubar * &pin;
        assert!((linalg::vec_norm(&moved) - linalg::vec_norm(&pin)).abs() < 1e-12);
    }

    #[test]
    fn frozen_single_gaussian_phase() {
        let model = ModelSpec::double_well();
        let z = c(-0.3, 0.2);
        let frame = GaussianFrame::new(0.0, vec![z]).frozen();
        let e = cross_matrices_z(&[z], &[z], &model.operators().unwrap()).h[(0, 0)].re;
        let dt = 1e-2;
        let mut st = WavepacketState {
            time: 0.0,
            c: Col::from_fn(1, |_| c(1.0, 0.0)),
            frame: frame.clone(),
        };
        let n = 50;
        for _ in 0..n {
            st = var_step(&st, &frame, &model, dt, 1e-10, &[]).unwrap().0;
        }
        let expect = -(n as f64) * 2.0 * (e * dt / 2.0).atan();
        let got = st.c[0].arg();
        let wrap = |x: f64| (x + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI) - std::f64::consts::PI;
        assert!(wrap(got - expect).abs() < 1e-12);
        assert!((st.c[0].norm() - 1.0).abs() < 1e-13);
    }
}
