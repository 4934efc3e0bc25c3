//! Regularized Crank-Nicolson baselines and the oscillator-basis reference.

use std::str::FromStr;

use faer::{Col, Mat};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::{self, dot, lu_inverse, lu_solve, sandwich, CMat, CVec, HermitianEigen, I};
use crate::model::{
    cross_matrices_z, ho_hamiltonian, tau_matrix, HORepresentation, LadderPoly, ModelSpec, OperatorSet,
};
use crate::trajectories::GaussianFrame;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RegMethod {
    /// Direct inversion of `S`.
    Naive,
    /// Pseudo-inverse over eigenvalues `>= eps_S`.
    Reg1,
    /// `[S + eps_S exp(-S/eps_S)]⁻¹`.
    Reg2,
}

impl RegMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            RegMethod::Naive => "naive",
            RegMethod::Reg1 => "reg1",
            RegMethod::Reg2 => "reg2",
        }
    }
}

impl FromStr for RegMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(RegMethod::Naive),
            "reg1" => Ok(RegMethod::Reg1),
            "reg2" => Ok(RegMethod::Reg2),
            _ => Err(Error::Config(format!("unknown regularization '{s}'"))),
        }
    }
}

/// Approximate inverse `S⁻` of an overlap matrix.
#[derive(Clone, Debug)]
pub struct RegularizedInverse {
    pub method: RegMethod,
    pub eps_s: f64,
    pub sminus: CMat,
}

impl RegularizedInverse {
    /// Builds `S⁻` from a precomputed eigendecomposition of `S` (the naive
    /// method ignores it and inverts `s` directly).
    pub fn from_eigen(method: RegMethod, s: &CMat, eig: &HermitianEigen, eps_s: f64) -> Result<Self> {
        if !(eps_s > 0.0) && method != RegMethod::Naive {
            return Err(Error::Precondition(format!("eps_S must be positive, got {eps_s}")));
        }
        let sminus = match method {
            RegMethod::Naive => lu_inverse(s.as_ref())?,
            RegMethod::Reg1 => {
                if eig.values.iter().all(|&x| x < eps_s) {
                    log::warn!(
                        "reg1: all {} overlap eigenvalues below eps_S = {eps_s:e}",
                        eig.values.len()
                    );
                }
                eig.matrix_function(|x| if x >= eps_s { 1.0 / x } else { 0.0 })
            }
            RegMethod::Reg2 => eig.matrix_function(|x| reg2_scalar(x, eps_s)),
        };
        Ok(Self { method, eps_s, sminus })
    }

    pub fn new(method: RegMethod, s: &CMat, eps_s: f64) -> Result<Self> {
        let eig = HermitianEigen::new(s.as_ref())?;
        Self::from_eigen(method, s, &eig, eps_s)
    }
}

/// `1 / (λ + ε e^{-λ/ε})`.
pub fn reg2_scalar(lambda: f64, eps: f64) -> f64 {
    1.0 / (lambda + eps * (-lambda / eps).exp())
}

pub fn reg1_inverse(s: &CMat, eps_s: f64) -> Result<CMat> {
    Ok(RegularizedInverse::new(RegMethod::Reg1, s, eps_s)?.sminus)
}

pub fn reg2_inverse(s: &CMat, eps_s: f64) -> Result<CMat> {
    Ok(RegularizedInverse::new(RegMethod::Reg2, s, eps_s)?.sminus)
}

/// `S⁻` and `iH + τ` on one frame.
#[derive(Clone, Debug)]
pub struct CnOperands {
    pub sminus: CMat,
    pub generator: CMat,
    /// `S⁻ (iH + τ)`, shared by the explicit and implicit halves.
    pub sa: CMat,
}

fn generator(h: &CMat, tau: &CMat) -> CMat {
    Mat::from_fn(h.nrows(), h.ncols(), |i, j| I * h[(i, j)] + tau[(i, j)])
}

impl CnOperands {
    pub fn new(sminus: CMat, h: &CMat, tau: &CMat) -> Self {
        let generator = generator(h, tau);
        let sa = &sminus * &generator;
        Self { sminus, generator, sa }
    }
}

/// `1 + k M`.
fn shifted_identity(k: f64, m: &CMat) -> CMat {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        C64::new(id, 0.0) + k * m[(i, j)]
    })
}

/// `C₂ = [1 + dt/2 S₂⁻(iH₂+τ₂)]⁻¹ [1 - dt/2 S₁⁻(iH₁+τ₁)] C₁`.
pub fn cn_apply(c1: &CVec, ops1: &CnOperands, ops2: &CnOperands, dt: f64) -> Result<CVec> {
    let n = c1.nrows();
    if ops1.sminus.nrows() != n || ops2.sminus.nrows() != n {
        return Err(Error::Dimension {
            context: "reg_cn_step",
            expected: n,
            got: ops2.sminus.nrows(),
        });
    }
    let h = 0.5 * dt;
    let explicit = shifted_identity(-h, &ops1.sa);
    let r: CVec = &explicit * c1;
    let rhs: CMat = Mat::from_fn(n, 1, |i, _| r[i]);
    let lhs = shifted_identity(h, &ops2.sa);
    let x = lu_solve(lhs.as_ref(), rhs.as_ref())?;
    Ok(Col::from_fn(n, |i| x[(i, 0)]))
}

/// Frame data of a Crank-Nicolson step carried out in the overlap
/// eigenbasis, for inverses that are functions of `S`.
#[derive(Clone, Debug)]
pub struct EigenCn {
    pub values: Vec<f64>,
    pub vectors: CMat,
    /// `iH + τ`.
    pub generator: CMat,
    /// `V† (iH + τ) V`.
    pub rotated: CMat,
}

impl EigenCn {
    pub fn new(eig: &HermitianEigen, h: &CMat, tau: &CMat) -> Self {
        let generator = generator(h, tau);
        let av: CMat = &generator * &eig.vectors;
        let rotated = eig.vectors.adjoint() * &av;
        Self {
            values: eig.values.clone(),
            vectors: eig.vectors.clone(),
            generator,
            rotated,
        }
    }
}

/// Eigenvalues of `S⁻` for a spectral regularization.
pub fn reg_spectrum(method: RegMethod, eps_s: f64, values: &[f64]) -> Result<Vec<f64>> {
    match method {
        RegMethod::Reg1 => Ok(values.iter().map(|&x| if x >= eps_s { 1.0 / x } else { 0.0 }).collect()),
        RegMethod::Reg2 => Ok(values.iter().map(|&x| reg2_scalar(x, eps_s)).collect()),
        RegMethod::Naive => Err(Error::Precondition("the naive inverse is not taken spectrally".into())),
    }
}

/// [`cn_apply`] with `S⁻ = V diag(f) V†` on both frames; the implicit system
/// `[1 + dt/2 diag(f₂) V₂†A₂V₂] y = V₂† r` is solved for `C₂ = V₂ y`.
pub fn cn_apply_eigen(c1: &CVec, f1: &[f64], cn1: &EigenCn, f2: &[f64], cn2: &EigenCn, dt: f64) -> Result<CVec> {
    let n = c1.nrows();
    if cn1.values.len() != n || cn2.values.len() != n || f1.len() != n || f2.len() != n {
        return Err(Error::Dimension {
            context: "reg_cn_step",
            expected: n,
            got: cn2.values.len(),
        });
    }
    let h = 0.5 * dt;
    let half = |k: f64, f: &[f64], cn: &EigenCn| -> CMat {
        Mat::from_fn(n, n, |i, j| {
            let id = if i == j { 1.0 } else { 0.0 };
            C64::new(id, 0.0) + (k * f[i]) * cn.rotated[(i, j)]
        })
    };
    let w: CVec = cn1.vectors.adjoint() * c1;
    let explicit = half(-h, f1, cn1);
    let rw: CVec = &explicit * &w;
    let r: CVec = &cn1.vectors * &rw;
    let rr: CVec = cn2.vectors.adjoint() * &r;
    let rhs: CMat = Mat::from_fn(n, 1, |i, _| rr[i]);
    let lhs = half(h, f2, cn2);
    let y = lu_solve(lhs.as_ref(), rhs.as_ref())?;
    let y = Col::from_fn(n, |i| y[(i, 0)]);
    Ok(&cn2.vectors * &y)
}

fn frame_operands(frame: &GaussianFrame, ops: &OperatorSet, method: RegMethod, eps_s: f64) -> Result<CnOperands> {
    let m = cross_matrices_z(&frame.z, &frame.z, ops);
    let tau = tau_matrix(frame, &m.s)?;
    let inv = RegularizedInverse::new(method, &m.s, eps_s)?;
    Ok(CnOperands::new(inv.sminus, &m.h, &tau))
}

/// One regularized Crank-Nicolson step of the coefficient equation of motion
/// between two evaluated frames.
pub fn reg_cn_step(
    c1: &CVec,
    frames: (&GaussianFrame, &GaussianFrame),
    model: &ModelSpec,
    dt: f64,
    eps_s: f64,
    method: RegMethod,
) -> Result<CVec> {
    let ops = OperatorSet::new(model)?;
    let o1 = frame_operands(frames.0, &ops, method, eps_s)?;
    let o2 = frame_operands(frames.1, &ops, method, eps_s)?;
    cn_apply(c1, &o1, &o2, dt)
}

/// Oscillator-basis reference propagator with a cached eigendecomposition.
#[derive(Clone, Debug)]
pub struct ExactPropagator {
    pub rep: HORepresentation,
    pub eigen: HermitianEigen,
    pub position: CMat,
}

impl ExactPropagator {
    pub fn new(model: &ModelSpec, n_b: usize) -> Result<Self> {
        let rep = ho_hamiltonian(model, n_b)?;
        let eigen = HermitianEigen::new(rep.h_matrix.as_ref())?;
        let position = LadderPoly::position().ho_matrix(n_b);
        Ok(Self { rep, eigen, position })
    }

    pub fn n_b(&self) -> usize {
        self.rep.n_b
    }

    /// `U e^{-iΛ dt} U†`.
    pub fn propagator(&self, dt: f64) -> CMat {
        let n = self.n_b();
        let u = &self.eigen.vectors;
        let scaled = Mat::from_fn(n, n, |i, j| u[(i, j)] * (-I * self.eigen.values[j] * dt).exp());
        &scaled * u.adjoint()
    }

    /// Components `U† c` in the Hamiltonian eigenbasis.
    pub fn to_eigenbasis(&self, c: &CVec) -> CVec {
        self.eigen.vectors.adjoint() * c
    }

    /// `U e^{-iΛ t} d` for eigenbasis components `d`.
    pub fn evolve(&self, d: &CVec, t: f64) -> CVec {
        let phased = Col::from_fn(d.nrows(), |j| d[j] * (-I * self.eigen.values[j] * t).exp());
        &self.eigen.vectors * &phased
    }

    pub fn energy(&self, c: &CVec) -> f64 {
        sandwich(c, self.rep.h_matrix.as_ref(), c).re
    }

    pub fn position(&self, c: &CVec) -> f64 {
        sandwich(c, self.position.as_ref(), c).re
    }
}

/// State in the oscillator basis.
#[derive(Clone, Debug)]
pub struct ExactState {
    pub time: f64,
    pub coeffs: CVec,
    /// Components in the Hamiltonian eigenbasis, filled by [`exact_step`].
    pub eigen: Option<CVec>,
}

impl ExactState {
    pub fn coherent(z: C64, n_b: usize) -> Self {
        let v = crate::model::coherent_in_ho(z, n_b);
        Self {
            time: 0.0,
            coeffs: Col::from_fn(n_b, |i| v[i]),
            eigen: None,
        }
    }

    pub fn norm(&self) -> f64 {
        linalg::vec_norm(&self.coeffs)
    }

    pub fn overlap(&self, other: &ExactState) -> C64 {
        dot(&self.coeffs, &other.coeffs)
    }
}

/// `U e^{-iΛ dt} U†` applied through the eigenbasis components, which only
/// pick up phases from step to step.
pub fn exact_step(prop: &ExactPropagator, state: &ExactState, dt: f64) -> ExactState {
    let d = state.eigen.clone().unwrap_or_else(|| prop.to_eigenbasis(&state.coeffs));
    let d = Col::from_fn(d.nrows(), |j| d[j] * (-I * prop.eigen.values[j] * dt).exp());
    ExactState {
        time: state.time + dt,
        coeffs: &prop.eigen.vectors * &d,
        eigen: Some(d),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{identity, identity_defect, max_abs_diff};
    use crate::model::CoherentParam;

    fn diag(v: &[f64]) -> CMat {
        Mat::from_fn(v.len(), v.len(), |i, j| {
            if i == j {
                C64::new(v[i], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }

    #[test]
    fn reg1_examples() {
        assert!(identity_defect(reg1_inverse(&identity(3), 1e-10).unwrap().as_ref()) < 1e-14);
        let s = diag(&[1.0, 1e-20]);
        let inv = reg1_inverse(&s, 1e-10).unwrap();
        assert!(max_abs_diff(inv.as_ref(), diag(&[1.0, 0.0]).as_ref()) < 1e-14);
    }

    #[test]
    fn reg2_examples() {
        let s = diag(&[1.0, 0.0]);
        let inv = reg2_inverse(&s, 1e-10).unwrap();
        assert!((inv[(0, 0)].re - 1.0).abs() < 1e-14);
        assert!((inv[(1, 1)].re / 1e10 - 1.0).abs() < 1e-12);
        for &l in &[1e-3, 0.5, 10.0] {
            assert!((reg2_scalar(l, 1e-7) * l - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn scalar_frozen_cn_step() {
        let model = ModelSpec::double_well();
        let z = C64::new(0.2, -0.4);
        let frame = GaussianFrame::new(0.0, vec![z]).frozen();
        let e = cross_matrices_z(&[z], &[z], &model.operators().unwrap()).h[(0, 0)].re;
        let c1 = Col::from_fn(1, |_| C64::new(0.6, 0.8));
        let dt = 0.05;
        for method in [RegMethod::Naive, RegMethod::Reg1, RegMethod::Reg2] {
            let c2 = reg_cn_step(&c1, (&frame, &frame), &model, dt, 1e-10, method).unwrap();
            let f = (C64::new(1.0, 0.0) - I * e * dt / 2.0) / (C64::new(1.0, 0.0) + I * e * dt / 2.0);
            assert!((c2[0] - c1[0] * f).norm() < 1e-14, "{method:?}");
            assert!((c2[0].norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn eigenbasis_step_matches_direct_step() {
        let model = ModelSpec::double_well();
        let flow = crate::trajectories::ClassicalFlow::new(&model, crate::trajectories::RhsForm::Hamilton);
        let z: Vec<C64> = (0..6)
            .map(|k| C64::new(-0.8 + 0.3 * k as f64, 0.2 * (k % 3) as f64 - 0.2))
            .collect();
        let f1 = GaussianFrame::new(0.0, z).evaluate(&flow);
        let (f2, _) = crate::trajectories::advance_frame(&f1, 0.01, 1e-12, 50, &flow).unwrap();
        let ops = model.operators().unwrap();
        let c1 = Col::from_fn(6, |i| C64::new(0.3 - 0.1 * i as f64, 0.05 * i as f64));
        for (method, eps) in [
            (RegMethod::Reg1, 1e-10),
            (RegMethod::Reg2, 1e-10),
            (RegMethod::Reg1, 1e-2),
            (RegMethod::Reg2, 1e-3),
        ] {
            let direct = reg_cn_step(&c1, (&f1, &f2), &model, 0.01, eps, method).unwrap();
            let cn = |f: &GaussianFrame| {
                let m = cross_matrices_z(&f.z, &f.z, &ops);
                let tau = tau_matrix(f, &m.s).unwrap();
                let eig = HermitianEigen::new(m.s.as_ref()).unwrap();
                EigenCn::new(&eig, &m.h, &tau)
            };
            let (e1, e2) = (cn(&f1), cn(&f2));
            let s1 = reg_spectrum(method, eps, &e1.values).unwrap();
            let s2 = reg_spectrum(method, eps, &e2.values).unwrap();
            let via = cn_apply_eigen(&c1, &s1, &e1, &s2, &e2, 0.01).unwrap();
            let d = linalg::vec_norm(&(&via - &direct)) / linalg::vec_norm(&direct);
            assert!(d < 1e-10, "{method:?} {eps}: {d:e}");
        }
        assert!(reg_spectrum(RegMethod::Naive, 1e-7, &[1.0]).is_err());
    }

    #[test]
    fn zero_generator_is_identity() {
        let c1 = Col::from_fn(3, |i| C64::new(i as f64, 1.0));
        let zero = Mat::zeros(3, 3);
        let ops = CnOperands::new(identity(3), &zero, &zero);
        let c2 = cn_apply(&c1, &ops, &ops, 0.1).unwrap();
        assert!(linalg::vec_norm(&(&c2 - &c1)) < 1e-15);
    }

    #[test]
    fn exact_dt_zero_and_conservation() {
        let model = ModelSpec::double_well();
        let prop = ExactPropagator::new(&model, 20).unwrap();
        assert!(identity_defect(prop.propagator(0.0).as_ref()) < 1e-13);
        let z = CoherentParam::from_qp(-(0.4f64.sqrt()), 0.0).0;
        let mut st = ExactState::coherent(z, 20);
        let (n0, e0) = (st.norm(), prop.energy(&st.coeffs));
        for _ in 0..600 {
            st = exact_step(&prop, &st, 1e-2);
        }
        assert!((st.norm() - n0).abs() < 1e-12);
        assert!(((prop.energy(&st.coeffs) - e0) / e0).abs() < 1e-12);
    }

    #[test]
    fn harmonic_revival() {
        // H = (P²+Q²)/2 has spectrum n + 1/2, so after 2π a coherent state
        // returns to itself up to the global phase e^{-iπ}.
        let prop = ExactPropagator::new(&ModelSpec::harmonic(), 30).unwrap();
        let st0 = ExactState::coherent(C64::new(0.8, -0.3), 30);
        let st = exact_step(&prop, &st0, 2.0 * std::f64::consts::PI);
        let ac = st0.overlap(&st);
        assert!((ac.norm() - st0.norm().powi(2)).abs() < 1e-12);
    }
}
