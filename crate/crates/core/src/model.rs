//! Hamiltonians and analytic matrix elements between coherent states.
//!
//! Operators are kept as normal-ordered polynomials in the ladder operators,
//! `sum c_mn a†^m a^n`, so that coherent-state matrix elements reduce to
//! `<z1| a†^m a^n |z2> = (z1*)^m z2^n <z1|z2>` and oscillator-basis matrix
//! elements follow from the usual `sqrt(n!)` factors.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;

use faer::Mat;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::trajectories::GaussianFrame;

pub const MAX_DEGREE: u32 = 4;

/// `H = kinetic_coeff * P^2 + sum_n potential_coeffs[n] * Q^n`, atomic units.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub kinetic_coeff: f64,
    pub potential_coeffs: BTreeMap<u32, f64>,
    pub label: String,
}

impl ModelSpec {
    pub fn new(kinetic_coeff: f64, potential: &[(u32, f64)], label: &str) -> Result<Self> {
        let m = Self {
            kinetic_coeff,
            potential_coeffs: potential.iter().copied().collect(),
            label: label.to_string(),
        };
        m.validate()?;
        Ok(m)
    }

    /// `P²/2 - Q²/5 + Q⁴/4`, minima at ±√(2/5).
    pub fn double_well() -> Self {
        Self::new(0.5, &[(2, -0.2), (4, 0.25)], "doublewell").expect("valid model")
    }

    /// `P²/2 - Q²/8 + Q⁴/64`, minima at ±2.
    pub fn rescaled() -> Self {
        Self::new(0.5, &[(2, -0.125), (4, 1.0 / 64.0)], "rescaled").expect("valid model")
    }

    /// `(P² + Q²)/2`, the oscillator whose coherent states form the basis.
    pub fn harmonic() -> Self {
        Self::new(0.5, &[(2, 0.5)], "harmonic").expect("valid model")
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "doublewell" => Ok(Self::double_well()),
            "rescaled" => Ok(Self::rescaled()),
            "harmonic" => Ok(Self::harmonic()),
            other => Err(Error::Config(format!("unknown model '{other}'"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kinetic_coeff > 0.0) || !self.kinetic_coeff.is_finite() {
            return Err(Error::Config(format!(
                "kinetic coefficient must be positive, got {}",
                self.kinetic_coeff
            )));
        }
        for (&deg, &c) in &self.potential_coeffs {
            if deg > MAX_DEGREE {
                return Err(Error::Config(format!(
                    "potential degree {deg} unsupported (max {MAX_DEGREE})"
                )));
            }
            if !c.is_finite() {
                return Err(Error::Config(format!("non-finite coefficient for Q^{deg}")));
            }
        }
        Ok(())
    }

    pub fn potential(&self, q: f64) -> f64 {
        self.potential_coeffs.iter().map(|(&n, &c)| c * q.powi(n as i32)).sum()
    }

    pub fn potential_derivative(&self, q: f64) -> f64 {
        self.potential_coeffs
            .iter()
            .filter(|(&n, _)| n > 0)
            .map(|(&n, &c)| c * n as f64 * q.powi(n as i32 - 1))
            .sum()
    }

    pub fn potential_second_derivative(&self, q: f64) -> f64 {
        self.potential_coeffs
            .iter()
            .filter(|(&n, _)| n > 1)
            .map(|(&n, &c)| c * (n * (n - 1)) as f64 * q.powi(n as i32 - 2))
            .sum()
    }

    /// Classical Hamilton function `kinetic_coeff p² + V(q)`.
    pub fn classical_energy(&self, q: f64, p: f64) -> f64 {
        self.kinetic_coeff * p * p + self.potential(q)
    }

    /// Location and value of the global minimum of the potential. Requires a
    /// confining potential (positive leading even coefficient).
    pub fn potential_minimum(&self) -> Result<(f64, f64)> {
        let lead = self
            .potential_coeffs
            .iter()
            .rev()
            .find(|(_, &c)| c != 0.0)
            .map(|(&n, &c)| (n, c));
        match lead {
            Some((n, c)) if n % 2 == 0 && n > 0 && c > 0.0 => {}
            _ => {
                return Err(Error::Config(format!(
                    "potential of model '{}' is not confining",
                    self.label
                )))
            }
        }
        // Critical points of a quartic: scan, then polish with Newton.
        let (lo, hi, n) = (-20.0_f64, 20.0_f64, 40_001);
        let mut best = (0.0, f64::INFINITY);
        for k in 0..n {
            let q = lo + (hi - lo) * k as f64 / (n - 1) as f64;
            let v = self.potential(q);
            if v < best.1 {
                best = (q, v);
            }
        }
        let mut q = best.0;
        for _ in 0..50 {
            let d2 = self.potential_second_derivative(q);
            if d2 <= 0.0 {
                break;
            }
            let step = self.potential_derivative(q) / d2;
            q -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        let v = self.potential(q);
        if v <= best.1 {
            Ok((q, v))
        } else {
            Ok(best)
        }
    }

    pub fn operators(&self) -> Result<OperatorSet> {
        OperatorSet::new(self)
    }
}

/// Normal-ordered polynomial `sum c_mn a†^m a^n`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LadderPoly {
    terms: BTreeMap<(u32, u32), C64>,
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn factorial(n: u32) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

impl LadderPoly {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: C64) -> Self {
        let mut p = Self::zero();
        p.add_term(0, 0, c);
        p
    }

    pub fn monomial(m: u32, n: u32, c: C64) -> Self {
        let mut p = Self::zero();
        p.add_term(m, n, c);
        p
    }

    pub fn creation() -> Self {
        Self::monomial(1, 0, C64::new(1.0, 0.0))
    }

    pub fn annihilation() -> Self {
        Self::monomial(0, 1, C64::new(1.0, 0.0))
    }

    /// `Q = (a + a†)/√2`.
    pub fn position() -> Self {
        Self::annihilation()
            .add(&Self::creation())
            .scale(C64::new(FRAC_1_SQRT_2, 0.0))
    }

    /// `P = (a - a†)/(i√2)`.
    pub fn momentum() -> Self {
        Self::annihilation()
            .add(&Self::creation().scale(C64::new(-1.0, 0.0)))
            .scale(C64::new(0.0, -FRAC_1_SQRT_2))
    }

    pub fn hamiltonian(model: &ModelSpec) -> Result<Self> {
        model.validate()?;
        let q = Self::position();
        let p = Self::momentum();
        let mut h = p.mul(&p).scale(C64::new(model.kinetic_coeff, 0.0));
        for (&deg, &c) in &model.potential_coeffs {
            if c != 0.0 {
                h = h.add(&q.pow(deg).scale(C64::new(c, 0.0)));
            }
        }
        Ok(h)
    }

    fn add_term(&mut self, m: u32, n: u32, c: C64) {
        let e = self.terms.entry((m, n)).or_insert(C64::new(0.0, 0.0));
        *e += c;
        if *e == C64::new(0.0, 0.0) {
            self.terms.remove(&(m, n));
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (u32, u32, C64)> + '_ {
        self.terms.iter().map(|(&(m, n), &c)| (m, n, c))
    }

    pub fn coefficient(&self, m: u32, n: u32) -> C64 {
        self.terms.get(&(m, n)).copied().unwrap_or(C64::new(0.0, 0.0))
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (m, n, c) in other.terms() {
            out.add_term(m, n, c);
        }
        out
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = Self::zero();
        for (m, n, c) in self.terms() {
            out.add_term(m, n, c * s);
        }
        out
    }

    /// Product, re-normal-ordered with
    /// `a^n a†^p = sum_k C(n,k) C(p,k) k! a†^(p-k) a^(n-k)`.
    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero();
        for (m, n, c1) in self.terms() {
            for (p, q, c2) in other.terms() {
                for k in 0..=n.min(p) {
                    let w = binomial(n, k) * binomial(p, k) * factorial(k);
                    out.add_term(m + p - k, n + q - k, c1 * c2 * w);
                }
            }
        }
        out
    }

    pub fn pow(&self, e: u32) -> Self {
        (0..e).fold(Self::constant(C64::new(1.0, 0.0)), |acc, _| acc.mul(self))
    }

    pub fn max_degree(&self) -> u32 {
        self.terms().map(|(m, n, _)| m + n).max().unwrap_or(0)
    }

    /// `sum c_mn (z_bra*)^m z_ket^n`; the coherent-state matrix element divided
    /// by the overlap.
    pub fn coherent_factor(&self, z_bra: C64, z_ket: C64) -> C64 {
        let zb = z_bra.conj();
        self.terms().map(|(m, n, c)| c * zb.powu(m) * z_ket.powu(n)).sum()
    }

    /// Matrix of the operator in the first `n_b` oscillator eigenstates.
    pub fn ho_matrix(&self, n_b: usize) -> CMat {
        let mut out = Mat::zeros(n_b, n_b);
        for (m, n, c) in self.terms() {
            let (m, n) = (m as usize, n as usize);
            for k in n..n_b {
                let j = k - n + m;
                if j >= n_b {
                    continue;
                }
                // sqrt(k!/(k-n)!) * sqrt(j!/(k-n)!)
                let mut f = 1.0;
                for i in (k - n + 1)..=k {
                    f *= i as f64;
                }
                for i in (k - n + 1)..=j {
                    f *= i as f64;
                }
                out[(j, k)] += c * f.sqrt();
            }
        }
        out
    }
}

/// `<z1|z2> = exp(z1* z2 - (|z1|² + |z2|²)/2)`.
pub fn coherent_overlap(z1: C64, z2: C64) -> C64 {
    (z1.conj() * z2 - 0.5 * (z1.norm_sqr() + z2.norm_sqr())).exp()
}

/// Coherent-state label `z = (q + i p)/√2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoherentParam(pub C64);

impl CoherentParam {
    pub fn from_qp(q: f64, p: f64) -> Self {
        Self(C64::new(q, p) * FRAC_1_SQRT_2)
    }

    pub fn q(self) -> f64 {
        std::f64::consts::SQRT_2 * self.0.re
    }

    pub fn p(self) -> f64 {
        std::f64::consts::SQRT_2 * self.0.im
    }

    pub fn is_finite(self) -> bool {
        self.0.re.is_finite() && self.0.im.is_finite()
    }
}

/// Hamiltonian and position operators of a model, pre-ordered.
#[derive(Clone, Debug)]
pub struct OperatorSet {
    pub hamiltonian: LadderPoly,
    pub position: LadderPoly,
}

impl OperatorSet {
    pub fn new(model: &ModelSpec) -> Result<Self> {
        Ok(Self {
            hamiltonian: LadderPoly::hamiltonian(model)?,
            position: LadderPoly::position(),
        })
    }
}

/// Overlap, Hamiltonian and position matrices `<g_k(bra)| A |g_l(ket)>`.
#[derive(Clone, Debug)]
pub struct CrossMatrices {
    pub s: CMat,
    pub h: CMat,
    pub x: CMat,
}

/// `Σ_m b^m P_m(k)` with `P_m(k) = Σ_n c_mn k^n` tabulated per ket.
fn ket_polynomials(poly: &LadderPoly, ket: &[C64]) -> (usize, Vec<C64>) {
    let deg = poly.terms().map(|(m, _, _)| m).max().unwrap_or(0) as usize;
    let mut table = vec![C64::new(0.0, 0.0); ket.len() * (deg + 1)];
    for (l, &z) in ket.iter().enumerate() {
        for (m, n, c) in poly.terms() {
            table[l * (deg + 1) + m as usize] += c * z.powu(n);
        }
    }
    (deg, table)
}

fn horner(coeffs: &[C64], b: C64) -> C64 {
    coeffs.iter().rev().fold(C64::new(0.0, 0.0), |acc, &c| acc * b + c)
}

/// Cross matrices between two sets of coherent-state labels.
pub fn cross_matrices_z(bra: &[C64], ket: &[C64], ops: &OperatorSet) -> CrossMatrices {
    let (nb, nk) = (bra.len(), ket.len());
    let mut s = Mat::zeros(nb, nk);
    let mut h = Mat::zeros(nb, nk);
    let mut x = Mat::zeros(nb, nk);
    let (hd, htab) = ket_polynomials(&ops.hamiltonian, ket);
    let (xd, xtab) = ket_polynomials(&ops.position, ket);
    let bconj: Vec<C64> = bra.iter().map(|z| z.conj()).collect();
    let bnorm: Vec<f64> = bra.iter().map(|z| 0.5 * z.norm_sqr()).collect();
    for l in 0..nk {
        let kl = ket[l];
        let knorm = 0.5 * kl.norm_sqr();
        let hp = &htab[l * (hd + 1)..(l + 1) * (hd + 1)];
        let xp = &xtab[l * (xd + 1)..(l + 1) * (xd + 1)];
        for k in 0..nb {
            let b = bconj[k];
            let e = b * kl;
            let ov = C64::from_polar((e.re - bnorm[k] - knorm).exp(), e.im);
            s[(k, l)] = ov;
            h[(k, l)] = ov * horner(hp, b);
            x[(k, l)] = ov * horner(xp, b);
        }
    }
    CrossMatrices { s, h, x }
}

pub fn cross_matrices(
    frame_bra: &GaussianFrame,
    frame_ket: &GaussianFrame,
    model: &ModelSpec,
) -> Result<CrossMatrices> {
    if frame_bra.is_empty() || frame_ket.is_empty() {
        return Err(Error::Precondition("cross_matrices requires non-empty frames".into()));
    }
    let ops = OperatorSet::new(model)?;
    Ok(cross_matrices_z(&frame_bra.z, &frame_ket.z, &ops))
}

/// Overlap matrix only.
pub fn overlap_matrix(bra: &[C64], ket: &[C64]) -> CMat {
    Mat::from_fn(bra.len(), ket.len(), |k, l| coherent_overlap(bra[k], ket[l]))
}

/// `tau_kl = <g_k | d/dt g_l> = S_kl (z_k* ż_l - Re(z_l* ż_l))`.
pub fn tau_matrix_z(z: &[C64], zdot: &[C64], s: &CMat) -> Result<CMat> {
    let n = z.len();
    if zdot.len() != n {
        return Err(Error::Precondition(format!(
            "tau matrix needs one velocity per Gaussian ({} labels, {} velocities)",
            n,
            zdot.len()
        )));
    }
    if s.nrows() != n || s.ncols() != n {
        return Err(Error::Dimension {
            context: "tau_matrix overlap",
            expected: n,
            got: s.nrows(),
        });
    }
    Ok(Mat::from_fn(n, n, |k, l| {
        s[(k, l)] * (z[k].conj() * zdot[l] - (z[l].conj() * zdot[l]).re)
    }))
}

pub fn tau_matrix(frame: &GaussianFrame, s: &CMat) -> Result<CMat> {
    let zdot = frame
        .zdot
        .as_ref()
        .ok_or_else(|| Error::Precondition("frame velocities have not been evaluated".into()))?;
    tau_matrix_z(&frame.z, zdot, s)
}

/// Hamiltonian in the oscillator eigenbasis `{|0>, ..., |n_b - 1>}`.
#[derive(Clone, Debug)]
pub struct HORepresentation {
    pub n_b: usize,
    pub h_matrix: CMat,
}

pub fn ho_hamiltonian(model: &ModelSpec, n_b: usize) -> Result<HORepresentation> {
    if n_b == 0 {
        return Err(Error::Precondition("oscillator basis needs n_b >= 1".into()));
    }
    let h = LadderPoly::hamiltonian(model)?;
    Ok(HORepresentation {
        n_b,
        h_matrix: h.ho_matrix(n_b),
    })
}

/// Components `e^{-|z|²/2} z^n / √(n!)` of a coherent state.
pub fn coherent_in_ho(z: C64, n_b: usize) -> Vec<C64> {
    let mut out = Vec::with_capacity(n_b);
    let mut c = (-0.5 * z.norm_sqr()).exp() * C64::new(1.0, 0.0);
    for n in 0..n_b {
        out.push(c);
        c = c * z / ((n + 1) as f64).sqrt();
    }
    out
}
