//! Classical motion of the Gaussian centres and Monte Carlo initial conditions.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};
use std::path::Path;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};
use crate::model::{CoherentParam, ModelSpec};

/// Time-stamped coherent-state labels of the moving basis.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianFrame {
    pub time: f64,
    pub z: Vec<C64>,
    /// Velocities `ż_k`, present once the frame has been evaluated.
    pub zdot: Option<Vec<C64>>,
}

impl GaussianFrame {
    pub fn new(time: f64, z: Vec<C64>) -> Self {
        Self { time, z, zdot: None }
    }

    pub fn from_phase_space(time: f64, qp: &[(f64, f64)]) -> Self {
        Self::new(time, qp.iter().map(|&(q, p)| CoherentParam::from_qp(q, p).0).collect())
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn phase_space(&self) -> Vec<(f64, f64)> {
        self.z
            .iter()
            .map(|&z| (CoherentParam(z).q(), CoherentParam(z).p()))
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        let ok = |v: &[C64]| v.iter().all(|z| z.re.is_finite() && z.im.is_finite());
        ok(&self.z) && self.zdot.as_deref().map_or(true, ok)
    }

    /// Fills `zdot` from the flow.
    pub fn evaluate(mut self, flow: &ClassicalFlow) -> Self {
        self.zdot = Some(self.z.iter().map(|&z| flow.rhs(z)).collect());
        self
    }

    pub fn frozen(mut self) -> Self {
        self.zdot = Some(vec![C64::new(0.0, 0.0); self.z.len()]);
        self
    }
}

/// Which form of the classical equation of motion drives the centres.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RhsForm {
    /// Hamilton's equations of the model's classical energy.
    Hamilton,
    /// `ż = -i (z - 7/5 Re z + 1/2 (Re z)³)` taken literally. Its cubic term is
    /// a quarter of the one Hamilton's equations give for the double well, so
    /// the double-well energy is not conserved under this flow.
    PrintedLiteral,
}

/// `q̇ = 2 c p`, `ṗ = -V'(q)` for an effective model `c p² + V(q)`.
#[derive(Clone, Debug)]
pub struct ClassicalFlow {
    effective: ModelSpec,
    frozen: bool,
}

impl ClassicalFlow {
    pub fn new(model: &ModelSpec, form: RhsForm) -> Self {
        let effective = match form {
            RhsForm::Hamilton => model.clone(),
            RhsForm::PrintedLiteral => {
                ModelSpec::new(0.5, &[(2, -0.2), (4, 1.0 / 16.0)], "printed-literal").expect("valid model")
            }
        };
        Self {
            effective,
            frozen: false,
        }
    }

    /// A flow with `ż = 0` everywhere.
    pub fn frozen(model: &ModelSpec) -> Self {
        Self {
            effective: model.clone(),
            frozen: true,
        }
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    fn qp_rates(&self, q: f64, p: f64) -> (f64, f64) {
        if self.frozen {
            return (0.0, 0.0);
        }
        (
            2.0 * self.effective.kinetic_coeff * p,
            -self.effective.potential_derivative(q),
        )
    }

    pub fn rhs(&self, z: C64) -> C64 {
        let c = CoherentParam(z);
        let (qd, pd) = self.qp_rates(c.q(), c.p());
        C64::new(qd, pd) * FRAC_1_SQRT_2
    }

    pub fn energy(&self, z: C64) -> f64 {
        let c = CoherentParam(z);
        self.effective.classical_energy(c.q(), c.p())
    }
}

/// `ż` for a single Gaussian from Hamilton's equations of `model`.
pub fn classical_rhs(z: C64, model: &ModelSpec) -> C64 {
    ClassicalFlow::new(model, RhsForm::Hamilton).rhs(z)
}

/// Outcome of one implicit trapezoidal step of the centres.
#[derive(Clone, Debug)]
pub struct NewtonReport {
    pub z: Vec<C64>,
    pub max_iterations: usize,
    pub max_residual: f64,
}

/// Solves `z₂ = z₁ + dt/2 (ż₁ + ż₂)` per Gaussian by Newton's method in
/// `(q, p)`, starting from the explicit Euler guess.
pub fn cn_newton_step(z1: &[C64], dt: f64, tol: f64, max_iter: usize, flow: &ClassicalFlow) -> Result<NewtonReport> {
    if !(tol > 0.0) {
        return Err(Error::Precondition(format!(
            "Newton tolerance must be positive, got {tol}"
        )));
    }
    let h = 0.5 * dt;
    let c = flow.effective.kinetic_coeff;
    let mut out = Vec::with_capacity(z1.len());
    let mut max_iterations = 0;
    let mut max_residual = 0.0_f64;
    for &z in z1 {
        let (q1, p1) = (SQRT_2 * z.re, SQRT_2 * z.im);
        let (qd1, pd1) = flow.qp_rates(q1, p1);
        let (mut q, mut p) = (q1 + dt * qd1, p1 + dt * pd1);
        let mut iterations = 0;
        let residual = loop {
            let (qd, pd) = flow.qp_rates(q, p);
            let fq = q - q1 - h * (qd1 + qd);
            let fp = p - p1 - h * (pd1 + pd);
            let res = (fq * fq + fp * fp).sqrt() * FRAC_1_SQRT_2;
            if res <= tol {
                break res;
            }
            if iterations == max_iter || !res.is_finite() {
                return Err(Error::NewtonDivergence {
                    iterations,
                    residual: res,
                });
            }
            // J = [[1, -2hc], [h V'', 1]]
            let v2 = if flow.frozen {
                0.0
            } else {
                flow.effective.potential_second_derivative(q)
            };
            let (j12, j21) = (-2.0 * h * c, h * v2);
            let det = 1.0 - j12 * j21;
            let dq = (fq - j12 * fp) / det;
            let dp = (fp - j21 * fq) / det;
            q -= dq;
            p -= dp;
            iterations += 1;
        };
        max_iterations = max_iterations.max(iterations);
        max_residual = max_residual.max(residual);
        out.push(C64::new(q, p) * FRAC_1_SQRT_2);
    }
    Ok(NewtonReport {
        z: out,
        max_iterations,
        max_residual,
    })
}

/// Advances a frame by `dt` and evaluates the new velocities.
pub fn advance_frame(
    frame: &GaussianFrame,
    dt: f64,
    tol: f64,
    max_iter: usize,
    flow: &ClassicalFlow,
) -> Result<(GaussianFrame, NewtonReport)> {
    let rep = cn_newton_step(&frame.z, dt, tol, max_iter, flow)?;
    let next = GaussianFrame::new(frame.time + dt, rep.z.clone()).evaluate(flow);
    Ok((next, rep))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerConfig {
    pub n_g: usize,
    pub kt: f64,
    pub q_range: (f64, f64),
    pub seed: u64,
}

impl SamplerConfig {
    pub fn new(n_g: usize, seed: u64) -> Self {
        Self {
            n_g,
            kt: 0.2,
            q_range: (-1.0, 1.0),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_g == 0 {
            return Err(Error::Config("N_g must be at least 1".into()));
        }
        if !(self.kt > 0.0) {
            return Err(Error::Config(format!("kT must be positive, got {}", self.kt)));
        }
        if !(self.q_range.0 < self.q_range.1) {
            return Err(Error::Config(format!("empty q range {:?}", self.q_range)));
        }
        Ok(())
    }
}

/// Position of the sampler's random stream, enough to resume it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngState {
    pub seed: u64,
    pub word_pos: u128,
}

/// Draws `q` uniformly on the range and `p` from the kinetic Boltzmann law,
/// then accepts `(q, p)` with probability `exp(-(H(q,p) - V_min)/kT)`.
pub fn sample_initial_conditions_with_state(
    cfg: &SamplerConfig,
    model: &ModelSpec,
) -> Result<(GaussianFrame, RngState)> {
    cfg.validate()?;
    let (_, vmin) = model.potential_minimum()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let uq = Uniform::new(cfg.q_range.0, cfg.q_range.1).map_err(|e| Error::Config(e.to_string()))?;
    let np =
        Normal::new(0.0, (cfg.kt / (2.0 * model.kinetic_coeff)).sqrt()).map_err(|e| Error::Config(e.to_string()))?;
    let mut qp = Vec::with_capacity(cfg.n_g);
    while qp.len() < cfg.n_g {
        let q = uq.sample(&mut rng);
        let p = np.sample(&mut rng);
        let w = (-(model.classical_energy(q, p) - vmin) / cfg.kt).exp();
        if rng.random::<f64>() < w {
            qp.push((q, p));
        }
    }
    let state = RngState {
        seed: cfg.seed,
        word_pos: rng.get_word_pos(),
    };
    Ok((GaussianFrame::from_phase_space(0.0, &qp), state))
}

pub fn sample_initial_conditions(cfg: &SamplerConfig, model: &ModelSpec) -> Result<GaussianFrame> {
    sample_initial_conditions_with_state(cfg, model).map(|(f, _)| f)
}

/// Parses whitespace-separated `q p` lines; `#` starts a comment.
pub fn parse_initial_conditions(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let bad = |message: String| Error::Parse {
            location: format!("line {}", lineno + 1),
            message,
        };
        if fields.len() != 2 {
            return Err(bad(format!("expected two columns 'q p', found {}", fields.len())));
        }
        let q: f64 = fields[0].parse().map_err(|e| bad(format!("q: {e}")))?;
        let p: f64 = fields[1].parse().map_err(|e| bad(format!("p: {e}")))?;
        if !q.is_finite() || !p.is_finite() {
            return Err(bad("non-finite phase-space point".into()));
        }
        out.push((q, p));
    }
    Ok(out)
}

pub fn load_initial_conditions(path: &Path) -> Result<GaussianFrame> {
    let text = std::fs::read_to_string(path)?;
    let qp = parse_initial_conditions(&text)?;
    if qp.is_empty() {
        return Err(Error::Config(format!("{} holds no initial conditions", path.display())));
    }
    Ok(GaussianFrame::from_phase_space(0.0, &qp))
}

pub fn format_initial_conditions(frame: &GaussianFrame) -> String {
    let mut s = String::from("# q p (a.u.)\n");
    for (q, p) in frame.phase_space() {
        s.push_str(&format!("{q:.17e} {p:.17e}\n"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_point_at_well_minimum() {
        let model = ModelSpec::double_well();
        let z = CoherentParam::from_qp(0.4f64.sqrt(), 0.0).0;
        assert!(classical_rhs(z, &model).norm() < 1e-15);
    }

    #[test]
    fn free_motion_rates() {
        let model = ModelSpec::double_well();
        let z = CoherentParam::from_qp(0.0, 1.0).0;
        let zd = classical_rhs(z, &model);
        assert!((zd - C64::new(FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn printed_form_matches_literal_equation() {
        let flow = ClassicalFlow::new(&ModelSpec::double_well(), RhsForm::PrintedLiteral);
        for &z in &[C64::new(0.3, -0.2), C64::new(-0.9, 0.5)] {
            let x = z.re;
            let lit = -C64::new(0.0, 1.0) * (z - 1.4 * x + 0.5 * x * x * x);
            assert!((flow.rhs(z) - lit).norm() < 1e-14);
        }
    }

    #[test]
    fn hamilton_form_matches_complex_expression() {
        // ż = -i (z - 7/5 Re z + 2 (Re z)³) for the double well.
        let model = ModelSpec::double_well();
        let z = C64::new(0.41, -0.37);
        let x = z.re;
        let expect = -C64::new(0.0, 1.0) * (z - 1.4 * x + 2.0 * x * x * x);
        assert!((classical_rhs(z, &model) - expect).norm() < 1e-14);
    }

    #[test]
    fn newton_stays_at_fixed_point() {
        let model = ModelSpec::double_well();
        let flow = ClassicalFlow::new(&model, RhsForm::Hamilton);
        let z = vec![CoherentParam::from_qp(-(0.4f64.sqrt()), 0.0).0];
        let rep = cn_newton_step(&z, 1e-2, 1e-12, 50, &flow).unwrap();
        assert!((rep.z[0] - z[0]).norm() < 1e-15);
    }

    #[test]
    fn newton_rejects_bad_tolerance_and_reports_nonconvergence() {
        let flow = ClassicalFlow::new(&ModelSpec::double_well(), RhsForm::Hamilton);
        let z = vec![C64::new(0.5, 0.5)];
        assert!(cn_newton_step(&z, 1e-2, 0.0, 50, &flow).is_err());
        match cn_newton_step(&z, 1.0, 1e-300, 1, &flow) {
            Err(Error::NewtonDivergence { iterations, .. }) => assert_eq!(iterations, 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn sampler_respects_range_and_seed() {
        let model = ModelSpec::double_well();
        let cfg = SamplerConfig::new(200, 7);
        let a = sample_initial_conditions(&cfg, &model).unwrap();
        let b = sample_initial_conditions(&cfg, &model).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 200);
        assert!(a.phase_space().iter().all(|&(q, _)| (-1.0..=1.0).contains(&q)));
        let c = sample_initial_conditions(&SamplerConfig::new(200, 8), &model).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn initial_condition_file_round_trip() {
        let text = "# header\n0.5 -0.25\n\n  -1e-1 3.0  # trailing\n";
        let qp = parse_initial_conditions(text).unwrap();
        assert_eq!(qp, vec![(0.5, -0.25), (-0.1, 3.0)]);
        let frame = GaussianFrame::from_phase_space(0.0, &qp);
        let again = parse_initial_conditions(&format_initial_conditions(&frame)).unwrap();
        for (a, b) in qp.iter().zip(&again) {
            assert!((a.0 - b.0).abs() < 1e-15 && (a.1 - b.1).abs() < 1e-15);
        }
        assert!(parse_initial_conditions("1.0\n").is_err());
        assert!(parse_initial_conditions("1.0 x\n").is_err());
    }
}
