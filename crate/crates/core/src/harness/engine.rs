//! Lockstep propagation of several methods on one moving basis.
//!
//! The frames do not depend on the coefficient propagator, so every cell
//! (method, eps_S) of one basis size shares the classical step, the frame
//! matrices and the overlap eigendecomposition. Each cell carries one or more
//! coefficient vectors that are propagated with the same step operator.

use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64 as C64;

use crate::baseline::{
    cn_apply, cn_apply_eigen, reg_spectrum, CnOperands, EigenCn, ExactPropagator, RegMethod, RegularizedInverse,
};
use crate::error::{Error, Result};
use crate::linalg::{dot, sandwich, vec_finite, CMat, CVec, HermitianEigen};
use crate::model::{
    coherent_in_ho, coherent_overlap, cross_matrices_z, overlap_matrix, tau_matrix, CrossMatrices, ModelSpec,
    OperatorSet,
};
use crate::propagator::{assemble_utilde, stiefel_project, StepCase};
use crate::trajectories::{advance_frame, ClassicalFlow, GaussianFrame};
use crate::workspace::{project_onto, restrict, transform_operator, WorkingSpace};

/// A cell whose norm grows beyond this factor of its initial norm is stopped.
pub const RUNAWAY_FACTOR: f64 = 1e3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Var,
    Naive,
    Reg1,
    Reg2,
    Exact,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Var => "var",
            Method::Naive => "naive",
            Method::Reg1 => "reg1",
            Method::Reg2 => "reg2",
            Method::Exact => "exact",
        }
    }

    pub fn regularization(self) -> Option<RegMethod> {
        match self {
            Method::Naive => Some(RegMethod::Naive),
            Method::Reg1 => Some(RegMethod::Reg1),
            Method::Reg2 => Some(RegMethod::Reg2),
            _ => None,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Method::Var => 0,
            Method::Naive => 1,
            Method::Reg1 => 2,
            Method::Reg2 => 3,
            Method::Exact => 4,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        [Method::Var, Method::Naive, Method::Reg1, Method::Reg2, Method::Exact]
            .get(c as usize)
            .copied()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "var" => Ok(Method::Var),
            "naive" => Ok(Method::Naive),
            "reg1" => Ok(Method::Reg1),
            "reg2" => Ok(Method::Reg2),
            "exact" => Ok(Method::Exact),
            other => Err(Error::Config(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellSpec {
    pub method: Method,
    pub eps_s: f64,
}

impl CellSpec {
    pub fn new(method: Method, eps_s: f64) -> Self {
        Self { method, eps_s }
    }

    pub fn label(&self) -> String {
        match self.method {
            Method::Exact | Method::Naive => self.method.as_str().to_string(),
            m => format!("{}_{:.0e}", m.as_str(), self.eps_s),
        }
    }
}

/// Everything about one frame that the coefficient propagators need.
#[derive(Clone, Debug)]
pub struct Geometry {
    pub frame: GaussianFrame,
    pub mats: CrossMatrices,
    pub tau: CMat,
    pub eig: HermitianEigen,
}

impl Geometry {
    pub fn new(frame: GaussianFrame, ops: &OperatorSet) -> Result<Self> {
        let mats = cross_matrices_z(&frame.z, &frame.z, ops);
        let tau = tau_matrix(&frame, &mats.s)?;
        let eig = HermitianEigen::new(mats.s.as_ref())?;
        Ok(Self { frame, mats, tau, eig })
    }

    pub fn s_min(&self) -> f64 {
        self.eig.values.last().copied().unwrap_or(f64::NAN)
    }

    pub fn count_below(&self, threshold: f64) -> usize {
        self.eig.values.iter().filter(|&&x| x < threshold).count()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CaseCounts {
    pub equal: usize,
    pub grow: usize,
    pub shrink: usize,
}

impl CaseCounts {
    fn record(&mut self, case: StepCase) {
        match case {
            StepCase::Equal => self.equal += 1,
            StepCase::Grow => self.grow += 1,
            StepCase::Shrink => self.shrink += 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellFailure {
    pub time: f64,
    pub message: String,
}

#[derive(Clone, Debug)]
enum Kernel {
    Var {
        ws: Arc<WorkingSpace>,
        hbar: Arc<CMat>,
    },
    Reg {
        ops: Arc<CnOperands>,
    },
    Spectral {
        cn: Arc<EigenCn>,
        f: Arc<Vec<f64>>,
    },
    /// Eigenbasis components of the states at `t_ref`.
    Exact {
        reference: Arc<Vec<CVec>>,
        t_ref: f64,
    },
}

/// One propagated method with its tracked states.
#[derive(Clone, Debug)]
pub struct Cell {
    pub spec: CellSpec,
    pub initial: Vec<CVec>,
    pub states: Vec<CVec>,
    pub failure: Option<CellFailure>,
    pub cases: CaseCounts,
    pub last_case: Option<StepCase>,
    /// Smallest singular value of `Ũ₂₁` seen so far.
    pub min_singular_value: f64,
    /// Largest number of overlap eigenvalues below `1e-7` seen so far.
    pub max_small_eigenvalues: usize,
    initial_norms: Vec<f64>,
    kernel: Option<Kernel>,
}

impl Cell {
    pub fn is_alive(&self) -> bool {
        self.failure.is_none()
    }

    fn fail(&mut self, time: f64, err: &Error) {
        log::warn!("{} stopped at t = {time}: {err}", self.spec.label());
        self.failure = Some(CellFailure {
            time,
            message: err.to_string(),
        });
        self.kernel = None;
    }
}

/// Observables of one cell at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub norm: f64,
    pub energy: f64,
    pub position: f64,
    pub autocorr: C64,
    pub m: usize,
    pub s_min: f64,
    pub case: Option<StepCase>,
    /// Norm of the second tracked state.
    pub norm2: Option<f64>,
    /// `<Ψ|Ψ'>` between the first two tracked states.
    pub overlap12: Option<C64>,
}

#[derive(Clone, Debug)]
pub struct EngineParams {
    pub model: ModelSpec,
    pub flow: ClassicalFlow,
    pub dt: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub n_b: usize,
}

/// Saved state of an engine (see `checkpoint`).
#[derive(Clone, Debug, PartialEq)]
pub struct EngineSnapshot {
    pub t_start: f64,
    pub step: u64,
    pub dt: f64,
    pub frame0: GaussianFrame,
    pub frame: GaussianFrame,
    pub cells: Vec<CellSnapshot>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellSnapshot {
    pub spec: CellSpec,
    pub initial: Vec<CVec>,
    pub states: Vec<CVec>,
    pub failure: Option<CellFailure>,
}

pub struct Engine {
    params: EngineParams,
    ops: OperatorSet,
    exact: Option<Arc<ExactPropagator>>,
    t_start: f64,
    step: u64,
    frame0: GaussianFrame,
    geom: Geometry,
    cells: Vec<Cell>,
    pub newton_max_iterations: usize,
    pub newton_max_residual: f64,
}

struct VarStepOps {
    ws2: Arc<WorkingSpace>,
    hbar2: Arc<CMat>,
    sbar21: CMat,
    hbar21: CMat,
}

type Shared<T> = std::result::Result<Arc<T>, String>;

fn key(eps: f64) -> u64 {
    eps.to_bits()
}

fn var_kernel(geom: &Geometry, eps: f64) -> Result<(Arc<WorkingSpace>, Arc<CMat>)> {
    let ws = WorkingSpace::from_eigen(&geom.eig, eps)?;
    let hbar = transform_operator(&ws, &ws, &geom.mats.h)?;
    Ok((Arc::new(ws), Arc::new(hbar)))
}

fn reg_kernel(geom: &Geometry, method: RegMethod, eps: f64) -> Result<CnOperands> {
    let inv = RegularizedInverse::from_eigen(method, &geom.mats.s, &geom.eig, eps)?;
    Ok(CnOperands::new(inv.sminus, &geom.mats.h, &geom.tau))
}

fn spectral_kernel(cn: Arc<EigenCn>, method: Method, eps: f64) -> Result<Kernel> {
    let f = reg_spectrum(method.regularization().expect("regularized method"), eps, &cn.values)?;
    if f.iter().all(|&x| x == 0.0) {
        log::warn!("{method} with eps_S = {eps:e} discards every overlap eigenvalue");
    }
    Ok(Kernel::Spectral { cn, f: Arc::new(f) })
}

fn exact_kernel(prop: &ExactPropagator, states: &[CVec], t_ref: f64) -> Kernel {
    Kernel::Exact {
        reference: Arc::new(states.iter().map(|c| prop.to_eigenbasis(c)).collect()),
        t_ref,
    }
}

/// Hash of the frame labels, identical for bit-identical frames.
pub fn frame_hash(frame: &GaussianFrame) -> u64 {
    let mut h = DefaultHasher::new();
    for z in &frame.z {
        z.re.to_bits().hash(&mut h);
        z.im.to_bits().hash(&mut h);
    }
    h.finish()
}

impl Engine {
    /// Starts all cells from the coherent states `initial_z` at `t = 0`.
    pub fn new(params: EngineParams, frame0: GaussianFrame, initial_z: &[C64], specs: &[CellSpec]) -> Result<Self> {
        if initial_z.is_empty() {
            return Err(Error::Config("at least one initial state is required".into()));
        }
        if frame0.is_empty() {
            return Err(Error::Config("empty initial frame".into()));
        }
        let frame0 = GaussianFrame::new(0.0, frame0.z).evaluate(&params.flow);
        let cells = specs
            .iter()
            .map(|&spec| Cell {
                spec,
                initial: Vec::new(),
                states: Vec::new(),
                failure: None,
                cases: CaseCounts::default(),
                last_case: None,
                min_singular_value: f64::INFINITY,
                max_small_eigenvalues: 0,
                initial_norms: Vec::new(),
                kernel: None,
            })
            .collect();
        let mut engine = Self::assemble(params, 0.0, 0, frame0.clone(), frame0, cells)?;
        let b: Vec<CVec> = initial_z
            .iter()
            .map(|&z0| {
                faer::Col::from_fn(engine.geom.frame.len(), |k| {
                    coherent_overlap(engine.geom.frame.z[k], z0)
                })
            })
            .collect();
        let n_b = engine.params.n_b;
        let time = engine.time();
        for cell in &mut engine.cells {
            let states: Result<Vec<CVec>> = match &cell.kernel {
                None => continue,
                Some(Kernel::Exact { .. }) => Ok(initial_z
                    .iter()
                    .map(|&z| {
                        let v = coherent_in_ho(z, n_b);
                        faer::Col::from_fn(n_b, |i| v[i])
                    })
                    .collect()),
                Some(Kernel::Var { ws, .. }) => b.iter().map(|bi| project_onto(ws, bi)).collect(),
                Some(Kernel::Reg { ops }) => Ok(b.iter().map(|bi| &ops.sminus * bi).collect()),
                Some(Kernel::Spectral { cn, f }) => Ok(b
                    .iter()
                    .map(|bi| {
                        let mut w: CVec = cn.vectors.adjoint() * bi;
                        for (i, fi) in f.iter().enumerate() {
                            w[i] *= *fi;
                        }
                        &cn.vectors * &w
                    })
                    .collect()),
            };
            match states {
                Ok(s) => {
                    if let (Some(Kernel::Exact { .. }), Some(prop)) = (&cell.kernel, &engine.exact) {
                        cell.kernel = Some(exact_kernel(prop, &s, time));
                    }
                    cell.initial = s.clone();
                    cell.states = s;
                }
                Err(e) => cell.fail(time, &e),
            }
        }
        engine.refresh_initial_norms();
        Ok(engine)
    }

    /// Rebuilds an engine from a snapshot, optionally with a new time step.
    pub fn from_snapshot(params: EngineParams, snap: &EngineSnapshot) -> Result<Self> {
        let frame = snap.frame.clone().evaluate(&params.flow);
        let cells = snap
            .cells
            .iter()
            .map(|c| Cell {
                spec: c.spec,
                initial: c.initial.clone(),
                states: c.states.clone(),
                failure: c.failure.clone(),
                cases: CaseCounts::default(),
                last_case: None,
                min_singular_value: f64::INFINITY,
                max_small_eigenvalues: 0,
                initial_norms: Vec::new(),
                kernel: None,
            })
            .collect();
        let t_now = snap.t_start + snap.step as f64 * snap.dt;
        let mut engine = Self::assemble(params, t_now, 0, snap.frame0.clone(), frame, cells)?;
        engine.refresh_initial_norms();
        Ok(engine)
    }

    fn assemble(
        params: EngineParams,
        t_start: f64,
        step: u64,
        frame0: GaussianFrame,
        frame: GaussianFrame,
        cells: Vec<Cell>,
    ) -> Result<Self> {
        if !(params.dt.is_finite() && params.dt != 0.0) {
            return Err(Error::Config(format!(
                "dt must be finite and non-zero, got {}",
                params.dt
            )));
        }
        let ops = OperatorSet::new(&params.model)?;
        let exact = if cells.iter().any(|c| c.spec.method == Method::Exact) {
            Some(Arc::new(ExactPropagator::new(&params.model, params.n_b)?))
        } else {
            None
        };
        let mut frame = frame;
        frame.time = t_start;
        let geom = Geometry::new(frame, &ops)?;
        let mut engine = Self {
            params,
            ops,
            exact,
            t_start,
            step,
            frame0,
            geom,
            cells,
            newton_max_iterations: 0,
            newton_max_residual: 0.0,
        };
        engine.build_kernels();
        Ok(engine)
    }

    fn build_kernels(&mut self) {
        let time = self.time();
        let mut spectral: Option<Arc<EigenCn>> = None;
        for i in 0..self.cells.len() {
            if !self.cells[i].is_alive() {
                continue;
            }
            let spec = self.cells[i].spec;
            let kernel = match spec.method {
                Method::Exact => Ok(exact_kernel(
                    self.exact.as_ref().expect("exact propagator present"),
                    &self.cells[i].states,
                    time,
                )),
                Method::Var => var_kernel(&self.geom, spec.eps_s).map(|(ws, hbar)| Kernel::Var { ws, hbar }),
                Method::Naive => {
                    reg_kernel(&self.geom, RegMethod::Naive, spec.eps_s).map(|ops| Kernel::Reg { ops: Arc::new(ops) })
                }
                m => {
                    let cn = spectral
                        .get_or_insert_with(|| {
                            Arc::new(EigenCn::new(&self.geom.eig, &self.geom.mats.h, &self.geom.tau))
                        })
                        .clone();
                    spectral_kernel(cn, m, spec.eps_s)
                }
            };
            let small = self.geom.count_below(1e-7);
            let cell = &mut self.cells[i];
            cell.max_small_eigenvalues = cell.max_small_eigenvalues.max(small);
            match kernel {
                Ok(k) => cell.kernel = Some(k),
                Err(e) => cell.fail(time, &e),
            }
        }
    }

    fn refresh_initial_norms(&mut self) {
        let norms: Vec<Vec<f64>> = self
            .cells
            .iter()
            .map(|c| c.states.iter().map(|s| self.state_norm(c, s)).collect())
            .collect();
        for (c, n) in self.cells.iter_mut().zip(norms) {
            c.initial_norms = n;
        }
    }

    fn state_norm(&self, cell: &Cell, c: &CVec) -> f64 {
        match cell.spec.method {
            Method::Exact => dot(c, c).re.sqrt(),
            _ => {
                let v = self.geom.eig.components(c);
                self.geom.eig.form(&v, &v).re.max(0.0).sqrt()
            }
        }
    }

    pub fn params(&self) -> &EngineParams {
        &self.params
    }

    pub fn time(&self) -> f64 {
        self.t_start + self.step as f64 * self.params.dt
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn frame(&self) -> &GaussianFrame {
        &self.geom.frame
    }

    pub fn frame0(&self) -> &GaussianFrame {
        &self.frame0
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geom
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn any_alive(&self) -> bool {
        self.cells.iter().any(|c| c.is_alive())
    }

    pub fn snapshot(&self) -> EngineSnapshot {
        EngineSnapshot {
            t_start: self.t_start,
            step: self.step,
            dt: self.params.dt,
            frame0: self.frame0.clone(),
            frame: self.geom.frame.clone(),
            cells: self
                .cells
                .iter()
                .map(|c| CellSnapshot {
                    spec: c.spec,
                    initial: c.initial.clone(),
                    states: c.states.clone(),
                    failure: c.failure.clone(),
                })
                .collect(),
        }
    }

    /// Advances the frame and every live cell by one step. A failing cell is
    /// stopped and recorded; a failing frame step is an error.
    pub fn advance(&mut self) -> Result<()> {
        let p = &self.params;
        let (mut frame2, rep) = advance_frame(&self.geom.frame, p.dt, p.newton_tol, p.newton_max_iter, &p.flow)?;
        self.newton_max_iterations = self.newton_max_iterations.max(rep.max_iterations);
        self.newton_max_residual = self.newton_max_residual.max(rep.max_residual);
        let t2 = self.t_start + (self.step + 1) as f64 * p.dt;
        frame2.time = t2;
        if !frame2.is_finite() {
            return Err(Error::NonFinite { time: t2 });
        }
        let geom2 = Geometry::new(frame2, &self.ops)?;
        let dt = p.dt;

        let any_var = self.cells.iter().any(|c| c.is_alive() && c.spec.method == Method::Var);
        let cross = any_var.then(|| cross_matrices_z(&geom2.frame.z, &self.geom.frame.z, &self.ops));

        let mut var_cache: Vec<(u64, Shared<VarStepOps>)> = Vec::new();
        let mut reg_cache: Vec<((RegMethod, u64), Shared<CnOperands>)> = Vec::new();
        let mut spectral_cache: Vec<((Method, u64), Shared<Kernel>)> = Vec::new();
        let mut spectral2: Option<Arc<EigenCn>> = None;
        let small = geom2.count_below(1e-7);

        for cell in self.cells.iter_mut() {
            if !cell.is_alive() {
                continue;
            }
            cell.max_small_eigenvalues = cell.max_small_eigenvalues.max(small);
            let eps = cell.spec.eps_s;
            let outcome: Result<(Vec<CVec>, Kernel, Option<(StepCase, f64)>)> = match cell.kernel.as_ref() {
                None => continue,
                Some(Kernel::Exact { reference, t_ref }) => {
                    let prop = self.exact.as_ref().expect("exact propagator present");
                    Ok((
                        reference.iter().map(|d| prop.evolve(d, t2 - t_ref)).collect(),
                        Kernel::Exact {
                            reference: reference.clone(),
                            t_ref: *t_ref,
                        },
                        None,
                    ))
                }
                Some(Kernel::Var { ws, hbar }) => {
                    let entry = match var_cache.iter().find(|(k, _)| *k == key(eps)) {
                        Some((_, e)) => e.clone(),
                        None => {
                            let cross = cross.as_ref().expect("cross matrices computed");
                            let e = var_kernel(&geom2, eps)
                                .and_then(|(ws2, hbar2)| {
                                    Ok(VarStepOps {
                                        sbar21: transform_operator(&ws2, ws, &cross.s)?,
                                        hbar21: transform_operator(&ws2, ws, &cross.h)?,
                                        ws2,
                                        hbar2,
                                    })
                                })
                                .map(Arc::new)
                                .map_err(|e| e.to_string());
                            var_cache.push((key(eps), e.clone()));
                            e
                        }
                    };
                    match entry {
                        Err(msg) => Err(Error::Precondition(msg)),
                        Ok(ops) => var_cell_step(ws, hbar, &ops, &cell.states, dt).map(|(states, case, smin)| {
                            (
                                states,
                                Kernel::Var {
                                    ws: ops.ws2.clone(),
                                    hbar: ops.hbar2.clone(),
                                },
                                Some((case, smin)),
                            )
                        }),
                    }
                }
                Some(Kernel::Reg { ops }) => {
                    let rm = cell.spec.method.regularization().expect("regularized method");
                    let entry = match reg_cache.iter().find(|(k, _)| *k == (rm, key(eps))) {
                        Some((_, e)) => e.clone(),
                        None => {
                            let e = reg_kernel(&geom2, rm, eps).map(Arc::new).map_err(|e| e.to_string());
                            reg_cache.push(((rm, key(eps)), e.clone()));
                            e
                        }
                    };
                    match entry {
                        Err(msg) => Err(Error::Precondition(msg)),
                        Ok(ops2) => cell
                            .states
                            .iter()
                            .map(|c| cn_apply(c, ops, &ops2, dt))
                            .collect::<Result<Vec<_>>>()
                            .map(|s| (s, Kernel::Reg { ops: ops2.clone() }, None)),
                    }
                }
                Some(Kernel::Spectral { cn, f }) => {
                    let m = cell.spec.method;
                    let entry = match spectral_cache.iter().find(|(k, _)| *k == (m, key(eps))) {
                        Some((_, e)) => e.clone(),
                        None => {
                            let cn2 = spectral2
                                .get_or_insert_with(|| Arc::new(EigenCn::new(&geom2.eig, &geom2.mats.h, &geom2.tau)))
                                .clone();
                            let e = spectral_kernel(cn2, m, eps).map(Arc::new).map_err(|e| e.to_string());
                            spectral_cache.push(((m, key(eps)), e.clone()));
                            e
                        }
                    };
                    match entry {
                        Err(msg) => Err(Error::Precondition(msg)),
                        Ok(k2) => {
                            let Kernel::Spectral { cn: cn2, f: f2 } = k2.as_ref() else {
                                unreachable!("spectral cache holds spectral kernels")
                            };
                            cell.states
                                .iter()
                                .map(|c| cn_apply_eigen(c, f, cn, f2, cn2, dt))
                                .collect::<Result<Vec<_>>>()
                                .map(|s| (s, k2.as_ref().clone(), None))
                        }
                    }
                }
            };
            match outcome {
                Ok((states, kernel, diag)) => {
                    if !states.iter().all(vec_finite) {
                        cell.fail(t2, &Error::NonFinite { time: t2 });
                        continue;
                    }
                    if let Some((case, smin)) = diag {
                        cell.cases.record(case);
                        cell.last_case = Some(case);
                        cell.min_singular_value = cell.min_singular_value.min(smin);
                        log::trace!("{} t={t2:.6} case={} smin={smin:e}", cell.spec.label(), case.as_str());
                    }
                    cell.states = states;
                    cell.kernel = Some(kernel);
                }
                Err(e) => cell.fail(t2, &e),
            }
        }
        self.geom = geom2;
        self.step += 1;
        Ok(())
    }

    /// Observables of all cells at the current time; stops cells whose norm
    /// ran away. `None` for stopped cells.
    pub fn sample(&mut self) -> Vec<Option<Sample>> {
        let t = self.time();
        let s0t = overlap_matrix(&self.frame0.z, &self.geom.frame.z);
        let mut out = Vec::with_capacity(self.cells.len());
        for i in 0..self.cells.len() {
            let cell = &self.cells[i];
            if !cell.is_alive() || cell.states.is_empty() {
                out.push(None);
                continue;
            }
            let sample = self.cell_sample(cell, &s0t, t);
            let n0 = cell.initial_norms.first().copied().unwrap_or(1.0);
            if !sample.norm.is_finite() || sample.norm > RUNAWAY_FACTOR * n0.max(1e-300) {
                let err = Error::Diverged {
                    time: t,
                    norm: sample.norm,
                };
                self.cells[i].fail(t, &err);
                out.push(None);
            } else {
                out.push(Some(sample));
            }
        }
        out
    }

    fn cell_sample(&self, cell: &Cell, s0t: &CMat, t: f64) -> Sample {
        let c = &cell.states[0];
        let c0 = &cell.initial[0];
        let second = cell.states.get(1);
        match cell.spec.method {
            Method::Exact => {
                let prop = self.exact.as_ref().expect("exact propagator present");
                Sample {
                    t,
                    norm: dot(c, c).re.sqrt(),
                    energy: prop.energy(c),
                    position: prop.position(c),
                    autocorr: dot(c0, c),
                    m: self.params.n_b,
                    s_min: 1.0,
                    case: None,
                    norm2: second.map(|c2| dot(c2, c2).re.sqrt()),
                    overlap12: second.map(|c2| dot(c, c2)),
                }
            }
            method => {
                let m = match (&cell.kernel, method) {
                    (Some(Kernel::Var { ws, .. }), _) => ws.m(),
                    (_, Method::Naive) => self.geom.frame.len(),
                    _ => self.geom.frame.len() - self.geom.count_below(cell.spec.eps_s),
                };
                let eig = &self.geom.eig;
                let vc = eig.components(c);
                let vc2 = second.map(|c2| eig.components(c2));
                Sample {
                    t,
                    norm: eig.form(&vc, &vc).re.max(0.0).sqrt(),
                    energy: sandwich(c, self.geom.mats.h.as_ref(), c).re,
                    position: sandwich(c, self.geom.mats.x.as_ref(), c).re,
                    autocorr: sandwich(c0, s0t.as_ref(), c),
                    m,
                    s_min: self.geom.s_min(),
                    case: cell.last_case,
                    norm2: vc2.as_ref().map(|v| eig.form(v, v).re.max(0.0).sqrt()),
                    overlap12: vc2.as_ref().map(|v| eig.form(&vc, v)),
                }
            }
        }
    }
}

fn var_cell_step(
    ws1: &WorkingSpace,
    hbar1: &CMat,
    ops: &VarStepOps,
    states: &[CVec],
    dt: f64,
) -> Result<(Vec<CVec>, StepCase, f64)> {
    let cbars: Vec<CVec> = states.iter().map(|c| restrict(ws1, c)).collect::<Result<_>>()?;
    let utilde = assemble_utilde(dt, hbar1, &ops.hbar2, &ops.sbar21, &ops.hbar21)?;
    let step = stiefel_project(utilde, &cbars)?;
    let smin = step.min_singular_value();
    let next = cbars
        .iter()
        .map(|cb| {
            let cb2: CVec = &step.ubar * cb;
            &ops.ws2.phi * &cb2
        })
        .collect();
    Ok((next, step.case, smin))
}
