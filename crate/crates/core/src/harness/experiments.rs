//! Single runs, sweeps, forward-backward and two-state experiments.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use num_complex::Complex64 as C64;

use super::checkpoint::Checkpoint;
use super::config::RunConfig;
use super::engine::{frame_hash, CaseCounts, CellFailure, CellSpec, Engine, EngineParams, Method, Sample};
use super::output::{self, Table};
use crate::error::{Error, Result};
use crate::observables::{local_error_real, time_avg_error};
use crate::trajectories::{
    format_initial_conditions, load_initial_conditions, sample_initial_conditions_with_state, GaussianFrame, RngState,
};

/// Sampled series of one cell.
#[derive(Clone, Debug)]
pub struct CellSeries {
    pub spec: CellSpec,
    pub samples: Vec<Sample>,
    pub failure: Option<CellFailure>,
    pub cases: CaseCounts,
    pub min_singular_value: f64,
    pub max_small_eigenvalues: usize,
}

impl CellSeries {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn column(&self, f: impl Fn(&Sample) -> f64) -> Vec<f64> {
        self.samples.iter().map(f).collect()
    }

    /// Stopped, non-finite, or norm off by more than half its initial value.
    pub fn diverged(&self) -> bool {
        if self.failure.is_some() {
            return true;
        }
        let Some(n0) = self.samples.first().map(|s| s.norm) else {
            return true;
        };
        self.samples.iter().any(|s| {
            !(s.norm.is_finite() && s.energy.is_finite() && s.position.is_finite()) || (s.norm - n0).abs() > 0.5 * n0
        })
    }
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub n_g: usize,
    pub cells: Vec<CellSeries>,
    pub frame_hash: u64,
    pub frame_failure: Option<CellFailure>,
    pub newton_max_iterations: usize,
    pub checkpoint: Checkpoint,
}

impl RunReport {
    pub fn cell(&self, method: Method, eps_s: f64) -> Option<&CellSeries> {
        self.cells
            .iter()
            .find(|c| c.spec.method == method && (method == Method::Exact || c.spec.eps_s == eps_s))
    }

    pub fn exact(&self) -> Option<&CellSeries> {
        self.cells.iter().find(|c| c.spec.method == Method::Exact)
    }
}

/// Initial frame from the configured file (first `n_g` entries) or the
/// sampler.
pub fn initial_frame(cfg: &RunConfig, n_g: usize) -> Result<(GaussianFrame, Option<RngState>)> {
    match &cfg.ic_file {
        Some(path) => {
            let f = load_initial_conditions(path)?;
            if f.len() < n_g {
                return Err(Error::Config(format!(
                    "{} holds {} initial conditions, {n_g} requested",
                    path.display(),
                    f.len()
                )));
            }
            Ok((GaussianFrame::new(0.0, f.z[..n_g].to_vec()), None))
        }
        None => {
            let (f, rng) = sample_initial_conditions_with_state(&cfg.sampler(n_g), &cfg.model_spec()?)?;
            Ok((f, Some(rng)))
        }
    }
}

/// Steps `engine` `n_steps` times, sampling every `stride` steps and at the
/// end.
pub fn drive(engine: &mut Engine, n_steps: u64, stride: usize) -> (Vec<Vec<Sample>>, Option<CellFailure>) {
    let n_cells = engine.cells().len();
    let mut series: Vec<Vec<Sample>> = vec![Vec::new(); n_cells];
    let push = |engine: &mut Engine, series: &mut Vec<Vec<Sample>>| {
        for (i, s) in engine.sample().into_iter().enumerate() {
            if let Some(s) = s {
                series[i].push(s);
            }
        }
    };
    push(engine, &mut series);
    let stride = stride.max(1) as u64;
    for k in 1..=n_steps {
        if !engine.any_alive() {
            break;
        }
        if let Err(e) = engine.advance() {
            log::error!("frame propagation failed at t = {}: {e}", engine.time());
            return (
                series,
                Some(CellFailure {
                    time: engine.time(),
                    message: e.to_string(),
                }),
            );
        }
        if k % stride == 0 || k == n_steps {
            push(engine, &mut series);
        }
    }
    (series, None)
}

fn report(
    engine: &Engine,
    n_g: usize,
    series: Vec<Vec<Sample>>,
    frame_failure: Option<CellFailure>,
    cfg: &RunConfig,
    rng: Option<RngState>,
) -> RunReport {
    let cells = engine
        .cells()
        .iter()
        .zip(series)
        .map(|(c, samples)| CellSeries {
            spec: c.spec,
            samples,
            failure: c.failure.clone(),
            cases: c.cases,
            min_singular_value: c.min_singular_value,
            max_small_eigenvalues: c.max_small_eigenvalues,
        })
        .collect();
    RunReport {
        n_g,
        cells,
        frame_hash: frame_hash(engine.frame()),
        frame_failure,
        newton_max_iterations: engine.newton_max_iterations,
        checkpoint: Checkpoint {
            model: cfg.model.clone(),
            rng,
            engine: engine.snapshot(),
        },
    }
}

/// Propagates `specs` on a basis of `n_g` Gaussians from the coherent states
/// `initial_z` up to `t_final`.
pub fn propagate(cfg: &RunConfig, n_g: usize, specs: &[CellSpec], initial_z: &[C64]) -> Result<RunReport> {
    cfg.validate()?;
    let (frame0, rng) = initial_frame(cfg, n_g)?;
    let mut engine = Engine::new(cfg.engine_params()?, frame0, initial_z, specs)?;
    let (series, ff) = drive(&mut engine, cfg.n_steps(), cfg.stride);
    Ok(report(&engine, n_g, series, ff, cfg, rng))
}

fn run_trailer(cfg: &RunConfig, rep: &RunReport, cell: &CellSeries) -> Vec<String> {
    let mut t = vec![
        format!(
            "model={} method={} n_g={} eps_s={:e} dt={:e} seed={}",
            cfg.model, cell.spec.method, rep.n_g, cell.spec.eps_s, cfg.dt, cfg.seed
        ),
        format!("frame_hash={:016x}", rep.frame_hash),
    ];
    t.extend(output::status_trailer(&cell.cases, cell.failure.as_ref()));
    if let Some(f) = &rep.frame_failure {
        t.push(format!("frame_error t={} {}", f.time, f.message));
    }
    t
}

/// `run`: one method, written as `<name>.csv`, `<name>.plot.py`,
/// `<name>.ckpt` and `<name>.cfg` in the output directory.
pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    let rep = propagate(cfg, cfg.n_g, &[cfg.cell()], &[cfg.initial_z()?])?;
    let name = cfg.run_name();
    let cell = &rep.cells[0];
    let text = output::run_csv(&cell.samples, &run_trailer(cfg, &rep, cell))?;
    output::write_with_plot(&cfg.out_dir, &name, &text, &name)?;
    rep.checkpoint.save(&cfg.out_dir.join(format!("{name}.ckpt")))?;
    fs::write(cfg.out_dir.join(format!("{name}.cfg")), cfg.to_text())?;
    Ok(rep)
}

/// One row of the sweep summary.
#[derive(Clone, Debug)]
pub struct SweepRow {
    pub method: Method,
    pub n_g: usize,
    pub eps_s: f64,
    pub autocorr_err: f64,
    pub energy_err: f64,
    pub position_err: f64,
    pub norm_err: f64,
    pub diverged: bool,
    pub failure: Option<CellFailure>,
    pub min_s: f64,
}

#[derive(Clone, Debug)]
pub struct DtCheck {
    pub n_g: usize,
    pub max_change: f64,
    pub passed: bool,
}

#[derive(Clone, Debug)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub dt_check: Option<DtCheck>,
    pub reports: Vec<RunReport>,
}

impl SweepReport {
    pub fn row(&self, method: Method, n_g: usize, eps_s: f64) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.n_g == n_g && r.eps_s == eps_s)
    }
}

/// Time average of `|f(cell) - f(exact)|` over the common sampled window.
pub fn avg_error(cell: &CellSeries, exact: &CellSeries, f: impl Fn(&Sample) -> f64) -> f64 {
    let exact_at: HashMap<u64, f64> = exact.samples.iter().map(|s| (s.t.to_bits(), f(s))).collect();
    let mut t = Vec::new();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for s in &cell.samples {
        if let Some(&e) = exact_at.get(&s.t.to_bits()) {
            t.push(s.t);
            a.push(f(s));
            b.push(e);
        }
    }
    if t.len() < 2 {
        return f64::NAN;
    }
    local_error_real(&t, &a, &b, "f")
        .and_then(|err| time_avg_error(&err, t[0], t[t.len() - 1]))
        .unwrap_or(f64::NAN)
}

fn sweep_specs(cfg: &RunConfig) -> Vec<CellSpec> {
    let mut specs = Vec::new();
    for &m in &cfg.sweep_methods {
        if m == Method::Exact {
            continue;
        }
        for &e in &cfg.sweep_eps {
            specs.push(CellSpec::new(m, e));
        }
    }
    specs.push(CellSpec::new(Method::Exact, 0.0));
    specs
}

fn rows_from(rep: &RunReport) -> Vec<SweepRow> {
    let exact = rep.exact().expect("sweep includes the exact reference");
    rep.cells
        .iter()
        .filter(|c| c.spec.method != Method::Exact)
        .map(|c| {
            let n0 = c.samples.first().map_or(f64::NAN, |s| s.norm);
            let norm_err = if c.samples.len() >= 2 {
                let t = c.times();
                let n = c.column(|s| s.norm);
                local_error_real(&t, &n, &vec![n0; n.len()], "norm")
                    .and_then(|e| time_avg_error(&e, t[0], t[t.len() - 1]))
                    .unwrap_or(f64::NAN)
            } else {
                f64::NAN
            };
            SweepRow {
                method: c.spec.method,
                n_g: rep.n_g,
                eps_s: c.spec.eps_s,
                autocorr_err: avg_error(c, exact, |s| s.autocorr.norm()),
                energy_err: avg_error(c, exact, |s| s.energy),
                position_err: avg_error(c, exact, |s| s.position),
                norm_err,
                diverged: c.diverged(),
                failure: c.failure.clone(),
                min_s: c.samples.iter().map(|s| s.s_min).fold(f64::INFINITY, f64::min),
            }
        })
        .collect()
}

/// Runs `f` over `items` on `jobs` worker threads, preserving order.
fn pool<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let next = AtomicUsize::new(0);
    let out: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs.max(1).min(items.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                out.lock().expect("pool lock")[i] = Some(r);
            });
        }
    });
    out.into_inner()
        .expect("pool lock")
        .into_iter()
        .map(|r| r.expect("every item processed"))
        .collect()
}

/// Reruns the smallest basis of the sweep at half the step and reports the
/// largest change of the sampled observables over non-divergent cells.
pub fn dt_halving_check(cfg: &RunConfig, coarse: &RunReport) -> Result<DtCheck> {
    let mut fine_cfg = cfg.clone();
    fine_cfg.dt = cfg.dt / 2.0;
    fine_cfg.stride = cfg.stride * 2;
    let specs: Vec<CellSpec> = coarse.cells.iter().map(|c| c.spec).collect();
    let fine = propagate(&fine_cfg, coarse.n_g, &specs, &[cfg.initial_z()?])?;
    let mut max_change: f64 = 0.0;
    for (a, b) in coarse.cells.iter().zip(&fine.cells) {
        if a.diverged() || b.diverged() {
            continue;
        }
        for (sa, sb) in a.samples.iter().zip(&b.samples) {
            if (sa.t - sb.t).abs() > 1e-9 {
                return Err(Error::Precondition("dt check grids do not align".into()));
            }
            let d = (sa.autocorr.norm() - sb.autocorr.norm())
                .abs()
                .max((sa.energy - sb.energy).abs())
                .max((sa.position - sb.position).abs());
            max_change = max_change.max(d);
        }
    }
    Ok(DtCheck {
        n_g: coarse.n_g,
        max_change,
        passed: max_change <= 1e-5,
    })
}

/// Propagates every `(method, eps_S)` cell for each basis size (cells of one
/// size share the frames) and tabulates time-averaged errors against the
/// exact reference.
pub fn sweep_report(cfg: &RunConfig) -> Result<SweepReport> {
    cfg.validate()?;
    let specs = sweep_specs(cfg);
    let z0 = cfg.initial_z()?;
    let results = pool(&cfg.sweep_ng, cfg.jobs, |&n_g| propagate(cfg, n_g, &specs, &[z0]));
    let reports: Vec<RunReport> = results.into_iter().collect::<Result<_>>()?;
    let rows = reports.iter().flat_map(rows_from).collect();
    let dt_check = if cfg.dt_check {
        let smallest = reports.iter().min_by_key(|r| r.n_g).expect("non-empty sweep");
        Some(dt_halving_check(cfg, smallest)?)
    } else {
        None
    };
    Ok(SweepReport {
        rows,
        dt_check,
        reports,
    })
}

pub fn sweep_csv(rep: &SweepReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "method",
        "n_g",
        "eps_s",
        "autocorr_abs_err",
        "energy_err",
        "position_err",
        "norm_err",
        "min_s",
        "diverged",
        "failure_t",
        "failure",
    ])?;
    for r in &rep.rows {
        w.write_record([
            r.method.to_string(),
            r.n_g.to_string(),
            format!("{:e}", r.eps_s),
            format!("{:e}", r.autocorr_err),
            format!("{:e}", r.energy_err),
            format!("{:e}", r.position_err),
            format!("{:e}", r.norm_err),
            format!("{:e}", r.min_s),
            r.diverged.to_string(),
            r.failure.as_ref().map_or(String::new(), |f| f.time.to_string()),
            r.failure.as_ref().map_or(String::new(), |f| f.message.clone()),
        ])?;
    }
    let mut text = String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?).expect("UTF-8");
    if let Some(c) = &rep.dt_check {
        text.push_str(&format!(
            "# dt_check n_g={} max_change={:e} passed={}\n",
            c.n_g, c.max_change, c.passed
        ));
    }
    Ok(text)
}

/// `sweep`: writes `<name>_sweep.csv` and the per-cell run CSVs.
pub fn sweep(cfg: &RunConfig) -> Result<SweepReport> {
    let rep = sweep_report(cfg)?;
    let name = cfg.name.clone().unwrap_or_else(|| format!("{}_sweep", cfg.model));
    fs::create_dir_all(&cfg.out_dir)?;
    fs::write(cfg.out_dir.join(format!("{name}.csv")), sweep_csv(&rep)?)?;
    for r in &rep.reports {
        for c in &r.cells {
            let stem = format!("{name}_{}_ng{}", c.spec.label(), r.n_g);
            let text = output::run_csv(&c.samples, &run_trailer(cfg, r, c))?;
            output::write_with_plot(&cfg.out_dir, &stem, &text, &stem)?;
        }
    }
    fs::write(cfg.out_dir.join(format!("{name}.cfg")), cfg.to_text())?;
    Ok(rep)
}

/// Forward and backward position traces of one cell.
#[derive(Clone, Debug)]
pub struct RevertSeries {
    pub spec: CellSpec,
    /// `(t, <Q>_fwd, <Q>_bwd)` on the shared sampling grid.
    pub points: Vec<(f64, f64, f64)>,
    pub failure: Option<CellFailure>,
}

impl RevertSeries {
    pub fn max_discrepancy(&self) -> f64 {
        self.points.iter().map(|&(_, a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Propagates backward from a checkpoint with the step negated and pairs the
/// positions with the forward series by step index.
pub fn revert_from(
    params: EngineParams,
    checkpoint: &Checkpoint,
    forward: &[(CellSpec, Vec<(f64, f64)>)],
    stride: usize,
) -> Result<Vec<RevertSeries>> {
    let snap = &checkpoint.engine;
    let dt = snap.dt;
    let mut params = params;
    params.dt = -dt;
    let mut engine = Engine::from_snapshot(params, snap)?;
    let (series, ff) = drive(&mut engine, snap.step, stride);
    let index = |t: f64| (t / dt).round() as i64;
    let mut out = Vec::new();
    for (cell, bwd) in engine.cells().iter().zip(series) {
        let Some((_, fwd)) = forward.iter().find(|(s, _)| *s == cell.spec) else {
            continue;
        };
        let back: HashMap<i64, f64> = bwd.iter().map(|s| (index(s.t), s.position)).collect();
        let points = fwd
            .iter()
            .filter_map(|&(t, q)| back.get(&index(t)).map(|&qb| (t, q, qb)))
            .collect();
        out.push(RevertSeries {
            spec: cell.spec,
            points,
            failure: cell.failure.clone().or_else(|| ff.clone()),
        });
    }
    Ok(out)
}

/// Forward run to `t_final` followed by the backward run, for several cells
/// sharing one basis.
pub fn revert_cells(cfg: &RunConfig, n_g: usize, specs: &[CellSpec]) -> Result<Vec<RevertSeries>> {
    let rep = propagate(cfg, n_g, specs, &[cfg.initial_z()?])?;
    if let Some(f) = &rep.frame_failure {
        return Err(Error::Precondition(format!("forward run failed: {}", f.message)));
    }
    let forward: Vec<(CellSpec, Vec<(f64, f64)>)> = rep
        .cells
        .iter()
        .map(|c| (c.spec, c.samples.iter().map(|s| (s.t, s.position)).collect()))
        .collect();
    revert_from(cfg.engine_params()?, &rep.checkpoint, &forward, cfg.stride)
}

fn revert_csv(r: &RevertSeries) -> Result<String> {
    let rows: Vec<Vec<f64>> = r.points.iter().map(|&(t, a, b)| vec![t, a, b, (a - b).abs()]).collect();
    let mut trailer = vec![format!("max_discrepancy={:e}", r.max_discrepancy())];
    if let Some(f) = &r.failure {
        trailer.push(format!("error t={} {}", f.time, f.message));
    }
    output::table_csv(&["t", "position_fwd", "position_bwd", "discrepancy"], &rows, &trailer)
}

/// `revert`: with `checkpoint` set, reads it and the forward CSV next to it;
/// otherwise runs forward first. Writes `<name>_revert.csv`.
pub fn revert(cfg: &RunConfig) -> Result<RevertSeries> {
    let name = cfg.run_name();
    let spec = cfg.cell();
    let series = match &cfg.checkpoint {
        Some(path) => {
            if !path.exists() {
                return Err(Error::Checkpoint(format!("checkpoint {} missing", path.display())));
            }
            let cp = Checkpoint::load(path)?;
            if cp.model != cfg.model {
                return Err(Error::Config(format!(
                    "checkpoint was written for model '{}', config says '{}'",
                    cp.model, cfg.model
                )));
            }
            let csv_path: PathBuf = path.with_extension("csv");
            let table = Table::read(&csv_path)?;
            let t = table
                .column("t")
                .ok_or_else(|| Error::Checkpoint("forward CSV lacks t".into()))?;
            let q = table
                .column("position")
                .ok_or_else(|| Error::Checkpoint("forward CSV lacks position".into()))?;
            let spec = cp.engine.cells.first().map(|c| c.spec).unwrap_or(spec);
            let forward = vec![(spec, t.into_iter().zip(q).collect())];
            revert_from(cfg.engine_params()?, &cp, &forward, cfg.stride)?
        }
        None => {
            let rep = run(cfg)?;
            let c = &rep.cells[0];
            let forward = vec![(c.spec, c.samples.iter().map(|s| (s.t, s.position)).collect())];
            revert_from(cfg.engine_params()?, &rep.checkpoint, &forward, cfg.stride)?
        }
    };
    let r = series
        .into_iter()
        .next()
        .ok_or_else(|| Error::Checkpoint("checkpoint holds no matching cell".into()))?;
    let stem = format!("{name}_revert");
    output::write_with_plot(&cfg.out_dir, &stem, &revert_csv(&r)?, &stem)?;
    Ok(r)
}

/// Errors of the two-state experiment relative to the values at `t = 0`.
#[derive(Clone, Debug)]
pub struct UnitaritySeries {
    pub spec: CellSpec,
    /// `(t, Δ‖Ψ‖, Δ‖Ψ'‖, Δ normalized |<Ψ|Ψ'>|)`.
    pub points: Vec<(f64, f64, f64, f64)>,
    pub failure: Option<CellFailure>,
}

impl UnitaritySeries {
    pub fn max_norm_error(&self) -> f64 {
        self.points.iter().map(|p| p.1.abs().max(p.2.abs())).fold(0.0, f64::max)
    }

    pub fn max_overlap_error(&self) -> f64 {
        self.points.iter().map(|p| p.3.abs()).fold(0.0, f64::max)
    }

    pub fn max_error(&self) -> f64 {
        self.max_norm_error().max(self.max_overlap_error())
    }
}

pub fn unitarity_cells(cfg: &RunConfig, n_g: usize, specs: &[CellSpec]) -> Result<Vec<UnitaritySeries>> {
    let rep = propagate(cfg, n_g, specs, &[cfg.initial_z()?, cfg.z2()])?;
    Ok(rep
        .cells
        .iter()
        .map(|c| {
            let val = |s: &Sample| {
                let n1 = s.norm;
                let n2 = s.norm2.unwrap_or(f64::NAN);
                let ov = s.overlap12.map_or(f64::NAN, |o| o.norm()) / (n1 * n2);
                (n1, n2, ov)
            };
            let points = match c.samples.first() {
                None => Vec::new(),
                Some(s0) => {
                    let (a0, b0, o0) = val(s0);
                    c.samples
                        .iter()
                        .map(|s| {
                            let (a, b, o) = val(s);
                            (s.t, a - a0, b - b0, o - o0)
                        })
                        .collect()
                }
            };
            UnitaritySeries {
                spec: c.spec,
                points,
                failure: c.failure.clone().or_else(|| rep.frame_failure.clone()),
            }
        })
        .collect())
}

/// `unitarity`: writes `<name>_unitarity.csv`.
pub fn unitarity(cfg: &RunConfig) -> Result<UnitaritySeries> {
    let r = unitarity_cells(cfg, cfg.n_g, &[cfg.cell()])?
        .into_iter()
        .next()
        .expect("one cell");
    let rows: Vec<Vec<f64>> = r.points.iter().map(|&(t, a, b, o)| vec![t, a, b, o]).collect();
    let mut trailer = vec![
        format!("z2={}{:+}i", cfg.z2().re, cfg.z2().im),
        format!(
            "max_norm_error={:e} max_overlap_error={:e}",
            r.max_norm_error(),
            r.max_overlap_error()
        ),
    ];
    if let Some(f) = &r.failure {
        trailer.push(format!("error t={} {}", f.time, f.message));
    }
    let text = output::table_csv(&["t", "norm1_err", "norm2_err", "overlap_err"], &rows, &trailer)?;
    let stem = format!("{}_unitarity", cfg.run_name());
    output::write_with_plot(&cfg.out_dir, &stem, &text, &stem)?;
    Ok(r)
}

/// `sample`: the initial conditions as `q p` text.
pub fn sample(cfg: &RunConfig) -> Result<String> {
    cfg.validate()?;
    let (frame, rng) = initial_frame(cfg, cfg.n_g)?;
    let mut text = format!(
        "# n_g={} seed={} kt={} q_range={:?}\n",
        cfg.n_g,
        cfg.seed,
        cfg.kt,
        cfg.q_range()
    );
    if let Some(r) = rng {
        text.push_str(&format!("# rng_word_pos={}\n", r.word_pos));
    }
    text.push_str(&format_initial_conditions(&frame));
    Ok(text)
}

/// `compare`: joins two CSVs on `t` and writes the difference columns.
pub fn compare(a: &Path, b: &Path, out: &Path) -> Result<output::Comparison> {
    let c = output::compare_tables(&Table::read(a)?, &Table::read(b)?)?;
    if let Some(dir) = out.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(out, output::comparison_csv(&c)?)?;
    Ok(c)
}
