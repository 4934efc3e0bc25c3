//! Expectation values, overlaps between wavepackets and error metrics.

use faer::Col;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::{sandwich, CVec};
use crate::model::{cross_matrices_z, overlap_matrix, CrossMatrices, ModelSpec, OperatorSet};
use crate::trajectories::GaussianFrame;

/// `|Ψ> = Σ_k |g_k> C_k` on a given frame.
#[derive(Clone, Debug)]
pub struct WavepacketState {
    pub time: f64,
    pub c: CVec,
    pub frame: GaussianFrame,
}

impl WavepacketState {
    pub fn new(frame: GaussianFrame, c: CVec) -> Self {
        Self {
            time: frame.time,
            c,
            frame,
        }
    }

    /// A single Gaussian with unit coefficient.
    pub fn single(z: C64) -> Self {
        Self::new(
            GaussianFrame::new(0.0, vec![z]),
            Col::from_fn(1, |_| C64::new(1.0, 0.0)),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Observable {
    Norm,
    Energy,
    Position,
}

/// `√(C†SC)`, or the unnormalized `C†HC` / `C†XC`.
pub fn expectation_from(c: &CVec, mats: &CrossMatrices, which: Observable) -> f64 {
    match which {
        Observable::Norm => sandwich(c, mats.s.as_ref(), c).re.max(0.0).sqrt(),
        Observable::Energy => sandwich(c, mats.h.as_ref(), c).re,
        Observable::Position => sandwich(c, mats.x.as_ref(), c).re,
    }
}

pub fn expectation(state: &WavepacketState, which: Observable, model: &ModelSpec) -> Result<f64> {
    if state.c.nrows() != state.frame.len() {
        return Err(Error::Dimension {
            context: "expectation",
            expected: state.frame.len(),
            got: state.c.nrows(),
        });
    }
    let ops = OperatorSet::new(model)?;
    let mats = cross_matrices_z(&state.frame.z, &state.frame.z, &ops);
    Ok(expectation_from(&state.c, &mats, which))
}

/// `<Ψ_a|Ψ_b> = C_a† S(frame_a, frame_b) C_b`.
pub fn pair_overlap(a: &WavepacketState, b: &WavepacketState) -> C64 {
    let s = overlap_matrix(&a.frame.z, &b.frame.z);
    sandwich(&a.c, s.as_ref(), &b.c)
}

/// Time series of `Δ[f](t) = f(Ψ[t]) - f(Ψ_exact[t])`.
#[derive(Clone, Debug)]
pub struct ErrorSeries {
    pub times: Vec<f64>,
    pub values: Vec<C64>,
    pub quantity: String,
}

fn check_grid(times: &[f64]) -> Result<()> {
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Precondition("time grid must be strictly increasing".into()));
    }
    Ok(())
}

pub fn local_error(times: &[f64], series: &[C64], exact: &[C64], quantity: &str) -> Result<ErrorSeries> {
    if series.len() != times.len() || exact.len() != times.len() {
        return Err(Error::Dimension {
            context: "local_error grid",
            expected: times.len(),
            got: if series.len() != times.len() {
                series.len()
            } else {
                exact.len()
            },
        });
    }
    check_grid(times)?;
    Ok(ErrorSeries {
        times: times.to_vec(),
        values: series.iter().zip(exact).map(|(a, b)| a - b).collect(),
        quantity: quantity.to_string(),
    })
}

/// Real-valued convenience wrapper around [`local_error`].
pub fn local_error_real(times: &[f64], series: &[f64], exact: &[f64], quantity: &str) -> Result<ErrorSeries> {
    let a: Vec<C64> = series.iter().map(|&x| C64::new(x, 0.0)).collect();
    let b: Vec<C64> = exact.iter().map(|&x| C64::new(x, 0.0)).collect();
    local_error(times, &a, &b, quantity)
}

/// Piecewise-linear interpolation of a sampled series.
pub fn interpolate(times: &[f64], values: &[C64], t: f64) -> Result<C64> {
    if times.is_empty() || t < times[0] || t > times[times.len() - 1] {
        return Err(Error::Precondition(format!("t = {t} outside the sampled range")));
    }
    let k = times.partition_point(|&x| x <= t);
    if k == times.len() {
        return Ok(values[times.len() - 1]);
    }
    if k == 0 {
        return Ok(values[0]);
    }
    let (t0, t1) = (times[k - 1], times[k]);
    let w = (t - t0) / (t1 - t0);
    Ok(values[k - 1] * (1.0 - w) + values[k] * w)
}

/// `(1/(t_f - t_i)) ∫ |Δ| dt` by the trapezoidal rule on the stored grid,
/// with linear interpolation of `|Δ|` at window edges that fall between
/// samples.
pub fn time_avg_error(err: &ErrorSeries, t_i: f64, t_f: f64) -> Result<f64> {
    let times = &err.times;
    if times.len() < 2 || !(t_f > t_i) || t_i < times[0] || t_f > times[times.len() - 1] + 1e-12 {
        return Err(Error::Precondition(format!(
            "empty or out-of-range averaging window [{t_i}, {t_f}]"
        )));
    }
    let t_f = t_f.min(times[times.len() - 1]);
    let mags: Vec<C64> = err.values.iter().map(|v| C64::new(v.norm(), 0.0)).collect();
    let mut pts: Vec<(f64, f64)> = vec![(t_i, interpolate(times, &mags, t_i)?.re)];
    for (t, m) in times.iter().zip(&mags) {
        if *t > t_i && *t < t_f {
            pts.push((*t, m.re));
        }
    }
    pts.push((t_f, interpolate(times, &mags, t_f)?.re));
    let integral: f64 = pts
        .windows(2)
        .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0))
        .sum();
    Ok(integral / (t_f - t_i))
}
