//! Run configuration: flat `key = value` text, one key per line.

use std::fmt::Write as _;
use std::path::PathBuf;

use num_complex::Complex64 as C64;

use super::engine::{CellSpec, EngineParams, Method};
use crate::error::{Error, Result};
use crate::model::{CoherentParam, ModelSpec};
use crate::trajectories::{ClassicalFlow, RhsForm, SamplerConfig};

/// Companion state of the two-state unitarity experiment.
pub const Z2_DEFAULT: C64 = C64 {
    re: -0.034575,
    im: -0.521422,
};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: String,
    pub method: Method,
    pub n_g: usize,
    pub eps_s: f64,
    pub dt: f64,
    /// Defaults to 6 for the double well and 31.739 for the rescaled model.
    pub t_final: Option<f64>,
    pub seed: u64,
    pub ic_file: Option<PathBuf>,
    pub stride: usize,
    /// Centre of the initial coherent state; defaults to the left minimum.
    pub z0: Option<C64>,
    pub z2: Option<C64>,
    pub kt: f64,
    /// Defaults to `[-1, 1]` scaled by the distance of the left minimum
    /// relative to the double well's.
    pub q_range: Option<(f64, f64)>,
    pub n_b: usize,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub rhs: RhsForm,
    pub frozen: bool,
    pub out_dir: PathBuf,
    pub name: Option<String>,
    pub checkpoint: Option<PathBuf>,
    pub sweep_ng: Vec<usize>,
    pub sweep_eps: Vec<f64>,
    pub sweep_methods: Vec<Method>,
    pub jobs: usize,
    pub dt_check: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: "doublewell".into(),
            method: Method::Var,
            n_g: 30,
            eps_s: 1e-10,
            dt: 1e-3,
            t_final: None,
            seed: 1,
            ic_file: None,
            stride: 10,
            z0: None,
            z2: None,
            kt: 0.2,
            q_range: None,
            n_b: 200,
            newton_tol: 1e-12,
            newton_max_iter: 50,
            rhs: RhsForm::Hamilton,
            frozen: false,
            out_dir: PathBuf::from("out"),
            name: None,
            checkpoint: None,
            sweep_ng: vec![3, 30, 150, 300],
            sweep_eps: vec![1e-7, 1e-8, 1e-9, 1e-10, 1e-11, 1e-12, 1e-13, 1e-14],
            sweep_methods: vec![Method::Var, Method::Reg1, Method::Reg2],
            jobs: 1,
            dt_check: false,
        }
    }
}

/// Keys accepted by [`RunConfig::set`].
pub const KEYS: &[&str] = &[
    "model",
    "method",
    "n_g",
    "eps_s",
    "dt",
    "t_final",
    "seed",
    "ic_file",
    "stride",
    "z0",
    "z2",
    "kt",
    "q_range",
    "n_b",
    "newton_tol",
    "newton_max_iter",
    "rhs",
    "frozen",
    "out_dir",
    "name",
    "checkpoint",
    "sweep_ng",
    "sweep_eps",
    "sweep_methods",
    "jobs",
    "dt_check",
];

fn bad(key: &str, value: &str, why: impl std::fmt::Display) -> Error {
    Error::Parse {
        location: key.to_string(),
        message: format!("invalid value '{value}': {why}"),
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse::<T>().map_err(|e| bad(key, value, e))
}

fn list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| num(key, s))
        .collect()
}

/// `a+bi`, `a-bi`, `a,b` or a real number.
pub fn parse_complex(s: &str) -> std::result::Result<C64, String> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    if let Some((a, b)) = t.split_once(',') {
        let re = a.parse::<f64>().map_err(|e| e.to_string())?;
        let im = b.parse::<f64>().map_err(|e| e.to_string())?;
        return Ok(C64::new(re, im));
    }
    match t.strip_suffix('i').or_else(|| t.strip_suffix('j')) {
        None => t.parse::<f64>().map(|re| C64::new(re, 0.0)).map_err(|e| e.to_string()),
        Some(body) => {
            let split = body
                .char_indices()
                .skip(1)
                .filter(|&(k, c)| (c == '+' || c == '-') && !matches!(body.as_bytes()[k - 1], b'e' | b'E'))
                .map(|(k, _)| k)
                .last();
            let (re, im) = match split {
                Some(k) => (&body[..k], &body[k..]),
                None => ("0", body),
            };
            let im = match im {
                "" | "+" => "1",
                "-" => "-1",
                x => x,
            };
            let re = re.parse::<f64>().map_err(|e| e.to_string())?;
            let im = im.trim_start_matches('+').parse::<f64>().map_err(|e| e.to_string())?;
            Ok(C64::new(re, im))
        }
    }
}

fn fmt_complex(z: C64) -> String {
    format!("{}{:+}i", z.re, z.im)
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        v => Err(bad(key, v, "expected a boolean")),
    }
}

impl RunConfig {
    /// Reads `key = value` lines; `#` starts a comment.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                location: format!("line {}", lineno + 1),
                message: format!("expected 'key = value', got '{line}'"),
            })?;
            self.set(k.trim(), v.trim()).map_err(|e| match e {
                Error::Parse { location, message } => Error::Parse {
                    location: format!("line {} ({location})", lineno + 1),
                    message,
                },
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let opt = |v: &str| !matches!(v.trim(), "" | "none" | "default");
        match key {
            "model" => {
                ModelSpec::by_name(value.trim()).map_err(|e| bad(key, value, e))?;
                self.model = value.trim().to_string();
            }
            "method" => self.method = value.parse().map_err(|e: Error| bad(key, value, e))?,
            "n_g" => self.n_g = num(key, value)?,
            "eps_s" => self.eps_s = num(key, value)?,
            "dt" => self.dt = num(key, value)?,
            "t_final" => self.t_final = if opt(value) { Some(num(key, value)?) } else { None },
            "seed" => self.seed = num(key, value)?,
            "ic_file" => self.ic_file = opt(value).then(|| PathBuf::from(value.trim())),
            "stride" => self.stride = num(key, value)?,
            "z0" => {
                self.z0 = if opt(value) {
                    Some(parse_complex(value).map_err(|e| bad(key, value, e))?)
                } else {
                    None
                }
            }
            "z2" => {
                self.z2 = if opt(value) {
                    Some(parse_complex(value).map_err(|e| bad(key, value, e))?)
                } else {
                    None
                }
            }
            "kt" => self.kt = num(key, value)?,
            "q_range" => {
                self.q_range = if opt(value) {
                    let v: Vec<f64> = list(key, value)?;
                    if v.len() != 2 {
                        return Err(bad(key, value, "expected 'lo,hi'"));
                    }
                    Some((v[0], v[1]))
                } else {
                    None
                }
            }
            "n_b" => self.n_b = num(key, value)?,
            "newton_tol" => self.newton_tol = num(key, value)?,
            "newton_max_iter" => self.newton_max_iter = num(key, value)?,
            "rhs" => {
                self.rhs = match value.trim() {
                    "hamilton" => RhsForm::Hamilton,
                    "printed" => RhsForm::PrintedLiteral,
                    v => return Err(bad(key, v, "expected 'hamilton' or 'printed'")),
                }
            }
            "frozen" => self.frozen = parse_bool(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value.trim()),
            "name" => self.name = opt(value).then(|| value.trim().to_string()),
            "checkpoint" => self.checkpoint = opt(value).then(|| PathBuf::from(value.trim())),
            "sweep_ng" => self.sweep_ng = list(key, value)?,
            "sweep_eps" => self.sweep_eps = list(key, value)?,
            "sweep_methods" => self.sweep_methods = list(key, value)?,
            "jobs" => self.jobs = num(key, value)?,
            "dt_check" => self.dt_check = parse_bool(key, value)?,
            other => {
                return Err(Error::Parse {
                    location: other.to_string(),
                    message: format!("unknown key (known keys: {})", KEYS.join(", ")),
                })
            }
        }
        Ok(())
    }

    /// Serializes every key; `from_text(to_text())` reproduces the config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let o = |v: Option<String>| v.unwrap_or_else(|| "none".into());
        let join = |v: Vec<String>| v.join(",");
        let _ = writeln!(s, "model = {}", self.model);
        let _ = writeln!(s, "method = {}", self.method);
        let _ = writeln!(s, "n_g = {}", self.n_g);
        let _ = writeln!(s, "eps_s = {:e}", self.eps_s);
        let _ = writeln!(s, "dt = {:e}", self.dt);
        let _ = writeln!(s, "t_final = {}", o(self.t_final.map(|x| x.to_string())));
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(
            s,
            "ic_file = {}",
            o(self.ic_file.as_ref().map(|p| p.display().to_string()))
        );
        let _ = writeln!(s, "stride = {}", self.stride);
        let _ = writeln!(s, "z0 = {}", o(self.z0.map(fmt_complex)));
        let _ = writeln!(s, "z2 = {}", o(self.z2.map(fmt_complex)));
        let _ = writeln!(s, "kt = {}", self.kt);
        let _ = writeln!(s, "q_range = {}", o(self.q_range.map(|(a, b)| format!("{a},{b}"))));
        let _ = writeln!(s, "n_b = {}", self.n_b);
        let _ = writeln!(s, "newton_tol = {:e}", self.newton_tol);
        let _ = writeln!(s, "newton_max_iter = {}", self.newton_max_iter);
        let rhs = match self.rhs {
            RhsForm::Hamilton => "hamilton",
            RhsForm::PrintedLiteral => "printed",
        };
        let _ = writeln!(s, "rhs = {rhs}");
        let _ = writeln!(s, "frozen = {}", self.frozen);
        let _ = writeln!(s, "out_dir = {}", self.out_dir.display());
        let _ = writeln!(s, "name = {}", o(self.name.clone()));
        let _ = writeln!(
            s,
            "checkpoint = {}",
            o(self.checkpoint.as_ref().map(|p| p.display().to_string()))
        );
        let _ = writeln!(
            s,
            "sweep_ng = {}",
            join(self.sweep_ng.iter().map(|x| x.to_string()).collect())
        );
        let _ = writeln!(
            s,
            "sweep_eps = {}",
            join(self.sweep_eps.iter().map(|x| format!("{x:e}")).collect())
        );
        let _ = writeln!(
            s,
            "sweep_methods = {}",
            join(self.sweep_methods.iter().map(|m| m.to_string()).collect())
        );
        let _ = writeln!(s, "jobs = {}", self.jobs);
        let _ = writeln!(s, "dt_check = {}", self.dt_check);
        s
    }

    pub fn validate(&self) -> Result<()> {
        let model = self.model_spec()?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        let tf = self.t_final();
        if !(tf > 0.0 && tf.is_finite()) {
            return Err(Error::Config(format!("t_final must be positive, got {tf}")));
        }
        if !(self.eps_s > 0.0) {
            return Err(Error::Config(format!("eps_s must be positive, got {}", self.eps_s)));
        }
        if self.sweep_eps.iter().any(|&e| !(e > 0.0)) {
            return Err(Error::Config("sweep_eps values must be positive".into()));
        }
        if self.n_g == 0 || self.sweep_ng.contains(&0) {
            return Err(Error::Config("n_g must be at least 1".into()));
        }
        if self.stride == 0 {
            return Err(Error::Config("stride must be at least 1".into()));
        }
        if self.n_b == 0 {
            return Err(Error::Config("n_b must be at least 1".into()));
        }
        if !(self.newton_tol > 0.0) || self.newton_max_iter == 0 {
            return Err(Error::Config(
                "Newton tolerance and iteration cap must be positive".into(),
            ));
        }
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        self.sampler(self.n_g).validate()?;
        model.validate()
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        ModelSpec::by_name(&self.model)
    }

    pub fn t_final(&self) -> f64 {
        self.t_final.unwrap_or(match self.model.as_str() {
            "rescaled" => 31.739,
            _ => 6.0,
        })
    }

    /// Number of steps reaching `t_final` (rounded to the nearest step).
    pub fn n_steps(&self) -> u64 {
        (self.t_final() / self.dt).round().max(1.0) as u64
    }

    /// Left potential minimum, or the origin for a single-well model.
    pub fn left_minimum(&self) -> Result<f64> {
        let (q, _) = self.model_spec()?.potential_minimum()?;
        Ok(-q.abs())
    }

    pub fn initial_z(&self) -> Result<C64> {
        match self.z0 {
            Some(z) => Ok(z),
            None => Ok(CoherentParam::from_qp(self.left_minimum()?, 0.0).0),
        }
    }

    pub fn z2(&self) -> C64 {
        self.z2.unwrap_or(Z2_DEFAULT)
    }

    pub fn q_range(&self) -> (f64, f64) {
        if let Some(r) = self.q_range {
            return r;
        }
        let reference = 0.4f64.sqrt();
        let scale = match self.left_minimum() {
            Ok(q) if q.abs() > 1e-8 => q.abs() / reference,
            _ => 1.0,
        };
        (-scale, scale)
    }

    pub fn sampler(&self, n_g: usize) -> SamplerConfig {
        SamplerConfig {
            n_g,
            kt: self.kt,
            q_range: self.q_range(),
            seed: self.seed,
        }
    }

    pub fn flow(&self) -> Result<ClassicalFlow> {
        let model = self.model_spec()?;
        Ok(if self.frozen {
            ClassicalFlow::frozen(&model)
        } else {
            ClassicalFlow::new(&model, self.rhs)
        })
    }

    pub fn engine_params(&self) -> Result<EngineParams> {
        Ok(EngineParams {
            model: self.model_spec()?,
            flow: self.flow()?,
            dt: self.dt,
            newton_tol: self.newton_tol,
            newton_max_iter: self.newton_max_iter,
            n_b: self.n_b,
        })
    }

    pub fn cell(&self) -> CellSpec {
        CellSpec::new(self.method, self.eps_s)
    }

    pub fn run_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            let cell = self.cell();
            match self.method {
                Method::Exact => format!("{}_exact", self.model),
                _ => format!("{}_{}_ng{}", self.model, cell.label(), self.n_g),
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_parsing() {
        let cases = [
            ("-0.034575-0.521422i", C64::new(-0.034575, -0.521422)),
            ("1.5", C64::new(1.5, 0.0)),
            ("2i", C64::new(0.0, 2.0)),
            ("-i", C64::new(0.0, -1.0)),
            ("1e-3+2e-3i", C64::new(1e-3, 2e-3)),
            ("1e+2-1E-1i", C64::new(100.0, -0.1)),
            ("0.3, -0.4", C64::new(0.3, -0.4)),
        ];
        for (s, z) in cases {
            assert_eq!(parse_complex(s).unwrap(), z, "{s}");
        }
        assert!(parse_complex("abc").is_err());
    }

    #[test]
    fn text_round_trip() {
        let text = "# comment\nmodel = rescaled\nmethod = reg2 # trailing\nn_g = 150\neps_s = 1e-7\nz2 = 0.1-0.2i\nq_range = -2,2\nsweep_methods = var,naive\nfrozen = yes\n";
        let cfg = RunConfig::from_text(text).unwrap();
        assert_eq!(cfg.model, "rescaled");
        assert_eq!(cfg.method, Method::Reg2);
        assert_eq!(cfg.n_g, 150);
        assert_eq!(cfg.z2, Some(C64::new(0.1, -0.2)));
        assert_eq!(cfg.q_range, Some((-2.0, 2.0)));
        assert_eq!(cfg.sweep_methods, vec![Method::Var, Method::Naive]);
        assert!(cfg.frozen);
        assert_eq!(RunConfig::from_text(&cfg.to_text()).unwrap(), cfg);
        assert_eq!(
            RunConfig::from_text(&RunConfig::default().to_text()).unwrap(),
            RunConfig::default()
        );
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RunConfig::from_text("n_g = many").is_err());
        assert!(RunConfig::from_text("colour = blue").is_err());
        assert!(RunConfig::from_text("just words").is_err());
        assert!(RunConfig::from_text("model = triple").is_err());
        let mut cfg = RunConfig::default();
        cfg.dt = 0.0;
        assert!(cfg.validate().is_err());
        cfg.dt = 1e-3;
        cfg.eps_s = -1.0;
        assert!(cfg.validate().is_err());
        cfg.eps_s = 1e-8;
        cfg.t_final = Some(-1.0);
        assert!(cfg.validate().is_err());
        cfg.t_final = None;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn model_defaults() {
        let mut cfg = RunConfig::default();
        assert_eq!(cfg.t_final(), 6.0);
        assert!((cfg.left_minimum().unwrap() + 0.4f64.sqrt()).abs() < 1e-12);
        let (lo, hi) = cfg.q_range();
        assert!((lo + 1.0).abs() < 1e-10 && (hi - 1.0).abs() < 1e-10);
        assert_eq!(cfg.n_steps(), 6000);
        cfg.model = "rescaled".into();
        assert_eq!(cfg.t_final(), 31.739);
        assert!((cfg.left_minimum().unwrap() + 2.0).abs() < 1e-12);
        assert!((cfg.q_range().1 - 10f64.sqrt()).abs() < 1e-10);
        let z = cfg.initial_z().unwrap();
        assert!((CoherentParam(z).q() + 2.0).abs() < 1e-12);
    }
}
