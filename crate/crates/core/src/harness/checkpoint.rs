//! Binary checkpoints: magic `LDQD1`, a format version, then little-endian
//! fields.

use std::fs;
use std::path::Path;

use faer::Col;
use num_complex::Complex64 as C64;

use super::engine::{CellFailure, CellSnapshot, CellSpec, EngineSnapshot, Method};
use crate::error::{Error, Result};
use crate::linalg::CVec;
use crate::trajectories::{GaussianFrame, RngState};

pub const MAGIC: &[u8; 5] = b"LDQD1";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: String,
    pub rng: Option<RngState>,
    pub engine: EngineSnapshot,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u128(&mut self, v: u128) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn c64(&mut self, v: C64) {
        self.f64(v.re);
        self.f64(v.im);
    }
    fn str(&mut self, s: &str) {
        self.u64(s.len() as u64);
        self.0.extend_from_slice(s.as_bytes());
    }
    fn cvec(&mut self, v: &CVec) {
        self.u64(v.nrows() as u64);
        for i in 0..v.nrows() {
            self.c64(v[i]);
        }
    }
    fn frame(&mut self, f: &GaussianFrame) {
        self.f64(f.time);
        self.u64(f.z.len() as u64);
        for &z in &f.z {
            self.c64(z);
        }
        match &f.zdot {
            None => self.u8(0),
            Some(zd) => {
                self.u8(1);
                for &z in zd {
                    self.c64(z);
                }
            }
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().expect("16 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn c64(&mut self) -> Result<C64> {
        Ok(C64::new(self.f64()?, self.f64()?))
    }
    fn len(&mut self) -> Result<usize> {
        let n = self.u64()? as usize;
        if n > self.buf.len() {
            return Err(Error::Checkpoint(format!("implausible length {n}")));
        }
        Ok(n)
    }
    fn str(&mut self) -> Result<String> {
        let n = self.len()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::Checkpoint(e.to_string()))
    }
    fn cvec(&mut self) -> Result<CVec> {
        let n = self.len()?;
        let v: Vec<C64> = (0..n).map(|_| self.c64()).collect::<Result<_>>()?;
        Ok(Col::from_fn(n, |i| v[i]))
    }
    fn frame(&mut self) -> Result<GaussianFrame> {
        let time = self.f64()?;
        let n = self.len()?;
        let z: Vec<C64> = (0..n).map(|_| self.c64()).collect::<Result<_>>()?;
        let zdot = match self.u8()? {
            0 => None,
            1 => Some((0..n).map(|_| self.c64()).collect::<Result<Vec<_>>>()?),
            f => return Err(Error::Checkpoint(format!("bad velocity flag {f}"))),
        };
        Ok(GaussianFrame { time, z, zdot })
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(VERSION);
        w.str(&self.model);
        match self.rng {
            None => w.u8(0),
            Some(r) => {
                w.u8(1);
                w.u64(r.seed);
                w.u128(r.word_pos);
            }
        }
        let e = &self.engine;
        w.f64(e.t_start);
        w.u64(e.step);
        w.f64(e.dt);
        w.frame(&e.frame0);
        w.frame(&e.frame);
        w.u64(e.cells.len() as u64);
        for c in &e.cells {
            w.u8(c.spec.method.code());
            w.f64(c.spec.eps_s);
            w.u64(c.states.len() as u64);
            for (a, b) in c.initial.iter().zip(&c.states) {
                w.cvec(a);
                w.cvec(b);
            }
            match &c.failure {
                None => w.u8(0),
                Some(f) => {
                    w.u8(1);
                    w.f64(f.time);
                    w.str(&f.message);
                }
            }
        }
        w.0
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let model = r.str()?;
        let rng = match r.u8()? {
            0 => None,
            1 => Some(RngState {
                seed: r.u64()?,
                word_pos: r.u128()?,
            }),
            f => return Err(Error::Checkpoint(format!("bad rng flag {f}"))),
        };
        let t_start = r.f64()?;
        let step = r.u64()?;
        let dt = r.f64()?;
        let frame0 = r.frame()?;
        let frame = r.frame()?;
        let n_cells = r.len()?;
        let mut cells = Vec::with_capacity(n_cells);
        for _ in 0..n_cells {
            let code = r.u8()?;
            let method = Method::from_code(code).ok_or_else(|| Error::Checkpoint(format!("bad method code {code}")))?;
            let eps_s = r.f64()?;
            let n_states = r.len()?;
            let mut initial = Vec::with_capacity(n_states);
            let mut states = Vec::with_capacity(n_states);
            for _ in 0..n_states {
                initial.push(r.cvec()?);
                states.push(r.cvec()?);
            }
            let failure = match r.u8()? {
                0 => None,
                1 => Some(CellFailure {
                    time: r.f64()?,
                    message: r.str()?,
                }),
                f => return Err(Error::Checkpoint(format!("bad failure flag {f}"))),
            };
            cells.push(CellSnapshot {
                spec: CellSpec { method, eps_s },
                initial,
                states,
                failure,
            });
        }
        if r.pos != buf.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", buf.len() - r.pos)));
        }
        Ok(Self {
            model,
            rng,
            engine: EngineSnapshot {
                t_start,
                step,
                dt,
                frame0,
                frame,
                cells,
            },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let buf = fs::read(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let frame0 = GaussianFrame::new(0.0, vec![C64::new(0.1, -0.2), C64::new(-0.3, 0.4)]);
        let mut frame = frame0.clone();
        frame.time = 0.5;
        frame.zdot = Some(vec![C64::new(1.0, 2.0), C64::new(-1.0, 0.5)]);
        let v = Col::from_fn(2, |i| C64::new(i as f64, -0.5));
        Checkpoint {
            model: "doublewell".into(),
            rng: Some(RngState {
                seed: 7,
                word_pos: 1234,
            }),
            engine: EngineSnapshot {
                t_start: 0.0,
                step: 500,
                dt: 1e-3,
                frame0,
                frame,
                cells: vec![
                    CellSnapshot {
                        spec: CellSpec::new(Method::Var, 1e-14),
                        initial: vec![v.clone()],
                        states: vec![v.clone()],
                        failure: None,
                    },
                    CellSnapshot {
                        spec: CellSpec::new(Method::Naive, 1e-7),
                        initial: vec![v.clone()],
                        states: vec![v],
                        failure: Some(CellFailure {
                            time: 0.25,
                            message: "singular".into(),
                        }),
                    },
                ],
            },
        }
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let cp = sample();
        let bytes = cp.to_bytes();
        assert_eq!(&bytes[..5], MAGIC);
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, cp);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.ldqd");
        let cp = sample();
        cp.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        back.save(&path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), cp.to_bytes());
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample().to_bytes();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(Checkpoint::from_bytes(&longer).is_err());
        let mut v2 = bytes;
        v2[5] = 2;
        assert!(Checkpoint::from_bytes(&v2).is_err());
        assert!(Checkpoint::load(Path::new("/nonexistent/cp.bin")).is_err());
    }
}
