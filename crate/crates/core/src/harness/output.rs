//! CSV emission, plotting scripts and CSV comparison.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::engine::{CaseCounts, CellFailure, Sample};
use crate::error::{Error, Result};
use crate::observables::{local_error_real, time_avg_error};

pub const RUN_COLUMNS: [&str; 11] = [
    "t",
    "norm",
    "energy",
    "energy_minus_half",
    "position",
    "autocorr_re",
    "autocorr_im",
    "autocorr_abs",
    "M",
    "s_min",
    "case",
];

fn fnum(x: f64) -> String {
    format!("{x:.17e}")
}

/// Rows of a run CSV followed by `#` trailer lines.
pub fn run_csv(samples: &[Sample], trailer: &[String]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RUN_COLUMNS)?;
    for s in samples {
        w.write_record([
            fnum(s.t),
            fnum(s.norm),
            fnum(s.energy),
            fnum(s.energy - 0.5),
            fnum(s.position),
            fnum(s.autocorr.re),
            fnum(s.autocorr.im),
            fnum(s.autocorr.norm()),
            s.m.to_string(),
            fnum(s.s_min),
            s.case.map_or("-", |c| c.as_str()).to_string(),
        ])?;
    }
    let mut text =
        String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?).expect("CSV output is UTF-8");
    for line in trailer {
        let _ = writeln!(text, "# {line}");
    }
    Ok(text)
}

/// Trailer lines describing how a cell ended.
pub fn status_trailer(cases: &CaseCounts, failure: Option<&CellFailure>) -> Vec<String> {
    let mut v = vec![format!(
        "cases equal={} grow={} shrink={}",
        cases.equal, cases.grow, cases.shrink
    )];
    match failure {
        None => v.push("status complete".into()),
        Some(f) => {
            v.push("status aborted".into());
            v.push(format!("error t={} {}", f.time, f.message.replace('\n', " ")));
        }
    }
    v
}

/// Generic CSV from a header and numeric rows.
pub fn table_csv(header: &[&str], rows: &[Vec<f64>], trailer: &[String]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|&x| fnum(x)))?;
    }
    let mut text =
        String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?).expect("CSV output is UTF-8");
    for line in trailer {
        let _ = writeln!(text, "# {line}");
    }
    Ok(text)
}

/// A matplotlib script plotting every numeric column of `csv_name` against
/// its first column.
pub fn plot_script(csv_name: &str, title: &str) -> String {
    format!(
        r##"import csv
import sys

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "{csv_name}"
with open(path) as fh:
    rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
header, rows = rows[0], rows[1:]
cols = {{}}
for j, name in enumerate(header):
    try:
        cols[name] = [float(r[j]) for r in rows]
    except ValueError:
        pass
x = header[0]
names = [n for n in header[1:] if n in cols]
fig, axes = plt.subplots(len(names), 1, sharex=True, figsize=(7, 1.8 * len(names)))
if len(names) == 1:
    axes = [axes]
for ax, name in zip(axes, names):
    ax.plot(cols[x], cols[name])
    ax.set_ylabel(name)
axes[-1].set_xlabel(x)
fig.suptitle("{title}")
fig.tight_layout()
fig.savefig(path.rsplit(".", 1)[0] + ".png", dpi=120)
"##
    )
}

pub fn write_with_plot(dir: &Path, stem: &str, csv_text: &str, title: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    let csv_name = format!("{stem}.csv");
    fs::write(dir.join(&csv_name), csv_text)?;
    fs::write(dir.join(format!("{stem}.plot.py")), plot_script(&csv_name, title))?;
    Ok(())
}

/// A CSV read back into named columns; non-numeric cells become NaN.
#[derive(Clone, Debug)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn parse(text: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<Vec<Vec<String>>, _>>()?;
        Ok(Self { header, rows })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Parse {
            location: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.header.iter().position(|h| h == name)?;
        Some(
            self.rows
                .iter()
                .map(|r| r.get(j).and_then(|s| s.parse().ok()).unwrap_or(f64::NAN))
                .collect(),
        )
    }
}

#[derive(Clone, Debug)]
pub struct Comparison {
    pub times: Vec<f64>,
    /// `(column, a - b)` for every numeric column shared by both tables.
    pub errors: Vec<(String, Vec<f64>)>,
    /// Time average of `|a - b|` per column.
    pub averages: Vec<(String, f64)>,
}

/// Joins two tables on their first column (matched to `1e-9`) and forms the
/// differences of the shared numeric columns.
pub fn compare_tables(a: &Table, b: &Table) -> Result<Comparison> {
    let key = a
        .header
        .first()
        .ok_or_else(|| Error::Precondition("empty table".into()))?
        .clone();
    let ta = a.column(&key).expect("key column");
    let tb = b
        .column(&key)
        .ok_or_else(|| Error::Precondition(format!("second table lacks column '{key}'")))?;
    let mut pairs = Vec::new();
    let mut j = 0;
    for (i, &t) in ta.iter().enumerate() {
        while j < tb.len() && tb[j] < t - 1e-9 {
            j += 1;
        }
        if j < tb.len() && (tb[j] - t).abs() <= 1e-9 {
            pairs.push((i, j));
        }
    }
    if pairs.len() < 2 {
        return Err(Error::Precondition(
            "the tables share fewer than two time points".into(),
        ));
    }
    let times: Vec<f64> = pairs.iter().map(|&(i, _)| ta[i]).collect();
    let mut errors = Vec::new();
    let mut averages = Vec::new();
    for name in a.header.iter().skip(1) {
        let (Some(ca), Some(cb)) = (a.column(name), b.column(name)) else {
            continue;
        };
        if ca.iter().all(|x| x.is_nan()) {
            continue;
        }
        let va: Vec<f64> = pairs.iter().map(|&(i, _)| ca[i]).collect();
        let vb: Vec<f64> = pairs.iter().map(|&(_, j)| cb[j]).collect();
        let err = local_error_real(&times, &va, &vb, name)?;
        let avg = time_avg_error(&err, times[0], times[times.len() - 1])?;
        errors.push((name.clone(), err.values.iter().map(|v| v.re).collect()));
        averages.push((name.clone(), avg));
    }
    Ok(Comparison {
        times,
        errors,
        averages,
    })
}

pub fn comparison_csv(c: &Comparison) -> Result<String> {
    let mut header = vec!["t".to_string()];
    header.extend(c.errors.iter().map(|(n, _)| format!("{n}_err")));
    let rows: Vec<Vec<f64>> = (0..c.times.len())
        .map(|k| {
            let mut r = vec![c.times[k]];
            r.extend(c.errors.iter().map(|(_, v)| v[k]));
            r
        })
        .collect();
    let trailer: Vec<String> = c
        .averages
        .iter()
        .map(|(n, a)| format!("time_avg_abs {n} {a:e}"))
        .collect();
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    table_csv(&h, &rows, &trailer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64 as C64;

    fn sample(t: f64, q: f64) -> Sample {
        Sample {
            t,
            norm: 1.0,
            energy: 0.6,
            position: q,
            autocorr: C64::new(0.6, 0.8),
            m: 3,
            s_min: 1e-3,
            case: None,
            norm2: None,
            overlap12: None,
        }
    }

    #[test]
    fn run_csv_reads_back() {
        let s = vec![sample(0.0, -0.5), sample(0.01, -0.4)];
        let text = run_csv(&s, &status_trailer(&CaseCounts::default(), None)).unwrap();
        assert!(text.starts_with("t,norm,energy,energy_minus_half,position"));
        assert!(text.contains("# status complete"));
        let t = Table::parse(&text).unwrap();
        assert_eq!(t.header, RUN_COLUMNS);
        assert_eq!(t.column("position").unwrap(), vec![-0.5, -0.4]);
        assert!((t.column("energy_minus_half").unwrap()[0] - 0.1).abs() < 1e-15);
        assert_eq!(t.column("autocorr_abs").unwrap()[1], 1.0);
    }

    #[test]
    fn compare_joins_on_time() {
        let a = run_csv(&[sample(0.0, 1.0), sample(0.5, 1.0), sample(1.0, 1.0)], &[]).unwrap();
        let b = run_csv(&[sample(0.0, 0.75), sample(1.0, 0.75)], &[]).unwrap();
        let c = compare_tables(&Table::parse(&a).unwrap(), &Table::parse(&b).unwrap()).unwrap();
        assert_eq!(c.times, vec![0.0, 1.0]);
        let pos = c.averages.iter().find(|(n, _)| n == "position").unwrap().1;
        assert!((pos - 0.25).abs() < 1e-15);
        assert!(!c.errors.iter().any(|(n, _)| n == "case"));
        let text = comparison_csv(&c).unwrap();
        assert!(text.contains("position_err"));
        let only_one = run_csv(&[sample(3.0, 0.0)], &[]).unwrap();
        assert!(compare_tables(&Table::parse(&a).unwrap(), &Table::parse(&only_one).unwrap()).is_err());
    }

    #[test]
    fn plot_script_mentions_csv() {
        let s = plot_script("x.csv", "title");
        assert!(s.contains("\"x.csv\""));
        assert!(s.contains("matplotlib"));
    }
}
