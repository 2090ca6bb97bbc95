//! CSV artifacts and their metadata sidecars.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::mc::{McEstimate, PathRecord};
use crate::model::{Boundary, SpaceGrid, TimeGrid};
use crate::pde::{SurfaceKind, ValueSurface};

/// Shortest decimal form of `v` rounded to 12 significant digits.
pub fn fmt_sig(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    let rounded: f64 = format!("{v:.11e}").parse().expect("formatted float parses");
    format!("{}", rounded + 0.0)
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn artifact_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Artifact {
        path: path.display().to_string(),
        message: message.into(),
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// `<file>.meta.toml` next to `path`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".meta.toml");
    path.with_file_name(name)
}

pub fn write_sidecar(path: &Path, meta: &toml::Table) -> Result<()> {
    let text = toml::to_string(meta).map_err(|e| io_err(path, e))?;
    write_text(&sidecar_path(path), &text)
}

pub fn boundary_csv(b: &Boundary<f64>) -> String {
    let mut out = String::from("t,b\n");
    for (&t, &v) in b.grid().nodes().iter().zip(b.values()) {
        let _ = writeln!(out, "{},{}", fmt_sig(t), fmt_sig(v));
    }
    out
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn parse_f64(path: &Path, line: usize, field: &str) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| artifact_err(path, format!("line {line}: cannot parse {field:?}")))
}

/// Reads a `t,b` file and checks the barrier invariants.
pub fn read_boundary(path: &Path) -> Result<Boundary<f64>> {
    let text = read_file(path)?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("t,b") {
        return Err(artifact_err(path, "expected header t,b"));
    }
    let (mut t, mut b) = (Vec::new(), Vec::new());
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let mut fields = line.split(',');
        let (Some(a), Some(c), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(artifact_err(
                path,
                format!("line {}: expected two fields", i + 2),
            ));
        };
        t.push(parse_f64(path, i + 2, a)?);
        b.push(parse_f64(path, i + 2, c)?);
    }
    Boundary::new(TimeGrid::new(t)?, b).map_err(|e| artifact_err(path, e.to_string()))
}

/// Header row `t,x_0,...`, then one row per time node.
pub fn surface_csv(s: &ValueSurface<f64>) -> String {
    let mut out = String::from("t");
    for &x in s.space_grid.nodes() {
        out.push(',');
        out.push_str(&fmt_sig(x));
    }
    out.push('\n');
    for (&t, row) in s.time_grid.nodes().iter().zip(s.values.rows()) {
        out.push_str(&fmt_sig(t));
        for &v in row {
            out.push(',');
            out.push_str(&fmt_sig(v));
        }
        out.push('\n');
    }
    out
}

pub fn read_surface(path: &Path, kind: SurfaceKind) -> Result<ValueSurface<f64>> {
    let text = read_file(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| artifact_err(path, "empty file"))?;
    let mut head = header.split(',');
    if head.next() != Some("t") {
        return Err(artifact_err(path, "expected header starting with t"));
    }
    let x: Vec<f64> = head.map(|f| parse_f64(path, 1, f)).collect::<Result<_>>()?;
    let (mut t, mut values) = (Vec::new(), Vec::new());
    for (i, line) in lines.enumerate() {
        let fields: Vec<f64> = line
            .split(',')
            .map(|f| parse_f64(path, i + 2, f))
            .collect::<Result<_>>()?;
        if fields.len() != x.len() + 1 {
            return Err(artifact_err(
                path,
                format!("line {}: expected {} fields", i + 2, x.len() + 1),
            ));
        }
        t.push(fields[0]);
        values.extend_from_slice(&fields[1..]);
    }
    let nt = t.len();
    let values = Array2::from_shape_vec((nt, x.len()), values)
        .map_err(|e| artifact_err(path, e.to_string()))?;
    ValueSurface::new(TimeGrid::new(t)?, SpaceGrid::new(x)?, values, kind)
}

pub const ESTIMATES_HEADER: &str = "label,t,x,mean,std_error,ci_lo,ci_hi,n_paths,dt,seed";

pub fn estimate_row(label: &str, t: f64, x: f64, e: &McEstimate<f64>) -> String {
    format!(
        "{label},{},{},{},{},{},{},{},{},{}",
        fmt_sig(t),
        fmt_sig(x),
        fmt_sig(e.mean),
        fmt_sig(e.std_error),
        fmt_sig(e.ci95.0),
        fmt_sig(e.ci95.1),
        e.n_paths,
        fmt_sig(e.dt),
        e.seed
    )
}

pub fn estimates_csv<'a>(
    rows: impl IntoIterator<Item = (&'a str, f64, f64, McEstimate<f64>)>,
) -> String {
    let mut out = format!("{ESTIMATES_HEADER}\n");
    for (label, t, x, e) in rows {
        out.push_str(&estimate_row(label, t, x, &e));
        out.push('\n');
    }
    out
}

/// One diagnostic dividend path: `s,fund,pre_payment,dividends,absorbed`.
pub fn path_csv(rec: &PathRecord<f64>) -> String {
    let mut out = String::from("s,fund,pre_payment,dividends,absorbed\n");
    for k in 0..rec.times.len() {
        let absorbed = rec.absorption_time.is_some_and(|g| rec.times[k] >= g);
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            fmt_sig(rec.times[k]),
            fmt_sig(rec.fund[k]),
            fmt_sig(rec.pre_payment[k]),
            fmt_sig(rec.dividends[k]),
            absorbed as u8
        );
    }
    out
}
