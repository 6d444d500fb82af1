//! Path tables and JSON documents.
//!
//! A path table has one row per sample and the header
//! `s, x1..xm, v1..vm, t, tdot, conserved, lightlike_residual, zero_velocity`.
//! Cells for diagnostics a path does not carry are empty. Floats are written in
//! shortest round-trip form, so reading a table back gives the same bits.

use std::io::{Read, Write};
use std::path::Path;

use kropina_core::{GeodesicPath, Parametrization, PathSample};
use serde::Serialize;

use crate::error::CliError;

/// Version tag carried by every JSON document.
pub const FORMAT: &str = "kropina/v1";

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

pub fn path_header(dim: usize) -> Vec<String> {
    let mut h = vec!["s".to_string()];
    h.extend((1..=dim).map(|i| format!("x{i}")));
    h.extend((1..=dim).map(|i| format!("v{i}")));
    h.extend(["t", "tdot", "conserved", "lightlike_residual", "zero_velocity"].map(String::from));
    h
}

pub fn write_path_csv<W: Write>(w: W, path: &GeodesicPath) -> Result<(), CliError> {
    let dim = path.dim();
    let mut out = csv::Writer::from_writer(w);
    out.write_record(path_header(dim))?;
    for p in &path.samples {
        let mut row = vec![cell(Some(p.s))];
        row.extend(p.x.iter().map(|v| cell(Some(*v))));
        row.extend(p.v.iter().map(|v| cell(Some(*v))));
        row.extend([cell(p.t), cell(p.tdot), cell(p.conserved), cell(p.lightlike_residual)]);
        row.push(if p.zero_velocity { "1" } else { "0" }.to_string());
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Read a table written by [`write_path_csv`]. Header names are checked, the
/// dimension comes from the number of columns.
pub fn read_path_csv<R: Read>(r: R, parametrization: Parametrization, eps: f64) -> Result<GeodesicPath, CliError> {
    let mut rd = csv::Reader::from_reader(r);
    let header: Vec<String> = rd.headers()?.iter().map(String::from).collect();
    if header.len() < 8 || !(header.len() - 6).is_multiple_of(2) {
        return Err(CliError::config(format!("path table has {} columns", header.len())));
    }
    let dim = (header.len() - 6) / 2;
    if header != path_header(dim) {
        return Err(CliError::config(format!("unexpected path table header {header:?}")));
    }
    let num = |s: &str, row: usize| -> Result<f64, CliError> {
        s.parse::<f64>().map_err(|e| CliError::config(format!("row {row}: `{s}`: {e}")))
    };
    let opt = |s: &str, row: usize| -> Result<Option<f64>, CliError> {
        if s.is_empty() {
            Ok(None)
        } else {
            num(s, row).map(Some)
        }
    };
    let mut samples = Vec::new();
    for (row, rec) in rd.records().enumerate() {
        let rec = rec?;
        let f: Vec<&str> = rec.iter().collect();
        let x = f[1..=dim].iter().map(|s| num(s, row)).collect::<Result<Vec<_>, _>>()?;
        let v = f[dim + 1..=2 * dim].iter().map(|s| num(s, row)).collect::<Result<Vec<_>, _>>()?;
        let k = 2 * dim + 1;
        samples.push(PathSample {
            s: num(f[0], row)?,
            x,
            v,
            t: opt(f[k], row)?,
            tdot: opt(f[k + 1], row)?,
            conserved: opt(f[k + 2], row)?,
            lightlike_residual: opt(f[k + 3], row)?,
            zero_velocity: f[k + 4] == "1",
        });
    }
    Ok(GeodesicPath::new(samples, parametrization, eps))
}

pub fn to_json<T: Serialize>(doc: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(doc)?;
    s.push('\n');
    Ok(s)
}

/// Where documents go: a directory, or stdout when no directory was given.
#[derive(Debug, Clone)]
pub struct Output {
    dir: Option<std::path::PathBuf>,
}

impl Output {
    pub fn new(dir: Option<&Path>) -> Result<Self, CliError> {
        if let Some(d) = dir {
            std::fs::create_dir_all(d)?;
        }
        Ok(Output { dir: dir.map(Path::to_path_buf) })
    }

    pub fn has_dir(&self) -> bool {
        self.dir.is_some()
    }

    /// Write the main document to `<dir>/<name>` or print it.
    pub fn document<T: Serialize>(&self, name: &str, doc: &T) -> Result<(), CliError> {
        let text = to_json(doc)?;
        match &self.dir {
            Some(d) => std::fs::write(d.join(name), text)?,
            None => std::io::stdout().write_all(text.as_bytes())?,
        }
        Ok(())
    }

    /// Write a path table; returns its file name, or `None` without a directory.
    pub fn path_table(&self, name: &str, path: &GeodesicPath) -> Result<Option<String>, CliError> {
        let Some(d) = &self.dir else {
            return Ok(None);
        };
        let f = std::fs::File::create(d.join(name))?;
        write_path_csv(std::io::BufWriter::new(f), path)?;
        Ok(Some(name.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        assert_eq!(
            path_header(2),
            ["s", "x1", "x2", "v1", "v2", "t", "tdot", "conserved", "lightlike_residual", "zero_velocity"]
        );
    }

    #[test]
    fn round_trip_keeps_bits_and_empty_cells() {
        let mut a = PathSample::lifted(0.0, &[0.1, 1.0 / 3.0], &[1e-300, -2.5], 0.7, 1.25);
        a.conserved = Some(-0.2);
        let mut b = PathSample::spatial(1.0, &[std::f64::consts::PI, 0.0], &[0.0, 0.0]);
        b.zero_velocity = true;
        let path = GeodesicPath::new(vec![a, b], Parametrization::Affine, 0.0);
        let mut buf = Vec::new();
        write_path_csv(&mut buf, &path).unwrap();
        let back = read_path_csv(buf.as_slice(), Parametrization::Affine, 0.0).unwrap();
        assert_eq!(back, path);
    }
}
