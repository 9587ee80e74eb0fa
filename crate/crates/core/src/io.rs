//! File formats: gaits and certificates as JSON, tubes as CSV.
//!
//! Tube CSV columns: `time, c0..c{n-1}, a00..a{n-1}{n-1}` (shape, row
//! major), `y, slice_nonempty, slice_radius`. Floats are written in
//! shortest round-trip form, so parsing reproduces them exactly.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normotope::{EmbeddingTrajectory, Normotope};
use crate::verify::{slice, AffineGuard, Conditions, GammaTerm, VerificationResult};

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let s = fs::read_to_string(path)?;
    serde_json::from_str(&s).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// Outcome of a verification run, with enough data to rebuild the tube.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub verified: bool,
    pub gamma: f64,
    pub t_under: f64,
    pub t_over: f64,
    pub conditions: Conditions,
    /// Scale returned by the bisection: the tube starts at `⟨x*, α₀/s*, 1⟩`.
    pub s_star: f64,
    pub x_star: Vec<f64>,
    /// `α₀`, row major.
    pub alpha0: Vec<f64>,
    pub k_track: [f64; 4],
    pub k_ds: [f64; 4],
    pub gamma_terms: Vec<GammaTerm>,
}

impl Certificate {
    pub fn new(r: &VerificationResult, s_star: f64, x_star: &DVector<f64>, alpha0: &DMatrix<f64>, k_track: [f64; 4], k_ds: [f64; 4]) -> Self {
        Self {
            verified: r.verified,
            gamma: r.gamma,
            t_under: r.t_under,
            t_over: r.t_over,
            conditions: r.conditions,
            s_star,
            x_star: x_star.iter().copied().collect(),
            alpha0: row_major(alpha0),
            k_track,
            k_ds,
            gamma_terms: r.gamma_terms.clone(),
        }
    }

    pub fn alpha0(&self) -> Result<DMatrix<f64>> {
        let n = self.x_star.len();
        if self.alpha0.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, found: self.alpha0.len() });
        }
        Ok(DMatrix::from_row_slice(n, n, &self.alpha0))
    }

    /// Initial shape of the certified tube, `α₀/s*`.
    pub fn shape(&self) -> Result<DMatrix<f64>> {
        Ok(self.alpha0()? / self.s_star)
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)])).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TubeRow {
    pub time: f64,
    pub center: Vec<f64>,
    pub shape: Vec<f64>,
    pub offset: f64,
    pub slice_nonempty: bool,
    pub slice_radius: f64,
}

impl TubeRow {
    pub fn normotope(&self) -> Result<Normotope> {
        let n = self.center.len();
        if self.shape.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, found: self.shape.len() });
        }
        Normotope::new(DVector::from_row_slice(&self.center), DMatrix::from_row_slice(n, n, &self.shape), self.offset)
    }
}

/// Rows for every sample of `traj`, with the guard slice of each.
pub fn tube_rows(traj: &EmbeddingTrajectory, guard: &AffineGuard) -> Result<Vec<TubeRow>> {
    traj.times
        .iter()
        .zip(&traj.states)
        .map(|(&t, n)| {
            let s = slice(n, guard, t)?;
            Ok(TubeRow {
                time: t,
                center: n.center().iter().copied().collect(),
                shape: row_major(n.shape()),
                offset: n.offset(),
                slice_nonempty: s.is_some(),
                slice_radius: s.map_or(0.0, |s| s.radius),
            })
        })
        .collect()
}

/// Rows of the coarse tube of a verification run.
pub fn export_tube(r: &VerificationResult, guard: &AffineGuard) -> Result<Vec<TubeRow>> {
    tube_rows(&r.tube, guard)
}

fn header(n: usize) -> Vec<String> {
    let mut h = vec!["time".to_string()];
    h.extend((0..n).map(|i| format!("c{i}")));
    h.extend((0..n).flat_map(|i| (0..n).map(move |j| format!("a{i}{j}"))));
    h.extend(["y", "slice_nonempty", "slice_radius"].map(String::from));
    h
}

pub fn tube_to_csv(rows: &[TubeRow]) -> Result<String> {
    let n = rows.first().map_or(0, |r| r.center.len());
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(header(n)).map_err(err)?;
    for r in rows {
        let mut rec = vec![r.time.to_string()];
        rec.extend(r.center.iter().map(f64::to_string));
        rec.extend(r.shape.iter().map(f64::to_string));
        rec.push(r.offset.to_string());
        rec.push(u8::from(r.slice_nonempty).to_string());
        rec.push(r.slice_radius.to_string());
        w.write_record(&rec).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

pub fn tube_from_csv(text: &str) -> Result<Vec<TubeRow>> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let cols = rd.headers().map_err(|e| Error::Parse(e.to_string()))?.len();
    // cols = 1 + n + n² + 3
    let n = (1..=64).find(|n| 4 + n + n * n == cols).ok_or_else(|| Error::Parse(format!("{cols} columns")))?;
    let mut rows = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let v: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("row {}: {e}", line + 1)))?;
        let flag = match v[1 + n + n * n + 1] {
            f if f == 0.0 => false,
            f if f == 1.0 => true,
            f => return Err(Error::Parse(format!("row {}: slice flag {f}", line + 1))),
        };
        rows.push(TubeRow {
            time: v[0],
            center: v[1..1 + n].to_vec(),
            shape: v[1 + n..1 + n + n * n].to_vec(),
            offset: v[1 + n + n * n],
            slice_nonempty: flag,
            slice_radius: v[cols - 1],
        });
    }
    Ok(rows)
}
