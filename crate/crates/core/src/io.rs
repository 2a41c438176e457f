//! Dataset and knot files.
//!
//! Datasets are either CSV (one column per dimension, then one per field) or
//! a little-endian `f64` binary with a JSON sidecar describing a uniform grid.
//! Binary values are field-major, each field in row-major grid order.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bspline::{KnotVector, PointSet, TensorBasis};
use crate::error::{Error, Result};
use crate::model::{Conditions, Dataset, GridSidecar};

/// Axes if `points` form a full row-major tensor grid.
pub fn detect_grid(points: &[Vec<f64>], ndim: usize) -> Option<Vec<Vec<f64>>> {
    if points.is_empty() {
        return None;
    }
    let mut axes: Vec<Vec<f64>> = vec![vec![]; ndim];
    for (d, axis) in axes.iter_mut().enumerate() {
        let mut v: Vec<f64> = points.iter().map(|p| p[d]).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        *axis = v;
    }
    let grid = PointSet::Grid(axes.clone());
    if grid.len() != points.len() {
        return None;
    }
    for (i, p) in points.iter().enumerate() {
        if grid.point(i) != *p {
            return None;
        }
    }
    Some(axes)
}

fn bounding_box(points: &PointSet) -> Vec<(f64, f64)> {
    let nd = points.ndim();
    let mut dom = vec![(f64::INFINITY, f64::NEG_INFINITY); nd];
    for i in 0..points.len() {
        for (d, x) in points.point(i).into_iter().enumerate() {
            dom[d].0 = dom[d].0.min(x);
            dom[d].1 = dom[d].1.max(x);
        }
    }
    dom
}

pub fn write_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let header: Vec<&str> = ds.dims.iter().chain(&ds.fields).map(String::as_str).collect();
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..ds.len() {
        let mut row: Vec<String> = ds.points.point(i).iter().map(|v| format!("{v:e}")).collect();
        row.extend(ds.values.iter().map(|f| format!("{:e}", f[i])));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

/// Reads a CSV dataset. `dims` names the coordinate columns (last = time);
/// every other column is an observed field. Full row-major grids are
/// recognised and get grid-face conditions; scattered points get none.
pub fn read_csv(path: &Path, dims: &[String], domain: Option<Vec<(f64, f64)>>) -> Result<Dataset> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(|s| s.trim().to_string()).collect();
    let dim_cols: Vec<usize> = dims
        .iter()
        .map(|d| {
            header
                .iter()
                .position(|h| h == d)
                .ok_or_else(|| Error::Parse(format!("{}: missing column `{d}`", path.display())))
        })
        .collect::<Result<_>>()?;
    let field_cols: Vec<usize> = (0..header.len()).filter(|c| !dim_cols.contains(c)).collect();
    let mut pts = Vec::new();
    let mut vals: Vec<Vec<f64>> = vec![vec![]; field_cols.len()];
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let num = |c: usize| -> Result<f64> {
            rec.get(c)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("{}: bad number on row {}", path.display(), line + 2)))
        };
        pts.push(dim_cols.iter().map(|&c| num(c)).collect::<Result<Vec<_>>>()?);
        for (k, &c) in field_cols.iter().enumerate() {
            vals[k].push(num(c)?);
        }
    }
    let (points, conditions) = match detect_grid(&pts, dims.len()) {
        Some(axes) => (PointSet::Grid(axes), Conditions::GridFaces),
        None => (PointSet::Scattered(pts), Conditions::None),
    };
    let domain = domain.unwrap_or_else(|| bounding_box(&points));
    Dataset::new(
        dims.to_vec(),
        domain,
        points,
        field_cols.iter().map(|&c| header[c].clone()).collect(),
        vals,
        conditions,
    )
}

fn sidecar_bin(json: &Path) -> PathBuf {
    json.with_extension("bin")
}

/// Writes `<stem>.bin` and `<stem>.json`. The dataset must lie on a uniform grid.
pub fn write_grid_binary(ds: &Dataset, json: &Path) -> Result<()> {
    let axes = match &ds.points {
        PointSet::Grid(a) => a,
        PointSet::Scattered(_) => return Err(Error::Config("binary datasets need grid points".into())),
    };
    let mut spacing = Vec::new();
    for a in axes {
        let h = if a.len() > 1 { (a[a.len() - 1] - a[0]) / (a.len() - 1) as f64 } else { 0.0 };
        if a.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h.abs().max(1.0)) {
            return Err(Error::Config("binary datasets need uniformly spaced axes".into()));
        }
        spacing.push(h);
    }
    let side = GridSidecar {
        dims: ds.dims.clone(),
        shape: axes.iter().map(Vec::len).collect(),
        spacing,
        origin: axes.iter().map(|a| a[0]).collect(),
        fields: ds.fields.clone(),
        domain: Some(ds.domain.clone()),
        generator: ds.meta.clone(),
    };
    let mut bytes = Vec::with_capacity(8 * ds.len() * ds.fields.len());
    for f in &ds.values {
        for v in f {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(sidecar_bin(json), bytes)?;
    fs::write(json, serde_json::to_string_pretty(&side)? + "\n")?;
    Ok(())
}

pub fn read_grid_binary(json: &Path) -> Result<Dataset> {
    let side: GridSidecar = serde_json::from_str(&fs::read_to_string(json)?)?;
    let n: usize = side.shape.iter().product();
    let bytes = fs::read(sidecar_bin(json))?;
    if bytes.len() != 8 * n * side.fields.len() {
        return Err(Error::Parse(format!(
            "{}: expected {} values, found {} bytes",
            json.display(),
            n * side.fields.len(),
            bytes.len()
        )));
    }
    let all: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let values: Vec<Vec<f64>> = all.chunks(n.max(1)).map(<[f64]>::to_vec).take(side.fields.len()).collect();
    let axes: Vec<Vec<f64>> = side
        .shape
        .iter()
        .zip(side.origin.iter().zip(&side.spacing))
        .map(|(&m, (&o, &h))| (0..m).map(|i| o + h * i as f64).collect())
        .collect();
    let points = PointSet::Grid(axes);
    let domain = side.domain.clone().unwrap_or_else(|| bounding_box(&points));
    let mut ds = Dataset::new(side.dims, domain, points, side.fields, values, Conditions::GridFaces)?;
    ds.meta = side.generator;
    Ok(ds)
}

/// Reads either format, choosing by extension (`.json` = binary sidecar).
pub fn read_dataset(path: &Path, dims: &[String], domain: Option<Vec<(f64, f64)>>) -> Result<Dataset> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => read_grid_binary(path),
        _ => read_csv(path, dims, domain),
    }
}

/// Knot vectors of every field, axis by axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnotFile {
    pub dims: Vec<String>,
    pub fields: Vec<BTreeMap<String, KnotVector>>,
}

impl KnotFile {
    pub fn from_bases(dims: &[String], bases: &[TensorBasis]) -> Self {
        KnotFile {
            dims: dims.to_vec(),
            fields: bases
                .iter()
                .map(|b| dims.iter().cloned().zip(b.dims.iter().cloned()).collect())
                .collect(),
        }
    }

    pub fn to_bases(&self) -> Result<Vec<TensorBasis>> {
        self.fields
            .iter()
            .map(|m| {
                self.dims
                    .iter()
                    .map(|d| m.get(d).cloned().ok_or_else(|| Error::Parse(format!("knot file lacks axis `{d}`"))))
                    .collect::<Result<Vec<_>>>()
                    .map(TensorBasis::new)
            })
            .collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}
