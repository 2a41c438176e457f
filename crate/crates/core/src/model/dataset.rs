//! Observations and collocation points.

use std::collections::BTreeMap;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::bspline::PointSet;
use crate::error::{Error, Result};

/// Which data points carry initial and boundary conditions.
#[derive(Clone, Debug, PartialEq)]
pub enum Conditions {
    None,
    /// First time slice (last axis) and the lo/hi faces of every spatial axis.
    GridFaces,
    /// Explicit point indices.
    Tagged { ic: Vec<usize>, bc: Vec<usize> },
}

/// A group of condition points together with their indices into the dataset.
#[derive(Clone, Debug)]
pub struct ConditionPart {
    pub points: PointSet,
    pub indices: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    /// Dimension names; the last is time.
    pub dims: Vec<String>,
    pub domain: Vec<(f64, f64)>,
    pub points: PointSet,
    /// Observed field names, e.g. `["u", "v"]`.
    pub fields: Vec<String>,
    /// One value vector per observed field, ordered like `points`.
    pub values: Vec<Vec<f64>>,
    pub conditions: Conditions,
    /// Free-form generator metadata carried into sidecars.
    pub meta: BTreeMap<String, serde_json::Value>,
}

impl Dataset {
    pub fn new(
        dims: Vec<String>,
        domain: Vec<(f64, f64)>,
        points: PointSet,
        fields: Vec<String>,
        values: Vec<Vec<f64>>,
        conditions: Conditions,
    ) -> Result<Self> {
        let ds = Dataset {
            dims,
            domain,
            points,
            fields,
            values,
            conditions,
            meta: BTreeMap::new(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.points.len();
        if n == 0 {
            return Err(Error::Shape("dataset has no points".into()));
        }
        if self.dims.len() != self.domain.len() || self.points.ndim() != self.dims.len() {
            return Err(Error::Shape(format!(
                "{} dimension names, {} domain ranges, {}-dimensional points",
                self.dims.len(),
                self.domain.len(),
                self.points.ndim()
            )));
        }
        if self.fields.len() != self.values.len() {
            return Err(Error::Shape("field names and value columns differ in count".into()));
        }
        for (f, v) in self.fields.iter().zip(&self.values) {
            if v.len() != n {
                return Err(Error::Shape(format!("field `{f}` has {} values for {n} points", v.len())));
            }
        }
        check_inside(&self.points, &self.domain)?;
        if let Conditions::Tagged { ic, bc } = &self.conditions {
            if ic.iter().chain(bc).any(|&i| i >= n) {
                return Err(Error::Shape("condition index out of range".into()));
            }
        }
        if matches!(self.conditions, Conditions::GridFaces) && !matches!(self.points, PointSet::Grid(_)) {
            return Err(Error::Config("grid-face conditions need grid data".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn field_index(&self, name: &str) -> Result<usize> {
        self.fields
            .iter()
            .position(|f| f == name)
            .ok_or_else(|| Error::Config(format!("dataset has no field `{name}`")))
    }

    pub fn field(&self, k: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.values[k])
    }

    /// Initial-condition and boundary-condition point groups.
    pub fn condition_parts(&self) -> (Vec<ConditionPart>, Vec<ConditionPart>) {
        match (&self.conditions, &self.points) {
            (Conditions::None, _) => (vec![], vec![]),
            (Conditions::GridFaces, PointSet::Grid(axes)) => {
                let nd = axes.len();
                let ic = vec![grid_face(axes, nd - 1, 0)];
                let mut bc = Vec::new();
                for d in 0..nd.saturating_sub(1) {
                    bc.push(grid_face(axes, d, 0));
                    bc.push(grid_face(axes, d, axes[d].len() - 1));
                }
                (ic, bc)
            }
            (Conditions::GridFaces, PointSet::Scattered(_)) => (vec![], vec![]),
            (Conditions::Tagged { ic, bc }, pts) => {
                let part = |idx: &Vec<usize>| {
                    if idx.is_empty() {
                        vec![]
                    } else {
                        vec![ConditionPart {
                            points: pts.select(idx),
                            indices: idx.clone(),
                        }]
                    }
                };
                (part(ic), part(bc))
            }
        }
    }

    /// Flat index lists of initial and boundary points.
    pub fn condition_indices(&self) -> (Vec<usize>, Vec<usize>) {
        let (ic, bc) = self.condition_parts();
        let flat = |p: Vec<ConditionPart>| p.into_iter().flat_map(|c| c.indices).collect();
        (flat(ic), flat(bc))
    }

    /// Restriction to the given point indices (scattered result).
    pub fn subset(&self, idx: &[usize]) -> Result<Dataset> {
        if idx.is_empty() {
            return Err(Error::Config("empty data subset".into()));
        }
        let mut pos = vec![usize::MAX; self.len()];
        for (k, &i) in idx.iter().enumerate() {
            pos[i] = k;
        }
        let (ic, bc) = self.condition_indices();
        let remap = |v: Vec<usize>| -> Vec<usize> {
            v.into_iter().filter(|&i| pos[i] != usize::MAX).map(|i| pos[i]).collect()
        };
        let conditions = match self.conditions {
            Conditions::None => Conditions::None,
            _ => Conditions::Tagged {
                ic: remap(ic),
                bc: remap(bc),
            },
        };
        Ok(Dataset {
            dims: self.dims.clone(),
            domain: self.domain.clone(),
            points: self.points.select(idx),
            fields: self.fields.clone(),
            values: self.values.iter().map(|v| idx.iter().map(|&i| v[i]).collect()).collect(),
            conditions,
            meta: self.meta.clone(),
        })
    }
}

fn check_inside(points: &PointSet, domain: &[(f64, f64)]) -> Result<()> {
    let bad = |x: f64, (lo, hi): (f64, f64)| !(x >= lo && x <= hi);
    match points {
        PointSet::Grid(axes) => {
            for (ax, &dom) in axes.iter().zip(domain) {
                if let Some(&x) = ax.iter().find(|&&x| bad(x, dom)) {
                    return Err(Error::Domain {
                        point: x,
                        lo: dom.0,
                        hi: dom.1,
                    });
                }
            }
        }
        PointSet::Scattered(pts) => {
            for p in pts {
                for (&x, &dom) in p.iter().zip(domain) {
                    if bad(x, dom) {
                        return Err(Error::Domain {
                            point: x,
                            lo: dom.0,
                            hi: dom.1,
                        });
                    }
                }
            }
        }
    }
    Ok(())
}

/// Sub-grid with axis `d` fixed at its `k`-th coordinate.
fn grid_face(axes: &[Vec<f64>], d: usize, k: usize) -> ConditionPart {
    let mut sub = axes.to_vec();
    sub[d] = vec![axes[d][k]];
    let shape: Vec<usize> = axes.iter().map(Vec::len).collect();
    let sub_shape: Vec<usize> = sub.iter().map(Vec::len).collect();
    let n: usize = sub_shape.iter().product();
    let mut indices = Vec::with_capacity(n);
    for i in 0..n {
        let mut pos = crate::bspline::unravel(i, &sub_shape);
        pos[d] = k;
        let mut flat = 0;
        for (p, s) in pos.iter().zip(&shape) {
            flat = flat * s + p;
        }
        indices.push(flat);
    }
    ConditionPart {
        points: PointSet::Grid(sub),
        indices,
    }
}

/// Points where the residual is enforced, with the sampled forcing.
#[derive(Clone, Debug)]
pub struct CollocationSet {
    pub points: PointSet,
    /// `f` at every point; zero forcing when empty.
    pub forcing: Vec<f64>,
}

impl CollocationSet {
    pub fn new(points: PointSet) -> Self {
        let n = points.len();
        CollocationSet {
            points,
            forcing: vec![0.0; n],
        }
    }

    /// Forcing sampled by evaluating `f` at every point.
    pub fn with_forcing(points: PointSet, f: impl Fn(&[f64]) -> f64) -> Self {
        let forcing = (0..points.len()).map(|i| f(&points.point(i))).collect();
        CollocationSet { points, forcing }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> CollocationSet {
        CollocationSet {
            points: self.points.select(idx),
            forcing: idx.iter().map(|&i| self.forcing[i]).collect(),
        }
    }
}

/// Sidecar metadata for a binary grid dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSidecar {
    pub dims: Vec<String>,
    pub shape: Vec<usize>,
    pub spacing: Vec<f64>,
    pub origin: Vec<f64>,
    pub fields: Vec<String>,
    #[serde(default)]
    pub domain: Option<Vec<(f64, f64)>>,
    #[serde(default)]
    pub generator: BTreeMap<String, serde_json::Value>,
}
