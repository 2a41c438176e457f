//! Tensor products of one-dimensional bases and the linear operators they
//! induce on the coefficient vector.

use nalgebra::{DMatrix, DMatrixView, DVector};
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use serde::{Deserialize, Serialize};
use rayon::prelude::*;

use super::basis::{eval_dense, point_row, BasisMatrix};
use super::KnotVector;
use crate::error::{Error, Result};

/// Tensor-product basis over a rectangular domain. Coefficients are ordered
/// row-major: the last dimension varies fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorBasis {
    pub dims: Vec<KnotVector>,
}

impl TensorBasis {
    pub fn new(dims: Vec<KnotVector>) -> Self {
        TensorBasis { dims }
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.dims.iter().map(KnotVector::num_basis).collect()
    }

    pub fn num_basis(&self) -> usize {
        self.dims.iter().map(KnotVector::num_basis).product()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.dims.iter().map(KnotVector::degree).collect()
    }

    pub fn check_orders(&self, orders: &[usize]) -> Result<()> {
        if orders.len() != self.ndim() {
            return Err(Error::Shape(format!(
                "{} derivative orders for a {}-dimensional basis",
                orders.len(),
                self.ndim()
            )));
        }
        for (kv, &o) in self.dims.iter().zip(orders) {
            if o > kv.degree() {
                return Err(Error::Order {
                    order: o,
                    degree: kv.degree(),
                });
            }
        }
        Ok(())
    }
}

/// Evaluation points: either a full tensor grid or a scattered list.
#[derive(Clone, Debug, PartialEq)]
pub enum PointSet {
    /// Axis coordinates; points are enumerated row-major.
    Grid(Vec<Vec<f64>>),
    /// One coordinate vector per point.
    Scattered(Vec<Vec<f64>>),
}

impl PointSet {
    pub fn len(&self) -> usize {
        match self {
            PointSet::Grid(axes) => axes.iter().map(Vec::len).product(),
            PointSet::Scattered(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ndim(&self) -> usize {
        match self {
            PointSet::Grid(axes) => axes.len(),
            PointSet::Scattered(p) => p.first().map_or(0, Vec::len),
        }
    }

    /// Coordinates of point `i`.
    pub fn point(&self, i: usize) -> Vec<f64> {
        match self {
            PointSet::Grid(axes) => {
                let mut idx = i;
                let mut out = vec![0.0; axes.len()];
                for d in (0..axes.len()).rev() {
                    let n = axes[d].len();
                    out[d] = axes[d][idx % n];
                    idx /= n;
                }
                out
            }
            PointSet::Scattered(p) => p[i].clone(),
        }
    }

    pub fn to_points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// Subset by point index, always scattered.
    pub fn select(&self, idx: &[usize]) -> PointSet {
        PointSet::Scattered(idx.iter().map(|&i| self.point(i)).collect())
    }
}

/// Tensor-product basis matrix (rows = grid points in row-major order).
pub fn tensor_basis(dims: &[KnotVector], grid: &[Vec<f64>], derivative_orders: &[usize]) -> Result<BasisMatrix> {
    if dims.len() != grid.len() || dims.len() != derivative_orders.len() {
        return Err(Error::Shape(format!(
            "{} bases, {} grid axes, {} derivative orders",
            dims.len(),
            grid.len(),
            derivative_orders.len()
        )));
    }
    let factors: Vec<BasisMatrix> = dims
        .iter()
        .zip(grid)
        .zip(derivative_orders)
        .map(|((kv, pts), &o)| super::eval_basis(kv, pts, o))
        .collect::<Result<_>>()?;
    let dense: Vec<DMatrix<f64>> = factors.iter().map(BasisMatrix::to_dense).collect();
    let nrows: usize = dense.iter().map(|m| m.nrows()).product();
    let ncols: usize = dense.iter().map(|m| m.ncols()).product();

    // per-axis nonzero lists, then enumerate their products
    let nz: Vec<Vec<Vec<(usize, f64)>>> = dense
        .iter()
        .map(|m| {
            (0..m.nrows())
                .map(|i| {
                    (0..m.ncols())
                        .filter(|&j| m[(i, j)] != 0.0)
                        .map(|j| (j, m[(i, j)]))
                        .collect()
                })
                .collect()
        })
        .collect();
    let shape_rows: Vec<usize> = dense.iter().map(|m| m.nrows()).collect();
    let shape_cols: Vec<usize> = dense.iter().map(|m| m.ncols()).collect();
    let mut triplets = Vec::new();
    for r in 0..nrows {
        let ridx = unravel(r, &shape_rows);
        let rows: Vec<&Vec<(usize, f64)>> = ridx.iter().enumerate().map(|(d, &i)| &nz[d][i]).collect();
        for_each_product(&rows, &shape_cols, |c, v| triplets.push((r, c, v)));
    }
    Ok(BasisMatrix::from_triplets(
        nrows,
        ncols,
        triplets,
        derivative_orders.to_vec(),
        grid.to_vec(),
    ))
}

pub(crate) fn unravel(mut i: usize, shape: &[usize]) -> Vec<usize> {
    let mut out = vec![0; shape.len()];
    for d in (0..shape.len()).rev() {
        out[d] = i % shape[d];
        i /= shape[d];
    }
    out
}

/// Visit every (flat column, product value) of per-axis sparse rows.
fn for_each_product(rows: &[&Vec<(usize, f64)>], shape: &[usize], mut f: impl FnMut(usize, f64)) {
    let d = rows.len();
    if rows.iter().any(|r| r.is_empty()) {
        return;
    }
    let mut pos = vec![0usize; d];
    loop {
        let mut col = 0;
        let mut val = 1.0;
        for k in 0..d {
            let (j, v) = rows[k][pos[k]];
            col = col * shape[k] + j;
            val *= v;
        }
        f(col, val);
        // odometer increment, last axis fastest
        let mut k = d;
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            pos[k] += 1;
            if pos[k] < rows[k].len() {
                break;
            }
            pos[k] = 0;
        }
    }
}

/// A linear map from tensor coefficients to values at points.
#[derive(Clone, Debug)]
pub enum Design {
    /// Kronecker structure on a grid: one dense factor per axis.
    Kron { factors: Vec<DMatrix<f64>> },
    /// Materialized rows for scattered points.
    Rows(CsrMatrix<f64>),
}

impl Design {
    /// Operator evaluating the derivative `orders` of `basis` at `points`.
    pub fn build(basis: &TensorBasis, points: &PointSet, orders: &[usize]) -> Result<Design> {
        basis.check_orders(orders)?;
        if points.ndim() != basis.ndim() && !points.is_empty() {
            return Err(Error::Shape(format!(
                "{}-dimensional points for a {}-dimensional basis",
                points.ndim(),
                basis.ndim()
            )));
        }
        match points {
            PointSet::Grid(axes) => {
                let factors = basis
                    .dims
                    .iter()
                    .zip(axes)
                    .zip(orders)
                    .map(|((kv, ax), &o)| eval_dense(kv, ax, o))
                    .collect::<Result<_>>()?;
                Ok(Design::Kron { factors })
            }
            PointSet::Scattered(pts) => {
                let knots: Vec<Vec<f64>> = basis.dims.iter().map(KnotVector::full_knots).collect();
                let shape = basis.shape();
                let per_point: Vec<Vec<Vec<(usize, f64)>>> = pts
                    .par_iter()
                    .map(|p| {
                        basis
                            .dims
                            .iter()
                            .enumerate()
                            .map(|(d, kv)| {
                                kv.check_point(p[d])?;
                                let (first, vals) = point_row(kv, &knots[d], p[d], orders[d]);
                                Ok(vals
                                    .into_iter()
                                    .enumerate()
                                    .map(|(j, v)| (first + j, v))
                                    .collect())
                            })
                            .collect::<Result<_>>()
                    })
                    .collect::<Result<_>>()?;
                let mut coo = CooMatrix::new(pts.len(), basis.num_basis());
                for (r, rows) in per_point.iter().enumerate() {
                    let refs: Vec<&Vec<(usize, f64)>> = rows.iter().collect();
                    for_each_product(&refs, &shape, |c, v| coo.push(r, c, v));
                }
                Ok(Design::Rows(CsrMatrix::from(&coo)))
            }
        }
    }

    pub fn nrows(&self) -> usize {
        match self {
            Design::Kron { factors } => factors.iter().map(|f| f.nrows()).product(),
            Design::Rows(m) => m.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            Design::Kron { factors } => factors.iter().map(|f| f.ncols()).product(),
            Design::Rows(m) => m.ncols(),
        }
    }

    /// Bytes held by the operator's stored entries.
    pub fn footprint_bytes(&self) -> usize {
        match self {
            Design::Kron { factors } => factors.iter().map(|f| f.len() * 8).sum(),
            Design::Rows(m) => m.nnz() * 16 + (m.nrows() + 1) * 8,
        }
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Design::Kron { factors } => {
                let shape: Vec<usize> = factors.iter().map(|f| f.ncols()).collect();
                DVector::from_vec(kron_apply(factors, x.as_slice(), &shape, false))
            }
            Design::Rows(m) => {
                let mut out = DVector::zeros(m.nrows());
                for (i, row) in m.row_iter().enumerate() {
                    out[i] = row
                        .col_indices()
                        .iter()
                        .zip(row.values())
                        .map(|(&j, &v)| v * x[j])
                        .sum();
                }
                out
            }
        }
    }

    pub fn apply_t(&self, r: &DVector<f64>) -> DVector<f64> {
        match self {
            Design::Kron { factors } => {
                let shape: Vec<usize> = factors.iter().map(|f| f.nrows()).collect();
                DVector::from_vec(kron_apply(factors, r.as_slice(), &shape, true))
            }
            Design::Rows(m) => {
                let mut out = DVector::zeros(m.ncols());
                for (i, row) in m.row_iter().enumerate() {
                    let ri = r[i];
                    if ri == 0.0 {
                        continue;
                    }
                    for (&j, &v) in row.col_indices().iter().zip(row.values()) {
                        out[j] += v * ri;
                    }
                }
                out
            }
        }
    }

    /// `DᵀD`, dense.
    pub fn gram(&self) -> DMatrix<f64> {
        match self {
            Design::Kron { factors } => {
                let mut g = DMatrix::from_element(1, 1, 1.0);
                for f in factors {
                    g = g.kronecker(&(f.transpose() * f));
                }
                g
            }
            Design::Rows(m) => {
                let n = m.ncols();
                let mut g = DMatrix::zeros(n, n);
                for row in m.row_iter() {
                    let cols = row.col_indices();
                    let vals = row.values();
                    for (a, &ja) in cols.iter().enumerate() {
                        let va = vals[a];
                        for (b, &jb) in cols.iter().enumerate() {
                            g[(ja, jb)] += va * vals[b];
                        }
                    }
                }
                g
            }
        }
    }

    /// Dense copy (tests and small problems only).
    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Design::Kron { factors } => {
                let mut g = DMatrix::from_element(1, 1, 1.0);
                for f in factors {
                    g = g.kronecker(f);
                }
                g
            }
            Design::Rows(m) => DMatrix::from(m),
        }
    }
}

/// Multiply a row-major tensor by one matrix per mode (or its transpose).
fn kron_apply(factors: &[DMatrix<f64>], x: &[f64], in_shape: &[usize], transpose: bool) -> Vec<f64> {
    let mut data = x.to_vec();
    let mut shape = in_shape.to_vec();
    for (k, f) in factors.iter().enumerate() {
        let (m_out, n_in) = if transpose {
            (f.ncols(), f.nrows())
        } else {
            (f.nrows(), f.ncols())
        };
        debug_assert_eq!(shape[k], n_in);
        let outer: usize = shape[..k].iter().product();
        let inner: usize = shape[k + 1..].iter().product();
        let mut out = vec![0.0; outer * m_out * inner];
        for o in 0..outer {
            let src = &data[o * n_in * inner..(o + 1) * n_in * inner];
            // row-major (n_in x inner) block == column-major (inner x n_in)
            let xv = DMatrixView::from_slice(src, inner, n_in);
            let y = if transpose { xv * f } else { xv * f.transpose() };
            out[o * m_out * inner..(o + 1) * m_out * inner].copy_from_slice(y.as_slice());
        }
        data = out;
        shape[k] = m_out;
    }
    data
}
