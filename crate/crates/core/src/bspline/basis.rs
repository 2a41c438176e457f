//! Cox-de Boor evaluation of clamped B-spline bases and their exact
//! derivatives.

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CsrMatrix};

use super::KnotVector;
use crate::error::{Error, Result};

/// Matrices with a nonzero fraction below this are stored sparse.
pub const SPARSE_DENSITY_THRESHOLD: f64 = 0.25;

/// Index `s` of the knot span `[t_s, t_{s+1})` containing `x`.
///
/// The last non-degenerate span is closed on the right so that the final
/// basis function equals one at `domain_hi`.
pub(crate) fn find_span(knots: &[f64], degree: usize, n_basis: usize, x: f64) -> usize {
    if x >= knots[n_basis] {
        return n_basis - 1;
    }
    if x <= knots[degree] {
        return degree;
    }
    // largest s in [degree, n_basis) with knots[s] <= x
    let s = knots[..=n_basis].partition_point(|&k| k <= x);
    (s - 1).clamp(degree, n_basis - 1)
}

/// Nonzero basis values and derivatives at one point.
///
/// Returns the first nonzero column index and `ders[k][j]`, the `k`-th
/// derivative of basis function `first + j`, for `k = 0..=max_order`.
pub(crate) fn point_derivatives(
    knots: &[f64],
    degree: usize,
    n_basis: usize,
    x: f64,
    max_order: usize,
) -> (usize, Vec<Vec<f64>>) {
    let p = degree;
    let span = find_span(knots, p, n_basis, x);

    // ndu: basis values in the upper triangle, knot differences in the lower
    let mut ndu = vec![vec![0.0; p + 1]; p + 1];
    let mut left = vec![0.0; p + 1];
    let mut right = vec![0.0; p + 1];
    ndu[0][0] = 1.0;
    for j in 1..=p {
        left[j] = x - knots[span + 1 - j];
        right[j] = knots[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            ndu[j][r] = right[r + 1] + left[j - r];
            let temp = ndu[r][j - 1] / ndu[j][r];
            ndu[r][j] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        ndu[j][j] = saved;
    }

    let n_out = max_order.min(p);
    let mut ders = vec![vec![0.0; p + 1]; max_order + 1];
    for j in 0..=p {
        ders[0][j] = ndu[j][p];
    }

    let mut a = [vec![0.0; p + 1], vec![0.0; p + 1]];
    for r in 0..=p {
        let (mut s1, mut s2) = (0usize, 1usize);
        a[0][0] = 1.0;
        for k in 1..=n_out {
            let mut d = 0.0;
            let rk = r as isize - k as isize;
            let pk = p - k;
            if rk >= 0 {
                a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                d = a[s2][0] * ndu[rk as usize][pk];
            }
            let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
            let j2 = if (r as isize - 1) <= pk as isize { k - 1 } else { p - r };
            for j in j1..=j2 {
                let idx = (rk + j as isize) as usize;
                a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                d += a[s2][j] * ndu[idx][pk];
            }
            if r <= pk {
                a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                d += a[s2][k] * ndu[r][pk];
            }
            ders[k][r] = d;
            std::mem::swap(&mut s1, &mut s2);
        }
    }

    // multiply by p!/(p-k)!
    let mut fac = p as f64;
    for k in 1..=n_out {
        for v in ders[k].iter_mut() {
            *v *= fac;
        }
        fac *= (p - k) as f64;
    }
    (span - p, ders)
}

/// Nonzero values of the `order`-th derivative at one point.
pub(crate) fn point_row(kv: &KnotVector, knots: &[f64], x: f64, order: usize) -> (usize, Vec<f64>) {
    let (first, mut ders) = point_derivatives(knots, kv.degree(), kv.num_basis(), x, order);
    (first, ders.swap_remove(order))
}

#[derive(Clone, Debug)]
pub enum BasisStorage {
    Dense(DMatrix<f64>),
    Sparse(CsrMatrix<f64>),
}

/// Basis functions (or one derivative) evaluated at a point set.
/// Rows are points, columns are basis functions.
#[derive(Clone, Debug)]
pub struct BasisMatrix {
    pub values: BasisStorage,
    /// Derivative order per dimension.
    pub derivative_order: Vec<usize>,
    /// Coordinates per dimension (the grid axes for tensor matrices).
    pub points: Vec<Vec<f64>>,
}

impl BasisMatrix {
    /// Store triplets sparse or dense according to their density.
    pub(crate) fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: Vec<(usize, usize, f64)>,
        derivative_order: Vec<usize>,
        points: Vec<Vec<f64>>,
    ) -> Self {
        let density = triplets.len() as f64 / (nrows.max(1) * ncols.max(1)) as f64;
        let values = if density < SPARSE_DENSITY_THRESHOLD {
            let mut coo = CooMatrix::new(nrows, ncols);
            for (i, j, v) in triplets {
                coo.push(i, j, v);
            }
            BasisStorage::Sparse(CsrMatrix::from(&coo))
        } else {
            let mut m = DMatrix::zeros(nrows, ncols);
            for (i, j, v) in triplets {
                m[(i, j)] += v;
            }
            BasisStorage::Dense(m)
        };
        BasisMatrix {
            values,
            derivative_order,
            points,
        }
    }

    pub fn nrows(&self) -> usize {
        match &self.values {
            BasisStorage::Dense(m) => m.nrows(),
            BasisStorage::Sparse(m) => m.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match &self.values {
            BasisStorage::Dense(m) => m.ncols(),
            BasisStorage::Sparse(m) => m.ncols(),
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.values, BasisStorage::Sparse(_))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match &self.values {
            BasisStorage::Dense(m) => m.clone(),
            BasisStorage::Sparse(m) => DMatrix::from(m),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match &self.values {
            BasisStorage::Dense(m) => m[(i, j)],
            BasisStorage::Sparse(m) => m
                .get_entry(i, j)
                .map(|e| e.into_value())
                .unwrap_or(0.0),
        }
    }

    /// Number of structurally nonzero entries in row `i` whose value is not 0.
    pub fn row_nnz(&self, i: usize) -> usize {
        match &self.values {
            BasisStorage::Dense(m) => m.row(i).iter().filter(|v| **v != 0.0).count(),
            BasisStorage::Sparse(m) => m.row(i).values().iter().filter(|v| **v != 0.0).count(),
        }
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.values {
            BasisStorage::Dense(m) => m * x,
            BasisStorage::Sparse(m) => {
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
}

/// Evaluate the `derivative_order`-th derivative of every basis function of
/// `kv` at `points`.
pub fn eval_basis(kv: &KnotVector, points: &[f64], derivative_order: usize) -> Result<BasisMatrix> {
    if derivative_order > kv.degree() {
        return Err(Error::Order {
            order: derivative_order,
            degree: kv.degree(),
        });
    }
    for &x in points {
        kv.check_point(x)?;
    }
    let knots = kv.full_knots();
    let mut triplets = Vec::with_capacity(points.len() * (kv.degree() + 1));
    for (i, &x) in points.iter().enumerate() {
        let (first, vals) = point_row(kv, &knots, x, derivative_order);
        for (j, v) in vals.into_iter().enumerate() {
            triplets.push((i, first + j, v));
        }
    }
    Ok(BasisMatrix::from_triplets(
        points.len(),
        kv.num_basis(),
        triplets,
        vec![derivative_order],
        vec![points.to_vec()],
    ))
}

/// Dense per-axis factor used by grid designs.
pub(crate) fn eval_dense(kv: &KnotVector, points: &[f64], order: usize) -> Result<DMatrix<f64>> {
    if order > kv.degree() {
        return Err(Error::Order {
            order,
            degree: kv.degree(),
        });
    }
    let knots = kv.full_knots();
    let mut m = DMatrix::zeros(points.len(), kv.num_basis());
    for (i, &x) in points.iter().enumerate() {
        kv.check_point(x)?;
        let (first, vals) = point_row(kv, &knots, x, order);
        for (j, v) in vals.into_iter().enumerate() {
            m[(i, first + j)] = v;
        }
    }
    Ok(m)
}
