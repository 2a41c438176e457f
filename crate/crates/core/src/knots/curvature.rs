use nalgebra::DVector;

use crate::bspline::{Design, KnotVector, PointSet, TensorBasis};
use crate::error::{Error, Result};

/// A field that can be differentiated at arbitrary points.
pub trait FieldEval {
    fn eval(&self, points: &PointSet, orders: &[usize]) -> Result<DVector<f64>>;
}

impl<F> FieldEval for F
where
    F: Fn(&PointSet, &[usize]) -> Result<DVector<f64>>,
{
    fn eval(&self, points: &PointSet, orders: &[usize]) -> Result<DVector<f64>> {
        self(points, orders)
    }
}

/// Spline field `B β` on a fixed basis.
#[derive(Clone, Debug)]
pub struct SplineField<'a> {
    pub basis: &'a TensorBasis,
    pub beta: DVector<f64>,
}

impl FieldEval for SplineField<'_> {
    fn eval(&self, points: &PointSet, orders: &[usize]) -> Result<DVector<f64>> {
        Ok(Design::build(self.basis, points, orders)?.apply(&self.beta))
    }
}

/// `|u_rr| / (1 + u_r²)^{3/2}` at every point.
fn kappa(field: &dyn FieldEval, points: &PointSet, axis: usize) -> Result<Vec<f64>> {
    let nd = points.ndim();
    let mut o1 = vec![0; nd];
    o1[axis] = 1;
    let mut o2 = vec![0; nd];
    o2[axis] = 2;
    let d1 = field.eval(points, &o1)?;
    let d2 = field.eval(points, &o2)?;
    Ok(d1.iter().zip(d2.iter()).map(|(a, b)| b.abs() / (1.0 + a * a).powf(1.5)).collect())
}

/// Cell-centred samples of every interval: coordinates and spacing.
fn samples(kv: &KnotVector, m: usize) -> (Vec<f64>, Vec<f64>) {
    let bp = kv.breakpoints();
    let mut xs = Vec::with_capacity(m * (bp.len() - 1));
    let mut hs = Vec::with_capacity(bp.len() - 1);
    for w in bp.windows(2) {
        let h = (w[1] - w[0]) / m as f64;
        hs.push(h);
        xs.extend((0..m).map(|s| w[0] + (s as f64 + 0.5) * h));
    }
    (xs, hs)
}

fn flat(idx: &[usize], shape: &[usize]) -> usize {
    idx.iter().zip(shape).fold(0, |acc, (i, s)| acc * s + i)
}

/// Riemann sums of `κ_r` over every mesh cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellCurvature {
    pub axis: usize,
    /// Intervals per axis.
    pub shape: Vec<usize>,
    /// Row-major over `shape`.
    pub sums: Vec<f64>,
}

pub fn curvature(field: &dyn FieldEval, mesh: &[KnotVector], axis: usize, per_cell: usize) -> Result<CellCurvature> {
    if axis >= mesh.len() {
        return Err(Error::Shape(format!("axis {axis} out of range")));
    }
    if per_cell < 1 {
        return Err(Error::Config("need at least one sample per cell".into()));
    }
    let (axes, hs): (Vec<Vec<f64>>, Vec<Vec<f64>>) = mesh.iter().map(|kv| samples(kv, per_cell)).unzip();
    let shape: Vec<usize> = hs.iter().map(Vec::len).collect();
    let sshape: Vec<usize> = axes.iter().map(Vec::len).collect();
    let k = kappa(field, &PointSet::Grid(axes), axis)?;
    let mut sums = vec![0.0; shape.iter().product()];
    let mut cell = vec![0; mesh.len()];
    for (i, v) in k.iter().enumerate() {
        let pos = crate::bspline::unravel(i, &sshape);
        let mut w = 1.0;
        for d in 0..pos.len() {
            cell[d] = pos[d] / per_cell;
            w *= hs[d][cell[d]];
        }
        sums[flat(&cell, &shape)] += v * w;
    }
    Ok(CellCurvature { axis, shape, sums })
}

/// `(D_r, M_r)`: squared deviation of the cell sums from their mean, and the mean.
pub fn curvature_objective(cells: &CellCurvature) -> (f64, f64) {
    let n = cells.sums.len() as f64;
    let m = cells.sums.iter().sum::<f64>() / n;
    let d = cells.sums.iter().map(|s| (s - m).powi(2)).sum();
    (d, m)
}

/// `∂D_r/∂k_j` for every interior knot `k_j` of axis `r`, with `û` held fixed:
/// `2 Σ_c (S_{j,c} − S_{j+1,c}) ∫_{face_c} κ_r(k_j, ·)`.
pub fn curvature_gradient(field: &dyn FieldEval, mesh: &[KnotVector], axis: usize, per_cell: usize) -> Result<Vec<f64>> {
    let cells = curvature(field, mesh, axis, per_cell)?;
    let interior = mesh[axis].interior().to_vec();
    if interior.is_empty() {
        return Ok(vec![]);
    }
    let (mut axes, mut hs): (Vec<Vec<f64>>, Vec<Vec<f64>>) = mesh.iter().map(|kv| samples(kv, per_cell)).unzip();
    axes[axis] = interior.clone();
    hs[axis] = vec![1.0; interior.len()];
    let sshape: Vec<usize> = axes.iter().map(Vec::len).collect();
    let k = kappa(field, &PointSet::Grid(axes), axis)?;
    // face integrals indexed like cells, with the axis-r index = interior knot
    let mut fshape = cells.shape.clone();
    fshape[axis] = interior.len();
    let mut face = vec![0.0; fshape.iter().product()];
    let mut cell = vec![0; mesh.len()];
    for (i, v) in k.iter().enumerate() {
        let pos = crate::bspline::unravel(i, &sshape);
        let mut w = 1.0;
        for d in 0..pos.len() {
            if d == axis {
                cell[d] = pos[d];
            } else {
                cell[d] = pos[d] / per_cell;
                w *= hs[d][cell[d]];
            }
        }
        face[flat(&cell, &fshape)] += v * w;
    }
    let mut grad = vec![0.0; interior.len()];
    for (fi, f) in face.iter().enumerate() {
        let pos = crate::bspline::unravel(fi, &fshape);
        let j = pos[axis];
        let mut left = pos.clone();
        left[axis] = j;
        let mut right = pos;
        right[axis] = j + 1;
        let sl = cells.sums[flat(&left, &cells.shape)];
        let sr = cells.sums[flat(&right, &cells.shape)];
        grad[j] += 2.0 * (sl - sr) * f;
    }
    Ok(grad)
}

/// Gradient-descent settings for knot movement.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct MovementConfig {
    /// First-step displacement as a fraction of the axis length.
    pub learning_rate: f64,
    pub steps: usize,
    /// Samples per cell and axis for the curvature sums.
    pub samples: usize,
    pub max_backtracks: usize,
}

impl Default for MovementConfig {
    fn default() -> Self {
        MovementConfig {
            learning_rate: 0.02,
            steps: 20,
            samples: 6,
            max_backtracks: 8,
        }
    }
}

/// Clamp each knot into the band between the midpoints to its old neighbours,
/// shrunk by half the minimum gap on each side.
fn project(kv: &KnotVector, proposal: &[f64]) -> Vec<f64> {
    let mut bp = kv.breakpoints();
    let g = kv.gap_min();
    let n = bp.len();
    let old = bp.clone();
    for j in 1..n - 1 {
        let lo = 0.5 * (old[j - 1] + old[j]) + 0.5 * g;
        let hi = 0.5 * (old[j] + old[j + 1]) - 0.5 * g;
        let lo = if j == 1 { (old[0] + g).min(lo) } else { lo };
        let hi = if j == n - 2 { (old[n - 1] - g).max(hi) } else { hi };
        bp[j] = proposal[j - 1].clamp(lo.min(old[j]), hi.max(old[j]));
    }
    bp[1..n - 1].to_vec()
}

/// Moves the interior knots of each listed axis to reduce `D_r` of the fixed
/// field. Returns the new mesh and the per-axis knot displacements.
pub fn knot_movement_step(
    field: &dyn FieldEval,
    mesh: &[KnotVector],
    axes: &[usize],
    cfg: &MovementConfig,
) -> Result<(Vec<KnotVector>, Vec<Vec<f64>>)> {
    if !(cfg.learning_rate > 0.0) {
        return Err(Error::Config("movement learning rate must be positive".into()));
    }
    let mut mesh = mesh.to_vec();
    let mut moved: Vec<Vec<f64>> = mesh.iter().map(|kv| vec![0.0; kv.interior().len()]).collect();
    for &r in axes {
        if r >= mesh.len() || mesh[r].interior().is_empty() {
            continue;
        }
        let start = mesh[r].interior().to_vec();
        let scale0 = cfg.learning_rate * mesh[r].len_domain();
        let mut g0 = None;
        let mut d_cur = curvature_objective(&curvature(field, &mesh, r, cfg.samples)?).0;
        for _ in 0..cfg.steps {
            let g = curvature_gradient(field, &mesh, r, cfg.samples)?;
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            let g0n = *g0.get_or_insert(norm);
            if !(norm > 0.0) || !(g0n > 0.0) {
                break;
            }
            let mut s = scale0 / g0n;
            let mut accepted = false;
            for _ in 0..=cfg.max_backtracks {
                let prop: Vec<f64> = mesh[r].interior().iter().zip(&g).map(|(k, gi)| k - s * gi).collect();
                let cand = mesh[r].with_interior(project(&mesh[r], &prop))?;
                let mut trial = mesh.clone();
                trial[r] = cand;
                let d = curvature_objective(&curvature(field, &trial, r, cfg.samples)?).0;
                if d < d_cur {
                    mesh = trial;
                    d_cur = d;
                    accepted = true;
                    break;
                }
                s *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        moved[r] = mesh[r].interior().iter().zip(&start).map(|(a, b)| a - b).collect();
    }
    Ok((mesh, moved))
}
