use crate::bspline::{KnotVector, PointSet};
use crate::error::{Error, Result};

/// Non-negative squared errors at a set of points.
#[derive(Clone, Debug)]
pub struct ErrorField {
    pub points: PointSet,
    pub values: Vec<f64>,
}

impl ErrorField {
    pub fn new(points: PointSet, values: Vec<f64>) -> Result<Self> {
        if points.len() != values.len() {
            return Err(Error::Shape(format!(
                "{} error values for {} points",
                values.len(),
                points.len()
            )));
        }
        if values.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Config("error values must be non-negative".into()));
        }
        Ok(ErrorField { points, values })
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Sum of errors over each knot interval of `kv` along `axis`.
pub fn cumulative_interval_errors(errors: &ErrorField, kv: &KnotVector, axis: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; kv.num_intervals()];
    if errors.values.is_empty() {
        return Ok(out);
    }
    if axis >= errors.points.ndim() {
        return Err(Error::Shape(format!("axis {axis} out of range")));
    }
    match &errors.points {
        PointSet::Grid(axes) => {
            // intervals of the axis coordinates, then strided accumulation
            let shape: Vec<usize> = axes.iter().map(Vec::len).collect();
            let bins: Vec<usize> = axes[axis]
                .iter()
                .map(|&x| {
                    kv.check_point(x)?;
                    Ok(kv.interval_of(x))
                })
                .collect::<Result<_>>()?;
            let inner: usize = shape[axis + 1..].iter().product();
            let n_axis = shape[axis];
            for (i, v) in errors.values.iter().enumerate() {
                out[bins[(i / inner) % n_axis]] += v;
            }
        }
        PointSet::Scattered(pts) => {
            for (p, v) in pts.iter().zip(&errors.values) {
                kv.check_point(p[axis])?;
                out[kv.interval_of(p[axis])] += v;
            }
        }
    }
    Ok(out)
}

/// Result of midpoint insertion along one axis.
#[derive(Clone, Debug)]
pub struct Refinement {
    pub knots: KnotVector,
    pub inserted: Vec<f64>,
    /// Fewer than the requested knots could be inserted.
    pub exhausted: bool,
}

fn normalized(e: &[f64], n: usize) -> Vec<f64> {
    let s: f64 = e.iter().sum();
    if e.is_empty() || s <= 0.0 {
        vec![0.0; n]
    } else {
        e.iter().map(|v| v / s).collect()
    }
}

/// Inserts midpoints into the `n_new` intervals with the largest combined
/// score `E_d/ΣE_d + E_p/ΣE_p`. Either error vector may be empty.
pub fn refine_knots(e_d: &[f64], e_p: &[f64], kv: &KnotVector, n_new: usize) -> Result<Refinement> {
    let n = kv.num_intervals();
    for e in [e_d, e_p] {
        if !e.is_empty() && e.len() != n {
            return Err(Error::Shape(format!("{} interval errors for {n} intervals", e.len())));
        }
    }
    let (a, b) = (normalized(e_d, n), normalized(e_p, n));
    let score: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| score[j].total_cmp(&score[i]).then(i.cmp(&j)));
    let bp = kv.breakpoints();
    let gap = kv.gap_min();
    let mut inserted = Vec::new();
    for &i in &order {
        if inserted.len() == n_new {
            break;
        }
        if (bp[i + 1] - bp[i]) / 2.0 >= gap {
            inserted.push(0.5 * (bp[i] + bp[i + 1]));
        }
    }
    let mut interior = kv.interior().to_vec();
    interior.extend(&inserted);
    interior.sort_by(f64::total_cmp);
    Ok(Refinement {
        knots: kv.with_interior(interior)?,
        exhausted: inserted.len() < n_new,
        inserted,
    })
}
