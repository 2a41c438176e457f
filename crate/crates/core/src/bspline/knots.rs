use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative minimum spacing between distinct knots.
pub const GAP_MIN_FRACTION: f64 = 1e-3;

/// Clamped knot vector on `[domain_lo, domain_hi]`.
///
/// Only the interior breakpoints are stored; the endpoints are implicitly
/// repeated `degree + 1` times. Interior knots are simple (multiplicity one)
/// and at least [`KnotVector::gap_min`] apart from each other and from the
/// domain ends.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KnotRecord", into = "KnotRecord")]
pub struct KnotVector {
    domain_lo: f64,
    domain_hi: f64,
    degree: usize,
    interior: Vec<f64>,
}

/// On-disk form of a knot vector.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KnotRecord {
    pub domain_lo: f64,
    pub domain_hi: f64,
    pub degree: usize,
    pub interior: Vec<f64>,
}

impl TryFrom<KnotRecord> for KnotVector {
    type Error = Error;

    fn try_from(r: KnotRecord) -> Result<Self> {
        KnotVector::new(r.domain_lo, r.domain_hi, r.interior, r.degree)
    }
}

impl From<KnotVector> for KnotRecord {
    fn from(kv: KnotVector) -> Self {
        KnotRecord {
            domain_lo: kv.domain_lo,
            domain_hi: kv.domain_hi,
            degree: kv.degree,
            interior: kv.interior,
        }
    }
}

impl KnotVector {
    pub fn new(domain_lo: f64, domain_hi: f64, interior: Vec<f64>, degree: usize) -> Result<Self> {
        if !(domain_lo.is_finite() && domain_hi.is_finite()) || domain_lo >= domain_hi {
            return Err(Error::InvalidKnots(format!(
                "empty or non-finite domain [{domain_lo}, {domain_hi}]"
            )));
        }
        for &k in &interior {
            if !(k > domain_lo && k < domain_hi) {
                return Err(Error::Domain {
                    point: k,
                    lo: domain_lo,
                    hi: domain_hi,
                });
            }
        }
        for w in interior.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::InvalidKnots(format!(
                    "interior knots must be strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        let kv = KnotVector {
            domain_lo,
            domain_hi,
            degree,
            interior,
        };
        let gap = kv.gap_min();
        let bp = kv.breakpoints();
        for w in bp.windows(2) {
            if w[1] - w[0] < gap * (1.0 - 1e-9) {
                return Err(Error::InvalidKnots(format!(
                    "knots {} and {} are closer than gap_min = {gap}",
                    w[0], w[1]
                )));
            }
        }
        Ok(kv)
    }

    /// Uniform knots with `n_breakpoints` breakpoints including both endpoints.
    pub fn uniform(domain_lo: f64, domain_hi: f64, n_breakpoints: usize, degree: usize) -> Result<Self> {
        if n_breakpoints < 2 {
            return Err(Error::InvalidKnots(
                "at least two breakpoints (the endpoints) are required".into(),
            ));
        }
        let h = (domain_hi - domain_lo) / (n_breakpoints - 1) as f64;
        let interior = (1..n_breakpoints - 1)
            .map(|i| domain_lo + h * i as f64)
            .collect();
        Self::new(domain_lo, domain_hi, interior, degree)
    }

    pub fn domain_lo(&self) -> f64 {
        self.domain_lo
    }

    pub fn domain_hi(&self) -> f64 {
        self.domain_hi
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn interior(&self) -> &[f64] {
        &self.interior
    }

    pub fn len_domain(&self) -> f64 {
        self.domain_hi - self.domain_lo
    }

    pub fn gap_min(&self) -> f64 {
        GAP_MIN_FRACTION * self.len_domain()
    }

    /// Number of basis functions, `|interior| + degree + 1`.
    pub fn num_basis(&self) -> usize {
        self.interior.len() + self.degree + 1
    }

    /// Number of knot intervals (cells along this axis).
    pub fn num_intervals(&self) -> usize {
        self.interior.len() + 1
    }

    /// Distinct breakpoints `[lo, interior.., hi]`.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut bp = Vec::with_capacity(self.interior.len() + 2);
        bp.push(self.domain_lo);
        bp.extend_from_slice(&self.interior);
        bp.push(self.domain_hi);
        bp
    }

    /// Clamped knot sequence with endpoint multiplicity `degree + 1`.
    pub fn full_knots(&self) -> Vec<f64> {
        let g = self.degree;
        let mut t = Vec::with_capacity(self.interior.len() + 2 * (g + 1));
        t.extend(std::iter::repeat_n(self.domain_lo, g + 1));
        t.extend_from_slice(&self.interior);
        t.extend(std::iter::repeat_n(self.domain_hi, g + 1));
        t
    }

    /// Same domain and degree, new interior knots.
    pub fn with_interior(&self, interior: Vec<f64>) -> Result<Self> {
        Self::new(self.domain_lo, self.domain_hi, interior, self.degree)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.domain_lo && x <= self.domain_hi
    }

    pub fn check_point(&self, x: f64) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::Domain {
                point: x,
                lo: self.domain_lo,
                hi: self.domain_hi,
            })
        }
    }

    /// Interval index of `x` for error accumulation: a point on an interior
    /// knot belongs to the interval on its left, and the first interval is
    /// closed at `domain_lo`.
    pub fn interval_of(&self, x: f64) -> usize {
        // number of interior knots strictly less than x
        self.interior.partition_point(|&k| k < x)
    }
}
