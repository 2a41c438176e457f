//! Candidate-function libraries for sparse equation discovery.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::bundle::DesignBundle;
use super::physics::{Coefficient, Factor, PhysicsSpec, Term};
use super::residual::factor_value;
use crate::error::{Error, Result};

/// A product of factors; the empty product is the constant `1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub name: String,
    pub factors: Vec<Factor>,
}

/// Left-hand side `target` and the candidate terms of `target = Φθ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LibrarySpec {
    pub dims: Vec<String>,
    pub fields: Vec<String>,
    pub target_name: String,
    pub target: Factor,
    pub candidates: Vec<Candidate>,
}

impl LibrarySpec {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.candidates.iter().map(|c| c.name.clone()).collect()
    }

    /// Residual `target − Σ θ_k Φ_k` restricted to `active` candidates.
    pub fn to_spec(&self, active: &[usize]) -> Result<PhysicsSpec> {
        let mut terms = vec![Term {
            coefficient: Coefficient::Constant(1.0),
            factors: vec![self.target.clone()],
        }];
        let mut theta_names = Vec::new();
        for (k, &i) in active.iter().enumerate() {
            let c = self
                .candidates
                .get(i)
                .ok_or_else(|| Error::Config(format!("candidate index {i} out of range")))?;
            theta_names.push(c.name.clone());
            terms.push(Term {
                coefficient: Coefficient::Theta { index: k, scale: -1.0 },
                factors: c.factors.clone(),
            });
        }
        PhysicsSpec::new(self.dims.clone(), self.fields.clone(), theta_names, terms)
    }

    /// `target = c1*name1 + ...` with the given coefficients on `active`.
    pub fn render(&self, active: &[usize], theta: &[f64]) -> String {
        let mut s = format!("{} =", self.target_name);
        for (k, (&i, &t)) in active.iter().zip(theta).enumerate() {
            let name = &self.candidates[i].name;
            if k == 0 {
                s.push_str(&format!(" {t:.4}*{name}"));
            } else if t < 0.0 {
                s.push_str(&format!(" - {:.4}*{name}", -t));
            } else {
                s.push_str(&format!(" + {t:.4}*{name}"));
            }
        }
        if active.is_empty() {
            s.push_str(" 0");
        }
        s
    }

    pub fn from_file(file: &LibraryFile) -> Result<Self> {
        let base = PhysicsSpec {
            dims: file.dims.clone(),
            fields: file.fields.clone(),
            theta_names: vec![],
            terms: vec![],
        };
        let aliases = base.parse_aliases(&file.aliases)?;
        let target = base.parse_factor(&file.target, &aliases)?;
        let candidates = file
            .candidates
            .iter()
            .map(|c| {
                Ok(Candidate {
                    name: c.clone(),
                    factors: parse_product(&base, c, &aliases)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(LibrarySpec {
            dims: file.dims.clone(),
            fields: file.fields.clone(),
            target_name: file.target.clone(),
            target,
            candidates,
        })
    }
}

/// `u^2*u_xx`, `u*w_x`, or `1`.
fn parse_product(base: &PhysicsSpec, text: &str, aliases: &BTreeMap<String, Factor>) -> Result<Vec<Factor>> {
    let text = text.trim();
    if text == "1" {
        return Ok(vec![]);
    }
    let mut out = Vec::new();
    for piece in text.split('*') {
        let (name, power) = match piece.split_once('^') {
            Some((n, p)) => (
                n,
                p.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Parse(format!("bad power in `{piece}`")))?,
            ),
            None => (piece, 1),
        };
        let f = base.parse_factor(name, aliases)?;
        for _ in 0..power {
            out.push(f.clone());
        }
    }
    Ok(out)
}

/// Declarative library file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LibraryFile {
    pub dims: Vec<String>,
    pub fields: Vec<String>,
    #[serde(default)]
    pub aliases: BTreeMap<String, String>,
    pub target: String,
    pub candidates: Vec<String>,
}

/// Library evaluated at collocation points.
#[derive(Clone, Debug)]
pub struct CandidateLibrary {
    pub names: Vec<String>,
    /// `Φ`, `N_c × K`, unscaled.
    pub matrix: DMatrix<f64>,
    /// Target values (e.g. `û_t`).
    pub target: DVector<f64>,
    /// Column norms when normalization was requested.
    pub norms: Option<Vec<f64>>,
}

impl CandidateLibrary {
    /// `Φ` with columns divided by their norms (or unchanged).
    pub fn scaled_matrix(&self) -> DMatrix<f64> {
        match &self.norms {
            None => self.matrix.clone(),
            Some(n) => {
                let mut m = self.matrix.clone();
                for (j, &s) in n.iter().enumerate() {
                    m.column_mut(j).scale_mut(1.0 / s);
                }
                m
            }
        }
    }
}

/// Evaluate candidates `active` of `lib` at the current spline fields.
pub fn build_library(
    bundle: &DesignBundle,
    beta: &DVector<f64>,
    lib: &LibrarySpec,
    active: &[usize],
    normalize: bool,
) -> Result<CandidateLibrary> {
    if beta.len() != bundle.n_beta() {
        return Err(Error::Shape(format!("β has length {}, expected {}", beta.len(), bundle.n_beta())));
    }
    let n = bundle.n_c;
    let needed = active
        .iter()
        .flat_map(|&i| lib.candidates[i].factors.iter())
        .chain(std::iter::once(&lib.target))
        .flat_map(|f| f.parts.iter().map(|(_, fd)| fd));
    for fd in needed {
        if !bundle.colloc.contains_key(fd) {
            return Err(Error::Config(format!(
                "derivative {:?} of field {} is not assembled",
                fd.orders, fd.field
            )));
        }
    }
    let vals = bundle.colloc_values(beta);
    let mut matrix = DMatrix::zeros(n, active.len());
    for (k, &i) in active.iter().enumerate() {
        let mut col = DVector::from_element(n, 1.0);
        for f in &lib.candidates[i].factors {
            col.component_mul_assign(&factor_value(f, &vals, n));
        }
        matrix.set_column(k, &col);
    }
    let norms = if normalize {
        let mut v = Vec::with_capacity(active.len());
        for (k, &i) in active.iter().enumerate() {
            let s = matrix.column(k).norm();
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::DegenerateColumn(lib.candidates[i].name.clone()));
            }
            v.push(s);
        }
        Some(v)
    } else {
        None
    };
    Ok(CandidateLibrary {
        names: active.iter().map(|&i| lib.candidates[i].name.clone()).collect(),
        matrix,
        target: factor_value(&lib.target, &vals, n),
        norms,
    })
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn builtin(dims: &[&str], fields: &[&str], aliases: &[(&str, &str)], target: &str, cands: Vec<String>) -> LibrarySpec {
    let file = LibraryFile {
        dims: strings(dims),
        fields: strings(fields),
        aliases: aliases.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
        target: target.to_string(),
        candidates: cands,
    };
    LibrarySpec::from_file(&file).expect("built-in library is valid")
}

fn monomial(p: usize, d: usize) -> String {
    let u = match p {
        0 => String::new(),
        1 => "u".to_string(),
        _ => format!("u^{p}"),
    };
    let du = if d == 0 { String::new() } else { format!("u_{}", "x".repeat(d)) };
    match (u.is_empty(), du.is_empty()) {
        (true, true) => "1".into(),
        (false, true) => u,
        (true, false) => du,
        (false, false) => format!("{u}*{du}"),
    }
}

/// The 35-term `u_t` library: powers of `u` up to 5 times `x`-derivatives up to 5.
pub fn ks_library() -> LibrarySpec {
    let mut c: Vec<String> = vec![
        "u*u_x", "u_xx", "u_xxxx", "u_xxx", "u", "u^2", "u^3", "u^4", "u^5", "u_x", "u_xxxxx",
    ]
    .into_iter()
    .map(String::from)
    .collect();
    for p in 1..=5 {
        for d in 1..=5 {
            if p == 1 && d == 1 {
                continue;
            }
            c.push(monomial(p, d));
        }
    }
    builtin(&["x", "t"], &["u"], &[], "u_t", c)
}

/// 12-term `u_t` library with the viscous-Burgers terms among distractors.
pub fn burgers_library() -> LibrarySpec {
    let c = [
        "1", "u", "u^2", "u^3", "u_x", "u_xx", "u_xxx", "u*u_x", "u*u_xx", "u*u_xxx", "u^2*u_x", "u^2*u_xx",
    ];
    builtin(&["x", "t"], &["u"], &[], "u_t", strings(&c))
}

/// 40-term `w_t` vorticity library on a stream function `psi`.
pub fn ns_library() -> LibrarySpec {
    let c = [
        "u*w_x", "v*w_y", "w_xx", "w_yy", "u", "v", "u*v", "u*w", "v*w", "u^2", "v^2", "w^2", "u*w_y", "u*w_xx",
        "u*w_xy", "v*w_x", "v*w_xx", "v*w_xy", "w*w_x", "w*w_y", "u*v*w_x", "u*v*w_y", "u*v*w_xx", "u*v*w_xy",
        "u*w*w_x", "u*w*w_y", "u*w*w_xx", "u*w*w_xy", "v*w*w_x", "v*w*w_y", "v*w*w_xy", "u^2*w_x", "u^2*w_y",
        "u^2*w_xx", "u^2*w_xy", "v^2*w_x", "v^2*w_y", "v^2*w_xx", "v^2*w_xy", "w^2*w_xy",
    ];
    builtin(
        &["x", "y", "t"],
        &["psi"],
        &[("u", "psi_y"), ("v", "-psi_x"), ("w", "-psi_xx - psi_yy")],
        "w_t",
        strings(&c),
    )
}

pub fn builtin_library(name: &str) -> Result<LibrarySpec> {
    match name {
        "ks" | "ks35" => Ok(ks_library()),
        "burgers" | "burgers12" => Ok(burgers_library()),
        "ns" | "ns40" => Ok(ns_library()),
        other => Err(Error::Config(format!("unknown built-in library `{other}`"))),
    }
}
