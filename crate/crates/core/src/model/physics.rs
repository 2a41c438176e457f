//! Symbolic residual operators `F(û; θ) = Σ coeff · Π factors − f`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One partial derivative of one model field.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FieldDerivative {
    pub field: usize,
    /// Derivative order per dimension.
    pub orders: Vec<usize>,
}

impl FieldDerivative {
    pub fn new(field: usize, orders: Vec<usize>) -> Self {
        FieldDerivative { field, orders }
    }

    pub fn differentiate(&self, extra: &[usize]) -> Self {
        FieldDerivative {
            field: self.field,
            orders: self.orders.iter().zip(extra).map(|(a, b)| a + b).collect(),
        }
    }
}

/// Linear combination of field derivatives, e.g. `ω = −ψ_xx − ψ_yy`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub parts: Vec<(f64, FieldDerivative)>,
}

impl Factor {
    pub fn single(fd: FieldDerivative) -> Self {
        Factor {
            parts: vec![(1.0, fd)],
        }
    }

    pub fn scaled(mut self, s: f64) -> Self {
        for p in &mut self.parts {
            p.0 *= s;
        }
        self
    }

    pub fn differentiate(&self, extra: &[usize]) -> Self {
        Factor {
            parts: self
                .parts
                .iter()
                .map(|(c, fd)| (*c, fd.differentiate(extra)))
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Coefficient {
    /// `scale · θ[index]`
    Theta { index: usize, scale: f64 },
    Constant(f64),
}

impl Coefficient {
    pub fn value(&self, theta: &[f64]) -> f64 {
        match *self {
            Coefficient::Theta { index, scale } => scale * theta[index],
            Coefficient::Constant(c) => c,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coefficient: Coefficient,
    pub factors: Vec<Factor>,
}

/// Residual operator of a differential equation, linear in `θ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicsSpec {
    /// Single-letter dimension names; the last one is time.
    pub dims: Vec<String>,
    /// Model fields, each with its own spline coefficient block.
    pub fields: Vec<String>,
    pub theta_names: Vec<String>,
    pub terms: Vec<Term>,
}

impl PhysicsSpec {
    pub fn new(dims: Vec<String>, fields: Vec<String>, theta_names: Vec<String>, terms: Vec<Term>) -> Result<Self> {
        let spec = PhysicsSpec {
            dims,
            fields,
            theta_names,
            terms,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.theta_names.len();
        let mut used = vec![false; m];
        for (k, term) in self.terms.iter().enumerate() {
            match term.coefficient {
                Coefficient::Theta { index, .. } => {
                    if index >= m {
                        return Err(Error::Config(format!(
                            "term {k} references θ[{index}] but θ has {m} entries"
                        )));
                    }
                    used[index] = true;
                }
                Coefficient::Constant(_) if term.factors.is_empty() => {
                    return Err(Error::Config(format!(
                        "term {k} is a bare constant; express it as forcing"
                    )));
                }
                Coefficient::Constant(_) => {}
            }
            for f in &term.factors {
                if f.parts.is_empty() {
                    return Err(Error::Config(format!("term {k} has an empty factor")));
                }
                for (_, fd) in &f.parts {
                    if fd.field >= self.fields.len() || fd.orders.len() != self.dims.len() {
                        return Err(Error::Config(format!(
                            "term {k} references an unknown field or has the wrong number of derivative orders"
                        )));
                    }
                }
            }
        }
        if let Some(i) = used.iter().position(|u| !u) {
            return Err(Error::Config(format!(
                "θ entry `{}` does not appear in any term",
                self.theta_names[i]
            )));
        }
        Ok(())
    }

    pub fn theta_dim(&self) -> usize {
        self.theta_names.len()
    }

    /// Distinct derivatives needed at collocation points.
    pub fn required_derivatives(&self) -> BTreeSet<FieldDerivative> {
        self.terms
            .iter()
            .flat_map(|t| t.factors.iter())
            .flat_map(|f| f.parts.iter().map(|(_, fd)| fd.clone()))
            .collect()
    }

    /// Largest number of factors in one term (residual degree in `β`).
    pub fn max_factors(&self) -> usize {
        self.terms.iter().map(|t| t.factors.len()).max().unwrap_or(0)
    }

    /// Render a derivative as `u_xxt`.
    pub fn render_derivative(&self, fd: &FieldDerivative) -> String {
        let mut s = self.fields[fd.field].clone();
        let suffix: String = fd
            .orders
            .iter()
            .zip(&self.dims)
            .map(|(&o, d)| d.repeat(o))
            .collect();
        if !suffix.is_empty() {
            s.push('_');
            s.push_str(&suffix);
        }
        s
    }

    pub fn render_factor(&self, f: &Factor) -> String {
        if let [(c, fd)] = f.parts.as_slice() {
            if *c == 1.0 {
                return self.render_derivative(fd);
            }
        }
        let mut s = String::from("(");
        for (i, (c, fd)) in f.parts.iter().enumerate() {
            let name = self.render_derivative(fd);
            if i == 0 {
                if *c == 1.0 {
                    s.push_str(&name);
                } else if *c == -1.0 {
                    s.push('-');
                    s.push_str(&name);
                } else {
                    s.push_str(&format!("{c}*{name}"));
                }
            } else if *c >= 0.0 {
                if *c == 1.0 {
                    s.push_str(&format!(" + {name}"));
                } else {
                    s.push_str(&format!(" + {c}*{name}"));
                }
            } else if *c == -1.0 {
                s.push_str(&format!(" - {name}"));
            } else {
                s.push_str(&format!(" - {}*{name}", -c));
            }
        }
        s.push(')');
        s
    }

    /// Parse `u`, `u_xx`, or an alias such as `w_x` into a factor.
    pub fn parse_factor(&self, text: &str, aliases: &BTreeMap<String, Factor>) -> Result<Factor> {
        let text = text.trim();
        let (name, suffix) = match text.split_once('_') {
            Some((n, s)) => (n, s),
            None => (text, ""),
        };
        let mut orders = vec![0usize; self.dims.len()];
        for ch in suffix.chars() {
            let d = self
                .dims
                .iter()
                .position(|d| d.len() == 1 && d.starts_with(ch))
                .ok_or_else(|| Error::Parse(format!("unknown dimension `{ch}` in `{text}`")))?;
            orders[d] += 1;
        }
        if let Some(base) = aliases.get(name) {
            return Ok(base.differentiate(&orders));
        }
        let field = self
            .fields
            .iter()
            .position(|f| f == name)
            .ok_or_else(|| Error::Parse(format!("unknown field `{name}` in `{text}`")))?;
        Ok(Factor::single(FieldDerivative::new(field, orders)))
    }

    /// Parse a linear alias definition such as `-psi_xx - psi_yy`.
    pub fn parse_linear(&self, text: &str, aliases: &BTreeMap<String, Factor>) -> Result<Factor> {
        let mut parts = Vec::new();
        let normalized = text.replace('-', " - ").replace('+', " + ");
        let mut sign = 1.0;
        for tok in normalized.split_whitespace() {
            match tok {
                "+" => sign = 1.0,
                "-" => sign = -sign,
                _ => {
                    let (coef, name) = match tok.split_once('*') {
                        Some((c, n)) => (
                            c.parse::<f64>()
                                .map_err(|_| Error::Parse(format!("bad coefficient in `{tok}`")))?,
                            n,
                        ),
                        None => (1.0, tok),
                    };
                    let f = self.parse_factor(name, aliases)?.scaled(sign * coef);
                    parts.extend(f.parts);
                    sign = 1.0;
                }
            }
        }
        if parts.is_empty() {
            return Err(Error::Parse(format!("empty linear expression `{text}`")));
        }
        Ok(Factor { parts })
    }

    /// Build from the declarative text representation.
    pub fn from_file(file: &SpecFile) -> Result<Self> {
        let mut spec = PhysicsSpec {
            dims: file.dims.clone(),
            fields: file.fields.clone(),
            theta_names: file.theta.clone(),
            terms: Vec::new(),
        };
        for d in &spec.dims {
            if d.chars().count() != 1 {
                return Err(Error::Parse(format!("dimension names must be one letter, got `{d}`")));
            }
        }
        let aliases = spec.parse_aliases(&file.aliases)?;
        for t in &file.terms {
            let coefficient = parse_coefficient(&t.coeff, &spec.theta_names)?;
            let factors = t
                .factors
                .iter()
                .map(|f| spec.parse_factor(f, &aliases))
                .collect::<Result<_>>()?;
            spec.terms.push(Term { coefficient, factors });
        }
        spec.validate()?;
        Ok(spec)
    }

    pub(crate) fn parse_aliases(&self, raw: &BTreeMap<String, String>) -> Result<BTreeMap<String, Factor>> {
        // aliases may refer to earlier aliases; resolve until a fixed point
        let mut out = BTreeMap::new();
        let mut pending: Vec<(&String, &String)> = raw.iter().collect();
        while !pending.is_empty() {
            let before = pending.len();
            let mut rest = Vec::new();
            for (k, v) in pending {
                match self.parse_linear(v, &out) {
                    Ok(f) => {
                        out.insert(k.clone(), f);
                    }
                    Err(_) => rest.push((k, v)),
                }
            }
            if rest.len() == before {
                let (k, v) = rest[0];
                self.parse_linear(v, &out)
                    .map_err(|e| Error::Parse(format!("alias `{k}`: {e}")))?;
            }
            pending = rest;
        }
        Ok(out)
    }

    /// Render the residual as `u_t + theta1*u*u_x + ...` using values of θ.
    pub fn render_equation(&self, theta: &[f64]) -> String {
        let mut s = String::new();
        for (i, t) in self.terms.iter().enumerate() {
            let c = t.coefficient.value(theta);
            let body: Vec<String> = t.factors.iter().map(|f| self.render_factor(f)).collect();
            let body = if body.is_empty() { "1".to_string() } else { body.join("*") };
            let sign = if c < 0.0 { "-" } else { "+" };
            if i == 0 {
                if c < 0.0 {
                    s.push('-');
                }
            } else {
                s.push_str(&format!(" {sign} "));
            }
            if (c.abs() - 1.0).abs() < 1e-15 {
                s.push_str(&body);
            } else {
                s.push_str(&format!("{:.4}*{body}", c.abs()));
            }
        }
        s.push_str(" = f");
        s
    }
}

fn parse_coefficient(text: &str, theta_names: &[String]) -> Result<Coefficient> {
    let t = text.trim();
    if let Ok(c) = t.parse::<f64>() {
        return Ok(Coefficient::Constant(c));
    }
    let (scale, name) = if let Some((a, b)) = t.split_once('*') {
        (
            a.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad coefficient `{t}`")))?,
            b.trim(),
        )
    } else if let Some(rest) = t.strip_prefix('-') {
        (-1.0, rest.trim())
    } else {
        (1.0, t)
    };
    let index = theta_names
        .iter()
        .position(|n| n == name)
        .ok_or_else(|| Error::Parse(format!("unknown parameter `{name}`")))?;
    Ok(Coefficient::Theta { index, scale })
}

/// Declarative spec file: terms as `(coeff, [factor, ...])`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SpecFile {
    pub dims: Vec<String>,
    pub fields: Vec<String>,
    #[serde(default)]
    pub theta: Vec<String>,
    /// Linear combinations usable as factor names, e.g. `w = "-psi_xx - psi_yy"`.
    #[serde(default)]
    pub aliases: BTreeMap<String, String>,
    #[serde(default)]
    pub terms: Vec<TermFile>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TermFile {
    /// A number, a parameter name, `-name`, or `scale*name`.
    pub coeff: String,
    pub factors: Vec<String>,
}

fn fd(field: usize, orders: &[usize]) -> Factor {
    Factor::single(FieldDerivative::new(field, orders.to_vec()))
}

fn theta(index: usize, scale: f64) -> Coefficient {
    Coefficient::Theta { index, scale }
}

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// `u_t + θ1 u u_x + θ2 u_xx + θ3 u_xxxx` on dims (x, t).
pub fn kuramoto_sivashinsky() -> PhysicsSpec {
    PhysicsSpec::new(
        names(&["x", "t"]),
        names(&["u"]),
        names(&["theta1", "theta2", "theta3"]),
        vec![
            Term {
                coefficient: Coefficient::Constant(1.0),
                factors: vec![fd(0, &[0, 1])],
            },
            Term {
                coefficient: theta(0, 1.0),
                factors: vec![fd(0, &[0, 0]), fd(0, &[1, 0])],
            },
            Term {
                coefficient: theta(1, 1.0),
                factors: vec![fd(0, &[2, 0])],
            },
            Term {
                coefficient: theta(2, 1.0),
                factors: vec![fd(0, &[4, 0])],
            },
        ],
    )
    .expect("built-in spec is valid")
}

/// Vorticity transport `ω_t + θ1 u ω_x + θ2 v ω_y + θ3 ω_xx + θ4 ω_yy` written
/// for a stream function `ψ` on dims (x, y, t), with `u = ψ_y`, `v = −ψ_x`,
/// `ω = −ψ_xx − ψ_yy`.
pub fn ns_vorticity_stream() -> PhysicsSpec {
    let psi = |o: [usize; 3]| fd(0, &o);
    let omega = Factor {
        parts: vec![
            (-1.0, FieldDerivative::new(0, vec![2, 0, 0])),
            (-1.0, FieldDerivative::new(0, vec![0, 2, 0])),
        ],
    };
    PhysicsSpec::new(
        names(&["x", "y", "t"]),
        names(&["psi"]),
        names(&["theta1", "theta2", "theta3", "theta4"]),
        vec![
            Term {
                coefficient: Coefficient::Constant(1.0),
                factors: vec![omega.differentiate(&[0, 0, 1])],
            },
            Term {
                coefficient: theta(0, 1.0),
                factors: vec![psi([0, 1, 0]), omega.differentiate(&[1, 0, 0])],
            },
            Term {
                coefficient: theta(1, 1.0),
                factors: vec![psi([1, 0, 0]).scaled(-1.0), omega.differentiate(&[0, 1, 0])],
            },
            Term {
                coefficient: theta(2, 1.0),
                factors: vec![omega.differentiate(&[2, 0, 0])],
            },
            Term {
                coefficient: theta(3, 1.0),
                factors: vec![omega.differentiate(&[0, 2, 0])],
            },
        ],
    )
    .expect("built-in spec is valid")
}

/// `u_t + θ1 u_x + θ2 u_y + θ3 u_xx + θ4 u_yy` on dims (x, y, t).
pub fn advection_diffusion_2d() -> PhysicsSpec {
    PhysicsSpec::new(
        names(&["x", "y", "t"]),
        names(&["u"]),
        names(&["theta1", "theta2", "theta3", "theta4"]),
        vec![
            Term {
                coefficient: Coefficient::Constant(1.0),
                factors: vec![fd(0, &[0, 0, 1])],
            },
            Term {
                coefficient: theta(0, 1.0),
                factors: vec![fd(0, &[1, 0, 0])],
            },
            Term {
                coefficient: theta(1, 1.0),
                factors: vec![fd(0, &[0, 1, 0])],
            },
            Term {
                coefficient: theta(2, 1.0),
                factors: vec![fd(0, &[2, 0, 0])],
            },
            Term {
                coefficient: theta(3, 1.0),
                factors: vec![fd(0, &[0, 2, 0])],
            },
        ],
    )
    .expect("built-in spec is valid")
}

/// `u_t + θ1 u u_x + θ2 u_xx` on dims (x, t).
pub fn burgers() -> PhysicsSpec {
    PhysicsSpec::new(
        names(&["x", "t"]),
        names(&["u"]),
        names(&["theta1", "theta2"]),
        vec![
            Term {
                coefficient: Coefficient::Constant(1.0),
                factors: vec![fd(0, &[0, 1])],
            },
            Term {
                coefficient: theta(0, 1.0),
                factors: vec![fd(0, &[0, 0]), fd(0, &[1, 0])],
            },
            Term {
                coefficient: theta(1, 1.0),
                factors: vec![fd(0, &[2, 0])],
            },
        ],
    )
    .expect("built-in spec is valid")
}

/// Built-in spec by name.
pub fn builtin_spec(name: &str) -> Result<PhysicsSpec> {
    match name {
        "ks" | "kuramoto-sivashinsky" => Ok(kuramoto_sivashinsky()),
        "ns" | "ns-vorticity" => Ok(ns_vorticity_stream()),
        "advdiff" | "advection-diffusion" => Ok(advection_diffusion_2d()),
        "burgers" => Ok(burgers()),
        other => Err(Error::Config(format!("unknown built-in physics spec `{other}`"))),
    }
}
