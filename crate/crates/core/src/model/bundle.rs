//! Design matrices for data, condition and collocation points.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::dataset::{CollocationSet, Dataset};
use super::physics::{FieldDerivative, PhysicsSpec};
use crate::bspline::{Design, PointSet, TensorBasis};
use crate::error::{Error, Result};

/// How one observed column relates to a model field: `sign · ∂^orders field ≈ y`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub data_field: String,
    pub field: usize,
    pub orders: Vec<usize>,
    #[serde(default = "one")]
    pub sign: f64,
}

fn one() -> f64 {
    1.0
}

impl Observation {
    /// The field itself is observed.
    pub fn direct(data_field: &str, field: usize, ndim: usize) -> Self {
        Observation {
            data_field: data_field.to_string(),
            field,
            orders: vec![0; ndim],
            sign: 1.0,
        }
    }
}

/// Trade-off weights, one triple per observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub data: Vec<f64>,
    pub ic: Vec<f64>,
    pub bc: Vec<f64>,
    pub mu: f64,
}

impl LossWeights {
    pub fn single(data: f64, ic: f64, bc: f64, mu: f64) -> Self {
        LossWeights {
            data: vec![data],
            ic: vec![ic],
            bc: vec![bc],
            mu,
        }
    }

    pub fn validate(&self, n_obs: usize) -> Result<()> {
        if self.data.len() != n_obs || self.ic.len() != n_obs || self.bc.len() != n_obs {
            return Err(Error::Config(format!(
                "loss weights must have one entry per observation ({n_obs})"
            )));
        }
        if self
            .data
            .iter()
            .chain(&self.ic)
            .chain(&self.bc)
            .chain(std::iter::once(&self.mu))
            .any(|&w| !(w >= 0.0) || !w.is_finite())
        {
            return Err(Error::Config("loss weights must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// A complete physics-informed fitting problem.
#[derive(Clone, Debug)]
pub struct Problem {
    pub spec: PhysicsSpec,
    /// One tensor basis per model field.
    pub bases: Vec<TensorBasis>,
    pub data: Dataset,
    pub observations: Vec<Observation>,
    pub weights: LossWeights,
    pub colloc: CollocationSet,
}

impl Problem {
    pub fn layout(&self) -> BetaLayout {
        BetaLayout::new(&self.bases)
    }

    pub fn assemble(&self) -> Result<DesignBundle> {
        assemble_design(
            &self.data,
            &self.colloc,
            &self.bases,
            &self.spec,
            &self.observations,
            &self.weights,
        )
    }

    /// Problem restricted to subsets of data and collocation points.
    pub fn restrict(&self, data_idx: &[usize], colloc_idx: &[usize]) -> Result<Problem> {
        if colloc_idx.is_empty() {
            return Err(Error::Config("empty collocation subset".into()));
        }
        Ok(Problem {
            spec: self.spec.clone(),
            bases: self.bases.clone(),
            data: self.data.subset(data_idx)?,
            observations: self.observations.clone(),
            weights: self.weights.clone(),
            colloc: self.colloc.subset(colloc_idx),
        })
    }

    pub fn with_spec(&self, spec: PhysicsSpec) -> Problem {
        Problem {
            spec,
            ..self.clone()
        }
    }

    pub fn with_bases(&self, bases: Vec<TensorBasis>) -> Problem {
        Problem {
            bases,
            ..self.clone()
        }
    }
}

/// Offsets of each field's coefficient block inside `β`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BetaLayout {
    pub offsets: Vec<usize>,
    pub sizes: Vec<usize>,
}

impl BetaLayout {
    pub fn new(bases: &[TensorBasis]) -> Self {
        let sizes: Vec<usize> = bases.iter().map(TensorBasis::num_basis).collect();
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut acc = 0;
        for s in &sizes {
            offsets.push(acc);
            acc += s;
        }
        BetaLayout { offsets, sizes }
    }

    pub fn total(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn block(&self, beta: &DVector<f64>, field: usize) -> DVector<f64> {
        beta.rows(self.offsets[field], self.sizes[field]).into_owned()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockKind {
    Data,
    Ic,
    Bc,
}

/// One weighted quadratic loss `weight/(2n) Σ ‖D β_field − y‖²` over its parts.
#[derive(Clone, Debug)]
pub struct QuadBlock {
    pub name: String,
    pub kind: BlockKind,
    pub observation: usize,
    pub field: usize,
    pub parts: Vec<(Design, DVector<f64>)>,
    pub weight: f64,
    pub n: usize,
}

impl QuadBlock {
    /// Unweighted `1/(2n) Σ ‖D β − y‖²`.
    pub fn raw_loss(&self, beta_f: &DVector<f64>) -> f64 {
        let ss: f64 = self
            .parts
            .iter()
            .map(|(d, y)| (d.apply(beta_f) - y).norm_squared())
            .sum();
        ss / (2.0 * self.n as f64)
    }

    pub fn footprint_bytes(&self) -> usize {
        self.parts.iter().map(|(d, _)| d.footprint_bytes()).sum()
    }
}

/// Everything needed to evaluate losses and gradients for fixed bases.
#[derive(Clone, Debug)]
pub struct DesignBundle {
    pub layout: BetaLayout,
    pub blocks: Vec<QuadBlock>,
    /// Derivative operators at collocation points.
    pub colloc: BTreeMap<FieldDerivative, Design>,
    pub forcing: DVector<f64>,
    pub n_c: usize,
}

impl DesignBundle {
    pub fn n_beta(&self) -> usize {
        self.layout.total()
    }

    /// Values of every collocation derivative at `β`.
    pub fn colloc_values(&self, beta: &DVector<f64>) -> BTreeMap<FieldDerivative, DVector<f64>> {
        self.colloc
            .iter()
            .map(|(fd, d)| (fd.clone(), d.apply(&self.layout.block(beta, fd.field))))
            .collect()
    }

    /// Peak bytes held by all design operators.
    pub fn footprint_bytes(&self) -> usize {
        self.blocks.iter().map(QuadBlock::footprint_bytes).sum::<usize>()
            + self.colloc.values().map(Design::footprint_bytes).sum::<usize>()
    }

    /// `Σ w/n DᵀD` as a dense matrix over the full `β`.
    pub fn data_gram(&self) -> DMatrix<f64> {
        let n = self.n_beta();
        let mut g = DMatrix::zeros(n, n);
        for b in &self.blocks {
            if b.weight == 0.0 {
                continue;
            }
            let off = self.layout.offsets[b.field];
            let s = self.layout.sizes[b.field];
            let scale = b.weight / b.n as f64;
            for (d, _) in &b.parts {
                let dg = d.gram();
                let mut view = g.view_mut((off, off), (s, s));
                view += dg * scale;
            }
        }
        g
    }

    /// `Σ w/n Dᵀy` over the full `β`.
    pub fn data_rhs(&self) -> DVector<f64> {
        let mut r = DVector::zeros(self.n_beta());
        for b in &self.blocks {
            if b.weight == 0.0 {
                continue;
            }
            let off = self.layout.offsets[b.field];
            let s = self.layout.sizes[b.field];
            let scale = b.weight / b.n as f64;
            for (d, y) in &b.parts {
                let mut view = r.rows_mut(off, s);
                view += d.apply_t(y) * scale;
            }
        }
        r
    }
}

/// Build the design bundle for one set of bases.
pub fn assemble_design(
    dataset: &Dataset,
    colloc: &CollocationSet,
    bases: &[TensorBasis],
    spec: &PhysicsSpec,
    observations: &[Observation],
    weights: &LossWeights,
) -> Result<DesignBundle> {
    if bases.len() != spec.fields.len() {
        return Err(Error::Shape(format!(
            "{} bases for {} model fields",
            bases.len(),
            spec.fields.len()
        )));
    }
    weights.validate(observations.len())?;
    if colloc.forcing.len() != colloc.len() {
        return Err(Error::Shape("forcing length differs from collocation count".into()));
    }
    let (ic_parts, bc_parts) = dataset.condition_parts();
    let mut blocks = Vec::new();
    for (k, obs) in observations.iter().enumerate() {
        let basis = bases
            .get(obs.field)
            .ok_or_else(|| Error::Config(format!("observation {k} targets unknown field {}", obs.field)))?;
        let col = dataset.field_index(&obs.data_field)?;
        let y = &dataset.values[col];
        let target = |idx: &[usize]| DVector::from_iterator(idx.len(), idx.iter().map(|&i| obs.sign * y[i]));
        let all: Vec<usize> = (0..dataset.len()).collect();
        let make = |kind: BlockKind, label: &str, w: f64, groups: Vec<(&PointSet, &[usize])>| -> Result<Option<QuadBlock>> {
            if groups.is_empty() {
                return Ok(None);
            }
            let mut parts = Vec::new();
            let mut n = 0;
            for (pts, idx) in groups {
                parts.push((Design::build(basis, pts, &obs.orders)?, target(idx)));
                n += idx.len();
            }
            Ok(Some(QuadBlock {
                name: format!("{label}:{}", obs.data_field),
                kind,
                observation: k,
                field: obs.field,
                parts,
                weight: w,
                n,
            }))
        };
        let blocks_k = [
            make(BlockKind::Data, "data", weights.data[k], vec![(&dataset.points, &all[..])])?,
            make(
                BlockKind::Ic,
                "ic",
                weights.ic[k],
                ic_parts.iter().map(|p| (&p.points, &p.indices[..])).collect(),
            )?,
            make(
                BlockKind::Bc,
                "bc",
                weights.bc[k],
                bc_parts.iter().map(|p| (&p.points, &p.indices[..])).collect(),
            )?,
        ];
        blocks.extend(blocks_k.into_iter().flatten());
    }
    let mut colloc_designs = BTreeMap::new();
    for fd in spec.required_derivatives() {
        let d = Design::build(&bases[fd.field], &colloc.points, &fd.orders)?;
        colloc_designs.insert(fd, d);
    }
    Ok(DesignBundle {
        layout: BetaLayout::new(bases),
        blocks,
        colloc: colloc_designs,
        forcing: DVector::from_column_slice(&colloc.forcing),
        n_c: colloc.len(),
    })
}
