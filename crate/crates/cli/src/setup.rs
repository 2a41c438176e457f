//! Turning a run configuration into a library problem.

use physfit::bspline::{KnotVector, TensorBasis};
use physfit::io::{read_dataset, KnotFile};
use physfit::model::{
    builtin_library, builtin_spec, CollocationSet, Dataset, LibraryFile, LibrarySpec, Observation, PhysicsSpec,
    Problem, SpecFile,
};
use physfit::optimize::{data_fit, State};
use physfit::problems::{
    add_noise, advection_diffusion_fixture, multiscale_1d, simulate_burgers, simulate_ks, PeriodicRun,
};

use crate::config::{GeneratorConfig, InitKind, RunConfig};
use crate::Failure;

/// Dataset plus, for manufactured problems, the collocation set with forcing.
pub fn generate(g: &GeneratorConfig) -> Result<(Dataset, Option<CollocationSet>), Failure> {
    let (data, colloc) = match g.name.as_str() {
        "ks" => (simulate_ks(g.nx, g.nt, g.lx, g.lt, g.seed)?, None),
        "burgers" => (simulate_burgers(&PeriodicRun::new(g.nx, g.nt, g.lx, g.lt, g.seed), g.nu)?, None),
        "advdiff" => {
            let (m, _) = advection_diffusion_fixture(g.data_shape, g.colloc_shape)?;
            (m.data, Some(m.colloc))
        }
        "multiscale" => (multiscale_1d(g.nx)?, None),
        other => {
            return Err(Failure::usage(format!(
                "unknown generator `{other}` (expected ks, burgers, advdiff or multiscale)"
            )))
        }
    };
    let data = if g.noise > 0.0 { add_noise(&data, g.noise, g.noise_seed)? } else { data };
    Ok((data, colloc))
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

pub fn library(cfg: &RunConfig) -> Result<LibrarySpec, Failure> {
    if let Some(p) = &cfg.discovery.library_file {
        let file: LibraryFile = read_toml(p)?;
        return Ok(LibrarySpec::from_file(&file)?);
    }
    match &cfg.discovery.library {
        Some(name) => Ok(builtin_library(name)?),
        None => Err(Failure::usage("discovery needs `discovery.library` or `discovery.library_file`")),
    }
}

fn physics(cfg: &RunConfig, data: &Dataset) -> Result<PhysicsSpec, Failure> {
    if let Some(p) = &cfg.problem.spec_file {
        let file: SpecFile = read_toml(p)?;
        return Ok(PhysicsSpec::from_file(&file)?);
    }
    match &cfg.problem.spec {
        Some(name) => Ok(builtin_spec(name)?),
        None => Ok(PhysicsSpec::new(data.dims.clone(), vec![data.fields[0].clone()], vec![], vec![])?),
    }
}

/// Assembles the problem; `spec_override` replaces the configured physics
/// (discovery supplies the library's own).
pub fn problem(cfg: &RunConfig, spec_override: Option<PhysicsSpec>) -> Result<Problem, Failure> {
    let (data, generated_colloc) = match (&cfg.problem.dataset, &cfg.problem.generator) {
        (Some(path), _) => {
            let dims = match &cfg.problem.spec {
                Some(name) => builtin_spec(name)?.dims,
                None => spec_override
                    .as_ref()
                    .map(|s| s.dims.clone())
                    .unwrap_or_else(|| vec!["x".into(), "t".into()]),
            };
            (read_dataset(path, &dims, cfg.problem.domain.clone())?, None)
        }
        (None, Some(g)) => generate(g)?,
        (None, None) => return Err(Failure::usage("problem needs `dataset` or `generator`")),
    };
    let spec = match spec_override {
        Some(s) => s,
        None => physics(cfg, &data)?,
    };
    if spec.dims != data.dims {
        return Err(Failure::usage(format!(
            "spec dimensions {:?} do not match dataset dimensions {:?}",
            spec.dims, data.dims
        )));
    }
    let colloc = match &cfg.problem.collocation {
        Some(path) => {
            let c = read_dataset(path, &data.dims, Some(data.domain.clone()))?;
            CollocationSet {
                points: c.points,
                forcing: c.values.into_iter().next().ok_or_else(|| Failure::usage("collocation file has no forcing column"))?,
            }
        }
        None => generated_colloc.unwrap_or_else(|| CollocationSet::new(data.points.clone())),
    };
    let bases = bases(cfg, &data, &spec)?;
    let observations = if cfg.problem.observations.is_empty() {
        let obs: Vec<Observation> = spec
            .fields
            .iter()
            .enumerate()
            .filter(|(_, f)| data.fields.contains(f))
            .map(|(i, f)| Observation::direct(f, i, data.dims.len()))
            .collect();
        if obs.is_empty() {
            return Err(Failure::usage(format!(
                "no dataset field matches the model fields {:?}; set problem.observations",
                spec.fields
            )));
        }
        obs
    } else {
        cfg.problem.observations.clone()
    };
    let mut weights = cfg.weights.to_weights();
    let n = observations.len();
    for w in [&mut weights.data, &mut weights.ic, &mut weights.bc] {
        if w.len() == 1 && n > 1 {
            *w = vec![w[0]; n];
        }
    }
    weights.validate(n)?;
    Ok(Problem {
        spec,
        bases,
        data,
        observations,
        weights,
        colloc,
    })
}

fn bases(cfg: &RunConfig, data: &Dataset, spec: &PhysicsSpec) -> Result<Vec<TensorBasis>, Failure> {
    if let Some(p) = &cfg.basis.knot_file {
        let b = KnotFile::read(p)?.to_bases()?;
        if b.len() != spec.fields.len() {
            return Err(Failure::usage(format!(
                "knot file has {} fields, the model has {}",
                b.len(),
                spec.fields.len()
            )));
        }
        return Ok(b);
    }
    if cfg.basis.degrees.len() != data.dims.len() {
        return Err(Failure::usage(format!(
            "basis.degrees needs one entry per dimension ({})",
            data.dims.len()
        )));
    }
    let dims = data
        .domain
        .iter()
        .zip(cfg.basis.degrees.iter().zip(&cfg.basis.breakpoints))
        .map(|(&(lo, hi), (&deg, &nb))| KnotVector::uniform(lo, hi, nb, deg))
        .collect::<physfit::error::Result<Vec<_>>>()?;
    Ok(vec![TensorBasis::new(dims); spec.fields.len()])
}

pub fn initial_state(cfg: &RunConfig, problem: &Problem, n_theta: usize) -> Result<State, Failure> {
    let n_beta = problem.layout().total();
    let mut st = match cfg.init.kind {
        InitKind::Zeros => State::zeros(n_beta, n_theta),
        InitKind::Fit => {
            let mut s = State::zeros(n_beta, n_theta);
            s.beta = data_fit(&problem.assemble()?, cfg.knots.adaptive.ridge)?;
            s
        }
        InitKind::Random => State::random(n_beta, n_theta, cfg.init.scale, cfg.init.seed.unwrap_or(cfg.seed)),
    };
    if let Some(th) = &cfg.init.theta {
        if th.len() != n_theta {
            return Err(Failure::usage(format!("init.theta needs {n_theta} entries")));
        }
        st.theta = th.clone();
    }
    Ok(st)
}
