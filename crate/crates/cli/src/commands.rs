use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DVector;
use physfit::bspline::Design;
use physfit::discovery::discover as run_discovery;
use physfit::error::Error;
use physfit::io::{write_csv, write_grid_binary, KnotFile};
use physfit::knots::{adaptive_loop, data_knot_rounds, KnotConfig};
use physfit::model::{physics_gradient_beta, physics_residual, Dataset, Problem};
use physfit::optimize::{beta_subproblem, data_fit, BatchConfig, OptTrace, Optimizer, Snapshot};
use serde::Serialize;

use crate::config::{load, GeneratorConfig, RunConfig};
use crate::setup;
use crate::{ConfigArgs, EstimateArgs, Failure, SynthArgs};

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn write_dataset(ds: &Dataset, dir: &Path, name: &str, format: &str) -> Result<PathBuf, Failure> {
    match format {
        "bin" => {
            let p = dir.join(format!("{name}.json"));
            write_grid_binary(ds, &p)?;
            Ok(p)
        }
        "csv" => {
            let p = dir.join(format!("{name}.csv"));
            write_csv(ds, &p)?;
            Ok(p)
        }
        other => Err(Failure::usage(format!("unknown format `{other}` (expected bin or csv)"))),
    }
}

pub fn synth(a: &SynthArgs) -> Result<(), Failure> {
    let d = GeneratorConfig::default();
    let g = GeneratorConfig {
        name: a.problem.clone(),
        nx: a.nx.unwrap_or(d.nx),
        nt: a.nt.unwrap_or(d.nt),
        lx: a.lx.unwrap_or(d.lx),
        lt: a.lt.unwrap_or(d.lt),
        seed: a.seed,
        nu: a.nu,
        noise: 0.0,
        noise_seed: a.noise_seed,
        ..d
    };
    if !matches!(a.format.as_str(), "bin" | "csv") {
        return Err(Failure::usage(format!("unknown format `{}` (expected bin or csv)", a.format)));
    }
    let (data, colloc) = setup::generate(&g)?;
    fs::create_dir_all(&a.out)?;
    let name = a.name.clone().unwrap_or_else(|| a.problem.clone());
    let p = write_dataset(&data, &a.out, &name, &a.format)?;
    println!("wrote {}", p.display());
    if let Some(c) = colloc {
        let cds = Dataset::new(
            data.dims.clone(),
            data.domain.clone(),
            c.points,
            vec!["f".into()],
            vec![c.forcing],
            physfit::model::Conditions::None,
        )?;
        let p = write_dataset(&cds, &a.out, &format!("{name}_colloc"), &a.format)?;
        println!("wrote {}", p.display());
    }
    if let Some(level) = a.noise {
        let noisy = physfit::problems::add_noise(&data, level, a.noise_seed)?;
        let p = write_dataset(&noisy, &a.out, &format!("{name}_noise{level}"), &a.format)?;
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn load_args(a: &ConfigArgs) -> Result<RunConfig, Failure> {
    let mut overrides = a.overrides.clone();
    if let Some(o) = &a.output {
        overrides.push(format!("output={}", toml::Value::String(o.display().to_string())));
    }
    load(a.config.as_deref(), &overrides)
}

fn prepare_output(cfg: &RunConfig) -> Result<PathBuf, Failure> {
    fs::create_dir_all(&cfg.output)?;
    let text = toml::to_string(cfg).map_err(|e| Failure::usage(e.to_string()))?;
    fs::write(cfg.output.join("config.toml"), text)?;
    Ok(cfg.output.clone())
}

fn data_rounds(cfg: &RunConfig, problem: Problem, trace: &mut OptTrace) -> Result<Problem, Failure> {
    if cfg.knots.data_rounds == 0 {
        return Ok(problem);
    }
    let k = KnotConfig {
        rounds: cfg.knots.data_rounds,
        n_new: cfg.knots.data_n_new.clone(),
        ..cfg.knots.adaptive.clone()
    };
    Ok(data_knot_rounds(&problem, &k, trace)?)
}

fn write_knots(problem: &Problem, path: &Path) -> Result<(), Failure> {
    KnotFile::from_bases(&problem.data.dims, &problem.bases).write(path)?;
    Ok(())
}

fn coords_header(dims: &[String]) -> String {
    dims.join(",")
}

fn coords(p: &[f64]) -> String {
    p.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

/// Per-point predictions and errors of every observation, and the physics residual.
fn write_errors(problem: &Problem, beta: &DVector<f64>, theta: &[f64], physics: bool, dir: &Path) -> Result<(), Failure> {
    let layout = problem.layout();
    let mut header = coords_header(&problem.data.dims);
    let mut cols = Vec::new();
    for obs in &problem.observations {
        let k = problem.data.field_index(&obs.data_field)?;
        let b = layout.block(beta, obs.field);
        let pred = Design::build(&problem.bases[obs.field], &problem.data.points, &obs.orders)?.apply(&b) * obs.sign;
        let _ = write!(header, ",pred_{0},obs_{0},err_{0}", obs.data_field);
        cols.push((pred, k));
    }
    let mut out = header + "\n";
    for i in 0..problem.data.len() {
        out += &coords(&problem.data.points.point(i));
        for (pred, k) in &cols {
            let y = problem.data.values[*k][i];
            let _ = write!(out, ",{},{},{}", pred[i], y, pred[i] - y);
        }
        out.push('\n');
    }
    fs::write(dir.join("errors_data.csv"), out)?;
    if !physics || problem.spec.terms.is_empty() {
        return Ok(());
    }
    let bundle = problem.assemble()?;
    let (r, _) = physics_residual(&bundle, beta, theta, &problem.spec)?;
    let mut out = coords_header(&problem.data.dims) + ",residual\n";
    for i in 0..problem.colloc.len() {
        let _ = writeln!(out, "{},{}", coords(&problem.colloc.points.point(i)), r[i]);
    }
    fs::write(dir.join("errors_physics.csv"), out)?;
    Ok(())
}

fn write_trace(trace: &OptTrace, dir: &Path) -> Result<(), Failure> {
    let mut buf = Vec::new();
    trace.write_jsonl(&mut buf)?;
    fs::write(dir.join("trace.jsonl"), buf)?;
    if !trace.snapshots.is_empty() {
        write_json(&dir.join("snapshots.json"), &trace.snapshots)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct FitRound {
    round: usize,
    data_before: f64,
    data_after: f64,
}

#[derive(Serialize)]
struct FitSummary {
    n_basis: usize,
    data_loss: f64,
    rounds: Vec<FitRound>,
    wall_time: f64,
}

pub fn fit(a: &ConfigArgs) -> Result<(), Failure> {
    let t0 = Instant::now();
    let cfg = load_args(a)?;
    let dir = prepare_output(&cfg)?;
    let problem = setup::problem(&cfg, None)?;
    write_knots(&problem, &dir.join("knots_initial.json"))?;
    let mut trace = OptTrace::new(problem.spec.theta_names.clone());
    let problem = data_rounds(&cfg, problem, &mut trace)?;
    let bundle = problem.assemble()?;
    let beta = data_fit(&bundle, cfg.knots.adaptive.ridge)?;
    let (g, _) = physfit::model::data_losses(&bundle, &beta)?;
    let rounds = trace
        .knot_events
        .iter()
        .filter(|e| e.field == 0 && e.axis == 0)
        .map(|e| FitRound {
            round: e.round,
            data_before: e.losses_before.data,
            data_after: e.losses_after.data,
        })
        .collect();
    write_knots(&problem, &dir.join("knots_final.json"))?;
    write_trace(&trace, &dir)?;
    write_errors(&problem, &beta, &[], false, &dir)?;
    write_json(&dir.join("beta.json"), &beta.as_slice())?;
    write_json(
        &dir.join("summary.json"),
        &FitSummary {
            n_basis: beta.len(),
            data_loss: g,
            rounds,
            wall_time: t0.elapsed().as_secs_f64(),
        },
    )?;
    println!("data loss {g:.6e} with {} basis functions", beta.len());
    Ok(())
}

pub fn estimate(a: &EstimateArgs) -> Result<(), Failure> {
    let t0 = Instant::now();
    let mut cfg = load_args(&a.cfg)?;
    if let Some(n) = a.iters {
        cfg.bsca.max_iters = n;
    }
    if let Some(l) = a.lambda {
        for w in [&mut cfg.weights.data, &mut cfg.weights.ic, &mut cfg.weights.bc] {
            w.iter_mut().for_each(|v| *v = l);
        }
    }
    if a.batches.is_some() || a.epochs.is_some() || a.iters_per_batch.is_some() {
        let prev = cfg.bsca.batch;
        cfg.bsca.batch = Some(BatchConfig {
            num_batches: a.batches.or(prev.map(|b| b.num_batches)).unwrap_or(1),
            epochs: a.epochs.or(prev.map(|b| b.epochs)).unwrap_or(1),
            iters_per_batch: a.iters_per_batch.or(prev.map(|b| b.iters_per_batch)).unwrap_or(10),
            seed: prev.map_or(cfg.seed, |b| b.seed),
        });
    }
    cfg.validate()?;
    let dir = prepare_output(&cfg)?;
    let problem = setup::problem(&cfg, None)?;
    let mut trace = OptTrace::new(problem.spec.theta_names.clone());
    let problem = data_rounds(&cfg, problem, &mut trace)?;
    write_knots(&problem, &dir.join("knots_initial.json"))?;
    let mut state = setup::initial_state(&cfg, &problem, problem.spec.theta_dim())?;
    if a.debug_step {
        debug_step(&problem, &cfg, &state)?;
    }
    let result = adaptive_loop(&problem, &cfg.bsca, &cfg.knots.adaptive, &mut state, &mut trace);
    write_trace(&trace, &dir)?;
    let summary = trace.summary(t0.elapsed().as_secs_f64());
    write_json(&dir.join("summary.json"), &summary)?;
    let final_problem = result?;
    write_knots(&final_problem, &dir.join("knots_final.json"))?;
    write_errors(&final_problem, &state.beta, &state.theta, true, &dir)?;
    println!("{}", final_problem.spec.render_equation(&state.theta));
    if let Some(r) = trace.last() {
        println!("total loss {:.6e} after {} iterations", r.total, r.iter);
    }
    Ok(())
}

fn debug_step(problem: &Problem, cfg: &RunConfig, state: &physfit::optimize::State) -> Result<(), Failure> {
    let bundle = problem.assemble()?;
    let grad = physics_gradient_beta(&bundle, &state.beta, &state.theta, &problem.spec)?;
    let tilde = beta_subproblem(&bundle, &state.beta, &grad, cfg.bsca.c)?;
    let plain = &state.beta - &grad / cfg.bsca.c;
    let diff = (&tilde - &plain).amax();
    eprintln!("debug: surrogate step  |β̃|   = {:.12e}", tilde.norm());
    eprintln!("debug: gradient step   |β−∇h/c| = {:.12e}", plain.norm());
    eprintln!("debug: max difference = {diff:.3e}");
    Ok(())
}

#[derive(Serialize)]
struct FailedDiscovery {
    error: String,
    support: Vec<String>,
    last_support: Vec<String>,
}

pub fn discover(a: &ConfigArgs) -> Result<(), Failure> {
    let t0 = Instant::now();
    let cfg = load_args(a)?;
    let dir = prepare_output(&cfg)?;
    let lib = setup::library(&cfg)?;
    let all: Vec<usize> = (0..lib.len()).collect();
    let problem = setup::problem(&cfg, Some(lib.to_spec(&all)?))?;
    let mut trace = OptTrace::new(lib.names());
    let problem = data_rounds(&cfg, problem, &mut trace)?;
    write_knots(&problem, &dir.join("knots_initial.json"))?;
    let mut state = setup::initial_state(&cfg, &problem, lib.len())?;
    let result = run_discovery(&problem, &lib, &cfg.discovery.settings, &mut state, &mut trace);
    write_trace(&trace, &dir)?;
    write_json(&dir.join("summary.json"), &trace.summary(t0.elapsed().as_secs_f64()))?;
    match result {
        Ok((report, final_problem)) => {
            write_json(&dir.join("report.json"), &report)?;
            fs::write(dir.join("equation.txt"), report.equation.clone() + "\n")?;
            write_knots(&final_problem, &dir.join("knots_final.json"))?;
            println!("{}", report.equation);
            Ok(())
        }
        Err(Error::DiscoveryFailed { last_support }) => {
            let e = Error::DiscoveryFailed {
                last_support: last_support.clone(),
            };
            write_json(
                &dir.join("report.json"),
                &FailedDiscovery {
                    error: e.to_string(),
                    support: vec![],
                    last_support,
                },
            )?;
            Err(e.into())
        }
        Err(e) => Err(e.into()),
    }
}

fn snapshot_mesh(dir: &Path, s: &Snapshot, final_stage: usize) -> Option<PathBuf> {
    if s.stage == final_stage {
        Some(dir.join("knots_final.json"))
    } else if s.stage == 0 {
        Some(dir.join("knots_initial.json"))
    } else {
        None
    }
}

/// Losses recomputed from β/θ snapshots on the mesh of their stage.
fn recompute(dir: &Path, trace: &OptTrace) -> Result<Option<String>, Failure> {
    let snaps = dir.join("snapshots.json");
    if !snaps.exists() || dir.join("report.json").exists() || !dir.join("knots_final.json").exists() {
        return Ok(None);
    }
    let snapshots: Vec<Snapshot> = serde_json::from_str(&fs::read_to_string(snaps)?)?;
    let base = load(Some(&dir.join("config.toml")), &[])?;
    if base.bsca.batch.is_some() {
        return Ok(None);
    }
    let final_stage = trace.records.last().map_or(0, |r| r.stage);
    let mut out = String::from("iter,stage,trace_total,recomputed_total,abs_diff\n");
    for s in &snapshots {
        let Some(mesh) = snapshot_mesh(dir, s, final_stage) else { continue };
        let Some(rec) = trace.records.iter().find(|r| r.iter == s.iter) else { continue };
        let mut cfg = base.clone();
        cfg.basis.knot_file = Some(mesh);
        let p = setup::problem(&cfg, None)?;
        let opt = Optimizer::for_problem(&p, &cfg.bsca)?;
        let l = opt.losses(&DVector::from_vec(s.beta.clone()), &s.theta)?;
        let _ = writeln!(out, "{},{},{},{},{:e}", s.iter, s.stage, rec.total, l.total, (rec.total - l.total).abs());
    }
    Ok(Some(out))
}

pub fn report(dir: &Path) -> Result<(), Failure> {
    let tp = dir.join("trace.jsonl");
    if !tp.exists() {
        return Err(Failure::usage(format!("no trace at {}", tp.display())));
    }
    let names = fs::read_to_string(dir.join("summary.json"))
        .ok()
        .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok())
        .and_then(|v| serde_json::from_value::<Vec<String>>(v["theta_names"].clone()).ok())
        .unwrap_or_default();
    let trace = OptTrace::read_jsonl(&fs::read_to_string(&tp)?, names)?;
    let out = dir.join("report");
    fs::create_dir_all(&out)?;
    fs::write(out.join("loss.csv"), trace.loss_csv())?;
    fs::write(out.join("theta.csv"), trace.theta_csv())?;
    fs::write(out.join("events.csv"), trace.events_csv())?;
    if let Some(text) = recompute(dir, &trace)? {
        fs::write(out.join("recomputed.csv"), text)?;
    }
    println!("wrote {}", out.display());
    Ok(())
}
