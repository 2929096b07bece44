//! `run`: solves one instance for every seed and writes CSV/JSON reports.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rapopt::baselines::{run_admm, run_ag, run_svrg, BaselineConfig, BaselineMethod};
use rapopt::io::{load_instance, Instance};
use rapopt::metrics::{eps_delta_certificate, mean_trajectory, MonitorOptions, RecordRow, RunRecord, SubproblemOptions};
use rapopt::problems::{Counters, FiniteSumProblem, MultiBlockProblem};
use rapopt::rapdual::{rapdual_run, DualMode, RapDualConfig};
use rapopt::rapgrad::{rapgrad_run, Mode, RapGradConfig};
use rapopt::linalg;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, Method};
use crate::CliError;

pub struct SeedOutcome {
    pub seed: u64,
    pub record: RunRecord,
    pub summary: Value,
}

pub struct RunReport {
    pub outcomes: Vec<SeedOutcome>,
    pub files: Vec<PathBuf>,
}

fn monitor(cfg: &ExperimentConfig) -> MonitorOptions {
    MonitorOptions {
        record_every: cfg.record_every,
        stop_tol: (cfg.stop_tol > 0.0).then_some(cfg.stop_tol),
        max_passes: cfg.max_passes,
    }
}

fn rapgrad_config(cfg: &ExperimentConfig, seed: u64, mode: Mode) -> Result<RapGradConfig, CliError> {
    Ok(RapGradConfig {
        k: cfg.prox.k,
        s_override: cfg.prox.s,
        s_factor: cfg.prox.s_factor,
        seed,
        output_rule: cfg.prox.output_rule()?,
        mode,
        inner_constant: cfg.prox.inner_constant()?,
        monitor: monitor(cfg),
        ..Default::default()
    })
}

fn rapdual_config(cfg: &ExperimentConfig, seed: u64, mode: DualMode) -> Result<RapDualConfig, CliError> {
    Ok(RapDualConfig {
        k: cfg.prox.k,
        s_override: cfg.prox.s,
        s_factor: cfg.prox.s_factor,
        seed,
        output_rule: cfg.prox.dual_output_rule()?,
        mode,
        inner_constant: cfg.prox.dual_constant()?,
        monitor: monitor(cfg),
        ..Default::default()
    })
}

fn baseline_config(cfg: &ExperimentConfig, method: BaselineMethod, seed: u64) -> Result<BaselineConfig, CliError> {
    let mut b = BaselineConfig::new(method);
    b.step_params = cfg.step_params.clone();
    b.step_params.insert("record_every".into(), cfg.record_every);
    b.max_passes = cfg.max_passes;
    b.stop_tol = cfg.stop_tol;
    b.seed = seed;
    b.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(b)
}

fn final_metrics(record: &RunRecord, stop_tol: f64) -> Value {
    let last = record.final_row();
    json!({
        "pass": last.map(|r| r.pass),
        "objective": last.map(|r| r.objective),
        "grad_norm_sq": last.map(|r| r.grad_norm_sq),
        "feasibility_sq": last.and_then(|r| r.feasibility_sq),
        "passes_to_tolerance": record.passes_to_tolerance(stop_tol),
    })
}

fn certificate(p: &FiniteSumProblem, x: &[f64], center: &[f64]) -> Result<Value, CliError> {
    let c = eps_delta_certificate(p, x, center, &SubproblemOptions::default())?;
    let g = p.full_gradient(x, &mut Counters::default())?;
    let l = p.lipschitz();
    Ok(json!({
        "eps_hat": c.eps_hat,
        "delta_hat": c.delta_hat,
        "premise_delta_le_eps_over_l2": c.delta_hat <= c.eps_hat / (l * l),
        "grad_norm_sq": linalg::norm_sq(&g),
        "solver_iterations": c.solver_iterations,
        "solver_residual": c.solver_residual,
    }))
}

fn run_finite_sum(cfg: &ExperimentConfig, method: Method, p: &FiniteSumProblem, seed: u64) -> Result<(RunRecord, Value), CliError> {
    let (record, mut extra) = match method {
        Method::Rapgrad | Method::BatchRapgrad => {
            let mode = if method == Method::Rapgrad { Mode::Randomized } else { Mode::Batch };
            let out = rapgrad_run(p, &rapgrad_config(cfg, seed, mode)?)?;
            let center = out.output_center().unwrap_or(&out.x).to_vec();
            let extra = json!({
                "schedule": out.schedule,
                "s": out.s,
                "outer_completed": out.outer_completed,
                "selected": out.selected,
                "invariant_max": out.invariant_max,
                "x": out.x,
                "center": center,
            });
            (out.record, extra)
        }
        Method::Svrg => {
            let out = run_svrg(p, &baseline_config(cfg, BaselineMethod::Svrg, seed)?.svrg()?)?;
            let extra = json!({ "step": out.step, "epoch_length": out.epoch_length, "epochs": out.epochs, "x": out.x, "center": out.x });
            (out.record, extra)
        }
        Method::Ag => {
            let out = run_ag(p, &baseline_config(cfg, BaselineMethod::Ag, seed)?.ag()?)?;
            let extra = json!({ "step": out.step, "iterations": out.iterations, "x": out.x, "center": out.x });
            (out.record, extra)
        }
        _ => return Err(CliError::Usage(format!("{} needs a multi-block instance", method.name()))),
    };
    if cfg.certificate {
        let x: Vec<f64> = serde_json::from_value(extra["x"].clone()).expect("x is a vector");
        let center: Vec<f64> = serde_json::from_value(extra["center"].clone()).expect("center is a vector");
        extra["certificate"] = certificate(p, &x, &center)?;
    }
    Ok((record, extra))
}

fn run_multiblock(cfg: &ExperimentConfig, method: Method, p: &MultiBlockProblem, seed: u64) -> Result<(RunRecord, Value), CliError> {
    if cfg.certificate {
        return Err(CliError::Usage("certificates are defined for finite-sum instances only".into()));
    }
    match method {
        Method::Rapdual | Method::BatchRapdual => {
            let mode = if method == Method::Rapdual { DualMode::Randomized } else { DualMode::Batch };
            let out = rapdual_run(p, &rapdual_config(cfg, seed, mode)?)?;
            let extra = json!({
                "schedule": out.schedule,
                "s": out.s,
                "outer_completed": out.outer_completed,
                "selected": out.selected,
                "initial_feasibility_sq": out.initial_feasibility_sq,
                "stationarity_max": out.stationarity_max,
                "x": out.x,
                "xm": out.xm,
            });
            Ok((out.record, extra))
        }
        Method::Admm => {
            let out = run_admm(p, &baseline_config(cfg, BaselineMethod::Admm, seed)?.admm()?)?;
            let extra = json!({ "rho": out.rho, "cycles": out.cycles, "x": out.x, "xm": out.xm, "lambda": out.lambda });
            Ok((out.record, extra))
        }
        _ => Err(CliError::Usage(format!("{} needs a finite-sum instance", method.name()))),
    }
}

fn run_seed(cfg: &ExperimentConfig, method: Method, inst: &Instance, digest: &str, seed: u64) -> Result<SeedOutcome, CliError> {
    let (record, extra) = match inst {
        Instance::FiniteSum { problem, .. } => run_finite_sum(cfg, method, problem, seed)?,
        Instance::MultiBlock { problem, .. } => run_multiblock(cfg, method, problem, seed)?,
    };
    let mut summary = json!({
        "method": method.name(),
        "seed": seed,
        "instance": cfg.instance,
        "digest": digest,
        "stop_reason": record.stop_reason,
        "final": final_metrics(&record, cfg.stop_tol),
        "counters": record.counters,
        "pass_unit": record.pass_unit,
        "config": record.config,
        "metadata": record.metadata,
    });
    let (s, e) = (summary.as_object_mut().unwrap(), extra.as_object().unwrap());
    for (k, v) in e {
        s.insert(k.clone(), v.clone());
    }
    Ok(SeedOutcome { seed, record, summary })
}

pub fn output_dir(explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os("RAPOPT_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn descriptor_digest(path: &Path) -> Result<String, CliError> {
    let v: Value = serde_json::from_str(&fs::read_to_string(path)?).map_err(|e| CliError::Failure(e.to_string()))?;
    Ok(v["digest"].as_str().unwrap_or_default().to_string())
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(v).map_err(|e| CliError::Failure(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn write_rows(path: &Path, rows: &[RecordRow]) -> Result<(), CliError> {
    rapopt::metrics::write_csv(rows, fs::File::create(path)?)?;
    Ok(())
}

/// Runs every seed (concurrently when `threads > 1`) and writes
/// `<method>-seed<N>.csv`, `<method>-seed<N>.json`, and for several seeds
/// `<method>-mean.csv`, plus `<method>-experiment.json`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport, CliError> {
    cfg.validate()?;
    let method = cfg.method.expect("validated");
    let path = cfg.instance.as_deref().expect("validated");
    let inst = load_instance(path).map_err(|e| CliError::Failure(format!("{}: {e}", path.display())))?;
    let digest = descriptor_digest(path)?;
    if method.is_multiblock() != matches!(inst, Instance::MultiBlock { .. }) {
        let kind = if method.is_multiblock() { "multi-block" } else { "finite-sum" };
        return Err(CliError::Usage(format!("{} needs a {kind} instance", method.name())));
    }

    let threads = match cfg.threads {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        t => t,
    }
    .min(cfg.seeds.len());
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<SeedOutcome, CliError>>>> = cfg.seeds.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&seed) = cfg.seeds.get(i) else { break };
                let r = run_seed(cfg, method, &inst, &digest, seed);
                *slots[i].lock().unwrap() = Some(r);
            });
        }
    });
    let outcomes: Vec<SeedOutcome> = slots
        .into_iter()
        .map(|s| s.into_inner().unwrap().expect("every seed ran"))
        .collect::<Result<_, _>>()?;

    let dir = output_dir(cfg.out_dir.as_deref());
    fs::create_dir_all(&dir)?;
    let name = method.name();
    let mut files = Vec::new();
    for o in &outcomes {
        let csv = dir.join(format!("{name}-seed{}.csv", o.seed));
        write_rows(&csv, &o.record.rows)?;
        let js = dir.join(format!("{name}-seed{}.json", o.seed));
        write_json(&js, &o.summary)?;
        files.extend([csv, js]);
    }
    if outcomes.len() > 1 {
        let runs: Vec<&[RecordRow]> = outcomes.iter().map(|o| o.record.rows.as_slice()).collect();
        let mean = dir.join(format!("{name}-mean.csv"));
        write_rows(&mean, &mean_trajectory(&runs))?;
        files.push(mean);
    }
    let experiment = json!({
        "config": cfg,
        "digest": digest,
        "runs": outcomes.iter().map(|o| json!({
            "seed": o.seed,
            "stop_reason": o.record.stop_reason,
            "final": o.summary["final"],
        })).collect::<Vec<_>>(),
    });
    let exp = dir.join(format!("{name}-experiment.json"));
    write_json(&exp, &experiment)?;
    files.push(exp);
    Ok(RunReport { outcomes, files })
}
