use std::fs;
use std::path::Path;

use rapopt::baselines::tune_inner_iterations;
use rapopt::generators::{gen_compressed_sensing, gen_scad_ls, Family, GenSpec};
use rapopt::io::{load_instance, parse_vector, write_compressed_sensing, write_scad_ls, Instance};
use rapopt::metrics::{eps_delta_certificate, read_csv, SubproblemOptions};
use rapopt::problems::Counters;
use rapopt::rapdual::{compute_radual_schedule_with, validate_radual_schedule};
use rapopt::rapgrad::{compute_ragrad_schedule_with, validate_ragrad_schedule, RapGradConfig};
use rapopt::{linalg, ValidationReport};
use serde_json::json;

use crate::config::{ExperimentConfig, ProxSettings};
use crate::plot::{render_svg, Series};
use crate::run::{output_dir, run_experiment};
use crate::{CertifyArgs, CliError, GenArgs, PlotArgs, RunArgs, ScheduleKind, TuneArgs, ValidateArgs};

pub fn gen(a: &GenArgs) -> Result<(), CliError> {
    let mut spec = match a.family {
        Family::ScadLs => GenSpec::scad_ls(a.m, a.n, a.seed),
        Family::CompressedSensing => GenSpec::compressed_sensing(a.m, a.n, a.seed),
    };
    if let Some(v) = a.block_dim {
        spec.block_dim = v;
        if a.family == Family::CompressedSensing && a.nnz.is_none() {
            spec.nnz_signal = spec.nnz_signal.min(spec.signal_dim());
        }
    }
    if let Some(v) = a.sparsity {
        spec.sparsity = v;
    }
    if let Some(v) = a.nnz {
        spec.nnz_signal = v;
    }
    if let Some(v) = a.lambda {
        spec.scad.lambda = v;
    }
    if let Some(v) = a.gamma {
        spec.scad.gamma = v;
    }
    if let Some(v) = a.eps {
        spec.scad.eps = v;
    }
    if let Some(v) = a.rho {
        spec.scad.rho = v;
    }
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let dir = a.out.clone().unwrap_or_else(|| {
        output_dir(None).join(format!("{}-m{}-n{}-seed{}", a.family, a.m, a.n, a.seed))
    });
    let (path, desc) = match a.family {
        Family::ScadLs => write_scad_ls(&gen_scad_ls(&spec)?, &dir)?,
        Family::CompressedSensing => write_compressed_sensing(&gen_compressed_sensing(&spec)?, &dir)?,
    };
    println!("descriptor {}", path.display());
    println!("digest {}", desc.digest);
    if desc.redrawn_columns > 0 {
        println!("redrawn_columns {}", desc.redrawn_columns);
    }
    Ok(())
}

fn merge_run_args(a: &RunArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = &a.instance {
        cfg.instance = Some(v.clone());
    }
    if let Some(v) = a.method {
        cfg.method = Some(v);
    }
    if let Some(v) = &a.seeds {
        cfg.seeds = v.clone();
    }
    let p: &mut ProxSettings = &mut cfg.prox;
    if let Some(v) = a.k {
        p.k = v;
    }
    if let Some(v) = a.s_factor {
        p.s_factor = v;
    }
    if let Some(v) = a.s {
        p.s = Some(v);
    }
    if let Some(v) = &a.output_rule {
        p.output_rule = Some(v.clone());
    }
    if let Some(v) = &a.inner_constant {
        p.inner_constant = Some(v.clone());
    }
    if let Some(v) = a.max_passes {
        cfg.max_passes = v;
    }
    if let Some(v) = a.stop_tol {
        cfg.stop_tol = v;
    }
    if let Some(v) = a.record_every {
        cfg.record_every = v;
    }
    for (k, v) in &a.params {
        cfg.step_params.insert(k.clone(), *v);
    }
    if let Some(v) = &a.out {
        cfg.out_dir = Some(v.clone());
    }
    if let Some(v) = a.threads {
        cfg.threads = v;
    }
    cfg.certificate |= a.certificate;
    Ok(cfg)
}

pub fn run(a: &RunArgs) -> Result<(), CliError> {
    let cfg = merge_run_args(a)?;
    let report = run_experiment(&cfg)?;
    for o in &report.outcomes {
        let f = &o.summary["final"];
        println!(
            "seed {} {:?}: pass {} objective {} grad_norm_sq {:e}",
            o.seed, o.record.stop_reason, f["pass"], f["objective"], f["grad_norm_sq"].as_f64().unwrap_or(f64::NAN)
        );
    }
    for f in &report.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

pub fn tune(a: &TuneArgs) -> Result<(), CliError> {
    let inst = load_instance(&a.instance)?;
    let Instance::FiniteSum { problem, .. } = inst else {
        return Err(CliError::Usage("tuning applies to finite-sum instances".into()));
    };
    let prox = ProxSettings { inner_constant: a.inner_constant.clone(), ..Default::default() };
    let base = RapGradConfig { seed: a.seed, inner_constant: prox.inner_constant()?, ..Default::default() };
    let result = tune_inner_iterations(&problem, &base, &a.factors, a.budget).map_err(|e| match e {
        rapopt::Error::InvalidParameter(m) => CliError::Usage(m),
        e => e.into(),
    })?;
    println!("{:>10} {:>8} {:>14} {:>10}", "factor", "s", "grad_norm_sq", "pass");
    for e in &result.entries {
        println!("{:>10} {:>8} {:>14.6e} {:>10}", e.factor, e.s, e.final_grad_norm_sq, e.final_pass);
    }
    println!("best_factor {}", result.best_factor);
    if let Some(out) = &a.out {
        fs::write(out, serde_json::to_string_pretty(&result).expect("serializable") + "\n")?;
    }
    Ok(())
}

/// `p/q` for values that are (to 1e-12) a fraction with a small denominator.
pub fn as_fraction(v: f64) -> Option<String> {
    if !v.is_finite() {
        return None;
    }
    (1..=1000u32).find_map(|q| {
        let p = (v * q as f64).round();
        ((p / q as f64 - v).abs() <= 1e-12 * v.abs().max(1.0)).then(|| {
            if q == 1 {
                format!("{}", p as i64)
            } else {
                format!("{}/{q}", p as i64)
            }
        })
    })
}

fn constant_line(name: &str, v: f64) -> String {
    match as_fraction(v) {
        Some(f) if f.contains('/') => format!("{name} = {f} ({v})"),
        Some(f) => format!("{name} = {f}"),
        None => format!("{name} = {v}"),
    }
}

fn print_report(report: &ValidationReport) {
    for c in &report.checks {
        println!(
            "  [{}] {}: {} {:?} {}",
            if c.holds { "PASS" } else { "FAIL" },
            c.name,
            c.lhs,
            c.relation,
            c.rhs
        );
    }
    println!("{}", if report.pass { "all conditions hold" } else { "conditions violated" });
}

pub fn validate(a: &ValidateArgs) -> Result<(), CliError> {
    let prox = ProxSettings { inner_constant: a.inner_constant.clone(), ..Default::default() };
    let usage = |e: rapopt::Error| CliError::Usage(e.to_string());
    let (constants, report, schedule) = match a.kind {
        ScheduleKind::Ragrad => {
            if a.abar.is_some() {
                return Err(CliError::Usage("--abar applies to radual only".into()));
            }
            let s = compute_ragrad_schedule_with(a.m, a.lipschitz, a.mu, prox.inner_constant()?).map_err(usage)?;
            let r = validate_ragrad_schedule(&s, a.m, a.mu);
            let c = vec![
                ("α", s.alpha),
                ("τ", s.tau),
                ("η", s.eta),
                ("s", s.s as f64),
                ("M̃", s.m_tilde),
                ("c", s.c),
                ("L̂", s.l_hat),
            ];
            (c, r, serde_json::to_value(s).expect("serializable"))
        }
        ScheduleKind::Radual => {
            let abar = a.abar.ok_or_else(|| CliError::Usage("--abar is required for radual".into()))?;
            let s = compute_radual_schedule_with(a.m, a.lipschitz, a.mu, abar, prox.dual_constant()?).map_err(usage)?;
            let r = validate_radual_schedule(&s, a.m, a.mu);
            let c = vec![
                ("α", s.alpha),
                ("α_t", s.alpha_t),
                ("τ", s.tau),
                ("η", s.eta),
                ("s", s.s as f64),
                ("M̂", s.m_hat),
                ("c", s.c),
                ("L̂", s.l_hat),
                ("μ̄", s.mu_bar),
            ];
            (c, r, serde_json::to_value(s).expect("serializable"))
        }
    };
    if a.json {
        println!("{}", serde_json::to_string_pretty(&json!({ "schedule": schedule, "report": report })).expect("serializable"));
    } else {
        for (name, v) in constants {
            println!("{}", constant_line(name, v));
        }
        print_report(&report);
    }
    if report.pass {
        Ok(())
    } else {
        Err(CliError::Failure("schedule violates its conditions".into()))
    }
}

pub fn plot(a: &PlotArgs) -> Result<(), CliError> {
    if let Some(l) = &a.labels {
        if l.len() != a.inputs.len() {
            return Err(CliError::Usage(format!("{} labels for {} inputs", l.len(), a.inputs.len())));
        }
    }
    let mut series = Vec::new();
    for (i, path) in a.inputs.iter().enumerate() {
        let file = fs::File::open(path).map_err(|e| CliError::Failure(format!("{}: {e}", path.display())))?;
        let rows = read_csv(file).map_err(|e| CliError::Failure(format!("{}: {e}", path.display())))?;
        let label = match &a.labels {
            Some(l) => l[i].clone(),
            None => path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned()),
        };
        series.push(Series { label, rows });
    }
    let title = a.title.clone().unwrap_or_else(|| format!("{} vs. passes", a.y.name()));
    let svg = render_svg(&series, a.y, a.logy, &title)?;
    let out = a.out.clone().unwrap_or_else(|| output_dir(None).join(format!("plot-{}.svg", a.y.name())));
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(&out, svg)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn read_point(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Failure(format!("{}: {e}", path.display())))?;
    parse_vector(&text).map_err(|e| CliError::Failure(format!("{}: {e}", path.display())))
}

pub fn certify(a: &CertifyArgs) -> Result<(), CliError> {
    let Instance::FiniteSum { problem, .. } = load_instance(&a.instance)? else {
        return Err(CliError::Usage("certificates are defined for finite-sum instances only".into()));
    };
    let (x, center) = match (&a.summary, &a.point, &a.center) {
        (Some(s), _, _) => {
            let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(s)?)
                .map_err(|e| CliError::Failure(format!("{}: {e}", s.display())))?;
            let get = |k: &str| -> Result<Vec<f64>, CliError> {
                serde_json::from_value(v[k].clone())
                    .map_err(|_| CliError::Failure(format!("{} has no `{k}` vector", s.display())))
            };
            (get("x")?, get("center")?)
        }
        (None, Some(p), Some(c)) => (read_point(p)?, read_point(c)?),
        _ => return Err(CliError::Usage("pass --summary or both --point and --center".into())),
    };
    let cert = eps_delta_certificate(&problem, &x, &center, &SubproblemOptions::default())?;
    let g = problem.full_gradient(&x, &mut Counters::default())?;
    let gsq = linalg::norm_sq(&g);
    let l = problem.lipschitz();
    let premise = cert.delta_hat <= cert.eps_hat / (l * l);
    let chain_holds = !premise || gsq <= 4.0 * cert.eps_hat * (1.0 + 1e-6);
    let out = json!({
        "eps_hat": cert.eps_hat,
        "delta_hat": cert.delta_hat,
        "premise_delta_le_eps_over_l2": premise,
        "grad_norm_sq": gsq,
        "grad_bound_4eps": 4.0 * cert.eps_hat,
        "chain_holds": chain_holds,
        "solver_iterations": cert.solver_iterations,
        "solver_residual": cert.solver_residual,
    });
    println!("{}", serde_json::to_string_pretty(&out).expect("serializable"));
    if chain_holds {
        Ok(())
    } else {
        Err(CliError::Failure("gradient bound violated".into()))
    }
}
