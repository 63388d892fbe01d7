use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use qgrad_core::config::{RawConfig, RunConfig};
use qgrad_core::deformation::{
    alpha_quadratic_bound, asfast_bound, lambda_one, lambda_star, lambda_zero, norm_product_constant,
    sample_angle, AsfastBound,
};
use qgrad_core::dynamics::integrate;
use qgrad_core::io::{profile_csv, trajectory_csv, write_json, write_text};
use qgrad_core::levelset::psi_profile;
use qgrad_core::potential::hessian_bound;
use qgrad_core::rates::{analyze, desingularizer_from_pairs, lojasiewicz_pairs, SUMMARY_HEADER};
use qgrad_core::{Classification, DeformedEnergy, Error, Trajectory};

use crate::{Cli, Command};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_FAILURE: u8 = 2;

const DEFAULT_OUT_ROOT: &str = "qgrad-out";
pub const RUN_SUMMARY: &str = "rate_summary.csv";
const MERGED_SUMMARY: &str = "summary.csv";

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::IntegrationFailure { .. } => EXIT_FAILURE,
        _ => EXIT_CONFIG,
    }
}

struct Ctx {
    quiet: bool,
    label: String,
}

impl Ctx {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("[{}] {}", self.label, msg.as_ref());
        }
    }

    fn fail(&self, e: &Error) -> u8 {
        eprintln!("[{}] error: {e}", self.label);
        exit_code(e)
    }
}

pub fn dispatch(cli: &Cli) -> u8 {
    if cli.command == Command::Report {
        return report(cli);
    }
    match (&cli.config, &cli.batch) {
        (Some(_), Some(_)) => {
            eprintln!("error: --config and --batch are mutually exclusive");
            EXIT_CONFIG
        }
        (None, None) => {
            eprintln!("error: one of --config or --batch is required");
            EXIT_CONFIG
        }
        (Some(path), None) => run_one(cli, path, cli.out.clone()),
        (None, Some(pattern)) => {
            let paths = match expand_glob(pattern) {
                Ok(p) if p.is_empty() => {
                    eprintln!("error: --batch `{pattern}` matched no files");
                    return EXIT_CONFIG;
                }
                Ok(p) => p,
                Err(msg) => {
                    eprintln!("error: {msg}");
                    return EXIT_CONFIG;
                }
            };
            let root = cli.out.clone();
            paths
                .par_iter()
                .map(|p| {
                    let dir = root.as_ref().map(|r| r.join(stem(p)));
                    run_one(cli, p, dir)
                })
                .collect::<Vec<u8>>()
                .into_iter()
                .max()
                .unwrap_or(EXIT_OK)
        }
    }
}

fn expand_glob(pattern: &str) -> Result<Vec<PathBuf>, String> {
    let mut out = Vec::new();
    for entry in glob::glob(pattern).map_err(|e| format!("--batch: {e}"))? {
        let p = entry.map_err(|e| format!("--batch: {e}"))?;
        if p.is_file() {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into())
}

fn load(path: &Path, seed: Option<u64>) -> Result<RunConfig, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut raw = RawConfig::parse(&text)?;
    if let Some(s) = seed {
        raw.set("seed", &s.to_string());
    }
    RunConfig::from_raw(&raw, path.parent())
}

fn run_one(cli: &Cli, path: &Path, out_override: Option<PathBuf>) -> u8 {
    let ctx = Ctx {
        quiet: cli.quiet,
        label: stem(path),
    };
    let cfg = match load(path, cli.seed) {
        Ok(c) => c,
        Err(e) => return ctx.fail(&e),
    };
    let out = out_override
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_ROOT).join(&ctx.label));
    let result = match cli.command {
        Command::Simulate => simulate(&ctx, &cfg, &out),
        Command::Certify => certify(&ctx, &cfg, &out),
        Command::Levelset => levelset(&ctx, &cfg, &out),
        Command::Rates => rates(&ctx, &cfg, &out, None),
        Command::Report => unreachable!(),
    };
    match result {
        Ok(code) => code,
        Err(e) => ctx.fail(&e),
    }
}

#[derive(Serialize)]
struct RunSummary<'a> {
    potential: &'a str,
    family_params: &'a std::collections::BTreeMap<String, String>,
    seed: u64,
    dynamics: &'a qgrad_core::DynamicsConfig,
    initial_u: Vec<f64>,
    initial_v: Vec<f64>,
    status: &'a str,
    classification: Option<&'a Classification>,
    error: Option<String>,
    final_time: f64,
    final_u: Vec<f64>,
    final_v: Vec<f64>,
    samples: usize,
    accepted_steps: usize,
    rejected_steps: usize,
}

fn run_summary<'a>(cfg: &'a RunConfig, traj: &'a Trajectory, error: Option<String>) -> RunSummary<'a> {
    let last = traj.final_state();
    RunSummary {
        potential: &cfg.potential.name,
        family_params: &cfg.potential.family_params,
        seed: cfg.seed,
        dynamics: &cfg.dynamics,
        initial_u: cfg.initial.u.iter().copied().collect(),
        initial_v: cfg.initial.v.iter().copied().collect(),
        status: if error.is_some() { "integration_failure" } else { "ok" },
        classification: error.is_none().then_some(&traj.classification),
        error,
        final_time: traj.final_time(),
        final_u: last.u.iter().copied().collect(),
        final_v: last.v.iter().copied().collect(),
        samples: traj.len(),
        accepted_steps: traj.accepted_steps,
        rejected_steps: traj.rejected_steps,
    }
}

fn simulate(ctx: &Ctx, cfg: &RunConfig, out: &Path) -> Result<u8, Error> {
    let traj = match integrate(&cfg.potential.spec, &cfg.dynamics, &cfg.initial) {
        Ok(t) => t,
        Err(Error::IntegrationFailure { t, partial }) => {
            let msg = format!("integration failed at t = {t}");
            write_text(&out.join("trajectory.csv"), &trajectory_csv(&partial))?;
            write_json(&out.join("run.json"), &run_summary(cfg, &partial, Some(msg.clone())))?;
            eprintln!("[{}] error: {msg}", ctx.label);
            return Ok(EXIT_FAILURE);
        }
        Err(e) => return Err(e),
    };
    write_text(&out.join("trajectory.csv"), &trajectory_csv(&traj))?;
    write_json(&out.join("run.json"), &run_summary(cfg, &traj, None))?;
    ctx.say(format!(
        "{} after t = {} ({} samples) -> {}",
        traj.classification.label(),
        traj.final_time(),
        traj.len(),
        out.display()
    ));

    let mut code = EXIT_OK;
    if cfg.analysis.certify {
        code = code.max(certify(ctx, cfg, out).unwrap_or_else(|e| ctx.fail(&e)));
    }
    if cfg.analysis.levelset {
        code = code.max(levelset(ctx, cfg, out).unwrap_or_else(|e| ctx.fail(&e)));
    }
    if cfg.analysis.rates {
        code = code.max(rates(ctx, cfg, out, Some(&traj)).unwrap_or_else(|e| ctx.fail(&e)));
    }
    Ok(code)
}

#[derive(Serialize)]
struct CertificateFile<'a> {
    potential: &'a str,
    seed: u64,
    gamma: f64,
    #[serde(rename = "R")]
    radius: f64,
    #[serde(rename = "M")]
    m: f64,
    lambda_zero: f64,
    lambda_one: f64,
    lambda_star: f64,
    lambda: f64,
    /// Absent when `lambda` lies outside `(0, λ₀)`.
    alpha0: Option<f64>,
    #[serde(rename = "C")]
    c: f64,
    alpha_certified: Option<f64>,
    alpha_sampled: f64,
    max_gradient_field_ratio: f64,
    sample_count: usize,
    rest_point_equivalence_checked: bool,
    asfast: Option<AsfastBound>,
    valid: bool,
}

fn certify(ctx: &Ctx, cfg: &RunConfig, out: &Path) -> Result<u8, Error> {
    let spec = &cfg.potential.spec;
    let gamma = cfg.dynamics.gamma;
    let radius = cfg.certify.radius.unwrap_or(1.0);
    let budget = cfg.certify.budget;
    let m = hessian_bound(spec, radius, budget, cfg.seed)?.m;
    let lam = cfg.certify.lambda.unwrap_or_else(|| lambda_star(gamma, m));
    let de = DeformedEnergy::new(spec.clone(), gamma, lam)?;
    let sample = sample_angle(&de, radius, budget, cfg.seed)?;
    let alpha0 = alpha_quadratic_bound(gamma, m, lam).ok();
    let c = norm_product_constant(gamma, m, lam);
    let asfast = if lam > 0.0 {
        Some(asfast_bound(&de, radius, budget, cfg.seed)?)
    } else {
        None
    };
    let valid = sample.min_cosine > 0.0 && sample.rest_point_equivalence_checked;
    let file = CertificateFile {
        potential: &cfg.potential.name,
        seed: cfg.seed,
        gamma,
        radius,
        m,
        lambda_zero: lambda_zero(gamma, m),
        lambda_one: lambda_one(m),
        lambda_star: lambda_star(gamma, m),
        lambda: lam,
        alpha0,
        c,
        alpha_certified: alpha0.map(|a| a / c),
        alpha_sampled: sample.min_cosine,
        max_gradient_field_ratio: sample.max_ratio,
        sample_count: sample.sample_count,
        rest_point_equivalence_checked: sample.rest_point_equivalence_checked,
        asfast,
        valid,
    };
    write_json(&out.join("certificate.json"), &file)?;
    if valid {
        ctx.say(format!("certificate valid: lambda = {lam}, alpha_sampled = {}", sample.min_cosine));
        Ok(EXIT_OK)
    } else {
        eprintln!(
            "[{}] certificate failed: lambda = {lam}, alpha_sampled = {}, rest points equivalent: {}",
            ctx.label, sample.min_cosine, sample.rest_point_equivalence_checked
        );
        Ok(EXIT_FAILURE)
    }
}

fn levelset(ctx: &Ctx, cfg: &RunConfig, out: &Path) -> Result<u8, Error> {
    let spec = &cfg.potential.spec;
    let bar = match (&cfg.levelset.center, &spec.known_critical_point) {
        (Some(c), _) => DVector::from_column_slice(c),
        (None, Some(k)) => k.clone(),
        (None, None) => {
            return Err(Error::Config(format!(
                "levelset.center: required, `{}` has no known critical point",
                cfg.potential.name
            )))
        }
    };
    let ls = &cfg.levelset;
    let profile = psi_profile(spec, &bar, ls.r_hi, ls.r_lo, ls.points_per_decade, &ls.options)?;
    write_text(&out.join("psi_profile.csv"), &profile_csv(&profile))?;
    ctx.say(format!(
        "psi profile {}: ratio_max = {}, {} of {} levels solved",
        profile.verdict(),
        profile.ratio_max,
        profile.valid_indices().len(),
        profile.r_grid.len()
    ));
    Ok(EXIT_OK)
}

fn rates(ctx: &Ctx, cfg: &RunConfig, out: &Path, traj: Option<&Trajectory>) -> Result<u8, Error> {
    let spec = &cfg.potential.spec;
    let owned;
    let traj = match traj {
        Some(t) => t,
        None => {
            owned = integrate(spec, &cfg.dynamics, &cfg.initial)?;
            &owned
        }
    };
    let opts = &cfg.rates.options;
    let mut report = analyze(spec, cfg.dynamics.gamma, traj, cfg.rates.phi.clone(), opts)?;
    if cfg.analysis.exponent && report.theta_hat.is_none() {
        if let Some(limit) = &report.limit_point {
            let limit = DVector::from_column_slice(limit);
            let pairs = lojasiewicz_pairs(spec, traj, &limit);
            if let Ok((_, fit)) = desingularizer_from_pairs(&pairs, opts.exponent_window) {
                report.theta_hat = Some(fit.theta_hat);
                report.exponent_fit = Some(fit);
            }
        }
    }
    write_json(&out.join("rate_report.json"), &report)?;
    let row = report.summary_row().join(",");
    write_text(&out.join(RUN_SUMMARY), &format!("{SUMMARY_HEADER}\n{row}\n"))?;
    ctx.say(&row);
    Ok(EXIT_OK)
}

fn collect_summaries(dir: &Path, found: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            collect_summaries(&p, found)?;
        } else if p.file_name().is_some_and(|n| n == RUN_SUMMARY) {
            found.push(p);
        }
    }
    Ok(())
}

fn report(cli: &Cli) -> u8 {
    let root = cli.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_ROOT));
    let mut inputs = Vec::new();
    match &cli.batch {
        Some(pattern) => match glob::glob(pattern) {
            Ok(paths) => {
                for p in paths.flatten() {
                    if p.is_dir() {
                        let f = p.join(RUN_SUMMARY);
                        if f.is_file() {
                            inputs.push(f);
                        }
                    } else if p.is_file() {
                        inputs.push(p);
                    }
                }
            }
            Err(e) => {
                eprintln!("error: --batch: {e}");
                return EXIT_CONFIG;
            }
        },
        None => {
            if let Err(e) = collect_summaries(&root, &mut inputs) {
                eprintln!("error: cannot scan {}: {e}", root.display());
                return EXIT_CONFIG;
            }
        }
    }
    inputs.sort();
    if inputs.is_empty() {
        eprintln!("error: no {RUN_SUMMARY} files found");
        return EXIT_CONFIG;
    }
    let mut merged = format!("{SUMMARY_HEADER}\n");
    for p in &inputs {
        let text = match std::fs::read_to_string(p) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("error: cannot read {}: {e}", p.display());
                return EXIT_CONFIG;
            }
        };
        let mut lines = text.lines();
        if lines.next() != Some(SUMMARY_HEADER) {
            eprintln!("error: {}: unexpected header", p.display());
            return EXIT_CONFIG;
        }
        for l in lines.filter(|l| !l.trim().is_empty()) {
            merged.push_str(l);
            merged.push('\n');
        }
    }
    let dest = root.join(MERGED_SUMMARY);
    if let Err(e) = write_text(&dest, &merged) {
        eprintln!("error: {e}");
        return EXIT_CONFIG;
    }
    if !cli.quiet {
        println!("merged {} runs into {}", inputs.len(), dest.display());
    }
    EXIT_OK
}
