//! The four subcommands. Each validates its configuration and output
//! directory before doing any work and returns an exit status.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use urnsa_core::asymptotics::{asymptotics, AsymptoticsBundle};
use urnsa_core::models::ModelSpec;
use urnsa_core::montecarlo::{map_replications, run_replications, run_path, EnsembleStats, ReplicationPlan};
use urnsa_core::oracle::{enumerate_exact, Arithmetic};
use urnsa_core::validate::{run_acceptance, AcceptanceOptions, AcceptanceReport, ALL_CRITERIA};
use urnsa_core::{Error, Result};

use crate::config::{Format, RunConfig};
use crate::io::{prepare_output_dir, trajectory_file, write_json, write_trajectory_csv, Manifest, FIGURE1_RECIPE};

/// Environment variable that overrides the configured worker count.
pub const WORKERS_ENV: &str = "URNSA_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    ValidationFailure = 1,
    ConfigError = 2,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }

    /// Configuration, schema and size-guard problems map to 2, the rest to 1.
    pub fn for_error(e: &Error) -> Self {
        match e {
            Error::Config(_) | Error::Input(_) | Error::SizeGuard(_) | Error::UnsupportedSize(_) => {
                ExitStatus::ConfigError
            }
            _ => ExitStatus::ValidationFailure,
        }
    }
}

#[derive(Debug)]
pub struct Outcome {
    pub status: ExitStatus,
    pub files: Vec<PathBuf>,
    pub message: String,
}

/// Worker count from the environment override, else the configuration.
pub fn resolve_workers(cfg: &RunConfig) -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(0) | Err(_) => Err(Error::Config(format!("{WORKERS_ENV} must be a positive integer, got '{v}'"))),
            Ok(n) => Ok(Some(n)),
        },
        Err(_) => Ok(cfg.simulate.workers),
    }
}

fn config_value(cfg: &RunConfig) -> Value {
    serde_json::to_value(cfg).unwrap_or(Value::Null)
}

/// Trajectory CSVs plus a JSON manifest.
pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    cfg.validate()?;
    let model = cfg.model.build()?;
    let workers = resolve_workers(cfg)?;
    prepare_output_dir(out)?;
    let s = &cfg.simulate;
    let checkpoints = s.checkpoints();
    let d = model.arms();
    let write_csv = cfg.output.formats.contains(&Format::Csv);
    let mut files = Vec::new();
    let mut extinct = Vec::new();
    const CHUNK: usize = 64;
    for start in (0..s.replications).step_by(CHUNK) {
        let len = CHUNK.min(s.replications - start);
        let chunk = map_replications(len, workers, |i| {
            let r = start as u64 + i;
            (r, run_path(&model, s.seed, r, s.horizon, &checkpoints))
        })?;
        for (r, res) in chunk {
            match res {
                Ok(path) => {
                    if write_csv {
                        let f = trajectory_file(out, r);
                        write_trajectory_csv(&f, d, &path)?;
                        files.push(f);
                    }
                }
                Err(Error::Extinction { .. }) => extinct.push(r),
                Err(e) => return Err(e),
            }
        }
    }
    let manifest = Manifest {
        tool: "urnsa",
        version: env!("CARGO_PKG_VERSION"),
        command: "simulate",
        preset: cfg.preset.clone(),
        seed: s.seed,
        config: config_value(cfg),
        files: files
            .iter()
            .filter_map(|f| f.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect(),
        extinct_replications: extinct,
        plotting_recipe: (cfg.preset.as_deref() == Some("figure1")).then(|| FIGURE1_RECIPE.to_string()),
    };
    let mpath = out.join("manifest.json");
    write_json(&mpath, &manifest)?;
    files.push(mpath);
    Ok(Outcome {
        status: ExitStatus::Success,
        message: format!("wrote {} file(s) to {}", files.len(), out.display()),
        files,
    })
}

#[derive(Debug, Serialize)]
struct AsymptoticsReport<'a> {
    model: &'a str,
    d: usize,
    v_star: &'a [f64],
    /// `θ*` for the `(Ỹ, Ñ)` theorem, `θ̃*` for the success-rate driven design.
    theta_star: &'a [f64],
    spectrum_h: Vec<[f64; 2]>,
    regime: String,
    lambda_max: [f64; 2],
    #[serde(rename = "Lambda")]
    lambda: f64,
    beta: Option<f64>,
    gamma: &'a urnsa_core::spectral::Matrix,
    dh: &'a urnsa_core::spectral::Matrix,
    sigma: Option<&'a urnsa_core::spectral::Matrix>,
    sigma_omitted: Option<&'a str>,
    #[serde(rename = "gamma_H", skip_serializing_if = "Option::is_none")]
    gamma_h: Option<&'a urnsa_core::spectral::Matrix>,
    assumption_status: BTreeMap<String, String>,
    assumptions: Value,
    two_block: Option<Value>,
}

fn asymptotics_report(model: &ModelSpec, b: &AsymptoticsBundle) -> Result<Value> {
    let assumptions = serde_json::to_value(&b.assumptions)?;
    let assumption_status = assumptions
        .as_object()
        .map(|o| {
            o.iter()
                .map(|(k, v)| (k.clone(), v["status"].as_str().unwrap_or("").to_string()))
                .collect()
        })
        .unwrap_or_default();
    let regime = serde_json::to_value(b.regime)?.as_str().unwrap_or("").to_string();
    let two_block = |b: &AsymptoticsBundle| {
        json!({ "theta_star": b.theta_star, "gamma": b.gamma, "dh": b.dh_star, "sigma": b.sigma })
    };
    let report = match &b.extended {
        Some(ext) => AsymptoticsReport {
            model: model.kind().as_str(),
            d: b.d,
            v_star: &b.v_star,
            theta_star: &ext.theta_tilde_star,
            spectrum_h: b.spectrum_h.eigenvalues.iter().map(|z| [z.re, z.im]).collect(),
            regime,
            lambda_max: [b.lambda_max.re, b.lambda_max.im],
            lambda: b.lambda,
            beta: b.beta,
            gamma: &ext.gamma_tilde,
            dh: &ext.dh_tilde_star,
            sigma: ext.sigma_tilde.as_ref(),
            sigma_omitted: b.sigma_omitted.as_deref(),
            gamma_h: ext.gamma_h.as_ref(),
            assumption_status,
            assumptions,
            two_block: Some(two_block(b)),
        },
        None => AsymptoticsReport {
            model: model.kind().as_str(),
            d: b.d,
            v_star: &b.v_star,
            theta_star: &b.theta_star,
            spectrum_h: b.spectrum_h.eigenvalues.iter().map(|z| [z.re, z.im]).collect(),
            regime,
            lambda_max: [b.lambda_max.re, b.lambda_max.im],
            lambda: b.lambda,
            beta: b.beta,
            gamma: &b.gamma,
            dh: &b.dh_star,
            sigma: b.sigma.as_ref(),
            sigma_omitted: b.sigma_omitted.as_deref(),
            gamma_h: None,
            assumption_status,
            assumptions,
            two_block: None,
        },
    };
    Ok(serde_json::to_value(report)?)
}

/// JSON report of the limit objects, or an error report when they do not exist.
pub fn asymptotics_cmd(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    cfg.validate()?;
    let model = cfg.model.build()?;
    prepare_output_dir(out)?;
    let path = out.join("asymptotics.json");
    match asymptotics(&model) {
        Ok(b) => {
            write_json(&path, &asymptotics_report(&model, &b)?)?;
            Ok(Outcome {
                status: ExitStatus::Success,
                message: format!("wrote {}", path.display()),
                files: vec![path],
            })
        }
        Err(e) => {
            let status = ExitStatus::for_error(&e);
            write_json(&path, &json!({ "model": model.kind().as_str(), "error": e.to_string() }))?;
            Ok(Outcome {
                status,
                message: e.to_string(),
                files: vec![path],
            })
        }
    }
}

#[derive(Debug, Serialize)]
struct ValidationReport {
    version: &'static str,
    acceptance: AcceptanceReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    ensemble: Option<EnsembleStats>,
    all_pass: bool,
}

/// Acceptance criteria, plus an optional ensemble of the configured model.
pub fn validate_cmd(cfg: &RunConfig, out: &Path, quick_flag: bool) -> Result<Outcome> {
    cfg.validate()?;
    let model = cfg.model.build()?;
    let workers = resolve_workers(cfg)?;
    prepare_output_dir(out)?;
    let opts = AcceptanceOptions {
        quick: cfg.validate.quick || quick_flag,
        workers,
        ..AcceptanceOptions::default()
    };
    let selection = if cfg.validate.criteria.is_empty() {
        ALL_CRITERIA.to_vec()
    } else {
        cfg.validate.criteria.clone()
    };
    let acceptance = run_acceptance(&opts, &selection)?;
    let ensemble = if cfg.validate.statistics.is_empty() {
        None
    } else {
        let s = &cfg.simulate;
        let plan = ReplicationPlan::new(s.horizon, s.replications, s.checkpoints(), s.seed)
            .with_statistics(&cfg.validate.statistics)
            .with_workers(workers);
        Some(run_replications(&model, &plan)?)
    };
    let mut message: Vec<String> = acceptance.criteria.iter().map(|c| c.summary()).collect();
    let all_pass = acceptance.all_pass;
    let report = ValidationReport {
        version: env!("CARGO_PKG_VERSION"),
        acceptance,
        ensemble,
        all_pass,
    };
    let path = out.join("validation.json");
    write_json(&path, &report)?;
    message.push(format!("wrote {}", path.display()));
    Ok(Outcome {
        status: if all_pass { ExitStatus::Success } else { ExitStatus::ValidationFailure },
        files: vec![path],
        message: message.join("\n"),
    })
}

/// Exact law of the configured design at `simulate.horizon`.
pub fn oracle_cmd(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    cfg.validate()?;
    let model = cfg.model.build()?;
    prepare_output_dir(out)?;
    let n = cfg.simulate.horizon;
    let law = enumerate_exact(&model, n, Arithmetic::auto(model.arms(), n))?;
    let path = out.join("exact_law.json");
    write_json(&path, &law)?;
    Ok(Outcome {
        status: ExitStatus::Success,
        message: format!(
            "{} merged outcome(s), {} path(s), mass {}; wrote {}",
            law.outcomes.len(),
            law.paths,
            law.total_mass,
            path.display()
        ),
        files: vec![path],
    })
}
