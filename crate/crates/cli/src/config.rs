//! Run configuration: schema, defaults and presets.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use urnsa_core::models::{
    bhs_model, homogeneous_model, removal_model, wei_model, ColumnDistribution, ModelSpec,
};
use urnsa_core::montecarlo::Statistic;
use urnsa_core::validate::ACCEPTANCE_SEED;
use urnsa_core::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKindConfig {
    Wei,
    Bhs,
    Homogeneous,
    Removal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKindConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<f64>>,
    /// Initial composition; defaults to `1/d` per arm, i.e. `(0.5, 0.5)` for two arms.
    #[serde(rename = "Y0", default, skip_serializing_if = "Option::is_none")]
    pub y0: Option<Vec<f64>>,
    /// Initial allocation counts; defaults to one per arm.
    #[serde(rename = "N0", default, skip_serializing_if = "Option::is_none")]
    pub n0: Option<Vec<u64>>,
    /// Initial success counts; defaults to one per arm.
    #[serde(rename = "S0", default, skip_serializing_if = "Option::is_none")]
    pub s0: Option<Vec<u64>>,
    /// Balance of tabulated designs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column_distributions: Option<Vec<ColumnDistribution>>,
    /// Lattice constants of a removal design.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice: Option<Vec<f64>>,
}

impl ModelConfig {
    pub fn build(&self) -> Result<ModelSpec> {
        let need_p = || {
            self.p
                .clone()
                .ok_or_else(|| Error::Config(format!("model kind {:?} needs p", self.kind)))
        };
        let need_cols = || {
            self.column_distributions
                .clone()
                .ok_or_else(|| Error::Config("tabulated designs need column_distributions".into()))
        };
        let mut model = match self.kind {
            ModelKindConfig::Wei => wei_model(&need_p()?)?,
            ModelKindConfig::Bhs => {
                let p = need_p()?;
                let y0 = self
                    .y0
                    .clone()
                    .unwrap_or_else(|| urnsa_core::models::default_y0(p.len()));
                bhs_model(&p, &y0)?
            }
            ModelKindConfig::Homogeneous => homogeneous_model(need_cols()?, self.c.unwrap_or(1.0))?,
            ModelKindConfig::Removal => {
                let lattice = self
                    .lattice
                    .clone()
                    .ok_or_else(|| Error::Config("removal designs need lattice constants".into()))?;
                removal_model(need_cols()?, self.c.unwrap_or(1.0), lattice)?
            }
        };
        if let Some(y0) = &self.y0 {
            model = model.with_y0(y0)?;
        }
        if self.n0.is_some() || self.s0.is_some() {
            let d = model.arms();
            let n0 = self.n0.clone().unwrap_or_else(|| vec![1; d]);
            let s0 = self.s0.clone().unwrap_or_else(|| vec![1; d]);
            model = model.with_initial_counts(&n0, &s0)?;
        }
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default = "default_horizon")]
    pub horizon: u64,
    /// Recorded steps; every step `1..=horizon` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<Vec<u64>>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

fn default_horizon() -> u64 {
    2000
}
fn default_seed() -> u64 {
    ACCEPTANCE_SEED
}
fn default_replications() -> usize {
    1
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            horizon: default_horizon(),
            checkpoints: None,
            seed: default_seed(),
            replications: default_replications(),
            workers: None,
        }
    }
}

impl SimulateConfig {
    pub fn checkpoints(&self) -> Vec<u64> {
        self.checkpoints
            .clone()
            .unwrap_or_else(|| (1..=self.horizon).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ValidateConfig {
    /// Acceptance criteria to run; all nine when empty.
    #[serde(default)]
    pub criteria: Vec<u8>,
    /// Reduced replication counts with widened tolerances.
    #[serde(default)]
    pub quick: bool,
    /// Statistics for an extra ensemble of the configured model; none when empty.
    #[serde(default)]
    pub statistics: Vec<Statistic>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_directory() -> PathBuf {
    PathBuf::from("out")
}
fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: default_directory(),
            formats: default_formats(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Preset name this configuration was derived from, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub model: ModelConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub validate: ValidateConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

pub const PRESETS: [&str; 5] = ["figure1", "wei-clt", "bhs-clt", "regime-b", "regime-c"];

fn bernoulli(kind: ModelKindConfig, p: &[f64]) -> ModelConfig {
    ModelConfig {
        kind,
        p: Some(p.to_vec()),
        y0: None,
        n0: None,
        s0: None,
        c: None,
        column_distributions: None,
        lattice: None,
    }
}

/// Quarter-decade checkpoints `10^(lo + k/4)` up to `top`.
fn geometric(lo: f64, top: u64) -> Vec<u64> {
    (0..)
        .map(|k| 10f64.powf(lo + k as f64 / 4.0).round() as u64)
        .take_while(|&n| n <= top)
        .collect()
}

impl RunConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let base = |model, simulate, statistics| RunConfig {
            preset: Some(name.to_string()),
            model,
            simulate,
            validate: ValidateConfig {
                statistics,
                ..ValidateConfig::default()
            },
            output: OutputConfig::default(),
        };
        let ensemble = |horizon, replications, checkpoints| SimulateConfig {
            horizon,
            checkpoints: Some(checkpoints),
            seed: ACCEPTANCE_SEED,
            replications,
            workers: None,
        };
        Ok(match name {
            "figure1" => {
                let mut m = bernoulli(ModelKindConfig::Bhs, &[0.5, 0.7]);
                m.y0 = Some(vec![0.5, 0.5]);
                m.n0 = Some(vec![1, 1]);
                m.s0 = Some(vec![1, 1]);
                base(m, SimulateConfig::default(), vec![])
            }
            "wei-clt" => base(
                bernoulli(ModelKindConfig::Wei, &[0.5, 0.7]),
                ensemble(10_000, 10_000, vec![10_000]),
                vec![Statistic::Consistency, Statistic::Clt],
            ),
            "bhs-clt" => base(
                bernoulli(ModelKindConfig::Bhs, &[0.5, 0.6, 0.7]),
                ensemble(10_000, 10_000, vec![10_000]),
                vec![Statistic::Clt, Statistic::GammaH],
            ),
            "regime-b" => base(
                bernoulli(ModelKindConfig::Wei, &[0.7, 0.8]),
                ensemble(1_000_000, 200, geometric(3.0, 1_000_000)),
                vec![Statistic::RegimeB],
            ),
            "regime-c" => base(
                bernoulli(ModelKindConfig::Wei, &[0.9, 0.8]),
                ensemble(1_000_000, 200, geometric(3.0, 1_000_000)),
                vec![Statistic::RegimeC],
            ),
            other => {
                return Err(Error::Config(format!(
                    "unknown preset '{other}' (expected one of {})",
                    PRESETS.join(", ")
                )))
            }
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("schema: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Schema-level checks run before any work starts.
    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        let model = self.model.build().map_err(|e| match e {
            Error::Config(m) => Error::Config(m),
            other => Error::Config(format!("model: {other}")),
        })?;
        let s = &self.simulate;
        if s.replications == 0 {
            return cfg("simulate.replications must be at least 1".into());
        }
        if s.workers == Some(0) {
            return cfg("simulate.workers must be positive".into());
        }
        if let Some(cps) = &s.checkpoints {
            if cps.iter().any(|&n| n == 0 || n > s.horizon) || cps.windows(2).any(|w| w[0] >= w[1]) {
                return cfg("simulate.checkpoints must be strictly increasing within 1..=horizon".into());
            }
        }
        if let Some(bad) = self.validate.criteria.iter().find(|c| !(1..=9).contains(*c)) {
            return cfg(format!("validate.criteria: no criterion {bad}"));
        }
        if self.output.formats.is_empty() {
            return cfg("output.formats must not be empty".into());
        }
        let _ = model;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_validates() {
        for name in PRESETS {
            let cfg = RunConfig::preset(name).unwrap();
            cfg.validate().unwrap();
            let text = serde_json::to_string(&cfg).unwrap();
            assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
        }
    }

    #[test]
    fn figure1_defaults() {
        let cfg = RunConfig::preset("figure1").unwrap();
        let m = cfg.model.build().unwrap();
        assert_eq!(m.y0(), &[0.5, 0.5]);
        assert_eq!(m.n0(), &[1, 1]);
        assert_eq!(cfg.simulate.horizon, 2000);
        assert_eq!(cfg.simulate.replications, 1);
    }

    #[test]
    fn unknown_statistic_is_a_schema_error() {
        let text = r#"{"model": {"kind": "wei", "p": [0.5, 0.7]}, "validate": {"statistics": ["clt", "kurtosis"]}}"#;
        let err = RunConfig::from_json(text).unwrap_err();
        assert!(matches!(err, Error::Config(ref m) if m.contains("schema")), "{err}");
    }

    #[test]
    fn unknown_field_is_rejected() {
        let text = r#"{"model": {"kind": "wei", "p": [0.5, 0.7], "gamma": 1}}"#;
        assert!(RunConfig::from_json(text).is_err());
    }

    #[test]
    fn bad_checkpoints_rejected() {
        let text = r#"{"model": {"kind": "wei", "p": [0.5, 0.7]}, "simulate": {"horizon": 10, "checkpoints": [5, 20]}}"#;
        assert!(matches!(RunConfig::from_json(text), Err(Error::Config(_))));
    }

    #[test]
    fn geometric_grid() {
        assert_eq!(geometric(3.0, 10_000), vec![1000, 1778, 3162, 5623, 10_000]);
    }
}
