//! Run configuration: one JSON document per experiment.

use std::path::PathBuf;
use std::sync::Arc;

use csav::grid::{make_grid, PeriodicGrid};
use csav::harness::{InitialCondition, ReferenceSpec};
use csav::integrators::{Scheme, SchemeConfig};
use csav::models::{self, ModelSpec};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

fn default_s() -> f64 {
    4.0
}

/// Model family and parameters, tagged by `name`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelBlock {
    AllenCahn {
        eps: f64,
        lambda: f64,
        #[serde(default = "default_s")]
        s: f64,
    },
    /// The Allen-Cahn double well split into two independently stabilized terms.
    AllenCahnTwoTerm {
        eps: f64,
        lambda: f64,
        #[serde(default = "default_s")]
        s: f64,
    },
    CahnHilliard {
        eps: f64,
        lambda: f64,
        #[serde(default = "default_s")]
        s: f64,
    },
    Mbe {
        eps2: f64,
        #[serde(default = "default_s")]
        s: f64,
    },
    Pfc {
        a0: f64,
        b0: f64,
        #[serde(default = "one")]
        lambda: f64,
        #[serde(default)]
        s: f64,
    },
    Diblock {
        eps: f64,
        #[serde(default = "one")]
        lambda: f64,
        sigma: f64,
        phi_mean: f64,
        #[serde(default = "default_s")]
        s: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl ModelBlock {
    pub fn build(&self, grid: &Arc<PeriodicGrid>) -> Result<ModelSpec, CliError> {
        let model = match *self {
            ModelBlock::AllenCahn { eps, lambda, s } => models::build_allen_cahn(eps, lambda, s, grid),
            ModelBlock::AllenCahnTwoTerm { eps, lambda, s } => models::allen_cahn_two_term(eps, lambda, s, grid),
            ModelBlock::CahnHilliard { eps, lambda, s } => models::build_cahn_hilliard(eps, lambda, s, grid),
            ModelBlock::Mbe { eps2, s } => models::build_mbe(eps2, s, grid),
            ModelBlock::Pfc { a0, b0, lambda, s } => models::build_pfc(a0, b0, lambda, s, grid),
            ModelBlock::Diblock {
                eps,
                lambda,
                sigma,
                phi_mean,
                s,
            } => models::build_diblock(eps, lambda, sigma, phi_mean, s, grid),
        };
        model.map_err(|e| CliError::Validation(format!("model: {e}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
}

fn default_decimation() -> usize {
    1
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    /// Run directory name under the output root; a timestamped name is used
    /// when absent.
    #[serde(default)]
    pub directory: Option<PathBuf>,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    /// Keep every n-th trace record (the last one is always kept).
    #[serde(default = "default_decimation")]
    pub decimation: usize,
    #[serde(default = "yes")]
    pub snapshot_csv: bool,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            directory: None,
            snapshot_times: Vec::new(),
            decimation: 1,
            snapshot_csv: true,
        }
    }
}

fn default_slack() -> f64 {
    1e-10
}

/// Settings for the subcommands. Fields a command does not use are ignored
/// by it but still validated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentBlock {
    pub t_final: f64,
    /// Step sizes for `converge` and for the stability part of `sweep`.
    #[serde(default)]
    pub dt_list: Vec<f64>,
    /// α values for `converge` and for the α part of `sweep`.
    #[serde(default)]
    pub alpha_list: Vec<f64>,
    /// Schemes for `compare`.
    #[serde(default)]
    pub schemes: Vec<Scheme>,
    #[serde(default)]
    pub reference: ReferenceSpec,
    /// Step of the accurate-energy baseline used by `compare`.
    #[serde(default)]
    pub reference_dt: Option<f64>,
    #[serde(default = "default_slack")]
    pub rel_slack: f64,
    #[serde(default)]
    pub expect: Expectations,
}

/// Optional pass/fail checks; each one that is set becomes an assertion.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectations {
    #[serde(default)]
    pub order_range: Option<[f64; 2]>,
    #[serde(default)]
    pub alpha_ratio_range: Option<[f64; 2]>,
    #[serde(default)]
    pub energy_monotone: bool,
    #[serde(default)]
    pub max_r_deviation: Option<f64>,
    #[serde(default)]
    pub max_mass_drift: Option<f64>,
    #[serde(default)]
    pub csav_closest: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub description: Option<String>,
    pub model: ModelBlock,
    pub scheme: SchemeConfig,
    pub grid: GridBlock,
    pub initial: InitialCondition,
    #[serde(default)]
    pub output: OutputBlock,
    pub experiment: ExperimentBlock,
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Validation(msg()))
    }
}

fn positive_list(name: &str, values: &[f64]) -> Result<(), CliError> {
    for v in values {
        check(v.is_finite() && *v > 0.0, || format!("{name} entries must be positive, got {v}"))?;
    }
    Ok(())
}

impl RunConfig {
    pub fn from_value(value: Value) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_value(value).map_err(|e| CliError::Validation(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// Checks that do not need the grid or model to be built.
    pub fn validate(&self) -> Result<(), CliError> {
        self.scheme
            .validate()
            .map_err(|e| CliError::Validation(format!("scheme: {e}")))?;
        let e = &self.experiment;
        check(e.t_final.is_finite() && e.t_final > 0.0, || {
            format!("experiment.t_final must be positive, got {}", e.t_final)
        })?;
        positive_list("experiment.dt_list", &e.dt_list)?;
        for a in &e.alpha_list {
            check(a.is_finite() && *a >= 0.0, || {
                format!("experiment.alpha_list entries must be non-negative, got {a}")
            })?;
        }
        if let Some(dt) = e.reference_dt {
            positive_list("experiment.reference_dt", &[dt])?;
        }
        check(e.reference.dt_divisor >= 1, || "experiment.reference.dt_divisor must be at least 1".into())?;
        check(e.rel_slack >= 0.0, || "experiment.rel_slack must be non-negative".into())?;
        check(self.output.decimation >= 1, || "output.decimation must be at least 1".into())?;
        for t in &self.output.snapshot_times {
            check(*t >= 0.0 && *t <= e.t_final * (1.0 + 1e-12), || {
                format!("output.snapshot_times entry {t} lies outside [0, t_final]")
            })?;
        }
        check(self.grid.nx > 0 && self.grid.ny > 0, || "grid needs nx, ny > 0".into())
    }

    pub fn build(&self) -> Result<(Arc<PeriodicGrid>, ModelSpec), CliError> {
        let g = &self.grid;
        let grid = make_grid(g.lx, g.ly, g.nx, g.ny).map_err(|e| CliError::Validation(format!("grid: {e}")))?;
        let model = self.model.build(&grid)?;
        Ok((grid, model))
    }
}

/// Applies `a.b.c=value` overrides. The value is parsed as JSON when it
/// can be and taken as a string otherwise; missing keys are created so the
/// schema check can reject typos.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Validation(format!("override `{assignment}` is not of the form key.path=value")))?;
    let keys: Vec<&str> = path.split('.').map(str::trim).collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Validation(format!("override path `{path}` has an empty segment")));
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
    let mut node = doc;
    for (i, key) in keys.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| CliError::Validation(format!("override `{path}`: `{}` is not an object", keys[..i].join("."))))?;
        if i + 1 == keys.len() {
            obj.insert((*key).to_string(), value);
            return Ok(());
        }
        node = obj
            .entry((*key).to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("path has at least one segment")
}
