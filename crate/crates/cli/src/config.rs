use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use survseg::{FamilyKind, FitConfig, Kernel, PriorSpec, Schema};

use crate::args::{DataArgs, ModelArgs};
use crate::error::CliError;

/// Keys accepted in a `--config` TOML file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub family: Option<FamilyKind>,
    pub k: Option<usize>,
    pub k_max: Option<usize>,
    pub order_col: Option<String>,
    pub time_col: Option<String>,
    pub event_col: Option<String>,
    pub entry_col: Option<String>,
    pub covariates: Option<Vec<String>>,
    pub cuts: Option<Vec<f64>>,
    pub bandwidth: Option<f64>,
    pub kernel: Option<Kernel>,
    pub eta: Option<f64>,
    pub forbid_ties: Option<bool>,
    pub init_w: Option<f64>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub seed: Option<u64>,
    pub replicates: Option<usize>,
    pub level: Option<f64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {}", path.display(), e.message())))
    }
}

/// Settings after merging flags over the config file over defaults.
#[derive(Debug, Serialize)]
pub struct Effective {
    pub input: PathBuf,
    pub schema: Schema,
    pub fit: FitConfig,
    pub prior: PriorSpec,
}

pub fn resolve(data: &DataArgs, model: &ModelArgs, file: &FileConfig, k: Option<usize>) -> Effective {
    let d = Schema::default();
    let schema = Schema {
        time: data.time_col.clone().or(file.time_col.clone()).unwrap_or(d.time),
        event: data.event_col.clone().or(file.event_col.clone()).unwrap_or(d.event),
        entry: data.entry_col.clone().or(file.entry_col.clone()),
        order_key: data.order_col.clone().or(file.order_col.clone()),
        covariates: data.covariates.clone().or(file.covariates.clone()).unwrap_or_default(),
    };
    let family = model.family.map(FamilyKind::from).or(file.family).unwrap_or(FamilyKind::Exponential);
    let mut fit = FitConfig::new(family, k.or(file.k).unwrap_or(2));
    if let Some(v) = file.init_w {
        fit.init_w = v;
    }
    if let Some(v) = model.tol.or(file.tol) {
        fit.tol = v;
    }
    if let Some(v) = model.max_iter.or(file.max_iter) {
        fit.max_iter = v;
    }
    if let Some(v) = model.seed.or(file.seed) {
        fit.seed = v;
    }
    if let Some(v) = file.kernel {
        fit.kernel = v;
    }
    fit.bandwidth = model.bandwidth.or(file.bandwidth);
    fit.cuts = model.cuts.clone().or(file.cuts.clone());
    let mut prior = PriorSpec::default();
    if let Some(v) = model.eta.or(file.eta) {
        prior.base_eta = v;
    }
    prior.forbid_ties = model.forbid_ties || file.forbid_ties.unwrap_or(false);
    Effective { input: data.input.clone(), schema, fit, prior }
}
