//! EM driver: alternates weighted M-steps with exact forward-backward E-steps.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::baseline::smoothing::default_bandwidth;
use crate::baseline::{
    default_cuts, emission_table, mstep, FamilyKind, Kernel, MStepSettings, StepCumulativeHazard,
    ThetaParams,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::hmm::{self, MapBreakpoint, PosteriorTables};
use crate::prior::SegmentationPrior;
use crate::selection::{aic, bic, model_dimension};

/// Decreases of the log-likelihood trace larger than this are flagged.
pub const TRACE_DECREASE_FLAG: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub family: FamilyKind,
    pub segments: usize,
    /// Initial weight of a subject for its own block, in (0.5, 1).
    pub init_w: f64,
    pub max_iter: usize,
    /// Relative log-likelihood change that stops the iterations.
    pub tol: f64,
    /// Smoothing bandwidth (Cox family); defaults to `n^(-1/5)`.
    pub bandwidth: Option<f64>,
    /// Interval cuts (pch family); defaults to the event-time quartiles.
    pub cuts: Option<Vec<f64>>,
    pub kernel: Kernel,
    pub seed: u64,
}

impl FitConfig {
    pub fn new(family: FamilyKind, segments: usize) -> Self {
        Self {
            family,
            segments,
            init_w: 0.7,
            max_iter: 500,
            tol: 1e-8,
            bandwidth: None,
            cuts: None,
            kernel: Kernel::Epanechnikov,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments == 0 {
            return Err(Error::InvalidConfig("segments must be at least 1".into()));
        }
        if !(self.init_w > 0.5 && self.init_w < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "init_w must lie in (0.5, 1), got {}",
                self.init_w
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        if let Some(h) = self.bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::InvalidBandwidth(h));
            }
        }
        if let Some(c) = &self.cuts {
            crate::baseline::validate_cuts(c)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitResult {
    pub family: FamilyKind,
    pub theta: ThetaParams,
    #[serde(skip)]
    pub posteriors: PosteriorTables,
    pub log_lik: f64,
    /// Absent for the Cox family.
    pub bic: Option<f64>,
    pub aic: Option<f64>,
    pub dimension: Option<usize>,
    pub map_breakpoints: Vec<MapBreakpoint>,
    pub trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Iterations whose log-likelihood dropped by more than [`TRACE_DECREASE_FLAG`].
    pub flagged_decreases: Vec<usize>,
    /// Unsmoothed weighted Breslow steps (Cox family).
    #[serde(skip)]
    pub breslow: Option<Vec<StepCumulativeHazard>>,
    pub cuts: Option<Vec<f64>>,
    pub bandwidth: Option<f64>,
    pub n: usize,
    pub p: usize,
}

impl FitResult {
    pub fn weights(&self) -> &Array2<f64> {
        &self.posteriors.weights
    }

    pub fn segments(&self) -> usize {
        self.theta.segments()
    }
}

/// Block initialization: `n` positions split into `segments` contiguous
/// blocks (the first `n % segments` blocks get one extra position); a
/// subject weighs `init_w` for its own block and `1 - init_w` elsewhere,
/// then rows are normalized.
pub fn init_weights(n: usize, segments: usize, init_w: f64) -> Result<Array2<f64>> {
    if segments == 0 || n < segments {
        return Err(Error::InvalidConfig(format!(
            "cannot split {n} positions into {segments} segments"
        )));
    }
    if segments == 1 {
        return Ok(Array2::ones((n, 1)));
    }
    let base = n / segments;
    let extra = n % segments;
    let mut w = Array2::from_elem((n, segments), 1.0 - init_w);
    let mut start = 0;
    for k in 0..segments {
        let size = base + usize::from(k < extra);
        for i in start..start + size {
            w[[i, k]] = init_w;
        }
        start += size;
    }
    let row_sum = init_w + (segments - 1) as f64 * (1.0 - init_w);
    w.mapv_inplace(|v| v / row_sum);
    Ok(w)
}

/// Fits the breakpoint model from the block initialization.
pub fn fit(dataset: &Dataset, prior: &SegmentationPrior, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    let weights = init_weights(dataset.len(), config.segments, config.init_w)?;
    fit_from_weights(dataset, prior, config, weights)
}

/// Fits the breakpoint model starting the first M-step from `weights`.
pub fn fit_from_weights(
    dataset: &Dataset,
    prior: &SegmentationPrior,
    config: &FitConfig,
    weights: Array2<f64>,
) -> Result<FitResult> {
    config.validate()?;
    let (n, kk) = (dataset.len(), config.segments);
    if prior.n() != n || prior.segments() != kk {
        return Err(Error::ShapeMismatch(format!(
            "prior is {}x{} but the fit needs {n}x{kk}",
            prior.n(),
            prior.segments()
        )));
    }
    if weights.dim() != (n, kk) {
        return Err(Error::ShapeMismatch(format!(
            "initial weights are {:?}, expected ({n}, {kk})",
            weights.dim()
        )));
    }
    let settings = MStepSettings {
        cuts: match (&config.cuts, config.family) {
            (Some(c), _) => c.clone(),
            (None, FamilyKind::Pch) => default_cuts(dataset),
            (None, _) => Vec::new(),
        },
        bandwidth: config.bandwidth.unwrap_or_else(|| default_bandwidth(n)),
        kernel: config.kernel,
    };

    let mut weights = weights;
    let mut trace: Vec<f64> = Vec::new();
    let mut flagged = Vec::new();
    let mut converged = false;
    let mut state = None;
    for iteration in 1..=config.max_iter {
        let m = mstep(config.family, dataset, &weights, &settings)
            .map_err(|e| e.at_iteration(iteration))?;
        let emissions = emission_table(dataset, &m.theta).map_err(|e| e.at_iteration(iteration))?;
        let tables = hmm::run(&emissions, prior).map_err(|e| e.at_iteration(iteration))?;
        let ll = tables.log_lik;
        if let Some(&prev) = trace.last() {
            if prev - ll > TRACE_DECREASE_FLAG {
                flagged.push(iteration);
            }
        }
        let delta = trace.last().map(|&prev| (ll - prev).abs() / (1.0 + ll.abs()));
        trace.push(ll);
        weights = tables.weights.clone();
        state = Some((m, tables));
        if kk == 1 || delta.is_some_and(|d| d < config.tol) {
            converged = true;
            break;
        }
    }
    let (m, tables) = state.expect("max_iter >= 1");

    let intervals = settings.cuts.len() + 1;
    let dimension = model_dimension(config.family, dataset.p(), kk, intervals).ok();
    let log_lik = tables.log_lik;
    Ok(FitResult {
        family: config.family,
        map_breakpoints: hmm::map_breakpoints(&tables),
        bic: dimension.map(|d| bic(log_lik, d, n)),
        aic: dimension.map(|d| aic(log_lik, d)),
        dimension,
        theta: m.theta,
        posteriors: tables,
        log_lik,
        iterations: trace.len(),
        trace,
        converged,
        flagged_decreases: flagged,
        breslow: m.breslow,
        cuts: (config.family == FamilyKind::Pch).then_some(settings.cuts),
        bandwidth: (config.family == FamilyKind::Cox).then_some(settings.bandwidth),
        n,
        p: dataset.p(),
    })
}
