//! Information criteria and sweeps over the number of segments.

use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::Serialize;

use crate::baseline::FamilyKind;
use crate::data::Dataset;
use crate::em::{fit, FitConfig, FitResult};
use crate::error::{Error, Result};
use crate::prior::PriorSpec;

/// Free parameters of a `segments`-segment fit with `p` covariates; `intervals`
/// is the number of pch intervals. Undefined for the Cox family.
pub fn model_dimension(kind: FamilyKind, p: usize, segments: usize, intervals: usize) -> Result<usize> {
    let per_segment = match kind {
        FamilyKind::Exponential => p + 1,
        FamilyKind::Weibull => p + 2,
        FamilyKind::Pch => p + intervals,
        FamilyKind::Cox => return Err(Error::DimensionUndefined),
    };
    Ok(per_segment * segments)
}

pub fn bic(log_lik: f64, dimension: usize, n: usize) -> f64 {
    -2.0 * log_lik + dimension as f64 * (n as f64).ln()
}

pub fn aic(log_lik: f64, dimension: usize) -> f64 {
    -2.0 * log_lik + 2.0 * dimension as f64
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum SweepOutcome {
    Fitted {
        log_lik: f64,
        bic: f64,
        aic: f64,
        dimension: usize,
        converged: bool,
        iterations: usize,
        #[serde(skip)]
        fit: Box<FitResult>,
    },
    /// The prior admits fewer breakpoint positions than needed.
    Skipped { reason: String },
    Failed { kind: String, message: String },
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub segments: usize,
    #[serde(flatten)]
    pub outcome: SweepOutcome,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Segment count minimizing BIC; ties go to the smaller count.
    pub selected: Option<usize>,
}

impl SweepTable {
    pub fn fit_for(&self, segments: usize) -> Option<&FitResult> {
        self.rows.iter().find_map(|r| match &r.outcome {
            SweepOutcome::Fitted { fit, .. } if r.segments == segments => Some(fit.as_ref()),
            _ => None,
        })
    }

    /// Segment count minimizing AIC; ties go to the smaller count.
    pub fn selected_by_aic(&self) -> Option<usize> {
        argmin(&self.rows, |o| match o {
            SweepOutcome::Fitted { aic, .. } => Some(*aic),
            _ => None,
        })
    }
}

fn argmin(rows: &[SweepRow], score: impl Fn(&SweepOutcome) -> Option<f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for r in rows {
        if let Some(s) = score(&r.outcome) {
            if best.is_none_or(|(_, b)| s < b) {
                best = Some((r.segments, s));
            }
        }
    }
    best.map(|(k, _)| k)
}

/// Fits every segment count in `range` (in parallel) and selects by BIC.
/// Counts the prior cannot accommodate are recorded as skipped; fits that
/// fail are recorded with their error.
pub fn sweep(
    dataset: &Dataset,
    prior_spec: &PriorSpec,
    config: &FitConfig,
    range: RangeInclusive<usize>,
) -> Result<SweepTable> {
    if !config.family.is_parametric() {
        return Err(Error::DimensionUndefined);
    }
    if range.is_empty() || *range.start() == 0 {
        return Err(Error::InvalidConfig(format!(
            "segment range {}..={} is empty or starts at 0",
            range.start(),
            range.end()
        )));
    }
    let counts: Vec<usize> = range.collect();
    let rows: Vec<SweepRow> = counts
        .par_iter()
        .map(|&segments| {
            let outcome = match fit_one(dataset, prior_spec, config, segments) {
                Ok(fit) => SweepOutcome::Fitted {
                    log_lik: fit.log_lik,
                    bic: fit.bic.expect("parametric fit"),
                    aic: fit.aic.expect("parametric fit"),
                    dimension: fit.dimension.expect("parametric fit"),
                    converged: fit.converged,
                    iterations: fit.iterations,
                    fit: Box::new(fit),
                },
                Err(e @ Error::TooManySegments { .. }) => SweepOutcome::Skipped {
                    reason: e.to_string(),
                },
                Err(e) => SweepOutcome::Failed {
                    kind: e.kind().to_string(),
                    message: e.to_string(),
                },
            };
            SweepRow { segments, outcome }
        })
        .collect();
    let selected = argmin(&rows, |o| match o {
        SweepOutcome::Fitted { bic, .. } => Some(*bic),
        _ => None,
    });
    Ok(SweepTable { rows, selected })
}

fn fit_one(
    dataset: &Dataset,
    prior_spec: &PriorSpec,
    config: &FitConfig,
    segments: usize,
) -> Result<FitResult> {
    let prior = prior_spec.build(dataset, segments)?;
    let config = FitConfig {
        segments,
        ..config.clone()
    };
    fit(dataset, &prior, &config)
}
