//! Bootstrap intervals and per-segment weighted Kaplan-Meier curves.

use ndarray::ArrayView1;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::baseline::BaselineFamily;
use crate::data::Dataset;
use crate::em::{fit, FitConfig, FitResult};
use crate::error::{Error, Result};
use crate::numeric::quantile_sorted;
use crate::prior::PriorSpec;

/// Replicates may fail (e.g. a resample leaves a segment without events);
/// more than this fraction of failures is an error.
pub const MAX_FAILURE_FRACTION: f64 = 0.2;

/// Named scalar summaries of a fit: baseline parameters, coefficients and,
/// per breakpoint, the order key of the first subject after the MAP break.
pub fn parameter_vector(fit: &FitResult, dataset: &Dataset) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for (k, (b, beta)) in fit.theta.baselines.iter().zip(&fit.theta.betas).enumerate() {
        let s = k + 1;
        match b {
            BaselineFamily::Exponential { rate } => out.push((format!("rate[{s}]"), *rate)),
            BaselineFamily::Weibull { shape, scale } => {
                out.push((format!("shape[{s}]"), *shape));
                out.push((format!("scale[{s}]"), *scale));
            }
            BaselineFamily::PiecewiseConstant { rates, .. } => {
                for (l, r) in rates.iter().enumerate() {
                    out.push((format!("rate[{s},{}]", l + 1), *r));
                }
            }
            BaselineFamily::Nonparametric(_) => {}
        }
        for (j, v) in beta.iter().enumerate() {
            out.push((format!("beta[{s},{}]", j + 1), *v));
        }
    }
    let recs = dataset.records();
    for (k, bp) in fit.map_breakpoints.iter().enumerate() {
        let next = recs[bp.position.min(recs.len() - 1)].order_key;
        out.push((format!("breakpoint[{}]", k + 1), next));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Interval {
    pub name: String,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BootstrapSummary {
    pub intervals: Vec<Interval>,
    pub level: f64,
    pub replicates: usize,
    pub failed: usize,
}

/// Draws `n` records with replacement and restores the order-key ordering.
pub fn resample<R: Rng + ?Sized>(dataset: &Dataset, rng: &mut R) -> Result<Dataset> {
    let recs = dataset.records();
    let n = recs.len();
    let draw = (0..n).map(|_| recs[rng.random_range(0..n)].clone()).collect();
    Dataset::with_entry_mode(draw, dataset.entry_mode())
}

/// Percentile bootstrap with a fixed number of segments. Replicate seeds
/// come from a ChaCha stream seeded with `config.seed`, so results do not
/// depend on thread scheduling.
pub fn bootstrap_ci(
    dataset: &Dataset,
    prior_spec: &PriorSpec,
    config: &FitConfig,
    replicates: usize,
    level: f64,
) -> Result<BootstrapSummary> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig(format!("level {level} must lie in (0, 1)")));
    }
    if replicates == 0 {
        return Err(Error::InvalidConfig("at least one replicate is required".into()));
    }
    let point = fit(dataset, &prior_spec.build(dataset, config.segments)?, config)?;
    let estimates = parameter_vector(&point, dataset);

    let mut master = ChaCha8Rng::seed_from_u64(config.seed);
    let seeds: Vec<u64> = (0..replicates).map(|_| master.next_u64()).collect();
    let draws: Vec<Option<Vec<f64>>> = seeds
        .par_iter()
        .map(|&seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let boot = resample(dataset, &mut rng).ok()?;
            let prior = prior_spec.build(&boot, config.segments).ok()?;
            let f = fit(&boot, &prior, config).ok()?;
            let v: Vec<f64> = parameter_vector(&f, &boot).into_iter().map(|(_, x)| x).collect();
            (v.len() == estimates.len()).then_some(v)
        })
        .collect();
    let ok: Vec<Vec<f64>> = draws.into_iter().flatten().collect();
    let failed = replicates - ok.len();
    if failed as f64 > MAX_FAILURE_FRACTION * replicates as f64 || ok.is_empty() {
        return Err(Error::BootstrapFailures {
            failed,
            total: replicates,
        });
    }
    let alpha = (1.0 - level) / 2.0;
    let intervals = estimates
        .into_iter()
        .enumerate()
        .map(|(j, (name, estimate))| {
            let mut col: Vec<f64> = ok.iter().map(|v| v[j]).collect();
            col.sort_by(f64::total_cmp);
            Interval {
                name,
                estimate,
                lower: quantile_sorted(&col, alpha),
                upper: quantile_sorted(&col, 1.0 - alpha),
            }
        })
        .collect();
    Ok(BootstrapSummary {
        intervals,
        level,
        replicates,
        failed,
    })
}

/// Weighted product-limit curve. `points` starts at `(0, 1)` and has one
/// entry per distinct event time carrying positive weight.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KmCurve {
    pub points: Vec<(f64, f64)>,
    /// Set when the weighted risk set vanished; the curve stops there.
    pub truncated_at: Option<f64>,
}

impl KmCurve {
    /// Survival just after `t`.
    pub fn at(&self, t: f64) -> f64 {
        let i = self.points.partition_point(|(s, _)| *s <= t);
        self.points[i.saturating_sub(1)].1
    }
}

/// `S(t) = prod_{t_j <= t} (1 - d_j / Y_j)`, where `d_j` and `Y_j` are the
/// weighted event and risk counts and subject `i` is at risk on `[entry_i, time_i]`.
pub fn weighted_km(dataset: &Dataset, weights: ArrayView1<f64>) -> Result<KmCurve> {
    let recs = dataset.records();
    if weights.len() != recs.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} weights for {} records",
            weights.len(),
            recs.len()
        )));
    }
    let mut times: Vec<f64> = recs
        .iter()
        .zip(weights)
        .filter(|(r, &w)| r.event && w > 0.0)
        .map(|(r, _)| r.time)
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut points = vec![(0.0, 1.0)];
    let mut s = 1.0;
    for t in times {
        let (mut d, mut y) = (0.0, 0.0);
        for (r, &w) in recs.iter().zip(weights) {
            if w <= 0.0 {
                continue;
            }
            if r.entry <= t && t <= r.time {
                y += w;
                if r.event && r.time == t {
                    d += w;
                }
            }
        }
        if !(y > 0.0) {
            return Ok(KmCurve {
                points,
                truncated_at: Some(t),
            });
        }
        s *= (1.0 - d / y).max(0.0);
        points.push((t, s));
    }
    Ok(KmCurve {
        points,
        truncated_at: None,
    })
}
