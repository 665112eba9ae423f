//! Weighted piecewise-constant-hazard M-step.
//!
//! Rates are profiled out per interval,
//! `rate_l = D_l / sum_i w_i E_il exp(x_i beta)`, where `E_il` is the time
//! subject `i` spends at risk inside interval `l` (after its entry time).
//! Newton then maximizes the concave profile in `beta`.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, ArrayView1};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numeric::{maximize, NewtonOptions, Objective};

use super::{interval_of, validate_cuts};

#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseFit {
    pub rates: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Per-subject exposure by interval and the interval holding each event.
#[derive(Clone, Debug)]
pub struct IntervalLayout {
    intervals: usize,
    exposures: Vec<Vec<(usize, f64)>>,
    event_interval: Vec<Option<usize>>,
}

impl IntervalLayout {
    pub fn new(dataset: &Dataset, cuts: &[f64]) -> Result<Self> {
        validate_cuts(cuts)?;
        let intervals = cuts.len() + 1;
        let mut exposures = Vec::with_capacity(dataset.len());
        let mut event_interval = Vec::with_capacity(dataset.len());
        for r in dataset.records() {
            let mut pieces = Vec::new();
            let first = interval_of(cuts, r.entry);
            let last = interval_of(cuts, r.time);
            for l in first..=last {
                let lo = if l == 0 { 0.0 } else { cuts[l - 1] };
                let hi = cuts.get(l).copied().unwrap_or(f64::INFINITY);
                let e = r.time.min(hi) - r.entry.max(lo);
                if e > 0.0 {
                    pieces.push((l, e));
                }
            }
            exposures.push(pieces);
            event_interval.push(r.event.then_some(last));
        }
        Ok(Self {
            intervals,
            exposures,
            event_interval,
        })
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }
}

pub fn mstep_piecewise(
    dataset: &Dataset,
    weights: &Array2<f64>,
    cuts: &[f64],
) -> Result<Vec<PiecewiseFit>> {
    let layout = IntervalLayout::new(dataset, cuts)?;
    (0..weights.ncols())
        .map(|k| fit_segment(dataset, &layout, weights.column(k), k + 1))
        .collect()
}

pub fn fit_segment(
    dataset: &Dataset,
    layout: &IntervalLayout,
    w: ArrayView1<f64>,
    segment: usize,
) -> Result<PiecewiseFit> {
    let ni = layout.intervals;
    let mut events = vec![0.0; ni];
    let mut exposure = vec![0.0; ni];
    for (i, &wi) in w.iter().enumerate() {
        if wi <= 0.0 {
            continue;
        }
        if let Some(l) = layout.event_interval[i] {
            events[l] += wi;
        }
        for &(l, e) in &layout.exposures[i] {
            exposure[l] += wi * e;
        }
    }
    if events.iter().sum::<f64>() <= 0.0 {
        return Err(Error::NoEffectiveEvents { segment });
    }
    for l in 0..ni {
        if !(exposure[l] > 0.0) {
            return Err(Error::ZeroExposure {
                segment,
                interval: l + 1,
            });
        }
        if !(events[l] > 0.0) {
            return Err(Error::NoIntervalEvents {
                segment,
                interval: l + 1,
            });
        }
    }
    let p = dataset.p();
    let beta: Vec<f64> = if p == 0 {
        Vec::new()
    } else {
        maximize(
            DVector::zeros(p),
            |b| profile(dataset, layout, w, b.as_slice(), &events, segment),
            NewtonOptions::default(),
            &|| format!("piecewise segment {segment}"),
        )?
        .x
        .iter()
        .copied()
        .collect()
    };
    let s0 = exposure_sums(dataset, layout, w, &beta);
    let rates = events.iter().zip(&s0).map(|(d, s)| d / s).collect();
    Ok(PiecewiseFit { rates, beta })
}

fn exposure_sums(
    dataset: &Dataset,
    layout: &IntervalLayout,
    w: ArrayView1<f64>,
    beta: &[f64],
) -> Vec<f64> {
    let mut s0 = vec![0.0; layout.intervals];
    for ((r, &wi), pieces) in dataset.records().iter().zip(w).zip(&layout.exposures) {
        if wi <= 0.0 {
            continue;
        }
        let m = r.linear_predictor(beta).exp();
        for &(l, e) in pieces {
            s0[l] += wi * e * m;
        }
    }
    s0
}

fn profile(
    dataset: &Dataset,
    layout: &IntervalLayout,
    w: ArrayView1<f64>,
    beta: &[f64],
    events: &[f64],
    segment: usize,
) -> Result<Objective> {
    let p = beta.len();
    let ni = layout.intervals;
    let mut s0 = vec![0.0; ni];
    let mut s1 = vec![0.0; ni * p];
    let mut s2 = vec![0.0; ni * p * p];
    let mut lin = 0.0;
    let mut xd = vec![0.0; p];
    for ((r, &wi), pieces) in dataset.records().iter().zip(w).zip(&layout.exposures) {
        if wi <= 0.0 {
            continue;
        }
        let x = &r.covariates;
        let eta = r.linear_predictor(beta);
        if r.event {
            lin += wi * eta;
            for j in 0..p {
                xd[j] += wi * x[j];
            }
        }
        let m = eta.exp();
        for &(l, e) in pieces {
            let a = wi * e * m;
            s0[l] += a;
            for j in 0..p {
                s1[l * p + j] += a * x[j];
                for q in 0..p {
                    s2[(l * p + j) * p + q] += a * x[j] * x[q];
                }
            }
        }
    }
    let mut value = lin;
    let mut grad = DVector::from_vec(xd);
    let mut hess = DMatrix::zeros(p, p);
    for l in 0..ni {
        if events[l] == 0.0 {
            continue;
        }
        if !(s0[l] > 0.0) {
            return Err(Error::ZeroExposure {
                segment,
                interval: l + 1,
            });
        }
        let mean = DVector::from_iterator(p, (0..p).map(|j| s1[l * p + j] / s0[l]));
        let second = DMatrix::from_row_slice(p, p, &s2[l * p * p..(l + 1) * p * p]) / s0[l];
        value -= events[l] * s0[l].ln();
        grad -= &mean * events[l];
        hess -= (second - &mean * mean.transpose()) * events[l];
    }
    Ok(Objective { value, grad, hess })
}

/// Profile objective in `beta` and its analytic gradient (for diagnostics).
pub fn profile_objective(
    dataset: &Dataset,
    weights: ArrayView1<f64>,
    cuts: &[f64],
    beta: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let layout = IntervalLayout::new(dataset, cuts)?;
    let mut events = vec![0.0; layout.intervals];
    for (i, &wi) in weights.iter().enumerate() {
        if let Some(l) = layout.event_interval[i] {
            events[l] += wi;
        }
    }
    let obj = profile(dataset, &layout, weights, beta, &events, 1)?;
    Ok((obj.value, obj.grad.iter().copied().collect()))
}
