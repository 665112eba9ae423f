//! Weighted exponential-baseline M-step.
//!
//! For fixed `beta` the rate has the closed form
//! `rate = D / sum_i w_i (T_i - L_i) exp(x_i beta)` with `D = sum_i w_i delta_i`.
//! Substituting it back leaves a concave profile objective in `beta`, which is
//! maximized by Newton iterations.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, ArrayView1};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numeric::{maximize, NewtonOptions, Objective};

#[derive(Clone, Debug, PartialEq)]
pub struct ExponentialFit {
    pub rate: f64,
    pub beta: Vec<f64>,
}

/// Fits every segment (column of `weights`).
pub fn mstep_exponential(dataset: &Dataset, weights: &Array2<f64>) -> Result<Vec<ExponentialFit>> {
    (0..weights.ncols())
        .map(|k| fit_segment(dataset, weights.column(k), k + 1))
        .collect()
}

/// Fits one segment; `segment` is the 1-based label used in errors.
pub fn fit_segment(dataset: &Dataset, w: ArrayView1<f64>, segment: usize) -> Result<ExponentialFit> {
    let events: f64 = dataset
        .records()
        .iter()
        .zip(w)
        .filter(|(r, _)| r.event)
        .map(|(_, &wi)| wi)
        .sum();
    if !(events > 0.0) {
        return Err(Error::NoEffectiveEvents { segment });
    }
    let p = dataset.p();
    let beta = if p == 0 {
        Vec::new()
    } else {
        let out = maximize(
            DVector::zeros(p),
            |b| profile(dataset, w, b.as_slice(), events, segment),
            NewtonOptions::default(),
            &|| format!("exponential segment {segment}"),
        )?;
        out.x.iter().copied().collect()
    };
    let exposure = weighted_exposure(dataset, w, &beta);
    if !(exposure > 0.0) {
        return Err(Error::ZeroExposure {
            segment,
            interval: 1,
        });
    }
    Ok(ExponentialFit {
        rate: events / exposure,
        beta,
    })
}

fn weighted_exposure(dataset: &Dataset, w: ArrayView1<f64>, beta: &[f64]) -> f64 {
    dataset
        .records()
        .iter()
        .zip(w)
        .filter(|(_, &wi)| wi > 0.0)
        .map(|(r, &wi)| wi * (r.time - r.entry) * r.linear_predictor(beta).exp())
        .sum()
}

fn profile(
    dataset: &Dataset,
    w: ArrayView1<f64>,
    beta: &[f64],
    events: f64,
    segment: usize,
) -> Result<Objective> {
    let p = beta.len();
    let mut s0 = 0.0;
    let mut s1 = vec![0.0; p];
    let mut s2 = vec![0.0; p * p];
    let mut lin = 0.0;
    let mut xd = vec![0.0; p];
    for (r, &wi) in dataset.records().iter().zip(w) {
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
        let a = wi * (r.time - r.entry) * eta.exp();
        s0 += a;
        for j in 0..p {
            s1[j] += a * x[j];
            for l in 0..p {
                s2[j * p + l] += a * x[j] * x[l];
            }
        }
    }
    if !(s0 > 0.0) {
        return Err(Error::ZeroExposure {
            segment,
            interval: 1,
        });
    }
    let mean = DVector::from_iterator(p, s1.iter().map(|v| v / s0));
    let second = DMatrix::from_row_slice(p, p, &s2) / s0;
    Ok(Objective {
        value: lin - events * s0.ln(),
        grad: DVector::from_vec(xd) - &mean * events,
        hess: -(second - &mean * mean.transpose()) * events,
    })
}

/// Profile objective in `beta` and its analytic gradient (for diagnostics).
pub fn profile_objective(
    dataset: &Dataset,
    weights: ArrayView1<f64>,
    beta: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let events: f64 = dataset
        .records()
        .iter()
        .zip(weights)
        .filter(|(r, _)| r.event)
        .map(|(_, &w)| w)
        .sum();
    let obj = profile(dataset, weights, beta, events, 1)?;
    Ok((obj.value, obj.grad.iter().copied().collect()))
}
