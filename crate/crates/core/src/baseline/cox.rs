//! Weighted Cox partial likelihood and Breslow baseline.
//!
//! Subject `j` is at risk at time `t` when `entry_j <= t <= time_j`. Tied
//! event times share one risk set (Breslow convention).

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, ArrayView1};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numeric::{maximize, NewtonOptions, Objective};

use super::smoothing::StepCumulativeHazard;

#[derive(Clone, Debug, PartialEq)]
pub struct CoxFit {
    pub beta: Vec<f64>,
    pub breslow: StepCumulativeHazard,
}

/// Sort orders reused across segments and Newton iterations.
#[derive(Clone, Debug)]
pub struct RiskSetIndex {
    /// Distinct event times, ascending.
    event_times: Vec<f64>,
    /// Subjects with an event at `event_times[m]`.
    events_at: Vec<Vec<usize>>,
    /// Subjects by exit time, descending.
    by_exit_desc: Vec<usize>,
    /// Subjects by entry time, descending.
    by_entry_desc: Vec<usize>,
}

impl RiskSetIndex {
    pub fn new(dataset: &Dataset) -> Self {
        let recs = dataset.records();
        let mut ev: Vec<usize> = (0..recs.len()).filter(|&i| recs[i].event).collect();
        ev.sort_by(|&a, &b| recs[a].time.total_cmp(&recs[b].time));
        let mut event_times: Vec<f64> = Vec::new();
        let mut events_at: Vec<Vec<usize>> = Vec::new();
        for i in ev {
            if event_times.last() == Some(&recs[i].time) {
                events_at.last_mut().expect("nonempty").push(i);
            } else {
                event_times.push(recs[i].time);
                events_at.push(vec![i]);
            }
        }
        let mut by_exit_desc: Vec<usize> = (0..recs.len()).collect();
        by_exit_desc.sort_by(|&a, &b| recs[b].time.total_cmp(&recs[a].time));
        let mut by_entry_desc: Vec<usize> = (0..recs.len()).filter(|&i| recs[i].entry > 0.0).collect();
        by_entry_desc.sort_by(|&a, &b| recs[b].entry.total_cmp(&recs[a].entry));
        Self {
            event_times,
            events_at,
            by_exit_desc,
            by_entry_desc,
        }
    }
}

/// Risk-set sums at each distinct event time, latest first.
struct RiskSums {
    s0: Vec<f64>,
    s1: Vec<f64>,
    s2: Vec<f64>,
}

fn risk_sums(
    dataset: &Dataset,
    index: &RiskSetIndex,
    w: ArrayView1<f64>,
    beta: &[f64],
    second_order: bool,
) -> RiskSums {
    let recs = dataset.records();
    let p = beta.len();
    let m = index.event_times.len();
    let mut out = RiskSums {
        s0: vec![0.0; m],
        s1: vec![0.0; m * p],
        s2: vec![0.0; if second_order { m * p * p } else { 0 }],
    };
    let mut acc0 = 0.0;
    let mut acc1 = vec![0.0; p];
    let mut acc2 = vec![0.0; p * p];
    // Entered-later sums (entry > t) are removed from the exit-based sums.
    let mut late0 = 0.0;
    let mut late1 = vec![0.0; p];
    let mut late2 = vec![0.0; p * p];
    let mut exit_ptr = 0;
    let mut entry_ptr = 0;
    let add = |i: usize, s0: &mut f64, s1: &mut [f64], s2: &mut [f64]| {
        let wi = w[i];
        if wi <= 0.0 {
            return;
        }
        let x = &recs[i].covariates;
        let r = wi * recs[i].linear_predictor(beta).exp();
        *s0 += r;
        for j in 0..p {
            s1[j] += r * x[j];
            if second_order {
                for l in 0..p {
                    s2[j * p + l] += r * x[j] * x[l];
                }
            }
        }
    };
    for mi in (0..m).rev() {
        let t = index.event_times[mi];
        while exit_ptr < index.by_exit_desc.len() && recs[index.by_exit_desc[exit_ptr]].time >= t {
            add(index.by_exit_desc[exit_ptr], &mut acc0, &mut acc1, &mut acc2);
            exit_ptr += 1;
        }
        while entry_ptr < index.by_entry_desc.len() && recs[index.by_entry_desc[entry_ptr]].entry > t
        {
            add(index.by_entry_desc[entry_ptr], &mut late0, &mut late1, &mut late2);
            entry_ptr += 1;
        }
        out.s0[mi] = acc0 - late0;
        for j in 0..p {
            out.s1[mi * p + j] = acc1[j] - late1[j];
        }
        if second_order {
            for j in 0..p * p {
                out.s2[mi * p * p + j] = acc2[j] - late2[j];
            }
        }
    }
    out
}

fn partial_loglik(
    dataset: &Dataset,
    index: &RiskSetIndex,
    w: ArrayView1<f64>,
    beta: &[f64],
) -> Result<Objective> {
    let recs = dataset.records();
    let p = beta.len();
    let sums = risk_sums(dataset, index, w, beta, true);
    let mut value = 0.0;
    let mut grad = DVector::zeros(p);
    let mut hess = DMatrix::zeros(p, p);
    for (mi, subjects) in index.events_at.iter().enumerate() {
        let mut d = 0.0;
        for &i in subjects {
            let wi = w[i];
            if wi <= 0.0 {
                continue;
            }
            d += wi;
            value += wi * recs[i].linear_predictor(beta);
            for j in 0..p {
                grad[j] += wi * recs[i].covariates[j];
            }
        }
        if d == 0.0 {
            continue;
        }
        let s0 = sums.s0[mi];
        if !(s0 > 0.0) {
            return Err(Error::Diverged {
                context: format!("cox risk set empty at t = {}", index.event_times[mi]),
            });
        }
        value -= d * s0.ln();
        let mean = DVector::from_iterator(p, (0..p).map(|j| sums.s1[mi * p + j] / s0));
        let second = DMatrix::from_row_slice(p, p, &sums.s2[mi * p * p..(mi + 1) * p * p]) / s0;
        grad -= &mean * d;
        hess -= (second - &mean * mean.transpose()) * d;
    }
    Ok(Objective { value, grad, hess })
}

pub fn mstep_cox(dataset: &Dataset, weights: &Array2<f64>) -> Result<Vec<CoxFit>> {
    let index = RiskSetIndex::new(dataset);
    (0..weights.ncols())
        .map(|k| fit_segment(dataset, &index, weights.column(k), k + 1))
        .collect()
}

pub fn fit_segment(
    dataset: &Dataset,
    index: &RiskSetIndex,
    w: ArrayView1<f64>,
    segment: usize,
) -> Result<CoxFit> {
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
    let beta: Vec<f64> = if p == 0 {
        Vec::new()
    } else {
        maximize(
            DVector::zeros(p),
            |b| partial_loglik(dataset, index, w, b.as_slice()),
            NewtonOptions::default(),
            &|| format!("cox segment {segment}"),
        )?
        .x
        .iter()
        .copied()
        .collect()
    };
    let breslow = breslow(dataset, index, w, &beta)?;
    Ok(CoxFit { beta, breslow })
}

/// Weighted Breslow estimator: jump `sum w_i / sum_{at risk} w_j exp(x_j beta)`
/// at each event time carrying positive weight.
pub fn breslow(
    dataset: &Dataset,
    index: &RiskSetIndex,
    w: ArrayView1<f64>,
    beta: &[f64],
) -> Result<StepCumulativeHazard> {
    let sums = risk_sums(dataset, index, w, beta, false);
    let mut times = Vec::new();
    let mut sizes = Vec::new();
    for (mi, subjects) in index.events_at.iter().enumerate() {
        let d: f64 = subjects.iter().map(|&i| w[i]).filter(|&x| x > 0.0).sum();
        if d > 0.0 {
            times.push(index.event_times[mi]);
            sizes.push(d / sums.s0[mi]);
        }
    }
    StepCumulativeHazard::new(times, sizes)
}

/// Log partial likelihood and analytic score at `beta` (for diagnostics).
pub fn partial_likelihood(
    dataset: &Dataset,
    weights: ArrayView1<f64>,
    beta: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let index = RiskSetIndex::new(dataset);
    let obj = partial_loglik(dataset, &index, weights, beta)?;
    Ok((obj.value, obj.grad.iter().copied().collect()))
}
