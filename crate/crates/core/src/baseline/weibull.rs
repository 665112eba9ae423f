//! Weighted Weibull-baseline M-step.
//!
//! Parametrized as `lambda(t) = (a / b) (t / b)^(a - 1)` and optimized over
//! `(log a, log b, beta)` so positivity needs no constraint.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, ArrayView1};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numeric::{maximize, NewtonOptions, Objective};

#[derive(Clone, Debug, PartialEq)]
pub struct WeibullFit {
    pub shape: f64,
    pub scale: f64,
    pub beta: Vec<f64>,
}

pub fn mstep_weibull(dataset: &Dataset, weights: &Array2<f64>) -> Result<Vec<WeibullFit>> {
    (0..weights.ncols())
        .map(|k| fit_segment(dataset, weights.column(k), k + 1))
        .collect()
}

pub fn fit_segment(dataset: &Dataset, w: ArrayView1<f64>, segment: usize) -> Result<WeibullFit> {
    let mut events = 0.0;
    let mut exposure = 0.0;
    for (r, &wi) in dataset.records().iter().zip(w) {
        if wi <= 0.0 {
            continue;
        }
        if r.event {
            if r.time <= 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "segment {segment}: Weibull baseline needs positive event times"
                )));
            }
            events += wi;
        }
        exposure += wi * (r.time - r.entry);
    }
    if !(events > 0.0) {
        return Err(Error::NoEffectiveEvents { segment });
    }
    if !(exposure > 0.0) {
        return Err(Error::ZeroExposure {
            segment,
            interval: 1,
        });
    }
    let p = dataset.p();
    // Start from the exponential solution at beta = 0: shape 1, scale = exposure / events.
    let mut x0 = DVector::zeros(p + 2);
    x0[1] = (exposure / events).ln();
    let out = maximize(
        x0,
        |x| objective(dataset, w, x.as_slice()),
        NewtonOptions::default(),
        &|| format!("weibull segment {segment}"),
    )?;
    Ok(WeibullFit {
        shape: out.x[0].exp(),
        scale: out.x[1].exp(),
        beta: out.x.iter().skip(2).copied().collect(),
    })
}

/// Weighted log-likelihood in `(log shape, log scale, beta)` with gradient and Hessian.
fn objective(dataset: &Dataset, w: ArrayView1<f64>, params: &[f64]) -> Result<Objective> {
    let dim = params.len();
    let p = dim - 2;
    let (u, v) = (params[0], params[1]);
    let a = u.exp();
    let beta = &params[2..];
    let mut value = 0.0;
    let mut g = vec![0.0; dim];
    let mut h = vec![0.0; dim * dim];
    for (r, &wi) in dataset.records().iter().zip(w) {
        if wi <= 0.0 {
            continue;
        }
        let x = &r.covariates;
        let eta = r.linear_predictor(beta);
        let m = eta.exp();
        // Exposure pieces at exit and (if any) entry: G = (t/b)^a, z = a ln(t/b).
        let (g_t, z_t) = if r.time > 0.0 {
            let z = a * (r.time.ln() - v);
            (z.exp(), z)
        } else {
            (0.0, 0.0)
        };
        let (g_l, z_l) = if r.entry > 0.0 {
            let z = a * (r.entry.ln() - v);
            (z.exp(), z)
        } else {
            (0.0, 0.0)
        };
        let cum = g_t - g_l;
        let gz = g_t * z_t - g_l * z_l;
        let gz1 = g_t * z_t * (1.0 + z_t) - g_l * z_l * (1.0 + z_l);
        let gz_plus = g_t * (1.0 + z_t) - g_l * (1.0 + z_l);

        let mut du = -gz * m;
        let mut dv = a * cum * m;
        let mut huu = -m * gz1;
        let mut huv = m * a * gz_plus;
        let hvv = -a * a * m * cum;
        let d = if r.event { 1.0 } else { 0.0 };
        let mut ll = -cum * m;
        if r.event {
            ll += u - v + (a - 1.0) * (r.time.ln() - v) + eta;
            du += 1.0 + z_t;
            dv -= a;
            huu += z_t;
            huv -= a;
        }
        value += wi * ll;
        g[0] += wi * du;
        g[1] += wi * dv;
        h[0] += wi * huu;
        h[1] += wi * huv;
        h[dim] += wi * huv;
        h[dim + 1] += wi * hvv;
        for j in 0..p {
            let gj = (d - cum * m) * x[j];
            g[2 + j] += wi * gj;
            let huj = -m * x[j] * gz;
            let hvj = a * cum * m * x[j];
            h[2 + j] += wi * huj;
            h[(2 + j) * dim] += wi * huj;
            h[dim + 2 + j] += wi * hvj;
            h[(2 + j) * dim + 1] += wi * hvj;
            for l in 0..p {
                h[(2 + j) * dim + 2 + l] -= wi * cum * m * x[j] * x[l];
            }
        }
    }
    Ok(Objective {
        value,
        grad: DVector::from_vec(g),
        hess: DMatrix::from_row_slice(dim, dim, &h),
    })
}

/// Objective value and analytic gradient at `(log shape, log scale, beta)`.
pub fn log_objective(
    dataset: &Dataset,
    weights: ArrayView1<f64>,
    params: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let obj = objective(dataset, weights, params)?;
    Ok((obj.value, obj.grad.iter().copied().collect()))
}
