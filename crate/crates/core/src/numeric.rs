//! Small numerical building blocks shared by the HMM and the M-steps.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `log(exp(a) + exp(b))`, treating `-inf` as an absent term.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Log-sum-exp over a slice; `-inf` for an empty or all-impossible slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Linear-interpolation sample quantile (the usual "type 7" definition).
/// `sorted` must be ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Value, gradient and Hessian of an objective to be maximized.
pub(crate) struct Objective {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct NewtonOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            grad_tol: 1e-8,
            max_halvings: 30,
        }
    }
}

pub(crate) struct NewtonOutcome {
    pub x: DVector<f64>,
}

/// Damped Newton ascent with step-halving.
///
/// The search direction solves `(-H + mu I) d = g`; `mu` starts at zero and is
/// raised until the shifted matrix admits a Cholesky factorization, so
/// indefinite Hessians fall back towards gradient ascent. Converged when the
/// gradient sup-norm drops below `grad_tol`. When no halving improves the
/// objective, the iterate is accepted only if it is stationary at the
/// round-off level of the objective.
pub(crate) fn maximize<F>(
    x0: DVector<f64>,
    mut objective: F,
    opts: NewtonOptions,
    context: &dyn Fn() -> String,
) -> Result<NewtonOutcome>
where
    F: FnMut(&DVector<f64>) -> Result<Objective>,
{
    let mut x = x0;
    let mut cur = objective(&x)?;
    if !cur.value.is_finite() {
        return Err(Error::Diverged { context: context() });
    }
    for _ in 0..opts.max_iter {
        let gnorm = cur.grad.amax();
        if gnorm < opts.grad_tol {
            return Ok(NewtonOutcome { x });
        }
        let step = newton_direction(&cur);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let candidate = &x + &step * t;
            if let Ok(next) = objective(&candidate) {
                let slack = 1e-13 * (1.0 + cur.value.abs());
                if next.value.is_finite()
                    && (next.value > cur.value
                        || (next.value >= cur.value - slack && next.grad.amax() < gnorm))
                {
                    accepted = Some((candidate, next));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((candidate, next)) => {
                x = candidate;
                cur = next;
            }
            None => {
                // Stuck at round-off: accept if stationary relative to the objective scale.
                if gnorm < opts.grad_tol.sqrt() * (1.0 + cur.value.abs()) {
                    return Ok(NewtonOutcome { x });
                }
                return Err(Error::Diverged { context: context() });
            }
        }
    }
    let grad_norm = cur.grad.amax();
    if grad_norm < opts.grad_tol {
        return Ok(NewtonOutcome { x });
    }
    Err(Error::NonConvergence {
        context: context(),
        iterations: opts.max_iter,
        grad_norm,
        last: x.iter().copied().collect(),
    })
}

fn newton_direction(obj: &Objective) -> DVector<f64> {
    let neg_h = -&obj.hess;
    let dim = neg_h.nrows();
    let scale = (0..dim)
        .map(|i| neg_h[(i, i)].abs())
        .fold(0.0_f64, f64::max)
        .max(1e-12);
    let mut mu = 0.0;
    for _ in 0..60 {
        let mut m = neg_h.clone();
        for i in 0..dim {
            m[(i, i)] += mu;
        }
        if let Some(chol) = m.cholesky() {
            let d = chol.solve(&obj.grad);
            if d.iter().all(|v| v.is_finite()) {
                return d;
            }
        }
        mu = if mu == 0.0 { 1e-10 * scale } else { mu * 10.0 };
    }
    obj.grad.clone() / scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_add_exp_handles_neg_infinity() {
        assert_eq!(log_add_exp(f64::NEG_INFINITY, 1.5), 1.5);
        assert_eq!(log_add_exp(0.3, f64::NEG_INFINITY), 0.3);
        assert!((log_add_exp(0.0, 0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(
            log_add_exp(f64::NEG_INFINITY, f64::NEG_INFINITY),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn log_sum_exp_matches_direct_sum() {
        let v = [-1.0, 0.5, 2.0];
        let direct: f64 = v.iter().map(|x: &f64| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&v) - direct).abs() < 1e-14);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn quantile_type7() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.0), 1.0);
        assert_eq!(quantile_sorted(&s, 1.0), 4.0);
        assert!((quantile_sorted(&s, 0.5) - 2.5).abs() < 1e-15);
        assert!((quantile_sorted(&s, 0.25) - 1.75).abs() < 1e-15);
    }

    #[test]
    fn newton_finds_quadratic_maximum() {
        let out = maximize(
            DVector::from_vec(vec![0.0, 0.0]),
            |x| {
                let dx = x[0] - 1.0;
                let dy = x[1] + 2.0;
                Ok(Objective {
                    value: -(dx * dx + 3.0 * dy * dy),
                    grad: DVector::from_vec(vec![-2.0 * dx, -6.0 * dy]),
                    hess: DMatrix::from_row_slice(2, 2, &[-2.0, 0.0, 0.0, -6.0]),
                })
            },
            NewtonOptions::default(),
            &|| "quadratic".into(),
        )
        .unwrap();
        assert!((out.x[0] - 1.0).abs() < 1e-12);
        assert!((out.x[1] + 2.0).abs() < 1e-12);
    }
}
