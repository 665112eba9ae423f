//! Constrained HMM over monotone segmentations.
//!
//! Hidden state `R_i` is the segment of position `i`; the chain starts in
//! segment 0, moves up by at most one segment per position and is conditioned
//! to finish in segment `K - 1`. Everything runs in the log domain, so
//! impossible emissions (`-inf`) simply drop out of the sums.

use ndarray::{Array1, Array2, Axis};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{log_add_exp, log_sum_exp};
use crate::prior::SegmentationPrior;

/// `log_e[[i, k]]`: log-likelihood of subject `i` given it sits in segment `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmissionTable {
    log_e: Array2<f64>,
}

impl EmissionTable {
    pub fn new(log_e: Array2<f64>) -> Result<Self> {
        if let Some(((i, k), v)) = log_e
            .indexed_iter()
            .find(|(_, v)| v.is_nan() || **v == f64::INFINITY)
        {
            return Err(Error::ShapeMismatch(format!(
                "emission ({}, {}) is {v}; entries must be finite or -inf",
                i + 1,
                k + 1
            )));
        }
        Ok(Self { log_e })
    }

    pub fn log_e(&self) -> &Array2<f64> {
        &self.log_e
    }

    pub fn n(&self) -> usize {
        self.log_e.nrows()
    }

    pub fn segments(&self) -> usize {
        self.log_e.ncols()
    }
}

/// Posterior summaries of one E-step.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorTables {
    pub log_f: Array2<f64>,
    pub log_b: Array2<f64>,
    /// `weights[[i, k]] = P(R_i = k | data)`.
    pub weights: Array2<f64>,
    /// `bp_marginal[[k, i]] = P(R_i = k, R_{i+1} = k + 1 | data)`, shape `(K-1) x (n-1)`.
    pub bp_marginal: Array2<f64>,
    /// Observed-data log-likelihood, prior-normalized.
    pub log_lik: f64,
}

/// Most probable location of one breakpoint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MapBreakpoint {
    /// 1-based index of the last subject of the segment before the break.
    pub position: usize,
    pub probability: f64,
}

fn check_shapes(emissions: &EmissionTable, prior: &SegmentationPrior) -> Result<()> {
    if emissions.n() != prior.n() || emissions.segments() != prior.segments() {
        return Err(Error::ShapeMismatch(format!(
            "emissions are {}x{}, prior is {}x{}",
            emissions.n(),
            emissions.segments(),
            prior.n(),
            prior.segments()
        )));
    }
    Ok(())
}

fn forward_with<E: Fn(usize, usize) -> f64>(prior: &SegmentationPrior, log_e: E) -> Array2<f64> {
    let (n, kk) = (prior.n(), prior.segments());
    let mut f = Array2::from_elem((n, kk), f64::NEG_INFINITY);
    f[[0, 0]] = log_e(0, 0);
    for i in 1..n {
        for k in 0..kk {
            let stay = f[[i - 1, k]] + prior.log_stay(i, k);
            let enter = if k > 0 {
                f[[i - 1, k - 1]] + prior.log_jump(i, k - 1)
            } else {
                f64::NEG_INFINITY
            };
            let acc = log_add_exp(stay, enter);
            f[[i, k]] = if acc == f64::NEG_INFINITY {
                acc
            } else {
                acc + log_e(i, k)
            };
        }
    }
    f
}

fn backward_with<E: Fn(usize, usize) -> f64>(prior: &SegmentationPrior, log_e: E) -> Array2<f64> {
    let (n, kk) = (prior.n(), prior.segments());
    let mut b = Array2::from_elem((n, kk), f64::NEG_INFINITY);
    b[[n - 1, kk - 1]] = 0.0;
    for i in (1..n).rev() {
        for k in 0..kk {
            let stay = prior.log_stay(i, k) + log_e(i, k) + b[[i, k]];
            let jump = if k + 1 < kk {
                prior.log_jump(i, k) + log_e(i, k + 1) + b[[i, k + 1]]
            } else {
                f64::NEG_INFINITY
            };
            b[[i - 1, k]] = log_add_exp(nan_to_neg_inf(stay), nan_to_neg_inf(jump));
        }
    }
    b
}

// -inf + -inf stays -inf, but -inf + finite can never be NaN; this only
// guards the theoretical `inf - inf` produced by a user-supplied +inf.
#[inline]
fn nan_to_neg_inf(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// Forward quantities `log F_i(k) = log P(data_{1:i}, R_i = k)`.
pub fn forward(emissions: &EmissionTable, prior: &SegmentationPrior) -> Result<Array2<f64>> {
    check_shapes(emissions, prior)?;
    let e = emissions.log_e();
    Ok(forward_with(prior, |i, k| e[[i, k]]))
}

/// Backward quantities `log B_i(k) = log P(data_{i+1:n}, R_n = K | R_i = k)`.
pub fn backward(emissions: &EmissionTable, prior: &SegmentationPrior) -> Result<Array2<f64>> {
    check_shapes(emissions, prior)?;
    let e = emissions.log_e();
    Ok(backward_with(prior, |i, k| e[[i, k]]))
}

/// Forward and backward recursions with every emission set to 1.
pub fn null_recursions(prior: &SegmentationPrior) -> (Array2<f64>, Array2<f64>) {
    (
        forward_with(prior, |_, _| 0.0),
        backward_with(prior, |_, _| 0.0),
    )
}

/// `log sum_k F_i(k) B_i(k)`; the same for every position `i`.
pub fn log_evidence_at(log_f: &Array2<f64>, log_b: &Array2<f64>, i: usize) -> f64 {
    let terms: Vec<f64> = log_f
        .row(i)
        .iter()
        .zip(log_b.row(i))
        .map(|(f, b)| f + b)
        .collect();
    log_sum_exp(&terms)
}

/// Segment weights, breakpoint marginals and the normalized log-likelihood.
pub fn posteriors(
    log_f: &Array2<f64>,
    log_b: &Array2<f64>,
    emissions: &EmissionTable,
    prior: &SegmentationPrior,
) -> Result<PosteriorTables> {
    check_shapes(emissions, prior)?;
    let (n, kk) = (prior.n(), prior.segments());
    if log_f.dim() != (n, kk) || log_b.dim() != (n, kk) {
        return Err(Error::ShapeMismatch("forward/backward tables".into()));
    }
    let log_e = emissions.log_e();

    let mut weights = Array2::zeros((n, kk));
    for i in 0..n {
        let norm = log_evidence_at(log_f, log_b, i);
        if norm == f64::NEG_INFINITY || !norm.is_finite() {
            return Err(Error::DegeneratePosterior {
                position: degenerate_position(log_e).unwrap_or(i + 1),
            });
        }
        for k in 0..kk {
            weights[[i, k]] = (log_f[[i, k]] + log_b[[i, k]] - norm).exp();
        }
    }

    let mut bp_marginal = Array2::zeros((kk.saturating_sub(1), n.saturating_sub(1)));
    for k in 0..kk.saturating_sub(1) {
        let terms: Array1<f64> = (0..n - 1)
            .map(|i| {
                log_f[[i, k]] + prior.log_jump(i + 1, k) + log_e[[i + 1, k + 1]] + log_b[[i + 1, k + 1]]
            })
            .map(nan_to_neg_inf)
            .collect();
        let norm = log_sum_exp(terms.as_slice().expect("contiguous"));
        if !norm.is_finite() {
            return Err(Error::DegeneratePosterior {
                position: degenerate_position(log_e).unwrap_or(1),
            });
        }
        for (i, t) in terms.iter().enumerate() {
            bp_marginal[[k, i]] = (t - norm).exp();
        }
    }

    let log_lik = log_f[[n - 1, kk - 1]] - prior.log_normalizer();
    Ok(PosteriorTables {
        log_f: log_f.clone(),
        log_b: log_b.clone(),
        weights,
        bp_marginal,
        log_lik,
    })
}

fn degenerate_position(log_e: &Array2<f64>) -> Option<usize> {
    log_e
        .axis_iter(Axis(0))
        .position(|row| row.iter().all(|&v| v == f64::NEG_INFINITY))
        .map(|i| i + 1)
}

/// Full E-step: forward, backward and posteriors.
pub fn run(emissions: &EmissionTable, prior: &SegmentationPrior) -> Result<PosteriorTables> {
    let log_f = forward(emissions, prior)?;
    let log_b = backward(emissions, prior)?;
    posteriors(&log_f, &log_b, emissions, prior)
}

/// Argmax of each breakpoint marginal; ties go to the smallest position.
pub fn map_breakpoints(tables: &PosteriorTables) -> Vec<MapBreakpoint> {
    tables
        .bp_marginal
        .axis_iter(Axis(0))
        .map(|row| {
            let mut best = 0;
            for (i, &p) in row.iter().enumerate() {
                if p > row[best] {
                    best = i;
                }
            }
            MapBreakpoint {
                position: best + 1,
                probability: row[best],
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_table(n: usize, k: usize) -> EmissionTable {
        EmissionTable::new(Array2::zeros((n, k))).unwrap()
    }

    #[test]
    fn single_position_base_case() {
        let e = EmissionTable::new(Array2::from_elem((1, 1), -0.7)).unwrap();
        let prior = SegmentationPrior::uniform(1, 1, 0.5).unwrap();
        let f = forward(&e, &prior).unwrap();
        let b = backward(&e, &prior).unwrap();
        assert_eq!(f[[0, 0]], -0.7);
        assert_eq!(b[[0, 0]], 0.0);
    }

    #[test]
    fn three_positions_two_segments_by_hand() {
        // Paths 1-1-2 and 1-2-2 each carry prior mass 0.5 * 0.5.
        let e = unit_table(3, 2);
        let prior = SegmentationPrior::uniform(3, 2, 0.5).unwrap();
        let f = forward(&e, &prior).unwrap();
        let b = backward(&e, &prior).unwrap();
        assert!((f[[2, 1]].exp() - 2.0 * 0.25).abs() < 1e-15);
        assert!((b[[0, 0]].exp() - 0.5).abs() < 1e-15);
        let tables = posteriors(&f, &b, &e, &prior).unwrap();
        assert!((tables.bp_marginal[[0, 0]] - 0.5).abs() < 1e-15);
        assert!((tables.bp_marginal[[0, 1]] - 0.5).abs() < 1e-15);
        assert!(tables.log_lik.abs() < 1e-15);
        assert_eq!(tables.weights[[0, 0]], 1.0);
        assert_eq!(tables.weights[[2, 1]], 1.0);
        assert!((tables.weights[[1, 0]] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn binomial_normalizer() {
        let prior = SegmentationPrior::uniform(5, 2, 0.5).unwrap();
        assert!((prior.log_normalizer().exp() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn map_picks_largest_then_smallest_index() {
        let mut tables = run(&unit_table(4, 2), &SegmentationPrior::uniform(4, 2, 0.5).unwrap())
            .unwrap();
        tables.bp_marginal = Array2::from_shape_vec((1, 3), vec![0.1, 0.7, 0.2]).unwrap();
        assert_eq!(
            map_breakpoints(&tables),
            vec![MapBreakpoint {
                position: 2,
                probability: 0.7
            }]
        );
        tables.bp_marginal = Array2::from_elem((1, 3), 1.0 / 3.0);
        assert_eq!(map_breakpoints(&tables)[0].position, 1);
    }

    #[test]
    fn impossible_row_is_degenerate() {
        let mut log_e = Array2::zeros((4, 2));
        log_e.row_mut(2).fill(f64::NEG_INFINITY);
        let e = EmissionTable::new(log_e).unwrap();
        let prior = SegmentationPrior::uniform(4, 2, 0.5).unwrap();
        assert!(matches!(
            run(&e, &prior),
            Err(Error::DegeneratePosterior { position: 3 })
        ));
    }

    #[test]
    fn rejects_nan_and_shape_mismatch() {
        assert!(EmissionTable::new(Array2::from_elem((2, 1), f64::NAN)).is_err());
        let e = unit_table(3, 2);
        let prior = SegmentationPrior::uniform(4, 2, 0.5).unwrap();
        assert!(matches!(forward(&e, &prior), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn single_segment_has_no_breakpoints() {
        let e = EmissionTable::new(Array2::from_elem((5, 1), -1.0)).unwrap();
        let prior = SegmentationPrior::uniform(5, 1, 0.5).unwrap();
        let t = run(&e, &prior).unwrap();
        assert_eq!(t.bp_marginal.dim(), (0, 4));
        assert!((t.log_lik + 5.0).abs() < 1e-12);
        assert!(map_breakpoints(&t).is_empty());
    }
}
