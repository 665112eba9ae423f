//! Prior over segmentations: per-position jump probabilities.

use std::sync::OnceLock;

use ndarray::Array2;

use crate::data::Dataset;
use crate::error::{Error, Result};

/// `eta[[i, k]]` is the prior probability of jumping from segment `k` to
/// `k + 1` when moving from position `i - 1` to position `i` (0-based). Row 0
/// is unused: the chain always starts in the first segment. Staying in the
/// last segment costs `1 - eta[[i, K-1]]`, which is what makes a constant
/// `eta` a uniform prior over segmentations.
#[derive(Clone, Debug)]
pub struct SegmentationPrior {
    eta: Array2<f64>,
    log_jump: Array2<f64>,
    log_stay: Array2<f64>,
    log_normalizer: OnceLock<f64>,
}

impl SegmentationPrior {
    /// Builds a prior from an explicit `n x K` matrix.
    pub fn new(eta: Array2<f64>) -> Result<Self> {
        let (n, k) = eta.dim();
        if n == 0 || k == 0 {
            return Err(Error::InvalidPrior("empty eta matrix".into()));
        }
        if let Some(bad) = eta.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidPrior(format!("eta entry {bad} outside [0, 1]")));
        }
        let log_jump = eta.mapv(f64::ln);
        let log_stay = eta.mapv(|e| (-e).ln_1p());
        let prior = Self {
            eta,
            log_jump,
            log_stay,
            log_normalizer: OnceLock::new(),
        };
        if prior.log_normalizer() == f64::NEG_INFINITY {
            return Err(Error::TooManySegments {
                segments: k,
                admissible: prior.admissible_positions(),
            });
        }
        Ok(prior)
    }

    /// Constant `eta` everywhere: the uniform prior over segmentations.
    pub fn uniform(n: usize, segments: usize, eta: f64) -> Result<Self> {
        Self::new(Array2::from_elem((n, segments), eta))
    }

    pub fn n(&self) -> usize {
        self.eta.nrows()
    }

    pub fn segments(&self) -> usize {
        self.eta.ncols()
    }

    pub fn eta(&self) -> &Array2<f64> {
        &self.eta
    }

    #[inline]
    pub(crate) fn log_jump(&self, i: usize, k: usize) -> f64 {
        self.log_jump[[i, k]]
    }

    #[inline]
    pub(crate) fn log_stay(&self, i: usize, k: usize) -> f64 {
        self.log_stay[[i, k]]
    }

    /// Positions `i >= 1` at which some jump has nonzero prior probability.
    pub fn admissible_positions(&self) -> usize {
        (1..self.n())
            .filter(|&i| self.eta.row(i).iter().any(|&e| e > 0.0))
            .count()
    }

    /// `log sum_k F0_n(k) B0_n(k)`: the prior mass of segmentations ending in
    /// segment K. Depends only on `eta`, so it is computed once.
    pub fn log_normalizer(&self) -> f64 {
        *self.log_normalizer.get_or_init(|| {
            let (log_f0, _) = crate::hmm::null_recursions(self);
            log_f0[[self.n() - 1, self.segments() - 1]]
        })
    }
}

/// Settings used to derive a prior from a dataset.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PriorSpec {
    pub base_eta: f64,
    /// Forbid jumps between subjects sharing an order key.
    pub forbid_ties: bool,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            base_eta: 0.5,
            forbid_ties: false,
        }
    }
}

impl PriorSpec {
    pub fn build(&self, dataset: &Dataset, segments: usize) -> Result<SegmentationPrior> {
        build_prior(dataset, segments, self.base_eta, self.forbid_ties)
    }
}

/// `eta = base_eta` everywhere, except that with `forbid_ties` every position
/// whose order key equals its predecessor's gets `eta = 0` for all segments.
pub fn build_prior(
    dataset: &Dataset,
    segments: usize,
    base_eta: f64,
    forbid_ties: bool,
) -> Result<SegmentationPrior> {
    if !(base_eta > 0.0 && base_eta < 1.0) {
        return Err(Error::InvalidPrior(format!(
            "base eta {base_eta} must lie strictly between 0 and 1"
        )));
    }
    if segments == 0 {
        return Err(Error::InvalidPrior("at least one segment is required".into()));
    }
    let n = dataset.len();
    let admissible = if forbid_ties {
        dataset.distinct_key_changes()
    } else {
        n - 1
    };
    if segments - 1 > admissible {
        return Err(Error::TooManySegments {
            segments,
            admissible,
        });
    }
    let records = dataset.records();
    let mut eta = Array2::from_elem((n, segments), base_eta);
    if forbid_ties {
        for i in 1..n {
            if records[i].order_key == records[i - 1].order_key {
                eta.row_mut(i).fill(0.0);
            }
        }
    }
    SegmentationPrior::new(eta)
}
