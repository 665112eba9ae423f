//! Baseline hazard families: emission log-likelihoods and weighted M-steps.

pub mod cox;
pub mod exponential;
pub mod piecewise;
pub mod smoothing;
pub mod weibull;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, EntryMode, SurvivalRecord};
use crate::error::{Error, Result};
use crate::hmm::EmissionTable;
use crate::numeric::quantile_sorted;

pub use smoothing::{smooth_baseline, Kernel, SmoothedHazard, StepCumulativeHazard};

/// Which baseline family a fit uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    Exponential,
    Weibull,
    /// Piecewise-constant hazard.
    Pch,
    /// Cox partial likelihood with a kernel-smoothed Breslow baseline.
    Cox,
}

impl FamilyKind {
    pub fn is_parametric(self) -> bool {
        !matches!(self, FamilyKind::Cox)
    }

    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::Exponential => "exponential",
            FamilyKind::Weibull => "weibull",
            FamilyKind::Pch => "pch",
            FamilyKind::Cox => "cox",
        }
    }
}

impl std::str::FromStr for FamilyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exponential" | "exp" => Ok(FamilyKind::Exponential),
            "weibull" => Ok(FamilyKind::Weibull),
            "pch" | "piecewise" => Ok(FamilyKind::Pch),
            "cox" | "nonparametric" => Ok(FamilyKind::Cox),
            other => Err(Error::InvalidConfig(format!("unknown family `{other}`"))),
        }
    }
}

/// Baseline hazard of one segment.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum BaselineFamily {
    /// Constant hazard `rate`.
    Exponential { rate: f64 },
    /// `lambda(t) = (shape / scale) (t / scale)^(shape - 1)`.
    Weibull { shape: f64, scale: f64 },
    /// Hazard `rates[l]` on `(cuts[l-1], cuts[l]]`, with `cuts[-1] = 0` and `cuts[L-1] = inf`.
    #[serde(rename = "pch")]
    PiecewiseConstant { cuts: Vec<f64>, rates: Vec<f64> },
    /// Kernel-smoothed Breslow estimate.
    Nonparametric(SmoothedHazard),
}

impl BaselineFamily {
    pub fn kind(&self) -> FamilyKind {
        match self {
            BaselineFamily::Exponential { .. } => FamilyKind::Exponential,
            BaselineFamily::Weibull { .. } => FamilyKind::Weibull,
            BaselineFamily::PiecewiseConstant { .. } => FamilyKind::Pch,
            BaselineFamily::Nonparametric(_) => FamilyKind::Cox,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")))
            }
        };
        match self {
            BaselineFamily::Exponential { rate } => positive("rate", *rate),
            BaselineFamily::Weibull { shape, scale } => {
                positive("shape", *shape)?;
                positive("scale", *scale)
            }
            BaselineFamily::PiecewiseConstant { cuts, rates } => {
                if rates.len() != cuts.len() + 1 {
                    return Err(Error::InvalidConfig(format!(
                        "{} cuts need {} rates, got {}",
                        cuts.len(),
                        cuts.len() + 1,
                        rates.len()
                    )));
                }
                validate_cuts(cuts)?;
                rates.iter().try_for_each(|&r| positive("rate", r))
            }
            BaselineFamily::Nonparametric(s) => s.validate(),
        }
    }

    pub fn hazard(&self, t: f64) -> f64 {
        match self {
            BaselineFamily::Nonparametric(s) => s.hazard(t),
            _ => self.log_hazard(t).exp(),
        }
    }

    pub fn log_hazard(&self, t: f64) -> f64 {
        match self {
            BaselineFamily::Exponential { rate } => rate.ln(),
            BaselineFamily::Weibull { shape, scale } => {
                let base = shape.ln() - scale.ln();
                if *shape == 1.0 {
                    base
                } else {
                    base + (shape - 1.0) * (t.ln() - scale.ln())
                }
            }
            BaselineFamily::PiecewiseConstant { cuts, rates } => {
                rates[interval_of(cuts, t)].ln()
            }
            BaselineFamily::Nonparametric(s) => s.hazard(t).ln(),
        }
    }

    /// `Lambda(t) = int_0^t lambda(s) ds`; exactly 0 at `t = 0`.
    pub fn cumulative(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match self {
            BaselineFamily::Exponential { rate } => rate * t,
            BaselineFamily::Weibull { shape, scale } => (t / scale).powf(*shape),
            BaselineFamily::PiecewiseConstant { cuts, rates } => {
                let mut acc = 0.0;
                let mut lo = 0.0;
                for (l, &rate) in rates.iter().enumerate() {
                    let hi = cuts.get(l).copied().unwrap_or(f64::INFINITY);
                    if t <= hi {
                        return acc + rate * (t - lo);
                    }
                    acc += rate * (hi - lo);
                    lo = hi;
                }
                acc
            }
            BaselineFamily::Nonparametric(s) => s.cumulative(t),
        }
    }
}

pub(crate) fn validate_cuts(cuts: &[f64]) -> Result<()> {
    if cuts.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
        return Err(Error::InvalidConfig("cuts must be positive and finite".into()));
    }
    if cuts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig("cuts must be strictly increasing".into()));
    }
    Ok(())
}

/// Index `l` of the interval `(cuts[l-1], cuts[l]]` containing `t`.
#[inline]
pub(crate) fn interval_of(cuts: &[f64], t: f64) -> usize {
    cuts.partition_point(|&c| c < t)
}

/// Default cuts: empirical quartiles of the event times, deduplicated.
pub fn default_cuts(dataset: &Dataset) -> Vec<f64> {
    let times = dataset.sorted_event_times();
    if times.is_empty() {
        return Vec::new();
    }
    let mut cuts: Vec<f64> = [0.25, 0.5, 0.75]
        .iter()
        .map(|&q| quantile_sorted(&times, q))
        .filter(|c| *c > 0.0)
        .collect();
    cuts.dedup();
    cuts
}

/// Per-segment baselines and regression vectors.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThetaParams {
    pub baselines: Vec<BaselineFamily>,
    pub betas: Vec<Vec<f64>>,
}

impl ThetaParams {
    pub fn new(baselines: Vec<BaselineFamily>, betas: Vec<Vec<f64>>) -> Result<Self> {
        if baselines.is_empty() || baselines.len() != betas.len() {
            return Err(Error::InvalidConfig(format!(
                "{} baselines and {} coefficient vectors",
                baselines.len(),
                betas.len()
            )));
        }
        let kind = baselines[0].kind();
        if baselines.iter().any(|b| b.kind() != kind) {
            return Err(Error::InvalidConfig("segments mix baseline families".into()));
        }
        let p = betas[0].len();
        if betas.iter().any(|b| b.len() != p) {
            return Err(Error::InvalidConfig("coefficient vectors differ in length".into()));
        }
        baselines.iter().try_for_each(BaselineFamily::validate)?;
        Ok(Self { baselines, betas })
    }

    pub fn segments(&self) -> usize {
        self.baselines.len()
    }

    pub fn kind(&self) -> FamilyKind {
        self.baselines[0].kind()
    }
}

/// Log emission of `record` in `segment`, with exposure over `[entry, time]`.
///
/// `-inf` when an event falls where the hazard is zero.
pub fn log_emission(record: &SurvivalRecord, segment: usize, theta: &ThetaParams) -> f64 {
    let baseline = &theta.baselines[segment];
    let eta = record.linear_predictor(&theta.betas[segment]);
    let exposure = baseline.cumulative(record.time) - baseline.cumulative(record.entry);
    event_term(record, baseline, eta) - exposure * eta.exp()
}

/// Log emission ignoring entry times (exposure over `[0, time]`).
pub fn log_emission_untruncated(
    record: &SurvivalRecord,
    segment: usize,
    theta: &ThetaParams,
) -> f64 {
    let baseline = &theta.baselines[segment];
    let eta = record.linear_predictor(&theta.betas[segment]);
    event_term(record, baseline, eta) - baseline.cumulative(record.time) * eta.exp()
}

#[inline]
fn event_term(record: &SurvivalRecord, baseline: &BaselineFamily, eta: f64) -> f64 {
    if record.event {
        let lh = baseline.log_hazard(record.time);
        if lh == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        lh + eta
    } else {
        0.0
    }
}

/// Emission table for every subject and segment. Datasets whose entry
/// times were supplied take the truncation-aware path.
pub fn emission_table(dataset: &Dataset, theta: &ThetaParams) -> Result<EmissionTable> {
    let (n, kk) = (dataset.len(), theta.segments());
    let emit = match dataset.entry_mode() {
        EntryMode::Provided => log_emission,
        EntryMode::Absent => log_emission_untruncated,
    };
    let mut log_e = Array2::zeros((n, kk));
    for (i, r) in dataset.records().iter().enumerate() {
        for k in 0..kk {
            let v = emit(r, k, theta);
            log_e[[i, k]] = if v.is_nan() { f64::NEG_INFINITY } else { v };
        }
    }
    EmissionTable::new(log_e)
}

/// `sum_i sum_k w_i(k) log e_i(k)`, the expected complete-data log-likelihood.
pub fn weighted_loglik(dataset: &Dataset, weights: &Array2<f64>, theta: &ThetaParams) -> f64 {
    let mut total = 0.0;
    for (i, r) in dataset.records().iter().enumerate() {
        for k in 0..theta.segments() {
            let w = weights[[i, k]];
            if w > 0.0 {
                total += w * log_emission(r, k, theta);
            }
        }
    }
    total
}

/// Weighted log-likelihood of one segment's subjects under `baseline` and `beta`.
pub fn segment_loglik(
    dataset: &Dataset,
    weights: ArrayView1<f64>,
    baseline: &BaselineFamily,
    beta: &[f64],
) -> f64 {
    let theta = ThetaParams {
        baselines: vec![baseline.clone()],
        betas: vec![beta.to_vec()],
    };
    dataset
        .records()
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(r, &w)| w * log_emission(r, 0, &theta))
        .sum()
}

/// Settings the M-step needs beyond the data.
#[derive(Clone, Debug)]
pub struct MStepSettings {
    pub cuts: Vec<f64>,
    pub bandwidth: f64,
    pub kernel: Kernel,
}

/// Result of one M-step.
#[derive(Clone, Debug)]
pub struct MStepOutput {
    pub theta: ThetaParams,
    /// Unsmoothed weighted Breslow estimates (Cox family only).
    pub breslow: Option<Vec<StepCumulativeHazard>>,
}

/// Maximizes the weighted objective for every segment.
pub fn mstep(
    kind: FamilyKind,
    dataset: &Dataset,
    weights: &Array2<f64>,
    settings: &MStepSettings,
) -> Result<MStepOutput> {
    let (baselines, betas, breslow) = match kind {
        FamilyKind::Exponential => {
            let fits = exponential::mstep_exponential(dataset, weights)?;
            let (b, beta) = fits
                .into_iter()
                .map(|f| (BaselineFamily::Exponential { rate: f.rate }, f.beta))
                .unzip();
            (b, beta, None)
        }
        FamilyKind::Weibull => {
            let fits = weibull::mstep_weibull(dataset, weights)?;
            let (b, beta) = fits
                .into_iter()
                .map(|f| {
                    (
                        BaselineFamily::Weibull {
                            shape: f.shape,
                            scale: f.scale,
                        },
                        f.beta,
                    )
                })
                .unzip();
            (b, beta, None)
        }
        FamilyKind::Pch => {
            let fits = piecewise::mstep_piecewise(dataset, weights, &settings.cuts)?;
            let (b, beta) = fits
                .into_iter()
                .map(|f| {
                    (
                        BaselineFamily::PiecewiseConstant {
                            cuts: settings.cuts.clone(),
                            rates: f.rates,
                        },
                        f.beta,
                    )
                })
                .unzip();
            (b, beta, None)
        }
        FamilyKind::Cox => {
            let fits = cox::mstep_cox(dataset, weights)?;
            let mut baselines = Vec::with_capacity(fits.len());
            let mut betas = Vec::with_capacity(fits.len());
            let mut steps = Vec::with_capacity(fits.len());
            for f in fits {
                baselines.push(BaselineFamily::Nonparametric(smooth_baseline(
                    &f.breslow,
                    settings.bandwidth,
                    settings.kernel,
                )?));
                betas.push(f.beta);
                steps.push(f.breslow);
            }
            (baselines, betas, Some(steps))
        }
    };
    Ok(MStepOutput {
        theta: ThetaParams { baselines, betas },
        breslow,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn theta(b: BaselineFamily, beta: Vec<f64>) -> ThetaParams {
        ThetaParams::new(vec![b], vec![beta]).unwrap()
    }

    #[test]
    fn exponential_event_emission() {
        let t = theta(BaselineFamily::Exponential { rate: 1.0 }, vec![0.0]);
        let r = SurvivalRecord::new(1.0, true, vec![0.3], 1.0);
        assert!((log_emission(&r, 0, &t) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn exponential_truncated_censored_emission() {
        let (rate, beta, x) = (0.4, 0.7, 1.3);
        let t = theta(BaselineFamily::Exponential { rate }, vec![beta]);
        let r = SurvivalRecord::new(3.0, false, vec![x], 1.0).with_entry(1.25);
        let expected = -(3.0 - 1.25) * rate * (x * beta).exp();
        assert!((log_emission(&r, 0, &t) - expected).abs() < 1e-14);
        let untrunc = -3.0 * rate * (x * beta).exp();
        assert!((log_emission_untruncated(&r, 0, &t) - untrunc).abs() < 1e-14);
    }

    #[test]
    fn weibull_shape_two_by_hand() {
        // lambda(t) = 2t, Lambda(t) = t^2.
        let t = theta(
            BaselineFamily::Weibull {
                shape: 2.0,
                scale: 1.0,
            },
            vec![],
        );
        let r = SurvivalRecord::new(2.0, true, vec![], 1.0);
        assert!((log_emission(&r, 0, &t) - (4f64.ln() - 4.0)).abs() < 1e-14);
    }

    #[test]
    fn piecewise_cumulative_and_hazard() {
        let b = BaselineFamily::PiecewiseConstant {
            cuts: vec![1.0, 3.0],
            rates: vec![0.8, 1.2, 1.6],
        };
        assert_eq!(b.cumulative(0.0), 0.0);
        assert!((b.cumulative(0.5) - 0.4).abs() < 1e-15);
        assert!((b.cumulative(2.0) - (0.8 + 1.2)).abs() < 1e-15);
        assert!((b.cumulative(4.0) - (0.8 + 2.4 + 1.6)).abs() < 1e-14);
        assert!((b.hazard(1.0) - 0.8).abs() < 1e-15);
        assert!((b.hazard(1.0001) - 1.2).abs() < 1e-15);
        assert!((b.hazard(10.0) - 1.6).abs() < 1e-15);
    }

    #[test]
    fn cumulative_is_zero_at_origin_for_every_family() {
        let fams = [
            BaselineFamily::Exponential { rate: 2.0 },
            BaselineFamily::Weibull {
                shape: 0.5,
                scale: 2.0,
            },
            BaselineFamily::PiecewiseConstant {
                cuts: vec![1.0],
                rates: vec![1.0, 2.0],
            },
        ];
        for f in &fams {
            assert_eq!(f.cumulative(0.0).to_bits(), 0f64.to_bits());
        }
    }

    #[test]
    fn theta_validation() {
        assert!(ThetaParams::new(
            vec![
                BaselineFamily::Exponential { rate: 1.0 },
                BaselineFamily::Weibull {
                    shape: 1.0,
                    scale: 1.0
                }
            ],
            vec![vec![], vec![]]
        )
        .is_err());
        assert!(ThetaParams::new(vec![BaselineFamily::Exponential { rate: -1.0 }], vec![vec![]])
            .is_err());
        assert!(ThetaParams::new(
            vec![BaselineFamily::PiecewiseConstant {
                cuts: vec![2.0, 1.0],
                rates: vec![1.0, 1.0, 1.0]
            }],
            vec![vec![]]
        )
        .is_err());
    }

    #[test]
    fn default_cuts_are_event_quartiles() {
        let records = (1..=8)
            .map(|i| SurvivalRecord::new(i as f64, i % 2 == 0, vec![], i as f64))
            .collect();
        let ds = Dataset::new(records).unwrap();
        // Event times 2, 4, 6, 8.
        assert_eq!(default_cuts(&ds), vec![3.5, 5.0, 6.5]);
    }

    #[test]
    fn family_names_parse() {
        for k in [
            FamilyKind::Exponential,
            FamilyKind::Weibull,
            FamilyKind::Pch,
            FamilyKind::Cox,
        ] {
            assert_eq!(k.name().parse::<FamilyKind>().unwrap(), k);
        }
        assert!("gamma".parse::<FamilyKind>().is_err());
    }
}
