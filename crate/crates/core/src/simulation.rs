//! Synthetic cohorts: the four benchmark scenarios and user hazard tables.
//!
//! Subjects are laid out in contiguous blocks (one per true segment) with
//! order key equal to their 1-based position. Each carries one binary
//! covariate `X ~ Bernoulli(0.5)`; event times are drawn by inverting the
//! block's cumulative hazard scaled by `exp(X beta)`, and censoring times are
//! `Uniform(0, c)`.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, EntryMode, SurvivalRecord};
use crate::error::{Error, Result};

/// Draws used to calibrate the censoring bound.
pub const PILOT_SIZE: usize = 100_000;
pub const TARGET_CENSORING: f64 = 0.5;

/// Baseline hazard used to generate data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum HazardSpec {
    Exponential { rate: f64 },
    /// `lambda(t) = (shape / scale) (t / scale)^(shape - 1)`.
    Weibull { shape: f64, scale: f64 },
    /// `rates[l]` on `(cuts[l-1], cuts[l]]`; zero rates are allowed except in the last interval.
    Pch { cuts: Vec<f64>, rates: Vec<f64> },
    /// `lambda(t) = exp(a t)`.
    Gompertz { a: f64 },
}

impl HazardSpec {
    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        match self {
            HazardSpec::Exponential { rate } if !(*rate > 0.0 && rate.is_finite()) => {
                bad(format!("rate must be positive, got {rate}"))
            }
            HazardSpec::Weibull { shape, scale }
                if !(*shape > 0.0 && *scale > 0.0 && shape.is_finite() && scale.is_finite()) =>
            {
                bad(format!("invalid Weibull shape {shape} / scale {scale}"))
            }
            HazardSpec::Gompertz { a } if !(*a > 0.0 && a.is_finite()) => {
                bad(format!("Gompertz a must be positive, got {a}"))
            }
            HazardSpec::Pch { cuts, rates } => {
                crate::baseline::validate_cuts(cuts)?;
                if rates.len() != cuts.len() + 1 {
                    return bad(format!("{} cuts need {} rates", cuts.len(), cuts.len() + 1));
                }
                if rates.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
                    return bad("pch rates must be finite and nonnegative".into());
                }
                if !(rates[rates.len() - 1] > 0.0) {
                    return bad("the last pch rate must be positive".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn cumulative(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match self {
            HazardSpec::Exponential { rate } => rate * t,
            HazardSpec::Weibull { shape, scale } => (t / scale).powf(*shape),
            HazardSpec::Gompertz { a } => (a * t).exp_m1() / a,
            HazardSpec::Pch { cuts, rates } => {
                let mut acc = 0.0;
                let mut lo = 0.0;
                for (l, &r) in rates.iter().enumerate() {
                    let hi = cuts.get(l).copied().unwrap_or(f64::INFINITY);
                    if t <= hi {
                        return acc + r * (t - lo);
                    }
                    acc += r * (hi - lo);
                    lo = hi;
                }
                acc
            }
        }
    }

    /// Smallest `t` with `cumulative(t) = s`.
    pub fn inverse_cumulative(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        match self {
            HazardSpec::Exponential { rate } => s / rate,
            HazardSpec::Weibull { shape, scale } => scale * s.powf(1.0 / shape),
            HazardSpec::Gompertz { a } => (a * s).ln_1p() / a,
            HazardSpec::Pch { cuts, rates } => {
                let mut left = s;
                let mut lo = 0.0;
                for (l, &r) in rates.iter().enumerate() {
                    let hi = cuts.get(l).copied().unwrap_or(f64::INFINITY);
                    let mass = r * (hi - lo);
                    if r > 0.0 && left <= mass {
                        return lo + left / r;
                    }
                    left -= mass;
                    lo = hi;
                }
                unreachable!("last rate is positive")
            }
        }
    }
}

/// Generating hazard and coefficients of one block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub hazard: HazardSpec,
    pub beta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Censoring {
    None,
    /// `Uniform(0, bound)`.
    Uniform { bound: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Truth {
    pub scenario: Option<u8>,
    pub blocks: Vec<BlockSpec>,
    pub block_sizes: Vec<usize>,
    pub censoring: Censoring,
    pub censored_fraction: f64,
    pub seed: u64,
}

impl Truth {
    /// 1-based positions of the last subject of every block but the last.
    pub fn breakpoints(&self) -> Vec<usize> {
        self.block_sizes
            .iter()
            .scan(0, |acc, s| {
                *acc += s;
                Some(*acc)
            })
            .take(self.block_sizes.len().saturating_sub(1))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedCohort {
    pub dataset: Dataset,
    /// True 1-based segment of each subject.
    pub labels: Vec<usize>,
    pub truth: Truth,
}

/// Blocks of scenario `id` (1 to 4).
pub fn scenario_blocks(id: u8) -> Result<Vec<BlockSpec>> {
    let b = |hazard, beta| BlockSpec { hazard, beta };
    let exp = |rate| HazardSpec::Exponential { rate };
    let wei = |shape| HazardSpec::Weibull { shape, scale: 1.0 };
    let pch = |cuts: [f64; 2], rates: [f64; 3]| HazardSpec::Pch {
        cuts: cuts.to_vec(),
        rates: rates.to_vec(),
    };
    let gom = |a| HazardSpec::Gompertz { a };
    Ok(match id {
        1 => vec![b(exp(1.0), 1.5), b(exp(0.5), -0.5), b(exp(0.7), -0.5)],
        // lambda = 5 t^4, 2 t, 2 t
        2 => vec![b(wei(5.0), 1.5), b(wei(2.0), -1.0), b(wei(2.0), -5.0)],
        3 => vec![
            b(pch([1.0, 3.0], [0.8, 1.2, 1.6]), 1.5),
            b(pch([4.0, 6.0], [1.2, 1.6, 2.0]), -0.5),
            b(pch([5.0, 7.0], [1.6, 2.0, 2.4]), -1.5),
        ],
        4 => vec![b(gom(5.0), 1.5), b(gom(2.0), -0.5), b(gom(2.0), -1.5)],
        other => {
            return Err(Error::InvalidConfig(format!("unknown scenario {other}; expected 1 to 4")))
        }
    })
}

fn draw_event<R: Rng + ?Sized>(block: &BlockSpec, rng: &mut R) -> (f64, f64) {
    let x: f64 = if Bernoulli::new(0.5).expect("valid p").sample(rng) { 1.0 } else { 0.0 };
    let e: f64 = Exp1.sample(rng);
    (x, block.hazard.inverse_cumulative(e * (-x * block.beta).exp()))
}

/// Censoring bound `c` giving `target` expected censoring for a cohort with
/// the given block proportions, by bisection on a seeded pilot sample.
pub fn calibrate_censoring(blocks: &[BlockSpec], block_sizes: &[usize], target: f64, pilot_seed: u64) -> f64 {
    let total: usize = block_sizes.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(pilot_seed);
    let mut times = Vec::with_capacity(PILOT_SIZE);
    for (b, &size) in blocks.iter().zip(block_sizes) {
        let m = ((size as f64 / total as f64) * PILOT_SIZE as f64).round() as usize;
        times.extend((0..m).map(|_| draw_event(b, &mut rng).1));
    }
    // P(C < T) = E[min(T, c) / c], decreasing in c.
    let censored = |c: f64| times.iter().map(|&t| t.min(c)).sum::<f64>() / (c * times.len() as f64);
    let mut hi = times.iter().copied().fold(0.0, f64::max).max(1e-12);
    while censored(hi) > target {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if censored(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Simulates contiguous blocks of the given sizes.
pub fn simulate_blocks(
    blocks: &[BlockSpec],
    block_sizes: &[usize],
    censoring: Censoring,
    seed: u64,
) -> Result<SimulatedCohort> {
    if blocks.is_empty() || blocks.len() != block_sizes.len() {
        return Err(Error::InvalidConfig(format!(
            "{} blocks but {} block sizes",
            blocks.len(),
            block_sizes.len()
        )));
    }
    if block_sizes.iter().any(|&s| s == 0) {
        return Err(Error::InvalidConfig("block sizes must be positive".into()));
    }
    blocks.iter().try_for_each(|b| b.hazard.validate())?;
    if let Censoring::Uniform { bound } = censoring {
        if !(bound > 0.0 && bound.is_finite()) {
            return Err(Error::InvalidConfig(format!("censoring bound {bound} must be positive")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = block_sizes.iter().sum();
    let mut records = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut censored = 0usize;
    for (k, (b, &size)) in blocks.iter().zip(block_sizes).enumerate() {
        for _ in 0..size {
            let (x, t) = draw_event(b, &mut rng);
            let (time, event) = match censoring {
                Censoring::None => (t, true),
                Censoring::Uniform { bound } => {
                    let c = rng.random::<f64>() * bound;
                    if c < t {
                        (c, false)
                    } else {
                        (t, true)
                    }
                }
            };
            censored += usize::from(!event);
            let key = (records.len() + 1) as f64;
            records.push(SurvivalRecord::new(time, event, vec![x], key));
            labels.push(k + 1);
        }
    }
    Ok(SimulatedCohort {
        dataset: Dataset::with_entry_mode(records, EntryMode::Absent)?,
        labels,
        truth: Truth {
            scenario: None,
            blocks: blocks.to_vec(),
            block_sizes: block_sizes.to_vec(),
            censoring,
            censored_fraction: censored as f64 / n as f64,
            seed,
        },
    })
}

fn scenario_bound(id: u8) -> Result<f64> {
    static BOUNDS: [OnceLock<f64>; 4] = [const { OnceLock::new() }; 4];
    let blocks = scenario_blocks(id)?;
    Ok(*BOUNDS[usize::from(id - 1)].get_or_init(|| {
        calibrate_censoring(&blocks, &[1, 1, 1], TARGET_CENSORING, 0x5eed_0000 + u64::from(id))
    }))
}

/// Scenario `id` with `n / 3` subjects per segment and calibrated 50% censoring.
pub fn simulate_scenario(id: u8, n: usize, seed: u64) -> Result<SimulatedCohort> {
    if n == 0 || n % 3 != 0 {
        return Err(Error::InvalidConfig(format!("n = {n} must be a positive multiple of 3")));
    }
    let blocks = scenario_blocks(id)?;
    let bound = scenario_bound(id)?;
    let mut cohort = simulate_blocks(&blocks, &[n / 3; 3], Censoring::Uniform { bound }, seed)?;
    cohort.truth.scenario = Some(id);
    Ok(cohort)
}

/// Piecewise-constant hazard table: shared cuts and one rate vector and
/// coefficient per block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HazardTable {
    pub cuts: Vec<f64>,
    pub rates: Vec<Vec<f64>>,
    pub betas: Vec<f64>,
}

impl HazardTable {
    pub fn blocks(&self) -> Result<Vec<BlockSpec>> {
        if self.rates.len() != self.betas.len() {
            return Err(Error::InvalidConfig(format!(
                "{} rate rows but {} coefficients",
                self.rates.len(),
                self.betas.len()
            )));
        }
        let blocks: Vec<BlockSpec> = self
            .rates
            .iter()
            .zip(&self.betas)
            .map(|(r, &beta)| BlockSpec {
                hazard: HazardSpec::Pch {
                    cuts: self.cuts.clone(),
                    rates: r.clone(),
                },
                beta,
            })
            .collect();
        blocks.iter().try_for_each(|b| b.hazard.validate())?;
        Ok(blocks)
    }
}

/// Simulates a hazard table with calibrated 50% censoring. `block_sizes`
/// must sum to `n`.
pub fn simulate_table(table: &HazardTable, block_sizes: &[usize], n: usize, seed: u64) -> Result<SimulatedCohort> {
    if block_sizes.iter().sum::<usize>() != n {
        return Err(Error::InvalidConfig(format!(
            "block sizes sum to {} but n = {n}",
            block_sizes.iter().sum::<usize>()
        )));
    }
    let blocks = table.blocks()?;
    if blocks.len() != block_sizes.len() {
        return Err(Error::InvalidConfig(format!(
            "{} blocks but {} block sizes",
            blocks.len(),
            block_sizes.len()
        )));
    }
    let bound = calibrate_censoring(&blocks, block_sizes, TARGET_CENSORING, seed ^ 0x9e37_79b9_7f4a_7c15);
    simulate_blocks(&blocks, block_sizes, Censoring::Uniform { bound }, seed)
}

/// Synthetic age-incidence shape, NOT registry data: time is years since
/// age 15, cuts every 5 years up to age 95, and rates growing by a factor
/// `e^0.2` per 5-year band from 0.002.
pub fn synthetic_incidence() -> (Vec<f64>, Vec<f64>) {
    let cuts: Vec<f64> = (1..16).map(|l| 5.0 * l as f64).collect();
    let rates = (0..16).map(|l| 0.002 * (0.2 * l as f64).exp()).collect();
    (cuts, rates)
}

/// One block following [`synthetic_incidence`] with coefficient 1.5.
pub fn synthetic_null_table() -> HazardTable {
    let (cuts, rates) = synthetic_incidence();
    HazardTable {
        cuts,
        rates: vec![rates],
        betas: vec![1.5],
    }
}

/// Three blocks scaling [`synthetic_incidence`] by 1, 0.5 and 1.5 with
/// coefficients 1.5, -0.5 and 1.5.
pub fn synthetic_two_breakpoint_table() -> HazardTable {
    let (cuts, base) = synthetic_incidence();
    let scaled = |f: f64| base.iter().map(|r| r * f).collect();
    HazardTable {
        cuts,
        rates: vec![scaled(1.0), scaled(0.5), scaled(1.5)],
        betas: vec![1.5, -0.5, 1.5],
    }
}
