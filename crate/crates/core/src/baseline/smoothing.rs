//! Kernel smoothing of a step cumulative hazard.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Step cumulative hazard: jumps of `sizes[j]` at `times[j]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepCumulativeHazard {
    pub times: Vec<f64>,
    pub sizes: Vec<f64>,
}

impl StepCumulativeHazard {
    pub fn new(times: Vec<f64>, sizes: Vec<f64>) -> Result<Self> {
        if times.len() != sizes.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} jump times but {} jump sizes",
                times.len(),
                sizes.len()
            )));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("jump times must be strictly increasing".into()));
        }
        if sizes.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::InvalidConfig("jump sizes must be finite and nonnegative".into()));
        }
        Ok(Self { times, sizes })
    }

    /// Value just after `t` (right-continuous).
    pub fn value(&self, t: f64) -> f64 {
        let upto = self.times.partition_point(|&s| s <= t);
        self.sizes[..upto].iter().sum()
    }

    pub fn total(&self) -> f64 {
        self.sizes.iter().sum()
    }
}

/// Compactly supported symmetric kernels on `[-1, 1]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    #[default]
    Epanechnikov,
    Biweight,
}

impl Kernel {
    #[inline]
    pub fn density(self, u: f64) -> f64 {
        if u.abs() >= 1.0 {
            return 0.0;
        }
        let q = 1.0 - u * u;
        match self {
            Kernel::Epanechnikov => 0.75 * q,
            Kernel::Biweight => 0.9375 * q * q,
        }
    }

    /// `int_{-1}^{u} K(s) ds`.
    #[inline]
    pub fn integral(self, u: f64) -> f64 {
        if u <= -1.0 {
            return 0.0;
        }
        if u >= 1.0 {
            return 1.0;
        }
        match self {
            Kernel::Epanechnikov => 0.5 + 0.75 * u - 0.25 * u * u * u,
            Kernel::Biweight => {
                let u3 = u * u * u;
                0.5 + 0.9375 * (u - 2.0 * u3 / 3.0 + u3 * u * u / 5.0)
            }
        }
    }
}

/// Smoothed hazard `lambda(t) = (1/h) sum_j dL_j K((t_j - t)/h)` and its
/// integral from 0. Mass a kernel places below 0 is not recovered, so
/// `cumulative(inf)` equals the step total only when every jump is at least
/// `h` away from the origin.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SmoothedHazard {
    pub jump_times: Vec<f64>,
    pub jump_sizes: Vec<f64>,
    pub bandwidth: f64,
    pub kernel: Kernel,
    #[serde(skip)]
    prefix: Vec<f64>,
    #[serde(skip)]
    origin_offset: f64,
}

impl SmoothedHazard {
    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(Error::InvalidBandwidth(self.bandwidth));
        }
        Ok(())
    }

    pub fn hazard(&self, t: f64) -> f64 {
        let h = self.bandwidth;
        let lo = self.jump_times.partition_point(|&s| s <= t - h);
        let hi = self.jump_times.partition_point(|&s| s < t + h);
        let mut acc = 0.0;
        for j in lo..hi {
            acc += self.jump_sizes[j] * self.kernel.density((self.jump_times[j] - t) / h);
        }
        acc / h
    }

    /// `int_0^t lambda(s) ds`, exact for the kernel's polynomial antiderivative.
    pub fn cumulative(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let h = self.bandwidth;
        let lo = self.jump_times.partition_point(|&s| s <= t - h);
        let hi = self.jump_times.partition_point(|&s| s < t + h);
        let mut acc = self.prefix[lo];
        for j in lo..hi {
            acc += self.jump_sizes[j] * self.kernel.integral((t - self.jump_times[j]) / h);
        }
        (acc - self.origin_offset).max(0.0)
    }

    /// `int_0^inf lambda(s) ds`.
    pub fn total_mass(&self) -> f64 {
        self.prefix[self.jump_times.len()] - self.origin_offset
    }
}

/// Kernel-smooths a step cumulative hazard with bandwidth `h`.
pub fn smooth_baseline(step: &StepCumulativeHazard, h: f64, kernel: Kernel) -> Result<SmoothedHazard> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidBandwidth(h));
    }
    let mut prefix = Vec::with_capacity(step.times.len() + 1);
    prefix.push(0.0);
    let mut run = 0.0;
    for &s in &step.sizes {
        run += s;
        prefix.push(run);
    }
    let origin_offset = step
        .times
        .iter()
        .zip(&step.sizes)
        .take_while(|(t, _)| **t < h)
        .map(|(t, s)| s * kernel.integral(-t / h))
        .sum();
    Ok(SmoothedHazard {
        jump_times: step.times.clone(),
        jump_sizes: step.sizes.clone(),
        bandwidth: h,
        kernel,
        prefix,
        origin_offset,
    })
}

/// The `n^(-1/5)` bandwidth rule.
pub fn default_bandwidth(n: usize) -> f64 {
    (n as f64).powf(-0.2)
}
