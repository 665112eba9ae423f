#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use survseg::{Dataset, SurvivalRecord};

/// Every non-decreasing label path that starts in segment 0, ends in
/// segment `k - 1` and moves up by at most one per step.
pub fn segmentations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(path: &mut Vec<usize>, n: usize, k: usize, out: &mut Vec<Vec<usize>>) {
        if path.len() == n {
            if *path.last().unwrap() == k - 1 {
                out.push(path.clone());
            }
            return;
        }
        let last = *path.last().unwrap();
        path.push(last);
        go(path, n, k, out);
        path.pop();
        if last + 1 < k {
            path.push(last + 1);
            go(path, n, k, out);
            path.pop();
        }
    }
    let mut out = Vec::new();
    go(&mut vec![0], n, k, &mut out);
    out
}

pub fn prior_mass(path: &[usize], eta: &Array2<f64>) -> f64 {
    (1..path.len())
        .map(|i| {
            let from = path[i - 1];
            if path[i] == from {
                1.0 - eta[[i, from]]
            } else {
                eta[[i, from]]
            }
        })
        .product()
}

pub struct Enumerated {
    pub log_lik: f64,
    pub weights: Array2<f64>,
    pub bp: Array2<f64>,
    pub normalizer: f64,
}

/// Posterior quantities by summing over every segmentation explicitly.
pub fn enumerate(log_e: &Array2<f64>, eta: &Array2<f64>) -> Enumerated {
    let (n, k) = log_e.dim();
    let paths = segmentations(n, k);
    let mut joint = Vec::with_capacity(paths.len());
    let mut normalizer = 0.0;
    for p in &paths {
        let prior = prior_mass(p, eta);
        normalizer += prior;
        let emit: f64 = p.iter().enumerate().map(|(i, &s)| log_e[[i, s]]).sum();
        joint.push(prior * emit.exp());
    }
    let evidence: f64 = joint.iter().sum();
    let mut weights = Array2::zeros((n, k));
    let mut bp = Array2::zeros((k.saturating_sub(1), n.saturating_sub(1)));
    for (p, &m) in paths.iter().zip(&joint) {
        for (i, &s) in p.iter().enumerate() {
            weights[[i, s]] += m / evidence;
            if i + 1 < n && p[i + 1] == s + 1 {
                bp[[s, i]] += m / evidence;
            }
        }
    }
    Enumerated {
        log_lik: (evidence / normalizer).ln(),
        weights,
        bp,
        normalizer,
    }
}

/// Random prior with roughly `zero_frac` forbidden positions (whole rows).
pub fn random_eta<R: Rng>(rng: &mut R, n: usize, k: usize, zero_frac: f64) -> Array2<f64> {
    let mut eta = Array2::zeros((n, k));
    for i in 1..n {
        let forbid = rng.random::<f64>() < zero_frac;
        for s in 0..k {
            eta[[i, s]] = if forbid { 0.0 } else { rng.random_range(0.05..0.95) };
        }
    }
    eta
}

pub fn random_log_e<R: Rng>(rng: &mut R, n: usize, k: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, k), |_| rng.random_range(-4.0..2.0))
}

/// Small censored dataset with `p` standard-normal-ish covariates and
/// optional late entry.
pub fn random_dataset(seed: u64, n: usize, p: usize, late_entry: bool) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = (0..n)
        .map(|i| {
            let x: Vec<f64> = (0..p).map(|_| rng.random_range(-1.5..1.5)).collect();
            let t: f64 = -rng.random::<f64>().ln() / (0.5 + x.iter().sum::<f64>().abs());
            let c: f64 = rng.random_range(0.0..3.0);
            let entry = if late_entry && rng.random::<f64>() < 0.3 {
                t.min(c) * rng.random::<f64>()
            } else {
                0.0
            };
            SurvivalRecord::new(t.min(c), t <= c, x, i as f64).with_entry(entry)
        })
        .collect();
    Dataset::new(records).unwrap()
}

pub fn random_weights<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.05..1.0)).collect()
}

/// One-hot weights from 1-based labels.
pub fn oracle_weights(labels: &[usize], k: usize) -> Array2<f64> {
    Array2::from_shape_fn((labels.len(), k), |(i, s)| if labels[i] == s + 1 { 1.0 } else { 0.0 })
}

/// Central-difference gradient.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|j| {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[j] += h;
            xm[j] -= h;
            (f(&xp) - f(&xm)) / (2.0 * h)
        })
        .collect()
}

/// Largest `|a - b| / max(1, |a|, |b|)` over components.
pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / 1f64.max(x.abs()).max(y.abs()))
        .fold(0.0, f64::max)
}

/// Unweighted Cox fit with Breslow ties, written directly from the
/// textbook formulas: risk sets are rebuilt by scanning every subject.
pub struct NaiveCox {
    pub beta: Vec<f64>,
    pub times: Vec<f64>,
    pub jumps: Vec<f64>,
}

pub fn naive_cox(data: &[(f64, bool, Vec<f64>)]) -> NaiveCox {
    let p = data[0].2.len();
    let mut times: Vec<f64> = data.iter().filter(|r| r.1).map(|r| r.0).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let sums = |beta: &[f64], t: f64| {
        let mut s0 = 0.0;
        let mut s1 = vec![0.0; p];
        let mut s2 = vec![vec![0.0; p]; p];
        for (time, _, x) in data {
            if *time >= t {
                let r: f64 = x.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>().exp();
                s0 += r;
                for a in 0..p {
                    s1[a] += r * x[a];
                    for b in 0..p {
                        s2[a][b] += r * x[a] * x[b];
                    }
                }
            }
        }
        (s0, s1, s2)
    };
    let mut beta = vec![0.0; p];
    for _ in 0..100 {
        let mut g = vec![0.0; p];
        let mut info = vec![vec![0.0; p]; p];
        for &t in &times {
            let events: Vec<&Vec<f64>> = data.iter().filter(|r| r.1 && r.0 == t).map(|r| &r.2).collect();
            let d = events.len() as f64;
            let (s0, s1, s2) = sums(&beta, t);
            for a in 0..p {
                g[a] += events.iter().map(|x| x[a]).sum::<f64>() - d * s1[a] / s0;
                for b in 0..p {
                    info[a][b] += d * (s2[a][b] / s0 - s1[a] * s1[b] / (s0 * s0));
                }
            }
        }
        let step = solve(info, g);
        let size = step.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        for a in 0..p {
            beta[a] += step[a];
        }
        if size < 1e-14 {
            break;
        }
    }
    let jumps = times
        .iter()
        .map(|&t| {
            let d = data.iter().filter(|r| r.1 && r.0 == t).count() as f64;
            d / sums(&beta, t).0
        })
        .collect();
    NaiveCox { beta, times, jumps }
}

/// Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, piv);
        b.swap(c, piv);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Two-sided one-sample Kolmogorov-Smirnov statistic.
pub fn ks_statistic(mut sample: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}
