//! Small statistics helpers: Monte-Carlo errors, KS statistic, fringe fits.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::circuit::DetectorId;
use crate::fock::{ClickDistribution, ClickEvent};

/// Estimated probability with its standard error (0 for exact values).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, stderr: 0.0 }
    }
}

/// Click-pattern counts over independent samples.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub detectors: Vec<DetectorId>,
    pub counts: BTreeMap<Vec<u8>, u64>,
    pub n_samples: u64,
}

impl Tally {
    pub fn new(detectors: Vec<DetectorId>) -> Self {
        Self {
            detectors,
            counts: BTreeMap::new(),
            n_samples: 0,
        }
    }

    pub fn add(&mut self, pattern: Vec<u8>) {
        *self.counts.entry(pattern).or_insert(0) += 1;
        self.n_samples += 1;
    }

    pub fn count(&self, event: &ClickEvent) -> u64 {
        self.counts
            .iter()
            .filter(|(pat, _)| event.holds(&self.detectors, pat))
            .map(|(_, c)| c)
            .sum()
    }

    pub fn probability(&self, event: &ClickEvent) -> Estimate {
        let p = self.count(event) as f64 / self.n_samples as f64;
        Estimate {
            value: p,
            stderr: binomial_stderr(p, self.n_samples),
        }
    }

    /// `P(event | given)` as a frequency over the conditioning subsample.
    /// `None` when the condition never occurred.
    pub fn conditional(&self, event: &ClickEvent, given: &ClickEvent) -> Option<Estimate> {
        let ng = self.count(given);
        if ng == 0 {
            return None;
        }
        let nj = self.count(&ClickEvent::And(vec![event.clone(), given.clone()]));
        let p = nj as f64 / ng as f64;
        Some(Estimate {
            value: p,
            stderr: binomial_stderr(p, ng),
        })
    }

    pub fn distribution(&self) -> ClickDistribution {
        let mut d = ClickDistribution::new(self.detectors.clone());
        for (pat, &c) in &self.counts {
            d.add(pat.clone(), c as f64 / self.n_samples as f64);
        }
        d
    }
}

/// Standard error of a Bernoulli frequency `p` estimated from `n` trials.
pub fn binomial_stderr(p: f64, n: u64) -> f64 {
    if n == 0 {
        return f64::NAN;
    }
    (p * (1.0 - p) / n as f64).max(0.0).sqrt()
}

/// Two estimates differ by more than `k` combined standard errors.
/// When both errors vanish (exact values) a `1e-9` absolute threshold is used.
pub fn diverges(a: f64, se_a: f64, b: f64, se_b: f64, k: f64) -> bool {
    let se = (se_a * se_a + se_b * se_b).sqrt();
    if se == 0.0 {
        (a - b).abs() > 1e-9
    } else {
        (a - b).abs() > k * se
    }
}

/// One-sample Kolmogorov–Smirnov statistic. Sorts `samples` in place.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(|a, b| a.total_cmp(b));
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            ((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic critical value of the KS statistic at the 1% level.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}

/// Least-squares fit `y = a + p cos(kx) + q sin(kx)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FringeFit {
    pub harmonic: u32,
    pub offset: f64,
    pub cos_coef: f64,
    pub sin_coef: f64,
    pub residual: f64,
    /// Standard error of the visibility when per-point errors were supplied.
    pub visibility_stderr: Option<f64>,
}

impl FringeFit {
    pub fn amplitude(&self) -> f64 {
        self.cos_coef.hypot(self.sin_coef)
    }

    pub fn visibility(&self) -> f64 {
        if self.offset == 0.0 {
            0.0
        } else {
            self.amplitude() / self.offset.abs()
        }
    }
}

fn fit_harmonic(xs: &[f64], ys: &[f64], sig: Option<&[f64]>, k: u32) -> Option<FringeFit> {
    let row = |x: f64| Vector3::new(1.0, (k as f64 * x).cos(), (k as f64 * x).sin());
    let mut ata = Matrix3::zeros();
    let mut aty = Vector3::zeros();
    for (&x, &y) in xs.iter().zip(ys) {
        let r = row(x);
        ata += r * r.transpose();
        aty += r * y;
    }
    let inv = ata.try_inverse()?;
    let beta = inv * aty;
    let residual = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| (y - row(x).dot(&beta)).powi(2))
        .sum::<f64>()
        .sqrt();
    let visibility_stderr = sig.map(|s| {
        let mut mid = Matrix3::zeros();
        for (&x, &si) in xs.iter().zip(s) {
            let r = row(x);
            mid += r * r.transpose() * (si * si);
        }
        let cov = inv * mid * inv;
        (cov[(1, 1)] + cov[(2, 2)]).max(0.0).sqrt() / beta[0].abs()
    });
    Some(FringeFit {
        harmonic: k,
        offset: beta[0],
        cos_coef: beta[1],
        sin_coef: beta[2],
        residual,
        visibility_stderr,
    })
}

/// Fits the first and second harmonic and keeps the better one.
/// `sigmas`, when given, are per-point standard errors used for the
/// visibility error (evaluated under the fitted model).
pub fn fit_fringe(xs: &[f64], ys: &[f64], sigmas: Option<&[f64]>) -> Option<FringeFit> {
    assert_eq!(xs.len(), ys.len());
    let fits: Vec<FringeFit> = [1, 2]
        .into_iter()
        .filter_map(|k| fit_harmonic(xs, ys, sigmas, k))
        .collect();
    fits.into_iter()
        .min_by(|a, b| a.residual.total_cmp(&b.residual))
}
