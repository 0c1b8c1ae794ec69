//! One-dimensional Gaussian mixtures fitted by expectation-maximization.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Lower bound on every component variance (normalized intensity units).
pub const VAR_FLOOR: f64 = 1e-4;

/// EM stops when the total log-likelihood gains less than this.
pub const EM_TOL: f64 = 1e-6;

pub const EM_MAX_ITERS: usize = 100;

/// Components with less responsibility mass than this keep their previous
/// mean and variance.
const MIN_MASS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

/// A fitted model plus the total log-likelihood after initialization and
/// after every EM iteration.
#[derive(Debug, Clone)]
pub struct GmmFit {
    pub model: GmmModel,
    pub log_likelihoods: Vec<f64>,
}

impl GmmModel {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        let k = weights.len();
        if k == 0 || means.len() != k || variances.len() != k {
            return Err(Error::InvalidParam("mixture parameter lengths differ".into()));
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|&w| w < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParam(format!(
                "mixture weights must be non-negative and sum to 1 (sum {total})"
            )));
        }
        if variances.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidParam("variances must be positive".into()));
        }
        Ok(Self {
            weights,
            means,
            variances,
        })
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    /// `ln(w_j) + ln N(x; mu_j, var_j)` for every component.
    fn component_log_densities(&self, x: f64, out: &mut [f64]) {
        for j in 0..self.k() {
            let var = self.variances[j];
            let d = x - self.means[j];
            out[j] = self.weights[j].ln() - 0.5 * (2.0 * PI * var).ln() - d * d / (2.0 * var);
        }
    }

    /// `ln sum_j w_j N(x; mu_j, var_j)`.
    pub fn log_likelihood(&self, x: f64) -> f64 {
        let mut buf = [0.0; 16];
        let mut heap;
        let lp: &mut [f64] = if self.k() <= 16 {
            &mut buf[..self.k()]
        } else {
            heap = vec![0.0; self.k()];
            &mut heap
        };
        self.component_log_densities(x, lp);
        log_sum_exp(lp)
    }

    /// Posterior component probabilities for `x`.
    pub fn responsibilities(&self, x: f64) -> Vec<f64> {
        let mut lp = vec![0.0; self.k()];
        self.component_log_densities(x, &mut lp);
        let norm = log_sum_exp(&lp);
        lp.iter().map(|l| (l - norm).exp()).collect()
    }

    pub fn total_log_likelihood(&self, samples: &[f64]) -> f64 {
        samples.iter().map(|&x| self.log_likelihood(x)).sum()
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Splits the sorted samples into `k` contiguous equal-count chunks and uses
/// each chunk's moments as a starting component.
fn quantile_init(samples: &[f64], k: usize) -> GmmModel {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut weights = Vec::with_capacity(k);
    let mut means = Vec::with_capacity(k);
    let mut variances = Vec::with_capacity(k);
    for j in 0..k {
        let chunk = &sorted[j * n / k..(j + 1) * n / k];
        let m = chunk.iter().sum::<f64>() / chunk.len() as f64;
        let v = chunk.iter().map(|x| (x - m).powi(2)).sum::<f64>() / chunk.len() as f64;
        weights.push(chunk.len() as f64 / n as f64);
        means.push(m);
        variances.push(v.max(VAR_FLOOR));
    }
    GmmModel {
        weights,
        means,
        variances,
    }
}

/// One EM step. Returns the updated model.
fn em_step(model: &GmmModel, samples: &[f64]) -> GmmModel {
    let k = model.k();
    let mut mass = vec![0.0; k];
    let mut sum_x = vec![0.0; k];
    let mut lp = vec![0.0; k];
    let mut resp = vec![0.0; samples.len() * k];
    for (i, &x) in samples.iter().enumerate() {
        model.component_log_densities(x, &mut lp);
        let norm = log_sum_exp(&lp);
        for j in 0..k {
            let r = (lp[j] - norm).exp();
            resp[i * k + j] = r;
            mass[j] += r;
            sum_x[j] += r * x;
        }
    }
    let n = samples.len() as f64;
    let mut next = model.clone();
    for j in 0..k {
        next.weights[j] = mass[j] / n;
        if mass[j] > MIN_MASS {
            next.means[j] = sum_x[j] / mass[j];
        }
    }
    let mut sum_sq = vec![0.0; k];
    for (i, &x) in samples.iter().enumerate() {
        for j in 0..k {
            let d = x - next.means[j];
            sum_sq[j] += resp[i * k + j] * d * d;
        }
    }
    for j in 0..k {
        if mass[j] > MIN_MASS {
            next.variances[j] = (sum_sq[j] / mass[j]).max(VAR_FLOOR);
        }
    }
    let total: f64 = next.weights.iter().sum();
    next.weights.iter_mut().for_each(|w| *w /= total);
    next
}

/// Runs EM from `init` until the log-likelihood gain drops below
/// [`EM_TOL`] or `max_iters` steps have been taken.
pub fn refine_em(init: GmmModel, samples: &[f64], max_iters: usize) -> GmmFit {
    let mut model = init;
    let mut ll = model.total_log_likelihood(samples);
    let mut trace = vec![ll];
    for _ in 0..max_iters {
        let next = em_step(&model, samples);
        let next_ll = next.total_log_likelihood(samples);
        // guard against round-off: never accept a step that lowers the likelihood
        if next_ll < ll {
            break;
        }
        let gain = next_ll - ll;
        model = next;
        ll = next_ll;
        trace.push(ll);
        if gain < EM_TOL {
            break;
        }
    }
    GmmFit {
        model,
        log_likelihoods: trace,
    }
}

/// Fits a `k`-component mixture by EM from a quantile initialization.
pub fn fit_em(samples: &[f64], k: usize) -> Result<GmmFit> {
    if k == 0 {
        return Err(Error::InvalidParam("k must be >= 1".into()));
    }
    if samples.len() < k {
        return Err(Error::TooFewSamples {
            n: samples.len(),
            k,
        });
    }
    Ok(refine_em(quantile_init(samples, k), samples, EM_MAX_ITERS))
}

/// Log-density of `x` under the given model.
pub fn log_likelihood(m: &GmmModel, x: f64) -> f64 {
    m.log_likelihood(x)
}
