//! Sample informativeness from density scores: a 1-D Gaussian mixture fitted
//! by EM, whose components are ranked by mean density. The lowest-density
//! component is the "high information" set.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::data::SampleId;
use crate::error::{AcplError, Result};

pub const VARIANCE_FLOOR: f64 = 1e-6;
pub const EMPTY_WEIGHT: f64 = 1e-8;
pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 200;
pub const DEFAULT_COMPONENTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InfoLevel {
    Low,
    Medium,
    High,
}

impl std::str::FromStr for InfoLevel {
    type Err = AcplError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low" => Ok(InfoLevel::Low),
            "medium" => Ok(InfoLevel::Medium),
            "high" => Ok(InfoLevel::High),
            other => Err(AcplError::Config(format!("unknown information level `{other}`"))),
        }
    }
}

impl std::fmt::Display for InfoLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InfoLevel::Low => "low",
            InfoLevel::Medium => "medium",
            InfoLevel::High => "high",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmComponent {
    pub mean: f64,
    pub variance: f64,
    pub weight: f64,
}

impl GmmComponent {
    fn log_density(&self, x: f64) -> f64 {
        let diff = x - self.mean;
        -0.5 * ((2.0 * std::f64::consts::PI * self.variance).ln() + diff * diff / self.variance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub log_likelihood: f64,
    /// Log-likelihood at the initial parameters and after every EM iteration.
    pub log_likelihood_trace: Vec<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub num_components: usize,
    /// Starting parameters; quantile initialisation when absent.
    pub initial: Option<Vec<GmmComponent>>,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            num_components: DEFAULT_COMPONENTS,
            initial: None,
        }
    }
}

/// Posterior mass of each information level for one score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub low: f64,
    pub medium: f64,
    pub high: f64,
}

impl Posterior {
    pub fn get(&self, level: InfoLevel) -> f64 {
        match level {
            InfoLevel::Low => self.low,
            InfoLevel::Medium => self.medium,
            InfoLevel::High => self.high,
        }
    }

    /// True when `level` strictly exceeds both other levels.
    pub fn is_strict_argmax(&self, level: InfoLevel) -> bool {
        let own = self.get(level);
        [InfoLevel::Low, InfoLevel::Medium, InfoLevel::High]
            .into_iter()
            .filter(|l| *l != level)
            .all(|l| own > self.get(l))
    }
}

/// A fitted 1-D mixture over density scores, components sorted by ascending mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoGmm {
    components: Vec<GmmComponent>,
    levels: Vec<InfoLevel>,
    diagnostics: FitDiagnostics,
}

/// Level of each component given ascending means: lowest density is high
/// information, highest density is low information, the rest medium.
fn assign_levels(n: usize) -> Vec<InfoLevel> {
    (0..n)
        .map(|i| match i {
            0 => InfoLevel::High,
            i if i == n - 1 => InfoLevel::Low,
            _ => InfoLevel::Medium,
        })
        .collect()
}

fn sort_components(components: &mut [GmmComponent]) {
    components.sort_by(|a, b| {
        a.mean
            .total_cmp(&b.mean)
            .then(a.variance.total_cmp(&b.variance))
            .then(a.weight.total_cmp(&b.weight))
    });
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn log_weight(w: f64) -> f64 {
    if w > 0.0 {
        w.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Quantile initialisation: means at the `i/(n+1)` quantiles, the global
/// variance everywhere, uniform weights.
pub fn quantile_init(scores: &[f64], num_components: usize) -> Vec<GmmComponent> {
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let variance = (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n).max(VARIANCE_FLOOR);
    (1..=num_components)
        .map(|i| GmmComponent {
            mean: quantile(&sorted, i as f64 / (num_components + 1) as f64),
            variance,
            weight: 1.0 / num_components as f64,
        })
        .collect()
}

/// E-step: per-sample responsibilities (row-major n x k) and the log-likelihood.
fn expectation(scores: &[f64], components: &[GmmComponent]) -> (Vec<f64>, f64) {
    let k = components.len();
    let mut resp = vec![0.0; scores.len() * k];
    let mut ll = 0.0;
    let mut logs = vec![0.0; k];
    for (i, &x) in scores.iter().enumerate() {
        for (l, c) in logs.iter_mut().zip(components) {
            *l = log_weight(c.weight) + c.log_density(x);
        }
        let lse = log_sum_exp(&logs);
        ll += lse;
        for (z, l) in logs.iter().enumerate() {
            resp[i * k + z] = (l - lse).exp();
        }
    }
    (resp, ll)
}

/// M-step. Components whose new weight falls below [`EMPTY_WEIGHT`] keep their
/// previous mean and variance.
fn maximization(scores: &[f64], resp: &[f64], components: &mut [GmmComponent]) {
    let n = scores.len() as f64;
    let k = components.len();
    for (z, c) in components.iter_mut().enumerate() {
        let mass: f64 = (0..scores.len()).map(|i| resp[i * k + z]).sum();
        c.weight = mass / n;
        if c.weight < EMPTY_WEIGHT {
            continue;
        }
        let mean = scores
            .iter()
            .enumerate()
            .map(|(i, x)| resp[i * k + z] * x)
            .sum::<f64>()
            / mass;
        let variance = scores
            .iter()
            .enumerate()
            .map(|(i, x)| resp[i * k + z] * (x - mean).powi(2))
            .sum::<f64>()
            / mass;
        c.mean = mean;
        c.variance = variance.max(VARIANCE_FLOOR);
    }
    let total: f64 = components.iter().map(|c| c.weight).sum();
    for c in components.iter_mut() {
        c.weight /= total;
    }
}

/// Fit a `num_components` Gaussian mixture to density scores by EM.
pub fn fit_em(scores: &[f64], opts: &EmOptions) -> Result<InfoGmm> {
    let k = opts.num_components;
    if k < 2 {
        return Err(AcplError::Fit(format!("need at least 2 components, got {k}")));
    }
    if scores.len() < k {
        return Err(AcplError::Fit(format!(
            "{} scores cannot support {k} components",
            scores.len()
        )));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(AcplError::Fit(format!("non-finite score {bad}")));
    }
    if scores.iter().all(|s| *s == scores[0]) {
        return Err(AcplError::DegenerateData(format!(
            "all {} scores equal {}",
            scores.len(),
            scores[0]
        )));
    }
    let mut components = match &opts.initial {
        Some(init) => {
            if init.len() != k {
                return Err(AcplError::Fit(format!(
                    "initial parameters have {} components, expected {k}",
                    init.len()
                )));
            }
            let total: f64 = init.iter().map(|c| c.weight).sum();
            if init.iter().any(|c| !(c.variance > 0.0) || c.weight < 0.0) || total <= 0.0 {
                return Err(AcplError::Fit("invalid initial parameters".into()));
            }
            init.iter()
                .map(|c| GmmComponent {
                    mean: c.mean,
                    variance: c.variance.max(VARIANCE_FLOOR),
                    weight: c.weight / total,
                })
                .collect()
        }
        None => quantile_init(scores, k),
    };
    sort_components(&mut components);

    let (mut resp, mut ll) = expectation(scores, &components);
    let mut trace = vec![ll];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        maximization(scores, &resp, &mut components);
        let (next_resp, next_ll) = expectation(scores, &components);
        iterations += 1;
        trace.push(next_ll);
        resp = next_resp;
        let gain = next_ll - ll;
        ll = next_ll;
        if gain < opts.tol {
            converged = true;
            break;
        }
    }
    sort_components(&mut components);
    Ok(InfoGmm {
        levels: assign_levels(k),
        components,
        diagnostics: FitDiagnostics {
            iterations,
            log_likelihood: ll,
            log_likelihood_trace: trace,
            converged,
        },
    })
}

impl InfoGmm {
    /// A mixture with given parameters (weights are renormalized).
    pub fn from_components(mut components: Vec<GmmComponent>) -> Result<Self> {
        if components.len() < 2 {
            return Err(AcplError::Fit("need at least 2 components".into()));
        }
        if components
            .iter()
            .any(|c| !(c.variance > 0.0) || c.weight < 0.0 || !c.mean.is_finite())
        {
            return Err(AcplError::Fit("invalid component parameters".into()));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if total <= 0.0 {
            return Err(AcplError::Fit("weights sum to zero".into()));
        }
        for c in &mut components {
            c.weight /= total;
        }
        sort_components(&mut components);
        Ok(Self {
            levels: assign_levels(components.len()),
            components,
            diagnostics: FitDiagnostics {
                iterations: 0,
                log_likelihood: f64::NAN,
                log_likelihood_trace: Vec::new(),
                converged: false,
            },
        })
    }

    pub fn components(&self) -> &[GmmComponent] {
        &self.components
    }

    pub fn levels(&self) -> &[InfoLevel] {
        &self.levels
    }

    pub fn diagnostics(&self) -> &FitDiagnostics {
        &self.diagnostics
    }

    /// Posterior probability of each component for `score`.
    pub fn component_posteriors(&self, score: f64) -> Vec<f64> {
        let logs: Vec<f64> = self
            .components
            .iter()
            .map(|c| log_weight(c.weight) + c.log_density(score))
            .collect();
        let lse = log_sum_exp(&logs);
        logs.iter().map(|l| (l - lse).exp().min(1.0)).collect()
    }

    /// Posterior of each information level (components of a level are summed).
    pub fn posterior(&self, score: f64) -> Posterior {
        let mut p = Posterior {
            low: 0.0,
            medium: 0.0,
            high: 0.0,
        };
        for (post, level) in self.component_posteriors(score).into_iter().zip(&self.levels) {
            match level {
                InfoLevel::Low => p.low += post,
                InfoLevel::Medium => p.medium += post,
                InfoLevel::High => p.high += post,
            }
        }
        // Summing two medium components can round past 1.
        p.medium = p.medium.min(1.0);
        p
    }

    /// True when every component of `level` has (numerically) zero weight.
    pub fn level_is_empty(&self, level: InfoLevel) -> bool {
        self.components
            .iter()
            .zip(&self.levels)
            .filter(|(_, l)| **l == level)
            .all(|(c, _)| c.weight < EMPTY_WEIGHT)
    }

    /// Ids whose posterior for `target` strictly exceeds both other levels.
    pub fn select(&self, scored: &[(SampleId, f64)], target: InfoLevel) -> BTreeSet<SampleId> {
        if self.level_is_empty(target) {
            return BTreeSet::new();
        }
        scored
            .iter()
            .filter(|(_, s)| self.posterior(*s).is_strict_argmax(target))
            .map(|(id, _)| *id)
            .collect()
    }
}

pub fn posterior(gmm: &InfoGmm, score: f64) -> Posterior {
    gmm.posterior(score)
}

pub fn select_high_info(gmm: &InfoGmm, scored: &[(SampleId, f64)]) -> BTreeSet<SampleId> {
    gmm.select(scored, InfoLevel::High)
}
