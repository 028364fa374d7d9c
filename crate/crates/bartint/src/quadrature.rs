//! From posterior draws to integral posteriors: exact per-draw integrals
//! against product measures, sample-based approximation for empirical
//! measures, summary statistics, and a plain Monte Carlo baseline.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{ProductMeasure, SampleSet};
use crate::sampler::PosteriorDraws;
use crate::trees::SumOfTrees;

/// How the per-draw integrals were computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum IntegrationMode {
    Exact,
    Sampled { l: usize, seed: u64 },
}

/// The set of per-draw integral values with mean/variance summaries on the
/// original response scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntegralPosterior {
    pub values: Vec<f64>,
    pub mean: f64,
    /// Unbiased variance over draws (divisor `m - 1`); `None` when only a
    /// single draw is available.
    pub variance: Option<f64>,
    pub mode: IntegrationMode,
}

impl IntegralPosterior {
    fn from_values(values: Vec<f64>, mode: IntegrationMode) -> Self {
        let m = values.len();
        let mean = values.iter().sum::<f64>() / m as f64;
        let variance = if m >= 2 {
            Some(values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m as f64 - 1.0))
        } else {
            None
        };
        Self { values, mean, variance, mode }
    }

    pub fn sd(&self) -> Option<f64> {
        self.variance.map(f64::sqrt)
    }

    /// Copy with the per-draw values dropped, for bounded-size
    /// serialization when only the summaries are wanted.
    pub fn summary_only(&self) -> IntegralPosterior {
        IntegralPosterior {
            values: Vec::new(),
            mean: self.mean,
            variance: self.variance,
            mode: self.mode.clone(),
        }
    }

    /// Central credible interval by empirical quantiles of the draw values
    /// (linear interpolation between order statistics).
    pub fn credible_interval(&self, level: f64) -> (f64, f64) {
        let mut sorted = self.values.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite integral values"));
        let q = |p: f64| -> f64 {
            let h = p * (sorted.len() as f64 - 1.0);
            let lo = h.floor() as usize;
            let hi = h.ceil() as usize;
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        };
        let tail = 0.5 * (1.0 - level);
        (q(tail), q(1.0 - tail))
    }
}

/// Integration target: exact cell probabilities for product measures, or a
/// representative sample set (empirical pools, oracle cross-checks).
#[derive(Debug, Clone)]
pub enum IntegrationTarget<'a> {
    Exact(&'a ProductMeasure),
    Sampled(&'a SampleSet),
}

/// Exact integral of one ensemble draw against a product measure: the sum
/// over trees and leaves of `beta * Pi(cell)`, inverse-rescaled.
pub fn integrate_draw_exact(ens: &SumOfTrees, measure: &ProductMeasure) -> Result<f64> {
    let support = measure.support();
    let mut total = 0.0;
    for tree in &ens.trees {
        for (cell, beta) in tree.leaf_cells(&support)? {
            total += beta * measure.cell_probability(&cell)?;
        }
    }
    Ok(ens.rescale.to_external(total))
}

/// Sample-mean approximation of one draw's integral over a sample set.
pub fn integrate_draw_sampled(ens: &SumOfTrees, samples: &SampleSet) -> f64 {
    let l = samples.len();
    samples.points.rows().map(|r| ens.eval(r)).sum::<f64>() / l as f64
}

/// Per-draw integrals plus their mean/variance summary, in exact or sampled
/// mode depending on the target.
pub fn posterior_summary(
    draws: &PosteriorDraws,
    target: &IntegrationTarget<'_>,
) -> Result<IntegralPosterior> {
    if draws.m() == 0 {
        return Err(Error::InvalidArgument("no posterior draws".into()));
    }
    let (values, mode) = match target {
        IntegrationTarget::Exact(measure) => {
            let values = draws
                .draws
                .iter()
                .map(|ens| integrate_draw_exact(ens, measure))
                .collect::<Result<Vec<_>>>()?;
            (values, IntegrationMode::Exact)
        }
        IntegrationTarget::Sampled(samples) => {
            let values =
                draws.draws.iter().map(|ens| integrate_draw_sampled(ens, samples)).collect();
            (values, IntegrationMode::Sampled { l: samples.len(), seed: samples.seed })
        }
    };
    Ok(IntegralPosterior::from_values(values, mode))
}

/// Monte Carlo integration baseline: sample mean and its standard error
/// over `n` i.i.d. draws from the measure.
pub fn mc_integrate<F: Fn(&[f64]) -> f64>(
    f: F,
    measure: &ProductMeasure,
    n: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(Error::InvalidArgument("mc_integrate needs n >= 2".into()));
    }
    let samples = measure.sample(n, seed)?;
    let values: Vec<f64> = samples.points.rows().map(|r| f(r)).collect();
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    Ok((mean, (var / n as f64).sqrt()))
}

/// Monte Carlo estimate over a finite pool: the mean response of `n`
/// uniformly chosen rows without replacement.
pub fn mc_pool_estimate(responses: &[f64], n: usize, seed: u64) -> Result<f64> {
    if n == 0 || n > responses.len() {
        return Err(Error::InvalidArgument(format!(
            "pool estimate needs 1 <= n <= {}, got {n}",
            responses.len()
        )));
    }
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..responses.len()).collect();
    // partial Fisher-Yates: the first n entries form the sample
    for i in 0..n {
        let j = i + rng.random_range(0..indices.len() - i);
        indices.swap(i, j);
    }
    Ok(indices[..n].iter().map(|&i| responses[i]).sum::<f64>() / n as f64)
}

/// Mean absolute percentage error of repeated estimates against a nonzero
/// truth.
pub fn mape(estimates: &[f64], truth: f64) -> Result<f64> {
    if truth == 0.0 {
        return Err(Error::UndefinedMetric("MAPE undefined for zero truth".into()));
    }
    if estimates.is_empty() {
        return Err(Error::InvalidArgument("MAPE needs at least one estimate".into()));
    }
    Ok(estimates.iter().map(|e| (truth - e).abs() / truth.abs()).sum::<f64>()
        / estimates.len() as f64)
}
