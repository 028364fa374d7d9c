//! Sequential design: candidate generation, acquisition scoring, point
//! selection, and model refresh for BART-Int and GP-BQ.
//!
//! Each iteration refits the model on the augmented data, scores a
//! candidate set by the posterior variance of `f(c) pi(c)`, evaluates the
//! argmax candidate (ties broken by lowest candidate index), and records
//! the post-augmentation integral posterior.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpbq::{bq_posterior_from_fit, bq_posterior_pool, GpConfig, GpFit};
use crate::measures::{Cell, ProductMeasure, SampleSet};
use crate::points::{Dataset, PointMatrix};
use crate::prior::BartPriorConfig;
use crate::quadrature::{posterior_summary, IntegrationTarget};
use crate::sampler::{run_chain, ChainConfig, MoveStats, PosteriorDraws};
use crate::seeds;

/// What is being integrated and where candidates come from.
pub enum Target<'a> {
    /// A black-box function against a product measure; candidate sets are
    /// fresh i.i.d. draws from the measure each iteration.
    Analytic { f: &'a dyn Fn(&[f64]) -> f64, measure: &'a ProductMeasure },
    /// A finite pool with known covariates and hidden responses revealed by
    /// surveying; the candidate set shrinks without replacement and the
    /// integral runs against the empirical distribution of the whole pool.
    Pool { points: &'a PointMatrix, responses: &'a [f64], candidates: Vec<usize> },
}

/// Model used inside the sequential loop.
pub enum SequentialMethod<'a> {
    Bart { prior: &'a BartPriorConfig, chain: &'a ChainConfig },
    Gp { cfg: &'a GpConfig, refit_hyperparams: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignConfig {
    /// Total design size (initial plus sequential points).
    pub n_total: usize,
    /// Candidate-set size per iteration in analytic mode.
    pub candidates: usize,
    /// Standard deviation of observation noise added to evaluations.
    pub observation_noise_sd: f64,
}

/// One sequential iteration: the selected candidate and the integral
/// posterior computed from the post-augmentation fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub n_after: usize,
    pub selected: Vec<f64>,
    pub pool_index: Option<usize>,
    pub score: f64,
    pub estimate: f64,
    pub sd: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignState {
    pub data: Dataset,
    pub history: Vec<IterationRecord>,
    pub estimate: f64,
    pub sd: Option<f64>,
    pub pool_exhausted: bool,
    /// Move acceptance diagnostics from the final BART fit, when applicable.
    pub final_move_stats: Option<MoveStats>,
}

/// Posterior variance of `f(c) pi(c)` over the BART draws (divisor m-1).
pub fn acquisition_bart(draws: &PosteriorDraws, c: &[f64], density: f64) -> f64 {
    let m = draws.m();
    debug_assert!(m >= 2);
    let values: Vec<f64> = draws.draws.iter().map(|ens| ens.eval(c) * density).collect();
    let mean = values.iter().sum::<f64>() / m as f64;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m as f64 - 1.0)
}

/// GP analogue: predictive variance at `c` times `pi(c)^2`.
pub fn acquisition_gp(fit: &GpFit, c: &[f64], density: f64) -> f64 {
    let (_, var) = fit.predict(c);
    var * density * density
}

enum FittedModel {
    Bart(PosteriorDraws),
    Gp(GpFit),
}

fn unbounded_support(d: usize) -> Cell {
    Cell::new(vec![f64::NEG_INFINITY; d], vec![f64::INFINITY; d]).expect("valid cell")
}

/// Runs the sequential loop from an initial design up to `n_total` points.
/// Deterministic given `master_seed`; sub-streams are derived per purpose
/// and iteration. In pool mode the loop stops early (flagged) if the
/// candidate set empties.
pub fn run_sequential(
    target: &Target<'_>,
    method: &SequentialMethod<'_>,
    initial: Dataset,
    design: &DesignConfig,
    master_seed: u64,
) -> Result<DesignState> {
    let n_ini = initial.len();
    if design.n_total <= n_ini {
        return Err(Error::InvalidArgument(format!(
            "n_total = {} must exceed the initial design size {n_ini}",
            design.n_total
        )));
    }
    if design.candidates == 0 {
        return Err(Error::InvalidArgument("candidate-set size must be at least 1".into()));
    }

    let dim = initial.dim();
    let support = match target {
        Target::Analytic { measure, .. } => measure.support(),
        Target::Pool { .. } => unbounded_support(dim),
    };
    let pool_sample_set = match target {
        Target::Pool { points, .. } => Some(SampleSet::from_points((*points).clone())),
        Target::Analytic { .. } => None,
    };
    let mut remaining: Vec<usize> = match target {
        Target::Pool { candidates, .. } => candidates.clone(),
        Target::Analytic { .. } => Vec::new(),
    };

    let mut data = initial;
    let mut history = Vec::new();
    let mut pool_exhausted = false;

    let fit_model = |data: &Dataset, prev: Option<FittedModel>| -> Result<FittedModel> {
        match method {
            SequentialMethod::Bart { prior, chain } => {
                let chain_cfg = ChainConfig {
                    seed: seeds::derive(master_seed, "chain", data.len() as u64),
                    ..(*chain).clone()
                };
                Ok(FittedModel::Bart(run_chain(data, prior, &chain_cfg, &support)?))
            }
            SequentialMethod::Gp { cfg, refit_hyperparams } => match prev {
                Some(FittedModel::Gp(mut fit)) if !*refit_hyperparams => {
                    let last = data.len() - 1;
                    fit.extend(data.x.row(last), data.y[last])?;
                    Ok(FittedModel::Gp(fit))
                }
                _ => Ok(FittedModel::Gp(GpFit::fit(&data.x, &data.y, cfg)?)),
            },
        }
    };

    let summarize =
        |model: &FittedModel, data_len: usize| -> Result<(f64, Option<f64>)> {
            match (model, target) {
                (FittedModel::Bart(draws), Target::Analytic { measure, .. }) => {
                    let post = posterior_summary(draws, &IntegrationTarget::Exact(measure))?;
                    Ok((post.mean, post.sd()))
                }
                (FittedModel::Bart(draws), Target::Pool { .. }) => {
                    let post = posterior_summary(
                        draws,
                        &IntegrationTarget::Sampled(pool_sample_set.as_ref().expect("pool mode")),
                    )?;
                    Ok((post.mean, post.sd()))
                }
                (FittedModel::Gp(fit), Target::Analytic { measure, .. }) => {
                    let cfg = match method {
                        SequentialMethod::Gp { cfg, .. } => cfg,
                        SequentialMethod::Bart { .. } => unreachable!(),
                    };
                    let post = bq_posterior_from_fit(
                        fit,
                        cfg,
                        measure,
                        seeds::derive(master_seed, "kernel-mean", data_len as u64),
                    )?;
                    Ok((post.mean, Some(post.variance.sqrt())))
                }
                (FittedModel::Gp(fit), Target::Pool { points, .. }) => {
                    let post = bq_posterior_pool(fit, points)?;
                    Ok((post.mean, Some(post.variance.sqrt())))
                }
            }
        };

    let mut model = fit_model(&data, None)?;

    for i in n_ini..design.n_total {
        // Candidate set for this iteration.
        let candidate_points: Vec<(Vec<f64>, Option<usize>)> = match target {
            Target::Analytic { measure, .. } => {
                let s = measure
                    .sample(design.candidates, seeds::derive(master_seed, "candidates", i as u64))?;
                s.points.rows().map(|r| (r.to_vec(), None)).collect()
            }
            Target::Pool { points, .. } => {
                if remaining.is_empty() {
                    pool_exhausted = true;
                    break;
                }
                remaining.iter().map(|&idx| (points.row(idx).to_vec(), Some(idx))).collect()
            }
        };

        // Score and select (argmax, ties to the lowest index).
        let mut best: Option<(usize, f64)> = None;
        for (ci, (point, _)) in candidate_points.iter().enumerate() {
            let density = match target {
                Target::Analytic { measure, .. } => measure.density(point),
                Target::Pool { .. } => 1.0,
            };
            let score = match &model {
                FittedModel::Bart(draws) => acquisition_bart(draws, point, density),
                FittedModel::Gp(fit) => acquisition_gp(fit, point, density),
            };
            debug_assert!(score.is_finite() && score >= 0.0);
            if best.map_or(true, |(_, s)| score > s) {
                best = Some((ci, score));
            }
        }
        let (chosen, score) = best.expect("candidate set is nonempty");
        let (point, pool_index) = candidate_points[chosen].clone();

        // Evaluate the objective at the selected candidate.
        let response = match target {
            Target::Analytic { f, .. } => {
                let mut y = f(&point);
                if design.observation_noise_sd > 0.0 {
                    use rand::SeedableRng;
                    use rand_distr::{Distribution, StandardNormal};
                    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seeds::derive(
                        master_seed,
                        "obs-noise",
                        i as u64,
                    ));
                    let z: f64 = StandardNormal.sample(&mut rng);
                    y += design.observation_noise_sd * z;
                }
                y
            }
            Target::Pool { responses, .. } => {
                let idx = pool_index.expect("pool candidates carry indices");
                remaining.retain(|&r| r != idx);
                responses[idx]
            }
        };
        data.push(&point, response)?;

        // Refit and record the post-augmentation integral posterior.
        model = fit_model(&data, Some(model))?;
        let (estimate, sd) = summarize(&model, data.len())?;
        history.push(IterationRecord {
            n_after: data.len(),
            selected: point,
            pool_index,
            score,
            estimate,
            sd,
        });
    }

    let (estimate, sd) = match history.last() {
        Some(rec) => (rec.estimate, rec.sd),
        None => summarize(&model, data.len())?,
    };
    let final_move_stats = match &model {
        FittedModel::Bart(draws) => Some(draws.stats.clone()),
        FittedModel::Gp(_) => None,
    };
    Ok(DesignState { data, history, estimate, sd, pool_exhausted, final_move_stats })
}
