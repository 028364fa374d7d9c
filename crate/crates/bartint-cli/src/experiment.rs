//! Experiment orchestration: builds problem instances from a configuration,
//! runs repetitions concurrently with independent seed streams, aggregates
//! MAPE summaries, and persists result records.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use bartint::design::{run_sequential, DesignConfig, SequentialMethod, Target};
use bartint::gpbq::bq_posterior;
use bartint::integrands::{ingest_pool, step_eval, GenzSpec, PoolFunction, PortfolioSpec};
use bartint::measures::ProductMeasure;
use bartint::points::Dataset;
use bartint::quadrature::{
    mape, mc_integrate, mc_pool_estimate, posterior_summary, IntegrationTarget,
};
use bartint::sampler::{run_chain, ChainConfig};
use bartint::seeds;

use crate::config::{ExperimentConfig, ExperimentKind, MethodKind, StepMeasure};
use crate::synth;
use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub n: usize,
    pub estimate: f64,
    pub sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepOutcome {
    pub seed: u64,
    pub estimate: Option<f64>,
    pub posterior_sd: Option<f64>,
    pub trajectory: Vec<TrajectoryPoint>,
    /// Per-move acceptance rates (grow, prune, change, swap) of the final
    /// BART fit, when the method ran one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub move_acceptance: Option<[f64; 4]>,
    pub wall_secs: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub config_hash: String,
    pub experiment: String,
    pub family: Option<String>,
    pub method: String,
    pub dimension: usize,
    pub n_points: usize,
    pub truth: f64,
    pub repetitions: Vec<RepOutcome>,
    pub mape: Option<f64>,
    pub mape_std_err: Option<f64>,
    pub failures: usize,
    pub metadata: BTreeMap<String, String>,
}

impl ResultRecord {
    /// Recomputes the MAPE from the stored per-repetition estimates; used
    /// by the round-trip integrity check.
    pub fn recompute_mape(&self) -> Option<f64> {
        let estimates: Vec<f64> =
            self.repetitions.iter().filter_map(|r| r.estimate).collect();
        if estimates.is_empty() {
            None
        } else {
            mape(&estimates, self.truth).ok()
        }
    }

    fn summarize(&mut self) {
        let apes: Vec<f64> = self
            .repetitions
            .iter()
            .filter_map(|r| r.estimate)
            .map(|e| (self.truth - e).abs() / self.truth.abs())
            .collect();
        self.failures = self.repetitions.iter().filter(|r| r.error.is_some()).count();
        if apes.is_empty() {
            self.mape = None;
            self.mape_std_err = None;
            return;
        }
        let m = apes.iter().sum::<f64>() / apes.len() as f64;
        self.mape = Some(m);
        self.mape_std_err = if apes.len() >= 2 {
            let var =
                apes.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / (apes.len() as f64 - 1.0);
            Some((var / apes.len() as f64).sqrt())
        } else {
            None
        };
    }

    pub fn file_name(&self) -> String {
        match &self.family {
            Some(f) => format!("{}_{}_{}_{}.json", self.experiment, f, self.method, self.config_hash),
            None => format!("{}_{}_{}.json", self.experiment, self.method, self.config_hash),
        }
    }
}

/// One integration problem with an analytic ground truth.
struct AnalyticProblem {
    family: Option<String>,
    f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    measure: ProductMeasure,
    truth: f64,
    /// Sequential design (n_ini + n_seq) versus a plain one-shot fit.
    sequential: bool,
    n_total: usize,
    n_ini: usize,
}

fn analytic_problems(cfg: &ExperimentConfig) -> Result<Vec<AnalyticProblem>, HarnessError> {
    let mut out = Vec::new();
    match cfg.kind {
        ExperimentKind::Genz => {
            let d = cfg.genz.dimension;
            for family in &cfg.genz.families {
                let spec = match &cfg.genz.a_override {
                    Some(a) => GenzSpec::new(*family, d, a.clone(), vec![0.5; d]),
                    None => GenzSpec::with_defaults(*family, d),
                }
                .map_err(|e| HarnessError::Config(e.to_string()))?;
                let truth =
                    spec.true_integral().map_err(|e| HarnessError::Runtime(e.to_string()))?;
                let moved = spec.clone();
                out.push(AnalyticProblem {
                    family: Some(family.name().to_string()),
                    f: Arc::new(move |x: &[f64]| moved.eval(x)),
                    measure: ProductMeasure::uniform_unit_cube(d),
                    truth,
                    sequential: true,
                    n_total: cfg.points.n_ini + cfg.points.n_seq,
                    n_ini: cfg.points.n_ini,
                });
            }
        }
        ExperimentKind::Step => {
            let d = cfg.step.dimension;
            let measure = match cfg.step.measure {
                StepMeasure::Uniform => ProductMeasure::uniform_unit_cube(d),
                StepMeasure::TruncatedGaussian => {
                    ProductMeasure::truncated_gaussian_unit_cube(d, 0.5, 1.0)
                }
            };
            out.push(AnalyticProblem {
                family: None,
                f: Arc::new(step_eval),
                measure,
                truth: 0.5,
                sequential: true,
                n_total: cfg.points.n_ini + cfg.points.n_seq,
                n_ini: cfg.points.n_ini,
            });
        }
        ExperimentKind::Portfolio => {
            let d = cfg.portfolio.dimension;
            let spec =
                PortfolioSpec::with_defaults(d).map_err(|e| HarnessError::Config(e.to_string()))?;
            let truth = spec
                .true_probability()
                .map_err(|e| HarnessError::Runtime(e.to_string()))?;
            let moved = spec.clone();
            out.push(AnalyticProblem {
                family: None,
                f: Arc::new(move |x: &[f64]| moved.eval(x)),
                measure: ProductMeasure::exponential(d),
                truth,
                sequential: false,
                n_total: cfg.portfolio.n,
                n_ini: cfg.portfolio.n,
            });
        }
        ExperimentKind::Survey | ExperimentKind::Runtime => {
            return Err(HarnessError::Config(
                "analytic_problems only covers genz/step/portfolio".into(),
            ))
        }
    }
    Ok(out)
}

type RepResult = Result<(f64, Option<f64>, Vec<TrajectoryPoint>, Option<[f64; 4]>), String>;

fn acceptance_rates(stats: &bartint::sampler::MoveStats) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (i, kind) in bartint::sampler::MoveKind::ALL.iter().enumerate() {
        out[i] = stats.acceptance_rate(*kind).unwrap_or(0.0);
    }
    out
}

fn dump_posterior_trace(
    draws: &bartint::sampler::PosteriorDraws,
    path: &std::path::Path,
) -> Result<(), String> {
    let json = serde_json::to_string(draws).map_err(|e| e.to_string())?;
    std::fs::write(path, json).map_err(|e| e.to_string())
}

fn run_analytic_rep(
    problem: &AnalyticProblem,
    method: MethodKind,
    cfg: &ExperimentConfig,
    rep_seed: u64,
    dump_to: Option<&std::path::Path>,
) -> RepResult {
    let f = problem.f.clone();
    match (method, problem.sequential) {
        (MethodKind::Mc, _) => {
            let (est, _se) = mc_integrate(
                |x| f(x),
                &problem.measure,
                problem.n_total,
                seeds::derive(rep_seed, "mc", 0),
            )
            .map_err(|e| e.to_string())?;
            Ok((est, None, Vec::new(), None))
        }
        (MethodKind::BartInt, true) | (MethodKind::GpBq, true) => {
            let initial = initial_design(problem, cfg, rep_seed).map_err(|e| e.to_string())?;
            let design = DesignConfig {
                n_total: problem.n_total,
                candidates: cfg.design.candidates,
                observation_noise_sd: cfg.design.observation_noise_sd,
            };
            let target = Target::Analytic { f: &*f, measure: &problem.measure };
            let state = match method {
                MethodKind::BartInt => run_sequential(
                    &target,
                    &SequentialMethod::Bart { prior: &cfg.prior, chain: &cfg.chain },
                    initial,
                    &design,
                    rep_seed,
                ),
                _ => run_sequential(
                    &target,
                    &SequentialMethod::Gp {
                        cfg: &cfg.gp,
                        refit_hyperparams: cfg.design.gp_refit_hyperparams,
                    },
                    initial,
                    &design,
                    rep_seed,
                ),
            }
            .map_err(|e| e.to_string())?;
            let trajectory = state
                .history
                .iter()
                .map(|r| TrajectoryPoint { n: r.n_after, estimate: r.estimate, sd: r.sd })
                .collect();
            let rates = state.final_move_stats.as_ref().map(acceptance_rates);
            if let (Some(path), MethodKind::BartInt) = (dump_to, method) {
                // The final sequential fit is reproducible from its derived
                // seed, so one extra chain recreates the exact trace.
                let chain = ChainConfig {
                    seed: seeds::derive(rep_seed, "chain", state.data.len() as u64),
                    ..cfg.chain.clone()
                };
                let draws =
                    run_chain(&state.data, &cfg.prior, &chain, &problem.measure.support())
                        .map_err(|e| e.to_string())?;
                dump_posterior_trace(&draws, path)?;
            }
            Ok((state.estimate, state.sd, trajectory, rates))
        }
        (MethodKind::BartInt, false) => {
            let data = initial_design(problem, cfg, rep_seed).map_err(|e| e.to_string())?;
            let chain = ChainConfig {
                seed: seeds::derive(rep_seed, "chain", data.len() as u64),
                ..cfg.chain.clone()
            };
            let draws = run_chain(&data, &cfg.prior, &chain, &problem.measure.support())
                .map_err(|e| e.to_string())?;
            let post = posterior_summary(&draws, &IntegrationTarget::Exact(&problem.measure))
                .map_err(|e| e.to_string())?;
            if let Some(path) = dump_to {
                dump_posterior_trace(&draws, path)?;
            }
            Ok((post.mean, post.sd(), Vec::new(), Some(acceptance_rates(&draws.stats))))
        }
        (MethodKind::GpBq, false) => {
            let data = initial_design(problem, cfg, rep_seed).map_err(|e| e.to_string())?;
            let post = bq_posterior(
                &data.x,
                &data.y,
                &cfg.gp,
                &problem.measure,
                seeds::derive(rep_seed, "bq", 0),
            )
            .map_err(|e| e.to_string())?;
            Ok((post.mean, Some(post.variance.sqrt()), Vec::new(), None))
        }
    }
}

fn initial_design(
    problem: &AnalyticProblem,
    cfg: &ExperimentConfig,
    rep_seed: u64,
) -> bartint::Result<Dataset> {
    let samples =
        problem.measure.sample(problem.n_ini, seeds::derive(rep_seed, "initial", 0))?;
    let mut y: Vec<f64> = samples.points.rows().map(|r| (problem.f)(r)).collect();
    if cfg.design.observation_noise_sd > 0.0 {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng =
            ChaCha8Rng::seed_from_u64(seeds::derive(rep_seed, "initial-noise", 0));
        for v in &mut y {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += cfg.design.observation_noise_sd * z;
        }
    }
    Dataset::new(samples.points, y)
}

/// Shared survey state: the ingested pool, its ground truth, and the fixed
/// candidate set reused across repetitions.
pub struct SurveyInstance {
    pub pool: PoolFunction,
    pub truth: f64,
    pub candidate_indices: Vec<usize>,
}

pub fn prepare_survey(
    cfg: &ExperimentConfig,
    out_dir: &Path,
) -> Result<SurveyInstance, HarnessError> {
    let pool_path = if cfg.survey.pool_csv.is_empty() {
        let path = out_dir.join("synthetic_pool.csv");
        synth::synth_survey_pool(cfg.survey.pool_rows, cfg.survey.schema_seed, &path)?;
        path
    } else {
        PathBuf::from(&cfg.survey.pool_csv)
    };
    let schema = bartint::integrands::PoolSchema {
        response: cfg.survey.response_column.clone(),
        categorical: cfg.survey.categorical.clone(),
        ordinal: cfg.survey.ordinal.clone(),
        threshold: cfg.survey.threshold,
    };
    let pool = ingest_pool(&pool_path, &schema)
        .map_err(|e| HarnessError::Runtime(format!("pool ingestion: {e}")))?;
    let truth = pool.population_mean();
    if truth == 0.0 {
        return Err(HarnessError::Runtime("survey truth is zero; MAPE undefined".into()));
    }

    // Fixed candidate set shared across repetitions.
    let mut rng =
        ChaCha8Rng::seed_from_u64(seeds::derive(cfg.repetitions.seed_base, "candidate-set", 0));
    let mut indices: Vec<usize> = (0..pool.len()).collect();
    let take = cfg.survey.candidate_set.min(pool.len());
    for i in 0..take {
        let j = i + rng.random_range(0..indices.len() - i);
        indices.swap(i, j);
    }
    indices.truncate(take);
    Ok(SurveyInstance { pool, truth, candidate_indices: indices })
}

fn run_survey_rep(
    inst: &SurveyInstance,
    method: MethodKind,
    cfg: &ExperimentConfig,
    rep_seed: u64,
    dump_to: Option<&std::path::Path>,
) -> RepResult {
    let n_total = cfg.points.n_ini + cfg.points.n_seq;
    match method {
        MethodKind::Mc => {
            let est = mc_pool_estimate(
                &inst.pool.responses,
                n_total,
                seeds::derive(rep_seed, "mc-pool", 0),
            )
            .map_err(|e| e.to_string())?;
            Ok((est, None, Vec::new(), None))
        }
        MethodKind::BartInt | MethodKind::GpBq => {
            // Initial points drawn from the complement of the candidate set.
            let candidate_set: std::collections::HashSet<usize> =
                inst.candidate_indices.iter().cloned().collect();
            let mut complement: Vec<usize> =
                (0..inst.pool.len()).filter(|i| !candidate_set.contains(i)).collect();
            if complement.len() < cfg.points.n_ini {
                return Err("pool too small for disjoint initial set".into());
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(rep_seed, "initial", 0));
            for i in 0..cfg.points.n_ini {
                let j = i + rng.random_range(0..complement.len() - i);
                complement.swap(i, j);
            }
            let initial_idx = &complement[..cfg.points.n_ini];
            let initial = Dataset::new(
                inst.pool.covariates.select_rows(initial_idx),
                initial_idx.iter().map(|&i| inst.pool.responses[i]).collect(),
            )
            .map_err(|e| e.to_string())?;

            let target = Target::Pool {
                points: &inst.pool.covariates,
                responses: &inst.pool.responses,
                candidates: inst.candidate_indices.clone(),
            };
            let design = DesignConfig {
                n_total,
                candidates: inst.candidate_indices.len().max(1),
                observation_noise_sd: 0.0,
            };
            let state = match method {
                MethodKind::BartInt => run_sequential(
                    &target,
                    &SequentialMethod::Bart { prior: &cfg.prior, chain: &cfg.chain },
                    initial,
                    &design,
                    rep_seed,
                ),
                _ => run_sequential(
                    &target,
                    &SequentialMethod::Gp {
                        cfg: &cfg.gp,
                        refit_hyperparams: cfg.design.gp_refit_hyperparams,
                    },
                    initial,
                    &design,
                    rep_seed,
                ),
            }
            .map_err(|e| e.to_string())?;
            let trajectory = state
                .history
                .iter()
                .map(|r| TrajectoryPoint { n: r.n_after, estimate: r.estimate, sd: r.sd })
                .collect();
            let rates = state.final_move_stats.as_ref().map(acceptance_rates);
            if let (Some(path), MethodKind::BartInt) = (dump_to, method) {
                let d = inst.pool.dim();
                let support = bartint::measures::Cell::new(
                    vec![f64::NEG_INFINITY; d],
                    vec![f64::INFINITY; d],
                )
                .expect("valid unbounded cell");
                let chain = ChainConfig {
                    seed: seeds::derive(rep_seed, "chain", state.data.len() as u64),
                    ..cfg.chain.clone()
                };
                let draws = run_chain(&state.data, &cfg.prior, &chain, &support)
                    .map_err(|e| e.to_string())?;
                dump_posterior_trace(&draws, path)?;
            }
            Ok((state.estimate, state.sd, trajectory, rates))
        }
    }
}

/// Runs `count` repetitions with up to `workers` threads; output order is
/// by repetition index, so aggregation is execution-order independent.
fn run_reps<F>(count: usize, workers: usize, job: F) -> Vec<RepOutcome>
where
    F: Fn(usize) -> RepOutcome + Sync,
{
    let workers = if workers == 0 {
        std::thread::available_parallelism().map(|p| p.get()).unwrap_or(1)
    } else {
        workers
    }
    .min(count)
    .max(1);

    if workers == 1 {
        return (0..count).map(&job).collect();
    }
    let mut slots: Vec<Option<RepOutcome>> = (0..count).map(|_| None).collect();
    let job = &job;
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for w in 0..workers {
            handles.push(scope.spawn(move || {
                let mut local = Vec::new();
                let mut i = w;
                while i < count {
                    local.push((i, job(i)));
                    i += workers;
                }
                local
            }));
        }
        for h in handles {
            for (i, outcome) in h.join().expect("repetition worker panicked") {
                slots[i] = Some(outcome);
            }
        }
    });
    slots.into_iter().map(|s| s.expect("all repetitions filled")).collect()
}

/// Executes the configured experiment and returns one record per
/// (problem, method) pair. Survey pools are synthesized into `out_dir`
/// when no CSV is configured.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out_dir: &Path,
) -> Result<Vec<ResultRecord>, HarnessError> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| HarnessError::Runtime(format!("creating {}: {e}", out_dir.display())))?;
    let hash = cfg.hash();
    let mut records = Vec::new();

    match cfg.kind {
        ExperimentKind::Genz | ExperimentKind::Step | ExperimentKind::Portfolio => {
            for problem in analytic_problems(cfg)? {
                for &method in &cfg.methods {
                    let trace_path = out_dir.join(format!(
                        "trace_{}_{}_{}.json",
                        cfg.kind.name(),
                        problem.family.as_deref().unwrap_or("-"),
                        method.name()
                    ));
                    let reps = run_reps(cfg.repetitions.count, cfg.repetitions.workers, |i| {
                        let seed = cfg.repetitions.seed_for(i);
                        let started = Instant::now();
                        let dump = (cfg.dump_trace && i == 0 && method == MethodKind::BartInt)
                            .then_some(trace_path.as_path());
                        let result = run_analytic_rep(&problem, method, cfg, seed, dump);
                        let wall_secs = started.elapsed().as_secs_f64();
                        match result {
                            Ok((estimate, sd, trajectory, rates)) => RepOutcome {
                                seed,
                                estimate: Some(estimate),
                                posterior_sd: sd,
                                trajectory,
                                move_acceptance: rates,
                                wall_secs,
                                error: None,
                            },
                            Err(e) => RepOutcome {
                                seed,
                                estimate: None,
                                posterior_sd: None,
                                trajectory: Vec::new(),
                                move_acceptance: None,
                                wall_secs,
                                error: Some(e),
                            },
                        }
                    });
                    let mut record = ResultRecord {
                        config_hash: hash.clone(),
                        experiment: cfg.kind.name().to_string(),
                        family: problem.family.clone(),
                        method: method.name().to_string(),
                        dimension: problem.measure.dim(),
                        n_points: problem.n_total,
                        truth: problem.truth,
                        repetitions: reps,
                        mape: None,
                        mape_std_err: None,
                        failures: 0,
                        metadata: cfg.metadata(),
                    };
                    record.summarize();
                    for rep in &record.repetitions {
                        if let Some(e) = &rep.error {
                            eprintln!(
                                "[warn] {} {} seed {}: {e}",
                                record.experiment, record.method, rep.seed
                            );
                        }
                    }
                    records.push(record);
                }
            }
        }
        ExperimentKind::Survey => {
            let inst = prepare_survey(cfg, out_dir)?;
            for &method in &cfg.methods {
                let trace_path =
                    out_dir.join(format!("trace_survey_{}.json", method.name()));
                let reps = run_reps(cfg.repetitions.count, cfg.repetitions.workers, |i| {
                    let seed = cfg.repetitions.seed_for(i);
                    let started = Instant::now();
                    let dump = (cfg.dump_trace && i == 0 && method == MethodKind::BartInt)
                        .then_some(trace_path.as_path());
                    let result = run_survey_rep(&inst, method, cfg, seed, dump);
                    let wall_secs = started.elapsed().as_secs_f64();
                    match result {
                        Ok((estimate, sd, trajectory, rates)) => RepOutcome {
                            seed,
                            estimate: Some(estimate),
                            posterior_sd: sd,
                            trajectory,
                            move_acceptance: rates,
                            wall_secs,
                            error: None,
                        },
                        Err(e) => RepOutcome {
                            seed,
                            estimate: None,
                            posterior_sd: None,
                            trajectory: Vec::new(),
                            move_acceptance: None,
                            wall_secs,
                            error: Some(e),
                        },
                    }
                });
                let mut metadata = cfg.metadata();
                metadata.insert("pool_rows".into(), inst.pool.len().to_string());
                metadata
                    .insert("pool_rejected_rows".into(), inst.pool.rejected_rows.to_string());
                metadata.insert("encoded_dimension".into(), inst.pool.dim().to_string());
                let mut record = ResultRecord {
                    config_hash: hash.clone(),
                    experiment: cfg.kind.name().to_string(),
                    family: None,
                    method: method.name().to_string(),
                    dimension: inst.pool.dim(),
                    n_points: cfg.points.n_ini + cfg.points.n_seq,
                    truth: inst.truth,
                    repetitions: reps,
                    mape: None,
                    mape_std_err: None,
                    failures: 0,
                    metadata,
                };
                record.summarize();
                records.push(record);
            }
        }
        ExperimentKind::Runtime => {
            return Err(HarnessError::Config(
                "runtime configurations run through `bartint bench-runtime`".into(),
            ))
        }
    }
    Ok(records)
}

/// Writes each record as a JSON document named by experiment, family,
/// method, and config hash.
pub fn persist_records(
    records: &[ResultRecord],
    out_dir: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| HarnessError::Runtime(format!("creating {}: {e}", out_dir.display())))?;
    let mut paths = Vec::new();
    for record in records {
        let path = out_dir.join(record.file_name());
        let json = serde_json::to_string_pretty(record)
            .map_err(|e| HarnessError::Runtime(e.to_string()))?;
        std::fs::write(&path, json)
            .map_err(|e| HarnessError::Runtime(format!("writing {}: {e}", path.display())))?;
        paths.push(path);
    }
    Ok(paths)
}

pub fn load_records(dir: &Path) -> Result<Vec<ResultRecord>, HarnessError> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| HarnessError::Runtime(format!("reading {}: {e}", dir.display())))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    entries.sort();
    let mut records = Vec::new();
    for path in entries {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| HarnessError::Runtime(format!("reading {}: {e}", path.display())))?;
        match serde_json::from_str::<ResultRecord>(&text) {
            Ok(r) => records.push(r),
            Err(_) => continue, // not a result record (e.g. timing table)
        }
    }
    Ok(records)
}
