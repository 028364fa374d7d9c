//! Wall-clock timing of BART-Int and GP-BQ fits over a grid of design
//! sizes. Purely descriptive: no asymptotic claims are asserted.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use bartint::gpbq::bq_posterior;
use bartint::integrands::step_eval;
use bartint::measures::ProductMeasure;
use bartint::points::Dataset;
use bartint::quadrature::{posterior_summary, IntegrationTarget};
use bartint::sampler::run_chain;
use bartint::seeds;

use crate::config::ExperimentConfig;
use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub method: String,
    pub n: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingTable {
    pub config_hash: String,
    pub experiment: String,
    pub dimension: usize,
    pub rows: Vec<TimingRow>,
}

/// Times one fit-plus-integrate pass per method and grid size on the step
/// function (no sequential design).
pub fn runtime_benchmark(cfg: &ExperimentConfig) -> Result<TimingTable, HarnessError> {
    let d = cfg.runtime.dimension.max(1);
    let measure = ProductMeasure::uniform_unit_cube(d);
    let mut rows = Vec::new();
    for &n in &cfg.runtime.grid {
        let samples = measure
            .sample(n, seeds::derive(cfg.repetitions.seed_base, "bench", n as u64))
            .map_err(|e| HarnessError::Runtime(e.to_string()))?;
        let y: Vec<f64> = samples.points.rows().map(step_eval).collect();
        let data = Dataset::new(samples.points.clone(), y.clone())
            .map_err(|e| HarnessError::Runtime(e.to_string()))?;

        let started = Instant::now();
        let chain = bartint::sampler::ChainConfig {
            seed: seeds::derive(cfg.repetitions.seed_base, "bench-chain", n as u64),
            ..cfg.chain.clone()
        };
        let draws = run_chain(&data, &cfg.prior, &chain, &measure.support())
            .map_err(|e| HarnessError::Runtime(e.to_string()))?;
        posterior_summary(&draws, &IntegrationTarget::Exact(&measure))
            .map_err(|e| HarnessError::Runtime(e.to_string()))?;
        rows.push(TimingRow {
            method: "bart_int".into(),
            n,
            seconds: started.elapsed().as_secs_f64(),
        });

        let started = Instant::now();
        bq_posterior(
            &samples.points,
            &y,
            &cfg.gp,
            &measure,
            seeds::derive(cfg.repetitions.seed_base, "bench-bq", n as u64),
        )
        .map_err(|e| HarnessError::Runtime(e.to_string()))?;
        rows.push(TimingRow {
            method: "gp_bq".into(),
            n,
            seconds: started.elapsed().as_secs_f64(),
        });
    }
    Ok(TimingTable {
        config_hash: cfg.hash(),
        experiment: "runtime".into(),
        dimension: d,
        rows,
    })
}

pub fn persist_timing(table: &TimingTable, out_dir: &Path) -> Result<std::path::PathBuf, HarnessError> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| HarnessError::Runtime(format!("creating {}: {e}", out_dir.display())))?;
    let path = out_dir.join(format!("runtime_{}.json", table.config_hash));
    let json =
        serde_json::to_string_pretty(table).map_err(|e| HarnessError::Runtime(e.to_string()))?;
    std::fs::write(&path, json)
        .map_err(|e| HarnessError::Runtime(format!("writing {}: {e}", path.display())))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentKind;

    #[test]
    fn timing_rows_cover_the_grid_and_round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.kind = ExperimentKind::Runtime;
        cfg.runtime.grid = vec![20, 40];
        cfg.prior.trees = 5;
        cfg.prior.sigma_hat = Some(0.1);
        cfg.chain.burn_in = 20;
        cfg.chain.n_keep = 10;
        cfg.chain.thin = 1;
        cfg.gp.kernel_mean_samples = 2_000;
        let table = runtime_benchmark(&cfg).unwrap();
        assert_eq!(table.rows.len(), 4); // 2 sizes x 2 methods
        assert!(table.rows.iter().all(|r| r.seconds >= 0.0));
        let json = serde_json::to_string(&table).unwrap();
        let back: TimingTable = serde_json::from_str(&json).unwrap();
        assert_eq!(table, back);
    }
}
