//! End-to-end behavior of the backfitting chain on simple targets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bartint::measures::ProductMeasure;
use bartint::points::{Dataset, PointMatrix};
use bartint::prior::BartPriorConfig;
use bartint::sampler::{run_chain, ChainConfig, PosteriorDraws};

fn posterior_mean_sd_at(draws: &PosteriorDraws, x: &[f64]) -> (f64, f64) {
    let values: Vec<f64> = draws.draws.iter().map(|ens| ens.eval(x)).collect();
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
    (mean, var.sqrt())
}

#[test]
fn constant_target_is_recovered() {
    let c = 2.5;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let rows: Vec<Vec<f64>> = (0..50).map(|_| vec![rng.random::<f64>()]).collect();
    let data = Dataset::new(PointMatrix::from_rows(1, &rows).unwrap(), vec![c; 50]).unwrap();
    let prior = BartPriorConfig { trees: 20, ..Default::default() };
    let chain = ChainConfig { burn_in: 200, n_keep: 200, thin: 1, seed: 3, ..Default::default() };
    let support = ProductMeasure::uniform_unit_cube(1).support();
    let draws = run_chain(&data, &prior, &chain, &support).unwrap();
    for k in 0..10 {
        let x = [k as f64 / 10.0 + 0.05];
        let (mean, sd) = posterior_mean_sd_at(&draws, &x);
        assert!(
            (mean - c).abs() <= 3.0 * sd + 1e-9,
            "at {x:?}: mean {mean}, sd {sd}, target {c}"
        );
    }
}

#[test]
fn linear_target_beats_single_leaf_baseline() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let rows: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.random::<f64>()]).collect();
    let y: Vec<f64> = rows.iter().map(|r| 2.0 * r[0]).collect();
    let data = Dataset::new(PointMatrix::from_rows(1, &rows).unwrap(), y).unwrap();
    let prior = BartPriorConfig { trees: 50, sigma_hat: Some(0.1), ..Default::default() };
    let chain = ChainConfig { burn_in: 500, n_keep: 300, thin: 1, seed: 4, ..Default::default() };
    let support = ProductMeasure::uniform_unit_cube(1).support();
    let draws = run_chain(&data, &prior, &chain, &support).unwrap();

    let grid: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
    let truth: Vec<f64> = grid.iter().map(|&x| 2.0 * x).collect();
    let rmse = {
        let se: f64 = grid
            .iter()
            .zip(&truth)
            .map(|(&x, &t)| {
                let (mean, _) = posterior_mean_sd_at(&draws, &[x]);
                (mean - t) * (mean - t)
            })
            .sum();
        (se / grid.len() as f64).sqrt()
    };
    // Best single-leaf fit on the grid is the mean of the target; its RMSE
    // is the standard deviation of the target values.
    let t_mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let baseline =
        (truth.iter().map(|t| (t - t_mean) * (t - t_mean)).sum::<f64>() / truth.len() as f64)
            .sqrt();
    assert!(rmse < baseline, "chain RMSE {rmse} should beat the flat baseline {baseline}");
}

#[test]
fn step_target_classifies_sides_away_from_boundary() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rows: Vec<Vec<f64>> = (0..40).map(|_| vec![rng.random::<f64>()]).collect();
    let y: Vec<f64> = rows.iter().map(|r| bartint::integrands::step_eval(r)).collect();
    let data = Dataset::new(PointMatrix::from_rows(1, &rows).unwrap(), y).unwrap();
    let prior = BartPriorConfig { trees: 50, sigma_hat: Some(0.1), ..Default::default() };
    let chain = ChainConfig { burn_in: 500, n_keep: 500, thin: 2, seed: 6, ..Default::default() };
    let support = ProductMeasure::uniform_unit_cube(1).support();
    let draws = run_chain(&data, &prior, &chain, &support).unwrap();

    let mut correct = 0usize;
    let mut total = 0usize;
    for i in 0..=100 {
        let x = i as f64 / 100.0;
        if (x - 0.5).abs() <= 0.05 {
            continue;
        }
        total += 1;
        let (mean, _) = posterior_mean_sd_at(&draws, &[x]);
        let predicted_high = mean > 0.5;
        if predicted_high == (x > 0.5) {
            correct += 1;
        }
    }
    let rate = correct as f64 / total as f64;
    assert!(rate >= 0.95, "classified {correct}/{total} grid points correctly");
}
