//! Cross-module invariants: randomized partition/probability consistency,
//! tree-versus-cell agreement, oracle cross-checks between exact and
//! sampled integration, and Monte Carlo error-decay behavior.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bartint::integrands::{step_eval, GenzFamily, GenzSpec, PortfolioSpec};
use bartint::measures::{Cell, Marginal, ProductMeasure};
use bartint::points::PointMatrix;
use bartint::prior::{sample_tree_prior, BartPriorConfig, Cutpoints};
use bartint::quadrature::{integrate_draw_exact, integrate_draw_sampled, mc_integrate};
use bartint::trees::{Node, Rescale, SumOfTrees};

/// Recursively splits the support into an axis-aligned partition driven by
/// the input fractions, mimicking tree leaf cells.
fn random_partition(measure: &ProductMeasure, splits: &[(usize, f64)]) -> Vec<Cell> {
    let mut cells = vec![measure.support()];
    for &(dim_pick, frac) in splits {
        // split the widest-index cell deterministically from the inputs
        let idx = dim_pick % cells.len();
        let cell = cells.swap_remove(idx);
        let k = dim_pick % cell.dim();
        let (lo, hi) = (cell.lo[k], cell.hi[k]);
        let finite_hi = if hi.is_finite() { hi } else { lo + 1.0 / frac.max(1e-3) };
        let v = lo + frac * (finite_hi - lo);
        if !(v > lo && v < hi) {
            cells.push(cell);
            continue;
        }
        let mut left = cell.clone();
        left.hi[k] = v;
        let mut right = cell;
        right.lo[k] = v;
        cells.push(left);
        cells.push(right);
    }
    cells
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn partition_probabilities_sum_to_one(
        splits in prop::collection::vec((0usize..64, 0.05f64..0.95), 1..12),
        which in 0usize..3,
    ) {
        let measure = match which {
            0 => ProductMeasure::uniform_unit_cube(2),
            1 => ProductMeasure::exponential(2),
            _ => ProductMeasure::truncated_gaussian_unit_cube(2, 0.5, 1.0),
        };
        let cells = random_partition(&measure, &splits);
        let total: f64 = cells
            .iter()
            .map(|c| measure.cell_probability(c).unwrap())
            .sum();
        prop_assert!((total - 1.0).abs() < 1e-10, "partition mass {total}");
    }

    #[test]
    fn cell_probability_matches_empirical_frequency(
        bounds in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 2),
        seed in 0u64..1000,
    ) {
        let measure = ProductMeasure::truncated_gaussian_unit_cube(2, 0.5, 1.0);
        let lo: Vec<f64> = bounds.iter().map(|&(a, b)| a.min(b)).collect();
        let hi: Vec<f64> = bounds.iter().map(|&(a, b)| a.max(b)).collect();
        let cell = Cell::new(lo, hi).unwrap();
        let p = measure.cell_probability(&cell).unwrap();
        let l = 100_000usize;
        let samples = measure.sample(l, seed).unwrap();
        let support = measure.support();
        let hits = samples
            .points
            .rows()
            .filter(|r| cell.contains(r, &support))
            .count() as f64 / l as f64;
        let se = (p * (1.0 - p) / l as f64).sqrt().max(1e-6);
        prop_assert!((hits - p).abs() < 4.0 * se, "p = {p}, freq = {hits}");
    }
}

fn random_prior_ensemble(d: usize, trees: usize, seed: u64) -> SumOfTrees {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> =
        (0..50).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
    let x = PointMatrix::from_rows(d, &rows).unwrap();
    let cutpoints = Cutpoints::from_data(&x);
    let support = ProductMeasure::uniform_unit_cube(d).support();
    let cfg = BartPriorConfig { trees, ..Default::default() };
    let trees: Vec<_> =
        (0..trees).map(|_| sample_tree_prior(&cfg, &cutpoints, &support, &mut rng)).collect();
    SumOfTrees { trees, sigma: 0.1, rescale: Rescale { scale: 2.0, shift: 0.3 } }
}

#[test]
fn random_trees_agree_with_cell_lookup() {
    // 10^2 random prior trees, 10^3 points each: routing and the leaf-cell
    // decomposition must agree everywhere.
    let support = ProductMeasure::uniform_unit_cube(2).support();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for t in 0..100 {
        let ens = random_prior_ensemble(2, 1, t);
        let tree = &ens.trees[0];
        let cells = tree.leaf_cells(&support).unwrap();
        for _ in 0..1000 {
            let x = [rng.random::<f64>(), rng.random::<f64>()];
            let via_cells = cells
                .iter()
                .find(|(c, _)| c.contains(&x, &support))
                .map(|(_, v)| *v)
                .expect("every point lies in exactly one cell");
            assert_eq!(tree.eval(&x), via_cells);
        }
        let m = ProductMeasure::uniform_unit_cube(2);
        let mass: f64 = cells.iter().map(|(c, _)| m.cell_probability(c).unwrap()).sum();
        assert!((mass - 1.0).abs() < 1e-10);
    }
}

#[test]
fn exact_integration_agrees_with_sampled_mode() {
    // 20 random ensembles; the sampled estimate at l = 10^5 must land
    // within four of its standard errors of the exact value.
    let measure = ProductMeasure::uniform_unit_cube(2);
    for seed in 0..20 {
        let ens = random_prior_ensemble(2, 10, 1000 + seed);
        let exact = integrate_draw_exact(&ens, &measure).unwrap();
        let l = 100_000;
        let samples = measure.sample(l, 555 + seed).unwrap();
        let values: Vec<f64> = samples.points.rows().map(|r| ens.eval(r)).collect();
        let sampled = values.iter().sum::<f64>() / l as f64;
        let var =
            values.iter().map(|v| (v - sampled) * (v - sampled)).sum::<f64>() / (l as f64 - 1.0);
        let se = (var / l as f64).sqrt().max(1e-12);
        assert!(
            (exact - sampled).abs() < 4.0 * se,
            "seed {seed}: exact {exact}, sampled {sampled}, se {se}"
        );
        assert!((integrate_draw_sampled(&ens, &samples) - sampled).abs() < 1e-12);
    }
}

#[test]
fn posterior_mean_is_linear_in_draws() {
    // Exact-mode summary mean equals the exact integral of the averaged
    // prediction function.
    use bartint::quadrature::{posterior_summary, IntegrationTarget};
    use bartint::sampler::PosteriorDraws;

    let measure = ProductMeasure::uniform_unit_cube(2);
    let draws: Vec<SumOfTrees> = (0..10).map(|s| random_prior_ensemble(2, 4, 2000 + s)).collect();
    let m = draws.len() as f64;
    let rescale = draws[0].rescale;
    let post = posterior_summary(
        &PosteriorDraws { draws: draws.clone(), stats: Default::default(), rescale },
        &IntegrationTarget::Exact(&measure),
    )
    .unwrap();

    // Average prediction function: every tree from every draw with leaf
    // values divided by m (the shared affine rescale stays outside).
    let mut all_trees = Vec::new();
    for ens in &draws {
        for tree in &ens.trees {
            let mut t = tree.clone();
            for id in t.leaf_ids() {
                if let Node::Leaf { value } = *t.node(id) {
                    t.set_leaf_value(id, value / m).unwrap();
                }
            }
            all_trees.push(t);
        }
    }
    let averaged = SumOfTrees { trees: all_trees, sigma: 0.1, rescale };
    let direct = integrate_draw_exact(&averaged, &measure).unwrap();
    assert!((post.mean - direct).abs() < 1e-10, "{} vs {direct}", post.mean);
}

#[test]
fn genz_true_integrals_agree_with_monte_carlo() {
    // All six families, d in {1, 2, 3}, randomized effective parameters.
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    for family in GenzFamily::ALL {
        for d in 1..=3usize {
            let a: Vec<f64> = (0..d).map(|_| 0.3 + 2.0 * rng.random::<f64>()).collect();
            let u: Vec<f64> = (0..d).map(|_| 0.2 + 0.6 * rng.random::<f64>()).collect();
            let spec = GenzSpec::new(family, d, a, u).unwrap();
            let truth = spec.true_integral().unwrap();
            let n = 1_000_000;
            let measure = ProductMeasure::uniform_unit_cube(d);
            let (est, se) = mc_integrate(|x| spec.eval(x), &measure, n, rng.random()).unwrap();
            assert!(
                (est - truth).abs() < 4.0 * se.max(1e-9),
                "{} d={d}: truth {truth}, mc {est} +- {se}",
                family.name()
            );
        }
    }
}

#[test]
fn portfolio_probability_agrees_with_monte_carlo() {
    for d in [5usize, 10] {
        let spec = PortfolioSpec::with_defaults(d).unwrap();
        let truth = spec.true_probability().unwrap();
        let measure = ProductMeasure::exponential(d);
        let (est, se) = mc_integrate(|x| spec.eval(x), &measure, 1_000_000, 42 + d as u64).unwrap();
        assert!(
            (est - truth).abs() < 4.0 * se,
            "d={d}: truth {truth}, mc {est} +- {se}"
        );
    }
}

#[test]
fn disc_family_vanishes_past_both_leading_shifts() {
    let spec = GenzSpec::with_defaults(GenzFamily::Disc, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let x = [
            0.5 + 0.5 * rng.random::<f64>(),
            0.5 + 0.5 * rng.random::<f64>(),
            rng.random::<f64>(),
        ];
        if x[0] > 0.5 && x[1] > 0.5 {
            assert_eq!(spec.eval(&x), 0.0);
        }
    }
}

#[test]
fn mc_error_decays_at_root_n_rate() {
    // Slope of log mean-absolute-error against log n for the step function
    // over 50 seeds should sit near -1/2.
    let measure = ProductMeasure::uniform_unit_cube(1);
    let ns = [100usize, 1_000, 10_000, 100_000, 1_000_000];
    let mut mean_abs_err = Vec::new();
    for &n in &ns {
        let mut total = 0.0;
        for seed in 0..50u64 {
            let (est, _) = mc_integrate(step_eval, &measure, n, 7_000 + seed).unwrap();
            total += (est - 0.5).abs();
        }
        mean_abs_err.push(total / 50.0);
    }
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = mean_abs_err.iter().map(|e| e.ln()).collect();
    let xm = xs.iter().sum::<f64>() / xs.len() as f64;
    let ym = ys.iter().sum::<f64>() / ys.len() as f64;
    let slope: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - xm) * (y - ym))
        .sum::<f64>()
        / xs.iter().map(|x| (x - xm) * (x - xm)).sum::<f64>();
    assert!(
        (-0.6..=-0.4).contains(&slope),
        "error-decay slope {slope} outside [-0.6, -0.4] (errors {mean_abs_err:?})"
    );
}

#[test]
fn exponential_marginal_partition_with_infinite_tail() {
    let measure = ProductMeasure::new(vec![Marginal::Exponential { lo: 0.0, hi: f64::INFINITY }])
        .unwrap();
    let cuts = [0.0, 0.1, 0.5, 1.5, 4.0, f64::INFINITY];
    let total: f64 = cuts
        .windows(2)
        .map(|w| {
            measure
                .cell_probability(&Cell::new(vec![w[0]], vec![w[1]]).unwrap())
                .unwrap()
        })
        .sum();
    assert!((total - 1.0).abs() < 1e-10);
}
