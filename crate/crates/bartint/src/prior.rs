//! The three-part BART prior: the tree-generating process, the Gaussian
//! leaf-value prior, and the inverse chi-square noise prior with its
//! quantile calibration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::measures::Cell;
use crate::points::PointMatrix;
use crate::trees::{DecisionTree, Node, NodeId};

/// Hyperparameters of the BART prior.
///
/// Defaults follow the standard recommendations: `T = 200`,
/// `(alpha, beta) = (0.95, 2)`, `sigma_beta = 0.25/sqrt(T)`,
/// `(nu, q) = (3, 0.90)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BartPriorConfig {
    /// Number of trees in the ensemble.
    pub trees: usize,
    /// Split-probability base; a node at depth `l` splits with probability
    /// `alpha * (1 + l)^{-beta}`.
    pub alpha: f64,
    /// Split-probability depth penalty.
    pub beta: f64,
    /// Leaf-value standard deviation; `None` uses `0.25 / sqrt(T)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_beta: Option<f64>,
    /// Noise-prior degrees of freedom.
    pub nu: f64,
    /// Noise-prior calibration quantile: `P(sigma < sigma_hat) = q`.
    pub q: f64,
    /// Calibration anchor on the rescaled response scale; `None` uses the
    /// sample standard deviation of the rescaled responses.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_hat: Option<f64>,
    /// Minimum observations per leaf; proposals creating emptier leaves
    /// are invalid.
    pub min_leaf_obs: usize,
    /// How the finite cutpoint grids are built from the design points.
    pub cutpoint_rule: CutpointRule,
}

/// Finite cutpoint grid construction rule.
///
/// The uniform grid (the dbarts default) places cut candidates between
/// observations, so the posterior averages the cell boundary over each
/// inter-point gap; pinning cuts at observed values skews step fits of
/// monotone functions toward one-sided Riemann sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum CutpointRule {
    /// Evenly spaced cutpoints strictly inside the observed range of each
    /// variable.
    UniformGrid { count: usize },
    /// The sorted unique observed values of each variable.
    ObservedValues,
}

impl Default for CutpointRule {
    fn default() -> Self {
        CutpointRule::UniformGrid { count: 100 }
    }
}

impl Default for BartPriorConfig {
    fn default() -> Self {
        Self {
            trees: 200,
            alpha: 0.95,
            beta: 2.0,
            sigma_beta: None,
            nu: 3.0,
            q: 0.90,
            sigma_hat: None,
            min_leaf_obs: 1,
            cutpoint_rule: CutpointRule::default(),
        }
    }
}

impl BartPriorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trees == 0 {
            return Err(Error::InvalidArgument("tree count must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument("alpha must lie in (0, 1)".into()));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::InvalidArgument("beta must be nonnegative".into()));
        }
        if !(self.nu > 0.0) || !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::InvalidArgument("need nu > 0 and q in (0, 1)".into()));
        }
        if self.min_leaf_obs == 0 {
            return Err(Error::InvalidArgument("min_leaf_obs must be at least 1".into()));
        }
        Ok(())
    }

    pub fn sigma_beta(&self) -> f64 {
        self.sigma_beta.unwrap_or(0.25 / (self.trees as f64).sqrt())
    }

    /// Probability that a node at depth `l` is internal.
    pub fn split_probability(&self, depth: usize) -> f64 {
        self.alpha * (1.0 + depth as f64).powf(-self.beta)
    }
}

/// Calibrates the inverse chi-square scale so that
/// `P(sigma < sigma_hat) = q` under `sigma^2 ~ nu * lambda / chisq_nu`.
pub fn calibrate_sigma_prior(nu: f64, q: f64, sigma_hat: f64) -> Result<f64> {
    if !(nu > 0.0) || !(q > 0.0 && q < 1.0) || !(sigma_hat > 0.0) {
        return Err(Error::InvalidArgument(
            "calibration needs nu > 0, q in (0,1), sigma_hat > 0".into(),
        ));
    }
    let chi = ChiSquared::new(nu)
        .map_err(|e| Error::Numeric(format!("chi-square with nu = {nu}: {e}")))?;
    let quantile = chi.inverse_cdf(1.0 - q);
    let lambda = sigma_hat * sigma_hat * quantile / nu;
    if lambda.is_finite() && lambda > 0.0 {
        Ok(lambda)
    } else {
        Err(Error::Numeric(format!("sigma-prior calibration produced lambda = {lambda}")))
    }
}

/// Finite cutpoint grids: the sorted unique observed values per variable.
/// A node may split variable `k` at grid values strictly inside its
/// inherited interval; splitting at either end would create a
/// geometrically empty child.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cutpoints {
    grids: Vec<Vec<f64>>,
}

impl Cutpoints {
    pub fn from_grids(grids: Vec<Vec<f64>>) -> Self {
        let grids = grids
            .into_iter()
            .map(|mut g| {
                g.sort_by(|a, b| a.partial_cmp(b).expect("finite cutpoints"));
                g.dedup();
                g
            })
            .collect();
        Self { grids }
    }

    /// Grids of the unique observed values of each variable.
    pub fn from_data(x: &PointMatrix) -> Self {
        let grids = (0..x.dim()).map(|k| x.column(k)).collect();
        Self::from_grids(grids)
    }

    /// `count` evenly spaced cutpoints strictly inside each variable's
    /// observed range; variables with a degenerate range get empty grids.
    pub fn uniform_from_data(x: &PointMatrix, count: usize) -> Self {
        let grids = (0..x.dim())
            .map(|k| {
                let col = x.column(k);
                let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if !(hi > lo) {
                    return Vec::new();
                }
                (1..=count)
                    .map(|i| lo + (hi - lo) * i as f64 / (count as f64 + 1.0))
                    .collect()
            })
            .collect();
        Self::from_grids(grids)
    }

    /// Builds grids according to the configured rule.
    pub fn build(rule: CutpointRule, x: &PointMatrix) -> Self {
        match rule {
            CutpointRule::UniformGrid { count } => Self::uniform_from_data(x, count),
            CutpointRule::ObservedValues => Self::from_data(x),
        }
    }

    pub fn dim(&self) -> usize {
        self.grids.len()
    }

    /// Grid values with `lo < c < hi`.
    pub fn available(&self, var: usize, lo: f64, hi: f64) -> &[f64] {
        let grid = &self.grids[var];
        let start = grid.partition_point(|&c| c <= lo);
        let end = grid.partition_point(|&c| c < hi);
        &grid[start..end.max(start)]
    }

    /// Variables with at least one available cutpoint inside the cell.
    pub fn eligible_vars(&self, cell: &Cell) -> Vec<usize> {
        (0..self.dim())
            .filter(|&k| !self.available(k, cell.lo[k], cell.hi[k]).is_empty())
            .collect()
    }
}

/// Draws one tree from the generative prior: a node at depth `l` splits
/// with probability `alpha (1+l)^{-beta}` when a valid cutpoint exists,
/// choosing the variable uniformly among eligible ones and the cutpoint
/// uniformly among those available; leaf values are i.i.d.
/// `N(0, sigma_beta^2)`.
pub fn sample_tree_prior(
    cfg: &BartPriorConfig,
    cutpoints: &Cutpoints,
    support: &Cell,
    rng: &mut ChaCha8Rng,
) -> DecisionTree {
    let sigma_beta = cfg.sigma_beta();
    let mut tree = DecisionTree::single_leaf(0.0);
    let mut stack: Vec<(NodeId, Cell, usize)> = vec![(tree.root(), support.clone(), 0)];
    while let Some((id, cell, depth)) = stack.pop() {
        let eligible = cutpoints.eligible_vars(&cell);
        let splits = !eligible.is_empty() && rng.random::<f64>() < cfg.split_probability(depth);
        if splits {
            let var = eligible[rng.random_range(0..eligible.len())];
            let avail = cutpoints.available(var, cell.lo[var], cell.hi[var]);
            let value = avail[rng.random_range(0..avail.len())];
            tree.grow(id, var, value, 0.0, 0.0).expect("growing a leaf");
            if let Node::Internal { left, right, .. } = *tree.node(id) {
                let mut left_cell = cell.clone();
                left_cell.hi[var] = value;
                let mut right_cell = cell;
                right_cell.lo[var] = value;
                stack.push((left, left_cell, depth + 1));
                stack.push((right, right_cell, depth + 1));
            }
        } else {
            let z: f64 = StandardNormal.sample(rng);
            tree.set_leaf_value(id, sigma_beta * z).expect("leaf exists");
        }
    }
    tree
}

/// Log prior probability of a tree topology (leaf values excluded; the
/// sampler marginalizes them). Internal nodes contribute the split
/// probability and the uniform variable/cutpoint choices; leaves contribute
/// the no-split probability, or nothing where splitting is impossible.
pub fn log_prior_tree(
    cfg: &BartPriorConfig,
    tree: &DecisionTree,
    cutpoints: &Cutpoints,
    support: &Cell,
) -> Result<f64> {
    let mut log_p = 0.0;
    let mut stack = vec![(tree.root(), support.clone(), 0usize)];
    while let Some((id, cell, depth)) = stack.pop() {
        let eligible = cutpoints.eligible_vars(&cell);
        match *tree.node(id) {
            Node::Leaf { .. } => {
                if !eligible.is_empty() {
                    log_p += (1.0 - cfg.split_probability(depth)).ln();
                }
            }
            Node::Internal { var, value, left, right } => {
                if eligible.is_empty() {
                    return Err(Error::InvalidTree(format!(
                        "internal node {id} has no eligible cutpoints"
                    )));
                }
                let avail = cutpoints.available(var, cell.lo[var], cell.hi[var]);
                if !avail.contains(&value) {
                    return Err(Error::InvalidTree(format!(
                        "split value {value} not on the cutpoint grid inside the node interval"
                    )));
                }
                log_p += cfg.split_probability(depth).ln()
                    - (eligible.len() as f64).ln()
                    - (avail.len() as f64).ln();
                let mut left_cell = cell.clone();
                left_cell.hi[var] = value;
                let mut right_cell = cell;
                right_cell.lo[var] = value;
                stack.push((left, left_cell, depth + 1));
                stack.push((right, right_cell, depth + 1));
            }
        }
    }
    Ok(log_p)
}

/// Convenience for deterministic prior sampling in tests and diagnostics.
pub fn prior_leaf_count_frequencies(
    cfg: &BartPriorConfig,
    cutpoints: &Cutpoints,
    support: &Cell,
    draws: usize,
    seed: u64,
) -> [f64; 5] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = [0usize; 5];
    for _ in 0..draws {
        let k = sample_tree_prior(cfg, cutpoints, support, &mut rng).num_leaves();
        counts[(k - 1).min(4)] += 1;
    }
    let mut freqs = [0.0; 5];
    for (f, c) in freqs.iter_mut().zip(counts) {
        *f = c as f64 / draws as f64;
    }
    freqs
}
