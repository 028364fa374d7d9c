//! Bayesian backfitting Gibbs sampler for the sum-of-trees model.
//!
//! Each sweep updates every tree in turn against its partial residuals:
//! a Metropolis-Hastings move on the topology with leaf values
//! marginalized out, followed by a conjugate redraw of the leaf values,
//! and finally a conjugate inverse chi-square draw of the noise scale.
//!
//! Topology proposals mix four moves: grow a terminal node, prune a pair
//! of terminal nodes, change an internal split rule, and swap rules
//! between a parent and an internal child. Grow/prune proposal densities
//! count the growable leaves and prunable parent-of-two-leaves nodes;
//! change redraws (variable, cutpoint) uniformly over the pairs available
//! in the node's inherited interval and swap picks uniformly among
//! parent/internal-child pairs, so both are symmetric. Proposals that
//! leave a leaf with fewer than `min_leaf_obs` observations, or that
//! violate the cutpoint grid, count as rejections.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::Cell;
use crate::points::{Dataset, PointMatrix};
use crate::prior::{calibrate_sigma_prior, log_prior_tree, BartPriorConfig, Cutpoints};
use crate::trees::{DecisionTree, Node, NodeId, Rescale, SumOfTrees};

/// MCMC schedule and move mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    pub burn_in: usize,
    /// Number of kept (post burn-in, thinned) draws.
    pub n_keep: usize,
    /// Keep every `thin`-th post burn-in sweep.
    pub thin: usize,
    /// Probabilities of (grow, prune, change, swap); must sum to 1.
    pub move_probs: [f64; 4],
    pub seed: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            burn_in: 1000,
            n_keep: 1000,
            thin: 5,
            move_probs: [0.25, 0.25, 0.40, 0.10],
            seed: 0,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_keep == 0 || self.thin == 0 {
            return Err(Error::InvalidArgument("need n_keep >= 1 and thin >= 1".into()));
        }
        if self.move_probs.iter().any(|&p| p < 0.0) {
            return Err(Error::InvalidArgument("move probabilities must be nonnegative".into()));
        }
        let total: f64 = self.move_probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "move probabilities sum to {total}, expected 1"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MoveKind {
    Grow,
    Prune,
    Change,
    Swap,
}

impl MoveKind {
    pub const ALL: [MoveKind; 4] = [MoveKind::Grow, MoveKind::Prune, MoveKind::Change, MoveKind::Swap];

    fn index(self) -> usize {
        match self {
            MoveKind::Grow => 0,
            MoveKind::Prune => 1,
            MoveKind::Change => 2,
            MoveKind::Swap => 3,
        }
    }
}

/// Per-move proposal/acceptance counts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MoveStats {
    pub proposed: [u64; 4],
    pub accepted: [u64; 4],
}

impl MoveStats {
    fn record(&mut self, kind: MoveKind, accepted: bool) {
        self.proposed[kind.index()] += 1;
        if accepted {
            self.accepted[kind.index()] += 1;
        }
    }

    pub fn acceptance_rate(&self, kind: MoveKind) -> Option<f64> {
        let i = kind.index();
        if self.proposed[i] == 0 {
            None
        } else {
            Some(self.accepted[i] as f64 / self.proposed[i] as f64)
        }
    }
}

/// Thinned trace of kept ensembles with per-draw noise scales.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub draws: Vec<SumOfTrees>,
    pub stats: MoveStats,
    pub rescale: Rescale,
}

impl PosteriorDraws {
    pub fn m(&self) -> usize {
        self.draws.len()
    }

    pub fn sigmas(&self) -> Vec<f64> {
        self.draws.iter().map(|d| d.sigma).collect()
    }
}

/// Log of the leaf-value-marginalized likelihood contribution of one leaf
/// with `n_k` residuals summarized by their sum and sum of squares:
///
/// `-(n_k/2) log(2 pi sigma^2) + (1/2) log(sigma^2 / (sigma^2 + n_k sigma_beta^2))
///  + sigma_beta^2 (sum r)^2 / (2 sigma^2 (sigma^2 + n_k sigma_beta^2))
///  - (sum r^2) / (2 sigma^2)`.
pub fn leaf_log_marginal(
    n_k: usize,
    sum_r: f64,
    sum_r2: f64,
    sigma: f64,
    sigma_beta: f64,
) -> Result<f64> {
    if n_k == 0 {
        return Err(Error::InvalidTree("empty leaf in marginal likelihood".into()));
    }
    if !(sigma > 0.0) || !(sigma_beta > 0.0) {
        return Err(Error::InvalidArgument("need sigma > 0 and sigma_beta > 0".into()));
    }
    let s2 = sigma * sigma;
    let sb2 = sigma_beta * sigma_beta;
    let n = n_k as f64;
    let denom = s2 + n * sb2;
    Ok(-(n / 2.0) * (2.0 * std::f64::consts::PI * s2).ln() + 0.5 * (s2 / denom).ln()
        + sb2 * sum_r * sum_r / (2.0 * s2 * denom)
        - sum_r2 / (2.0 * s2))
}

/// Posterior mean and variance of a leaf value given `n` residuals with
/// sum `sum_r`: the conjugate Gaussian update against the `N(0, sigma_beta^2)`
/// prior.
pub fn leaf_posterior_moments(n: usize, sum_r: f64, sigma: f64, sigma_beta: f64) -> (f64, f64) {
    let s2 = sigma * sigma;
    let sb2 = sigma_beta * sigma_beta;
    let denom = s2 + n as f64 * sb2;
    (sb2 * sum_r / denom, s2 * sb2 / denom)
}

/// Per-arena-slot residual statistics for the leaves of one tree.
struct LeafStats {
    n: Vec<usize>,
    sum: Vec<f64>,
    sum2: Vec<f64>,
}

fn compute_leaf_stats(tree: &DecisionTree, x: &PointMatrix, resid: &[f64]) -> LeafStats {
    let len = tree.arena_len();
    let mut stats =
        LeafStats { n: vec![0; len], sum: vec![0.0; len], sum2: vec![0.0; len] };
    for (i, row) in x.rows().enumerate() {
        let id = tree.leaf_for(row);
        stats.n[id] += 1;
        stats.sum[id] += resid[i];
        stats.sum2[id] += resid[i] * resid[i];
    }
    stats
}

/// Leaf-marginalized log likelihood of the whole tree, or `None` when some
/// leaf holds fewer than `min_leaf_obs` observations.
pub fn tree_log_marginal(
    tree: &DecisionTree,
    x: &PointMatrix,
    resid: &[f64],
    sigma: f64,
    sigma_beta: f64,
    min_leaf_obs: usize,
) -> Option<f64> {
    let stats = compute_leaf_stats(tree, x, resid);
    let mut total = 0.0;
    for id in tree.leaf_ids() {
        if stats.n[id] < min_leaf_obs {
            return None;
        }
        total += leaf_log_marginal(stats.n[id], stats.sum[id], stats.sum2[id], sigma, sigma_beta)
            .expect("leaf counts checked above");
    }
    Some(total)
}

struct NodeInfo {
    id: NodeId,
    cell: Cell,
}

/// Leaves and internal nodes with their inherited intervals. The tree must
/// be structurally valid against `support`.
fn node_cells(tree: &DecisionTree, support: &Cell) -> Result<(Vec<NodeInfo>, Vec<NodeInfo>)> {
    let mut leaves = Vec::new();
    let mut internal = Vec::new();
    let mut stack = vec![(tree.root(), support.clone())];
    while let Some((id, cell)) = stack.pop() {
        match *tree.node(id) {
            Node::Leaf { .. } => leaves.push(NodeInfo { id, cell }),
            Node::Internal { var, value, left, right } => {
                if !(cell.lo[var] < value && value < cell.hi[var]) {
                    return Err(Error::InvalidTree("split outside inherited interval".into()));
                }
                let mut left_cell = cell.clone();
                left_cell.hi[var] = value;
                let mut right_cell = cell.clone();
                right_cell.lo[var] = value;
                internal.push(NodeInfo { id, cell });
                stack.push((right, right_cell));
                stack.push((left, left_cell));
            }
        }
    }
    Ok((leaves, internal))
}

/// A proposed tree plus `log q(T | T') - log q(T' | T)` including the
/// move-mixture factors.
struct Proposal {
    tree: DecisionTree,
    log_q_ratio: f64,
}

fn propose_grow(
    tree: &DecisionTree,
    leaves: &[NodeInfo],
    cutpoints: &Cutpoints,
    move_probs: &[f64; 4],
    rng: &mut ChaCha8Rng,
) -> Option<Proposal> {
    let growable: Vec<&NodeInfo> =
        leaves.iter().filter(|l| !cutpoints.eligible_vars(&l.cell).is_empty()).collect();
    if growable.is_empty() {
        return None;
    }
    let pick = growable[rng.random_range(0..growable.len())];
    let eligible = cutpoints.eligible_vars(&pick.cell);
    let var = eligible[rng.random_range(0..eligible.len())];
    let avail = cutpoints.available(var, pick.cell.lo[var], pick.cell.hi[var]);
    let value = avail[rng.random_range(0..avail.len())];
    let mut prop = tree.clone();
    prop.grow(pick.id, var, value, 0.0, 0.0).expect("growable leaf");
    let log_q_fwd = move_probs[0].ln()
        - (growable.len() as f64).ln()
        - (eligible.len() as f64).ln()
        - (avail.len() as f64).ln();
    let log_q_rev = move_probs[1].ln() - (prop.parents_of_two_leaves().len() as f64).ln();
    Some(Proposal { tree: prop, log_q_ratio: log_q_rev - log_q_fwd })
}

fn propose_change(
    tree: &DecisionTree,
    internal: &[NodeInfo],
    cutpoints: &Cutpoints,
    rng: &mut ChaCha8Rng,
) -> Option<Proposal> {
    if internal.is_empty() {
        return None;
    }
    let pick = &internal[rng.random_range(0..internal.len())];
    let mut pairs: Vec<(usize, f64)> = Vec::new();
    for var in cutpoints.eligible_vars(&pick.cell) {
        for &value in cutpoints.available(var, pick.cell.lo[var], pick.cell.hi[var]) {
            pairs.push((var, value));
        }
    }
    debug_assert!(!pairs.is_empty(), "an internal node always has its own rule available");
    let (var, value) = pairs[rng.random_range(0..pairs.len())];
    let mut prop = tree.clone();
    prop.set_rule(pick.id, var, value).expect("internal node");
    Some(Proposal { tree: prop, log_q_ratio: 0.0 })
}

fn propose_swap(tree: &DecisionTree, rng: &mut ChaCha8Rng) -> Option<Proposal> {
    let mut parents: Vec<(NodeId, Vec<NodeId>)> = Vec::new();
    for (id, _) in tree.walk() {
        if let Node::Internal { left, right, .. } = *tree.node(id) {
            let mut internal_children = Vec::new();
            if matches!(tree.node(left), Node::Internal { .. }) {
                internal_children.push(left);
            }
            if matches!(tree.node(right), Node::Internal { .. }) {
                internal_children.push(right);
            }
            if !internal_children.is_empty() {
                parents.push((id, internal_children));
            }
        }
    }
    if parents.is_empty() {
        return None;
    }
    let (pid, kids) = &parents[rng.random_range(0..parents.len())];
    let cid = kids[rng.random_range(0..kids.len())];
    let parent_rule = tree.rule(*pid).expect("internal");
    let child_rule = tree.rule(cid).expect("internal");
    let mut prop = tree.clone();
    prop.set_rule(*pid, child_rule.0, child_rule.1).expect("internal");
    prop.set_rule(cid, parent_rule.0, parent_rule.1).expect("internal");
    Some(Proposal { tree: prop, log_q_ratio: 0.0 })
}

fn pick_move(move_probs: &[f64; 4], rng: &mut ChaCha8Rng) -> MoveKind {
    let u = rng.random::<f64>();
    let mut acc = 0.0;
    for (i, &p) in move_probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return MoveKind::ALL[i];
        }
    }
    MoveKind::Swap
}

/// One Metropolis-Hastings update of a tree's topology against the
/// marginalized likelihood of its partial residuals. Returns the move kind
/// and whether it was accepted; on acceptance the tree is replaced.
#[allow(clippy::too_many_arguments)]
pub fn mh_tree_update(
    tree: &mut DecisionTree,
    x: &PointMatrix,
    resid: &[f64],
    sigma: f64,
    prior: &BartPriorConfig,
    move_probs: &[f64; 4],
    cutpoints: &Cutpoints,
    support: &Cell,
    rng: &mut ChaCha8Rng,
) -> (MoveKind, bool) {
    let kind = pick_move(move_probs, rng);
    let (leaves, internal) =
        node_cells(tree, support).expect("current tree is structurally valid");
    let proposal = match kind {
        MoveKind::Grow => propose_grow(tree, &leaves, cutpoints, move_probs, rng),
        MoveKind::Prune => propose_prune(tree, &internal, cutpoints, move_probs, support, rng),
        MoveKind::Change => propose_change(tree, &internal, cutpoints, rng),
        MoveKind::Swap => propose_swap(tree, rng),
    };
    let Some(Proposal { tree: proposed, log_q_ratio }) = proposal else {
        return (kind, false);
    };

    let sigma_beta = prior.sigma_beta();
    // Structural validity of the proposal (split values on-grid and inside
    // inherited intervals) is checked by the prior evaluation.
    let Ok(lp_new) = log_prior_tree(prior, &proposed, cutpoints, support) else {
        return (kind, false);
    };
    let Some(ll_new) =
        tree_log_marginal(&proposed, x, resid, sigma, sigma_beta, prior.min_leaf_obs)
    else {
        return (kind, false);
    };
    let lp_old =
        log_prior_tree(prior, tree, cutpoints, support).expect("current tree is valid");
    let ll_old = tree_log_marginal(tree, x, resid, sigma, sigma_beta, prior.min_leaf_obs)
        .expect("current tree satisfies leaf constraints");

    let log_alpha = lp_new + ll_new - lp_old - ll_old + log_q_ratio;
    let accept = rng.random::<f64>().ln() < log_alpha;
    if accept {
        debug_assert!(proposed.validate(support).is_ok());
        *tree = proposed;
    }
    (kind, accept)
}

fn propose_prune(
    tree: &DecisionTree,
    internal: &[NodeInfo],
    cutpoints: &Cutpoints,
    move_probs: &[f64; 4],
    support: &Cell,
    rng: &mut ChaCha8Rng,
) -> Option<Proposal> {
    let prunable = tree.parents_of_two_leaves();
    if prunable.is_empty() {
        return None;
    }
    let id = prunable[rng.random_range(0..prunable.len())];
    let info = internal.iter().find(|i| i.id == id).expect("prunable node is internal");
    let (var, value) = tree.rule(id).expect("internal node has a rule");
    let mut prop = tree.clone();
    prop.prune(id, 0.0).expect("parent of two leaves");

    let (prop_leaves, _) = node_cells(&prop, support).expect("prune keeps the tree valid");
    let growable_after = prop_leaves
        .iter()
        .filter(|l| !cutpoints.eligible_vars(&l.cell).is_empty())
        .count();
    let eligible = cutpoints.eligible_vars(&info.cell);
    let avail = cutpoints.available(var, info.cell.lo[var], info.cell.hi[var]);
    debug_assert!(avail.contains(&value));
    let log_q_fwd = move_probs[1].ln() - (prunable.len() as f64).ln();
    let log_q_rev = move_probs[0].ln()
        - (growable_after as f64).ln()
        - (eligible.len() as f64).ln()
        - (avail.len() as f64).ln();
    Some(Proposal { tree: prop, log_q_ratio: log_q_rev - log_q_fwd })
}

/// Redraws every leaf value from its conjugate Gaussian posterior.
pub fn draw_leaf_values(
    tree: &mut DecisionTree,
    x: &PointMatrix,
    resid: &[f64],
    sigma: f64,
    sigma_beta: f64,
    rng: &mut ChaCha8Rng,
) {
    let stats = compute_leaf_stats(tree, x, resid);
    for id in tree.leaf_ids() {
        let (mean, var) = leaf_posterior_moments(stats.n[id], stats.sum[id], sigma, sigma_beta);
        let z: f64 = StandardNormal.sample(rng);
        tree.set_leaf_value(id, mean + var.sqrt() * z).expect("leaf id");
    }
}

/// Conjugate noise draw: `sigma^2 ~ (nu lambda + sum r^2) / chisq_{nu + n}`.
pub fn draw_sigma(residuals: &[f64], nu: f64, lambda: f64, rng: &mut ChaCha8Rng) -> f64 {
    let n = residuals.len() as f64;
    let rss: f64 = residuals.iter().map(|r| r * r).sum();
    let chi2: f64 = Gamma::new((nu + n) / 2.0, 2.0).expect("valid shape").sample(rng);
    ((nu * lambda + rss) / chi2).sqrt()
}

fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if values.len() < 2 {
        return f64::NAN;
    }
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Runs the full backfitting chain. All trees start as single leaves with
/// value zero and `sigma` starts at the calibration anchor; each sweep
/// updates trees in order (MH topology move, then leaf redraw) and then
/// draws `sigma`. Deterministic given the chain seed.
pub fn run_chain(
    data: &Dataset,
    prior: &BartPriorConfig,
    chain: &ChainConfig,
    support: &Cell,
) -> Result<PosteriorDraws> {
    prior.validate()?;
    chain.validate()?;
    let n = data.len();
    if n == 0 {
        return Err(Error::InvalidArgument("chain needs at least one observation".into()));
    }
    if n < prior.min_leaf_obs {
        return Err(Error::InvalidArgument(format!(
            "n = {n} is below min_leaf_obs = {}",
            prior.min_leaf_obs
        )));
    }
    if data.dim() != support.dim() {
        return Err(Error::DimensionMismatch { expected: support.dim(), got: data.dim() });
    }

    let y_min = data.y.iter().cloned().fold(f64::INFINITY, f64::min);
    let y_max = data.y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !y_min.is_finite() || !y_max.is_finite() {
        return Err(Error::InvalidArgument("responses must be finite".into()));
    }
    let rescale = Rescale::from_range(y_min, y_max);
    let y_int: Vec<f64> = data.y.iter().map(|&v| rescale.to_internal(v)).collect();

    let sigma_hat = match prior.sigma_hat {
        Some(s) if s > 0.0 => s,
        Some(s) => {
            return Err(Error::InvalidArgument(format!("sigma_hat override {s} must be > 0")))
        }
        None => {
            let sd = sample_sd(&y_int);
            if sd.is_finite() && sd > 0.0 {
                sd
            } else {
                0.1 // degenerate responses: fall back to a mild anchor
            }
        }
    };
    let lambda = calibrate_sigma_prior(prior.nu, prior.q, sigma_hat)?;
    let sigma_beta = prior.sigma_beta();
    let cutpoints = Cutpoints::build(prior.cutpoint_rule, &data.x);

    let mut rng = ChaCha8Rng::seed_from_u64(chain.seed);
    let t = prior.trees;
    let mut trees: Vec<DecisionTree> = vec![DecisionTree::single_leaf(0.0); t];
    let mut preds: Vec<Vec<f64>> = vec![vec![0.0; n]; t];
    let mut total: Vec<f64> = vec![0.0; n];
    let mut sigma = sigma_hat;
    let mut stats = MoveStats::default();
    let mut resid = vec![0.0; n];
    let total_sweeps = chain.burn_in + chain.n_keep * chain.thin;
    let mut draws = Vec::with_capacity(chain.n_keep);

    for sweep in 0..total_sweeps {
        for j in 0..t {
            for i in 0..n {
                resid[i] = y_int[i] - (total[i] - preds[j][i]);
            }
            let (kind, accepted) = mh_tree_update(
                &mut trees[j],
                &data.x,
                &resid,
                sigma,
                prior,
                &chain.move_probs,
                &cutpoints,
                support,
                &mut rng,
            );
            stats.record(kind, accepted);
            draw_leaf_values(&mut trees[j], &data.x, &resid, sigma, sigma_beta, &mut rng);
            for i in 0..n {
                let new = trees[j].eval(data.x.row(i));
                total[i] += new - preds[j][i];
                preds[j][i] = new;
            }
        }
        for i in 0..n {
            resid[i] = y_int[i] - total[i];
        }
        sigma = draw_sigma(&resid, prior.nu, lambda, &mut rng);
        if sweep >= chain.burn_in && (sweep - chain.burn_in + 1) % chain.thin == 0 {
            draws.push(SumOfTrees {
                trees: trees.iter().map(|t| t.compacted()).collect(),
                sigma,
                rescale,
            });
        }
    }

    Ok(PosteriorDraws { draws, stats, rescale })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use crate::measures::ProductMeasure;

    #[test]
    fn leaf_marginal_single_zero_residual() {
        // -(1/2) log(2 pi s^2) + (1/2) log(s^2/(s^2 + sb^2)); frozen value
        // 0.10117188105860453 from a scipy quadrature oracle at
        // (sigma, sigma_beta) = (0.3, 0.2).
        let got = leaf_log_marginal(1, 0.0, 0.0, 0.3, 0.2).unwrap();
        assert_abs_diff_eq!(got, 0.10117188105860453, epsilon = 1e-10);
        let direct = -0.5 * (2.0 * std::f64::consts::PI * 0.09f64).ln()
            + 0.5 * (0.09f64 / (0.09 + 0.04)).ln();
        assert_abs_diff_eq!(got, direct, epsilon = 1e-12);
    }

    #[test]
    fn leaf_marginal_matches_quadrature_oracle() {
        // Independent oracle: adaptive Simpson integration of
        // prod_i N(r_i; b, s^2) * N(b; 0, sb^2) over b, in log space.
        fn log_integrand(b: f64, r: &[f64], s: f64, sb: f64) -> f64 {
            let mut lp = -0.5 * (b / sb) * (b / sb)
                - (sb * (2.0 * std::f64::consts::PI).sqrt()).ln();
            for &ri in r {
                lp += -0.5 * ((ri - b) / s) * ((ri - b) / s)
                    - (s * (2.0 * std::f64::consts::PI).sqrt()).ln();
            }
            lp
        }
        fn oracle(r: &[f64], s: f64, sb: f64) -> f64 {
            // locate the maximum on a fine grid, then integrate the shifted
            // integrand with adaptive Simpson on each side of the peak so
            // the subdivision never skips over a narrow mode
            let span = 12.0 * (sb + s);
            let grid: Vec<f64> = (0..=4000).map(|i| -span + 2.0 * span * i as f64 / 4000.0).collect();
            let (arg_peak, peak) = grid
                .iter()
                .map(|&b| (b, log_integrand(b, r, s, sb)))
                .fold((0.0, f64::NEG_INFINITY), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
            fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
                fn step<F: Fn(f64) -> f64>(
                    f: &F,
                    a: f64,
                    b: f64,
                    fa: f64,
                    fb: f64,
                    fc: f64,
                    whole: f64,
                    tol: f64,
                    depth: u32,
                ) -> f64 {
                    let c = 0.5 * (a + b);
                    let (lm, rm) = (0.5 * (a + c), 0.5 * (c + b));
                    let (flm, frm) = (f(lm), f(rm));
                    let left = (c - a) / 6.0 * (fa + 4.0 * flm + fc);
                    let right = (b - c) / 6.0 * (fc + 4.0 * frm + fb);
                    if depth == 0 || (left + right - whole).abs() < 15.0 * tol {
                        left + right + (left + right - whole) / 15.0
                    } else {
                        step(f, a, c, fa, fc, flm, left, tol / 2.0, depth - 1)
                            + step(f, c, b, fc, fb, frm, right, tol / 2.0, depth - 1)
                    }
                }
                let c = 0.5 * (a + b);
                let (fa, fb, fc) = (f(a), f(b), f(c));
                let whole = (b - a) / 6.0 * (fa + 4.0 * fc + fb);
                step(f, a, b, fa, fb, fc, whole, tol, depth)
            }
            let f = |b: f64| (log_integrand(b, r, s, sb) - peak).exp();
            let integral = simpson(&f, -span, arg_peak, 1e-13, 48)
                + simpson(&f, arg_peak, span, 1e-13, 48);
            peak + integral.ln()
        }

        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let n = rng.random_range(1..=5usize);
            let r: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let s = 0.05 + rng.random::<f64>() * 0.8;
            let sb = 0.02 + rng.random::<f64>() * 0.5;
            let sum: f64 = r.iter().sum();
            let sum2: f64 = r.iter().map(|v| v * v).sum();
            let got = leaf_log_marginal(n, sum, sum2, s, sb).unwrap();
            let want = oracle(&r, s, sb);
            assert!(
                (got - want).abs() < 1e-8,
                "n={n} s={s} sb={sb}: got {got}, oracle {want}"
            );
        }
    }

    #[test]
    fn leaf_marginal_small_sigma_beta_limit() {
        // sigma_beta -> 0 reduces to the plain Gaussian log likelihood at
        // beta = 0.
        let (r, s) = ([0.3, -0.1, 0.2], 0.4);
        let sum: f64 = r.iter().sum();
        let sum2: f64 = r.iter().map(|v| v * v).sum();
        let got = leaf_log_marginal(3, sum, sum2, s, 1e-9).unwrap();
        let plain: f64 = r
            .iter()
            .map(|&ri| {
                -0.5 * (ri / s) * (ri / s) - (s * (2.0 * std::f64::consts::PI).sqrt()).ln()
            })
            .sum();
        assert_abs_diff_eq!(got, plain, epsilon = 1e-6);
    }

    #[test]
    fn empty_leaf_is_structural_error() {
        assert!(leaf_log_marginal(0, 0.0, 0.0, 0.1, 0.1).is_err());
    }

    #[test]
    fn leaf_moments_match_conjugate_oracle() {
        // Independent formula: precision weighting of prior and likelihood.
        let (n, sum_r, s, sb) = (3usize, 1.2, 0.1, 0.25);
        let (mean, var) = leaf_posterior_moments(n, sum_r, s, sb);
        let prior_prec = 1.0 / (sb * sb);
        let lik_prec = n as f64 / (s * s);
        let oracle_var = 1.0 / (prior_prec + lik_prec);
        let oracle_mean = oracle_var * (sum_r / (s * s));
        assert_abs_diff_eq!(mean, oracle_mean, epsilon = 1e-12);
        assert_abs_diff_eq!(var, oracle_var, epsilon = 1e-12);
    }

    #[test]
    fn leaf_moments_limits() {
        // Flat prior limit: posterior mean -> sample mean.
        let (mean, _) = leaf_posterior_moments(4, 2.0, 0.3, 1e6);
        assert_abs_diff_eq!(mean, 0.5, epsilon = 1e-9);
        // Zero residual sum: symmetric posterior.
        let (mean, _) = leaf_posterior_moments(7, 0.0, 0.3, 0.2);
        assert_eq!(mean, 0.0);
    }

    #[test]
    fn sigma_draw_moments_match_inverse_chisquare() {
        let residuals = [0.3, -0.2, 0.15, 0.4, -0.35];
        let (nu, lambda) = (3.0, 0.2);
        let n = residuals.len() as f64;
        let rss: f64 = residuals.iter().map(|r| r * r).sum();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let draws = 100_000;
        let samples: Vec<f64> =
            (0..draws).map(|_| draw_sigma(&residuals, nu, lambda, &mut rng).powi(2)).collect();
        let mean = samples.iter().sum::<f64>() / draws as f64;
        // Inverse-gamma a = (nu+n)/2, b = (nu lambda + rss)/2.
        let a = (nu + n) / 2.0;
        let b = (nu * lambda + rss) / 2.0;
        let expected = b / (a - 1.0); // equals (nu*lambda + rss)/(nu + n - 2)
        assert_abs_diff_eq!(expected, (nu * lambda + rss) / (nu + n - 2.0), epsilon = 1e-12);
        let var = b * b / ((a - 1.0) * (a - 1.0) * (a - 2.0));
        let se = (var / draws as f64).sqrt();
        assert!((mean - expected).abs() < 3.0 * se, "mean {mean} vs {expected} (se {se})");
    }

    #[test]
    fn sigma_draw_with_no_data_is_prior_draw() {
        let (nu, lambda) = (3.0, 0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let draws = 200_000;
        // P(sigma^2 < nu*lambda / q_{0.5}) should be 1/2 where q_{0.5} is
        // the chi-square median; check via the calibration identity with
        // q = 0.5 instead of trusting any single moment (the inverse
        // chi-square with nu = 3 has no finite variance).
        let chi_median = {
            use statrs::distribution::{ChiSquared, ContinuousCDF};
            ChiSquared::new(nu).unwrap().inverse_cdf(0.5)
        };
        let threshold = nu * lambda / chi_median;
        let below = (0..draws)
            .filter(|_| draw_sigma(&[], nu, lambda, &mut rng).powi(2) < threshold)
            .count();
        let frac = below as f64 / draws as f64;
        assert!((frac - 0.5).abs() < 0.005, "median check failed: {frac}");
    }

    #[test]
    fn sigma_concentrates_with_zero_residuals() {
        let residuals = vec![0.0; 10_000];
        let (nu, lambda) = (3.0, 0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..50 {
            let s2 = draw_sigma(&residuals, nu, lambda, &mut rng).powi(2);
            assert!(s2 < 1e-3, "sigma^2 = {s2} should be near nu*lambda/(nu+n)");
        }
    }

    #[test]
    fn change_reproposing_identical_rule_is_always_accepted() {
        // One cutpoint: the change move can only re-propose the same rule,
        // so the acceptance ratio is exactly 1.
        let x = PointMatrix::from_rows(1, &[vec![0.2], vec![0.8]]).unwrap();
        let resid = vec![0.1, -0.4];
        let cutpoints = Cutpoints::from_grids(vec![vec![0.5]]);
        let support = ProductMeasure::uniform_unit_cube(1).support();
        let prior = BartPriorConfig { trees: 1, ..Default::default() };
        let mut tree = DecisionTree::single_leaf(0.0);
        tree.grow(0, 0, 0.5, 0.0, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let move_probs = [0.0, 0.0, 1.0, 0.0];
        for _ in 0..50 {
            let (kind, accepted) = mh_tree_update(
                &mut tree, &x, &resid, 0.3, &prior, &move_probs, &cutpoints, &support, &mut rng,
            );
            assert_eq!(kind, MoveKind::Change);
            assert!(accepted);
        }
    }

    #[test]
    fn grow_creating_empty_leaf_is_rejected() {
        // Single observation: every grow leaves one side empty.
        let x = PointMatrix::from_rows(1, &[vec![0.5]]).unwrap();
        let resid = vec![0.2];
        let cutpoints = Cutpoints::from_data(&x);
        let support = ProductMeasure::uniform_unit_cube(1).support();
        let prior = BartPriorConfig { trees: 1, ..Default::default() };
        let mut tree = DecisionTree::single_leaf(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let move_probs = [0.5, 0.5, 0.0, 0.0];
        for _ in 0..200 {
            let (_, accepted) = mh_tree_update(
                &mut tree, &x, &resid, 0.3, &prior, &move_probs, &cutpoints, &support, &mut rng,
            );
            assert!(!accepted);
            assert_eq!(tree.num_leaves(), 1);
        }
    }

    #[test]
    fn chain_is_bit_reproducible() {
        let x = PointMatrix::from_rows(
            1,
            &(0..20).map(|i| vec![i as f64 / 20.0]).collect::<Vec<_>>(),
        )
        .unwrap();
        let y: Vec<f64> = (0..20).map(|i| (i as f64 / 20.0).sin()).collect();
        let data = Dataset::new(x, y).unwrap();
        let prior = BartPriorConfig { trees: 5, ..Default::default() };
        let chain = ChainConfig { burn_in: 50, n_keep: 20, thin: 2, seed: 77, ..Default::default() };
        let support = ProductMeasure::uniform_unit_cube(1).support();
        let a = run_chain(&data, &prior, &chain, &support).unwrap();
        let b = run_chain(&data, &prior, &chain, &support).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn acceptance_rates_are_interior_on_nondegenerate_data() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rows: Vec<Vec<f64>> = (0..60).map(|_| vec![rng.random::<f64>()]).collect();
        let y: Vec<f64> = rows.iter().map(|r| if r[0] > 0.5 { 1.0 } else { 0.0 }).collect();
        let data = Dataset::new(PointMatrix::from_rows(1, &rows).unwrap(), y).unwrap();
        let prior = BartPriorConfig { trees: 10, ..Default::default() };
        let chain = ChainConfig { burn_in: 100, n_keep: 100, thin: 1, seed: 5, ..Default::default() };
        let support = ProductMeasure::uniform_unit_cube(1).support();
        let out = run_chain(&data, &prior, &chain, &support).unwrap();
        for kind in [MoveKind::Grow, MoveKind::Prune, MoveKind::Change] {
            let rate = out.stats.acceptance_rate(kind).unwrap();
            assert!(rate > 0.0 && rate < 1.0, "{kind:?} rate = {rate}");
        }
    }

    #[test]
    fn chain_rejects_empty_data() {
        let data =
            Dataset::new(PointMatrix::new(1), Vec::new()).unwrap();
        let support = ProductMeasure::uniform_unit_cube(1).support();
        assert!(run_chain(
            &data,
            &BartPriorConfig::default(),
            &ChainConfig::default(),
            &support
        )
        .is_err());
    }
}
