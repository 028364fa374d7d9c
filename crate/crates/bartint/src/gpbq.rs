//! GP-BQ baseline: Gaussian-process regression with a Matern-3/2 kernel,
//! maximum-marginal-likelihood lengthscale, Monte Carlo kernel means, and
//! the closed-form Bayesian quadrature posterior.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{ProductMeasure, SampleSet};
use crate::points::PointMatrix;
use crate::seeds;

/// Matern kernel with smoothness 3/2:
/// `(1 + sqrt(3) r / rho) exp(-sqrt(3) r / rho)` with `r = ||x - y||_2`.
pub fn matern32(x: &[f64], y: &[f64], rho: f64) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    let t = 3f64.sqrt() * r2.sqrt() / rho;
    (1.0 + t) * (-t).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpConfig {
    /// Fixed lengthscale; `None` fits it by maximum marginal likelihood.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lengthscale: Option<f64>,
    /// Observation-noise variance; a small value stabilizes noiseless fits.
    pub noise_variance: f64,
    /// Fit the noise variance jointly with the lengthscale.
    pub fit_noise: bool,
    /// Constant prior mean.
    pub prior_mean: f64,
    /// Monte Carlo sample count for kernel means.
    pub kernel_mean_samples: usize,
    /// Cap on the number of points used in the marginal-likelihood search;
    /// larger designs are subsampled with a deterministic stride.
    pub ml_subsample_cap: usize,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            lengthscale: None,
            noise_variance: 1e-6,
            fit_noise: false,
            prior_mean: 0.0,
            kernel_mean_samples: 1_000_000,
            ml_subsample_cap: 512,
        }
    }
}

/// Lower-triangular Cholesky factor with rank-1 extension support.
#[derive(Debug, Clone)]
struct CholFactor {
    l: DMatrix<f64>,
}

impl CholFactor {
    fn decompose(k: DMatrix<f64>) -> Option<Self> {
        nalgebra::linalg::Cholesky::new(k).map(|c| Self { l: c.unpack() })
    }

    fn n(&self) -> usize {
        self.l.nrows()
    }

    /// Solves `L z = b`.
    fn forward(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.n();
        let mut z = b.clone();
        for i in 0..n {
            for j in 0..i {
                z[i] -= self.l[(i, j)] * z[j];
            }
            z[i] /= self.l[(i, i)];
        }
        z
    }

    /// Solves `L^T w = z`.
    fn backward(&self, z: &DVector<f64>) -> DVector<f64> {
        let n = self.n();
        let mut w = z.clone();
        for i in (0..n).rev() {
            for j in i + 1..n {
                w[i] -= self.l[(j, i)] * w[j];
            }
            w[i] /= self.l[(i, i)];
        }
        w
    }

    /// Solves `(L L^T) w = b`.
    fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.backward(&self.forward(b))
    }

    fn log_det(&self) -> f64 {
        2.0 * (0..self.n()).map(|i| self.l[(i, i)].ln()).sum::<f64>()
    }

    /// Appends one row/column given the new cross-covariances and the new
    /// diagonal entry.
    fn extend(&mut self, cross: &DVector<f64>, diag: f64) -> Result<()> {
        let n = self.n();
        let l21 = self.forward(cross);
        let d = diag - l21.dot(&l21);
        if !(d > 1e-14) {
            return Err(Error::Numeric(
                "rank-1 Cholesky extension lost positive definiteness".into(),
            ));
        }
        let mut bigger = DMatrix::zeros(n + 1, n + 1);
        bigger.view_mut((0, 0), (n, n)).copy_from(&self.l);
        for j in 0..n {
            bigger[(n, j)] = l21[j];
        }
        bigger[(n, n)] = d.sqrt();
        self.l = bigger;
        Ok(())
    }
}

fn gram(x: &PointMatrix, rho: f64, diag_add: f64) -> DMatrix<f64> {
    let n = x.n_rows();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = 1.0 + diag_add;
        for j in 0..i {
            let v = matern32(x.row(i), x.row(j), rho);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Cholesky with jitter escalation from 1e-10 up to 1e-4.
fn chol_with_jitter(x: &PointMatrix, rho: f64, noise: f64) -> Result<(CholFactor, f64)> {
    let mut jitter = 1e-10;
    while jitter <= 1e-4 {
        if let Some(c) = CholFactor::decompose(gram(x, rho, noise + jitter)) {
            return Ok((c, jitter));
        }
        jitter *= 10.0;
    }
    Err(Error::Numeric("gram matrix not positive definite after maximum jitter".into()))
}

/// GP log marginal likelihood of the data under the given hyperparameters.
pub fn log_marginal_likelihood(
    x: &PointMatrix,
    y: &[f64],
    rho: f64,
    noise: f64,
    prior_mean: f64,
) -> Result<f64> {
    let n = y.len();
    let (chol, _) = chol_with_jitter(x, rho, noise)?;
    let r = DVector::from_iterator(n, y.iter().map(|&v| v - prior_mean));
    let alpha = chol.solve(&r);
    Ok(-0.5 * r.dot(&alpha)
        - 0.5 * chol.log_det()
        - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln())
}

fn median_pairwise_distance(x: &PointMatrix) -> f64 {
    let n = x.n_rows();
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in 0..i {
            let d2: f64 =
                x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            dists.push(d2.sqrt());
        }
    }
    dists.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    dists[dists.len() / 2]
}

fn strided_subset(x: &PointMatrix, y: &[f64], cap: usize) -> (PointMatrix, Vec<f64>) {
    let n = x.n_rows();
    if n <= cap {
        return (x.clone(), y.to_vec());
    }
    let idx: Vec<usize> = (0..cap).map(|i| i * n / cap).collect();
    (x.select_rows(&idx), idx.iter().map(|&i| y[i]).collect())
}

/// Fitted hyperparameters `(rho, noise_variance)`.
///
/// Log-grid search over `[1e-2, 1e1]` times the median pairwise distance
/// with golden-section refinement on `log rho`; the noise grid is searched
/// only when `fit_noise` is set. Deterministic.
pub fn fit_hyperparameters(x: &PointMatrix, y: &[f64], cfg: &GpConfig) -> Result<(f64, f64)> {
    let n = x.n_rows();
    if n < 2 {
        return Err(Error::Degenerate("lengthscale fit needs at least two points".into()));
    }
    let (xs, ys) = strided_subset(x, y, cfg.ml_subsample_cap.max(2));
    let med = median_pairwise_distance(&xs);
    if !(med > 0.0) {
        return Err(Error::Degenerate("all design points identical".into()));
    }

    let noise_grid: Vec<f64> = if cfg.fit_noise {
        (0..7).map(|i| 10f64.powf(-6.0 + i as f64)).collect()
    } else {
        vec![cfg.noise_variance]
    };
    let rho_grid: Vec<f64> =
        (0..12).map(|i| med * 10f64.powf(-2.0 + 3.0 * i as f64 / 11.0)).collect();

    let score = |rho: f64, noise: f64| -> f64 {
        log_marginal_likelihood(&xs, &ys, rho, noise, cfg.prior_mean)
            .unwrap_or(f64::NEG_INFINITY)
    };

    let mut best = (rho_grid[0], noise_grid[0], f64::NEG_INFINITY);
    for &noise in &noise_grid {
        for &rho in &rho_grid {
            let ml = score(rho, noise);
            if ml > best.2 {
                best = (rho, noise, ml);
            }
        }
    }
    if best.2 == f64::NEG_INFINITY {
        return Err(Error::Numeric("marginal likelihood not finite on the search grid".into()));
    }

    // Golden-section refinement on log rho between the grid neighbors.
    let idx = rho_grid.iter().position(|&r| r == best.0).expect("best rho on grid");
    let lo = if idx == 0 { best.0 * 0.5 } else { rho_grid[idx - 1] };
    let hi = if idx + 1 == rho_grid.len() { best.0 * 2.0 } else { rho_grid[idx + 1] };
    let noise = best.1;
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut c, mut d) = (b - phi * (b - a), a + phi * (b - a));
    let (mut fc, mut fd) = (score(c.exp(), noise), score(d.exp(), noise));
    for _ in 0..30 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = score(c.exp(), noise);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = score(d.exp(), noise);
        }
    }
    let refined = 0.5 * (a + b);
    let rho = if score(refined.exp(), noise) >= best.2 { refined.exp() } else { best.0 };
    Ok((rho, noise))
}

/// Maximum-marginal-likelihood lengthscale at the configured noise level.
pub fn fit_lengthscale(x: &PointMatrix, y: &[f64], cfg: &GpConfig) -> Result<f64> {
    fit_hyperparameters(x, y, cfg).map(|(rho, _)| rho)
}

/// A fitted GP: factored gram matrix plus the weight vector
/// `(K + sigma^2 I)^{-1} (y - mu)`.
#[derive(Debug, Clone)]
pub struct GpFit {
    x: PointMatrix,
    y: Vec<f64>,
    rho: f64,
    noise_variance: f64,
    prior_mean: f64,
    jitter: f64,
    chol: CholFactor,
    alpha: DVector<f64>,
}

impl GpFit {
    pub fn fit(x: &PointMatrix, y: &[f64], cfg: &GpConfig) -> Result<Self> {
        if x.n_rows() != y.len() || y.is_empty() {
            return Err(Error::InvalidArgument("GP fit needs matching nonempty x, y".into()));
        }
        let (rho, noise) = match cfg.lengthscale {
            Some(rho) if rho > 0.0 => (rho, cfg.noise_variance),
            Some(rho) => {
                return Err(Error::InvalidArgument(format!("lengthscale {rho} must be > 0")))
            }
            None => fit_hyperparameters(x, y, cfg)?,
        };
        Self::fit_fixed(x, y, rho, noise, cfg.prior_mean)
    }

    /// Fits with fully specified hyperparameters.
    pub fn fit_fixed(
        x: &PointMatrix,
        y: &[f64],
        rho: f64,
        noise_variance: f64,
        prior_mean: f64,
    ) -> Result<Self> {
        let (chol, jitter) = chol_with_jitter(x, rho, noise_variance)?;
        let r = DVector::from_iterator(y.len(), y.iter().map(|&v| v - prior_mean));
        let alpha = chol.solve(&r);
        Ok(Self {
            x: x.clone(),
            y: y.to_vec(),
            rho,
            noise_variance,
            prior_mean,
            jitter,
            chol,
            alpha,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn prior_mean(&self) -> f64 {
        self.prior_mean
    }

    /// Jitter added to the gram diagonal during factorization.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    fn cross(&self, xs: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.n(),
            self.x.rows().map(|r| matern32(r, xs, self.rho)),
        )
    }

    /// Predictive mean and (clamped nonnegative) variance at `xs`.
    pub fn predict(&self, xs: &[f64]) -> (f64, f64) {
        let k = self.cross(xs);
        let mean = self.prior_mean + k.dot(&self.alpha);
        let w = self.chol.solve(&k);
        let var = (1.0 - k.dot(&w)).max(0.0);
        (mean, var)
    }

    /// Incorporates one observation by rank-1 extension of the Cholesky
    /// factor; hyperparameters stay fixed. Matches a full refit at the same
    /// hyperparameters to numerical precision.
    pub fn extend(&mut self, x_new: &[f64], y_new: f64) -> Result<()> {
        let cross = self.cross(x_new);
        self.chol.extend(&cross, 1.0 + self.noise_variance + self.jitter)?;
        self.x.push_row(x_new)?;
        self.y.push(y_new);
        let r = DVector::from_iterator(
            self.y.len(),
            self.y.iter().map(|&v| v - self.prior_mean),
        );
        self.alpha = self.chol.solve(&r);
        Ok(())
    }
}

/// Closed-form BQ posterior on the integral, with the kernel means
/// estimated by Monte Carlo.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BqPosterior {
    pub mean: f64,
    pub variance: f64,
    pub rho: f64,
    /// Largest standard error among the kernel-mean estimates.
    pub kernel_mean_se: f64,
    /// True when the variance was clamped to zero from below.
    pub clamped: bool,
}

/// BQ posterior with kernel means over `cfg.kernel_mean_samples` draws from
/// the measure; the double integral uses an independent paired sample.
pub fn bq_posterior(
    x: &PointMatrix,
    y: &[f64],
    cfg: &GpConfig,
    measure: &ProductMeasure,
    seed: u64,
) -> Result<BqPosterior> {
    let fit = GpFit::fit(x, y, cfg)?;
    bq_posterior_from_fit(&fit, cfg, measure, seed)
}

/// Same as [`bq_posterior`] but reusing an existing fit.
pub fn bq_posterior_from_fit(
    fit: &GpFit,
    cfg: &GpConfig,
    measure: &ProductMeasure,
    seed: u64,
) -> Result<BqPosterior> {
    let l = cfg.kernel_mean_samples.max(1);
    let mean_samples = measure.sample(l, seeds::derive(seed, "kernel-mean", 0))?;
    let pair_samples = measure.sample(l, seeds::derive(seed, "kernel-mean", 1))?;
    bq_posterior_with_samples(fit, &mean_samples, &pair_samples)
}

/// BQ posterior with caller-provided sample sets: `mean_samples` estimates
/// every kernel mean `z_i = Pi[k(., x_i)]` (one shared draw), and the
/// rows of `mean_samples` paired with `pair_samples` estimate the double
/// integral.
pub fn bq_posterior_with_samples(
    fit: &GpFit,
    mean_samples: &SampleSet,
    pair_samples: &SampleSet,
) -> Result<BqPosterior> {
    if mean_samples.len() != pair_samples.len() || mean_samples.is_empty() {
        return Err(Error::InvalidArgument(
            "kernel-mean and pairing sample sets must be nonempty and equal-sized".into(),
        ));
    }
    let l = mean_samples.len() as f64;
    let n = fit.n();
    let mut z_sum = vec![0.0; n];
    let mut z_sum2 = vec![0.0; n];
    let mut pi_pi = 0.0;
    for (s, t) in mean_samples.points.rows().zip(pair_samples.points.rows()) {
        for (i, xi) in fit.x.rows().enumerate() {
            let v = matern32(s, xi, fit.rho);
            z_sum[i] += v;
            z_sum2[i] += v * v;
        }
        pi_pi += matern32(s, t, fit.rho);
    }
    let z = DVector::from_iterator(n, z_sum.iter().map(|&s| s / l));
    let se = z_sum2
        .iter()
        .zip(z.iter())
        .map(|(&s2, &m)| (((s2 / l - m * m).max(0.0)) / l).sqrt())
        .fold(0.0f64, f64::max);
    finish_bq(fit, z, pi_pi / l, se)
}

/// BQ posterior against the empirical distribution of a finite pool with
/// uniform weights; kernel means are exact sums over the pool. The double
/// integral is the exact double sum for small pools and a strided pairing
/// estimate for large ones.
pub fn bq_posterior_pool(fit: &GpFit, pool: &PointMatrix) -> Result<BqPosterior> {
    let n_pool = pool.n_rows();
    if n_pool == 0 {
        return Err(Error::InvalidArgument("empty pool".into()));
    }
    let n = fit.n();
    let mut z_sum = vec![0.0; n];
    for p in pool.rows() {
        for (i, xi) in fit.x.rows().enumerate() {
            z_sum[i] += matern32(p, xi, fit.rho);
        }
    }
    let z = DVector::from_iterator(n, z_sum.iter().map(|&s| s / n_pool as f64));

    let pi_pi = if n_pool <= 1500 {
        let mut total = 0.0;
        for i in 0..n_pool {
            for j in 0..n_pool {
                total += matern32(pool.row(i), pool.row(j), fit.rho);
            }
        }
        total / (n_pool * n_pool) as f64
    } else {
        // Strided off-diagonal pairing plus the exact diagonal weight.
        let offsets = [1usize, 7, 101, 1009];
        let mut total = 0.0;
        let mut count = 0usize;
        for &s in &offsets {
            for i in 0..n_pool {
                total += matern32(pool.row(i), pool.row((i + s) % n_pool), fit.rho);
                count += 1;
            }
        }
        let off_diag = total / count as f64;
        off_diag * (1.0 - 1.0 / n_pool as f64) + 1.0 / n_pool as f64
    };
    finish_bq(fit, z, pi_pi, 0.0)
}

fn finish_bq(fit: &GpFit, z: DVector<f64>, pi_pi: f64, se: f64) -> Result<BqPosterior> {
    let w = fit.chol.solve(&z);
    let mean = fit.prior_mean + z.dot(&fit.alpha);
    let raw_var = pi_pi - z.dot(&w);
    Ok(BqPosterior {
        mean,
        variance: raw_var.max(0.0),
        rho: fit.rho,
        kernel_mean_se: se,
        clamped: raw_var < 0.0,
    })
}
