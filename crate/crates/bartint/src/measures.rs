//! Integration measures: product measures with exact probabilities of
//! axis-aligned cells, densities, and i.i.d. sampling.
//!
//! Cells use half-open intervals `[lo, hi)` with the topmost bound of the
//! support closed, so finite partitions tile the support without double
//! counting. Probabilities only involve marginal CDF differences, so the
//! boundary convention never affects numeric results for the continuous
//! marginals supported here.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::points::PointMatrix;

/// One coordinate's marginal distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Marginal {
    /// Uniform on `[lo, hi]`.
    Uniform { lo: f64, hi: f64 },
    /// Rate-1 exponential truncated to `[lo, hi]`; `hi` may be infinite.
    Exponential { lo: f64, hi: f64 },
    /// Gaussian with the given mean and standard deviation, truncated to
    /// `[lo, hi]`; either bound may be infinite.
    Gaussian { mean: f64, sd: f64, lo: f64, hi: f64 },
}

impl Marginal {
    pub fn exponential() -> Self {
        Marginal::Exponential { lo: 0.0, hi: f64::INFINITY }
    }

    pub fn support(&self) -> (f64, f64) {
        match *self {
            Marginal::Uniform { lo, hi } => (lo, hi),
            Marginal::Exponential { lo, hi } => (lo, hi),
            Marginal::Gaussian { lo, hi, .. } => (lo, hi),
        }
    }

    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.support();
        if !(lo < hi) {
            return Err(Error::InvalidArgument(format!("empty marginal support [{lo}, {hi}]")));
        }
        match *self {
            Marginal::Exponential { lo, .. } if lo < 0.0 => Err(Error::InvalidArgument(
                "exponential support must lie in [0, inf)".to_string(),
            )),
            Marginal::Gaussian { sd, .. } if !(sd > 0.0) => {
                Err(Error::InvalidArgument("gaussian sd must be positive".to_string()))
            }
            _ => Ok(()),
        }
    }

    /// Untruncated CDF of the underlying distribution.
    fn raw_cdf(&self, x: f64) -> f64 {
        match *self {
            Marginal::Uniform { lo, hi } => {
                if x <= lo {
                    0.0
                } else if x >= hi {
                    1.0
                } else {
                    (x - lo) / (hi - lo)
                }
            }
            Marginal::Exponential { .. } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-x).exp_m1()
                }
            }
            Marginal::Gaussian { mean, sd, .. } => std_normal().cdf((x - mean) / sd),
        }
    }

    /// Untruncated density of the underlying distribution.
    fn raw_density(&self, x: f64) -> f64 {
        match *self {
            Marginal::Uniform { lo, hi } => {
                if x < lo || x > hi {
                    0.0
                } else {
                    1.0 / (hi - lo)
                }
            }
            Marginal::Exponential { .. } => {
                if x < 0.0 {
                    0.0
                } else {
                    (-x).exp()
                }
            }
            Marginal::Gaussian { mean, sd, .. } => {
                let z = (x - mean) / sd;
                (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
            }
        }
    }

    /// Untruncated quantile function.
    fn raw_quantile(&self, p: f64) -> f64 {
        match *self {
            Marginal::Uniform { lo, hi } => lo + p * (hi - lo),
            Marginal::Exponential { .. } => -(-p).ln_1p(),
            Marginal::Gaussian { mean, sd, .. } => mean + sd * std_normal().inverse_cdf(p),
        }
    }

    /// Mass the truncation window retains under the untruncated law.
    fn truncation_mass(&self) -> f64 {
        let (lo, hi) = self.support();
        self.raw_cdf(hi) - self.raw_cdf(lo)
    }

    /// P(lo_q <= X < hi_q) under the truncated marginal.
    pub fn interval_probability(&self, lo_q: f64, hi_q: f64) -> f64 {
        let p = (self.raw_cdf(hi_q) - self.raw_cdf(lo_q)) / self.truncation_mass();
        p.clamp(0.0, 1.0)
    }

    /// Truncated density at `x`; zero outside the support.
    pub fn density(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x < lo || x > hi {
            return 0.0;
        }
        self.raw_density(x) / self.truncation_mass()
    }

    /// Inverse-CDF draw from the truncated marginal given `u` in [0, 1).
    pub fn sample_from_uniform(&self, u: f64) -> f64 {
        let (lo, hi) = self.support();
        let (c_lo, c_hi) = (self.raw_cdf(lo), self.raw_cdf(hi));
        let x = self.raw_quantile(c_lo + u * (c_hi - c_lo));
        x.clamp(lo, if hi.is_finite() { hi } else { f64::MAX })
    }
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// Axis-aligned hyperrectangle; `[lo_k, hi_k)` per dimension with the
/// topmost support bound treated as closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Cell {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch { expected: lo.len(), got: hi.len() });
        }
        for k in 0..lo.len() {
            if !(lo[k] <= hi[k]) {
                return Err(Error::InvalidArgument(format!(
                    "cell interval inverted in dimension {k}: [{}, {}]",
                    lo[k], hi[k]
                )));
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Half-open membership test: `lo_k <= x_k < hi_k` in every dimension,
    /// with an infinite or support-topmost `hi_k` treated as closed.
    pub fn contains(&self, x: &[f64], support: &Cell) -> bool {
        x.iter().enumerate().all(|(k, &v)| {
            let upper_ok = v < self.hi[k] || (self.hi[k] == support.hi[k] && v <= self.hi[k]);
            self.lo[k] <= v && upper_ok
        })
    }
}

/// Product measure over `d` coordinates; the distribution the integral is
/// taken against. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductMeasure {
    marginals: Vec<Marginal>,
}

impl ProductMeasure {
    pub fn new(marginals: Vec<Marginal>) -> Result<Self> {
        if marginals.is_empty() {
            return Err(Error::InvalidArgument("measure needs at least one marginal".into()));
        }
        for m in &marginals {
            m.validate()?;
        }
        Ok(Self { marginals })
    }

    /// Uniform on the unit cube `[0,1]^d`.
    pub fn uniform_unit_cube(d: usize) -> Self {
        Self::new(vec![Marginal::Uniform { lo: 0.0, hi: 1.0 }; d]).expect("valid uniform cube")
    }

    /// Independent rate-1 exponentials on `[0, inf)^d`.
    pub fn exponential(d: usize) -> Self {
        Self::new(vec![Marginal::exponential(); d]).expect("valid exponential product")
    }

    /// Gaussian with the given mean and unit variance per coordinate,
    /// truncated to `[0,1]^d`.
    pub fn truncated_gaussian_unit_cube(d: usize, mean: f64, sd: f64) -> Self {
        Self::new(vec![Marginal::Gaussian { mean, sd, lo: 0.0, hi: 1.0 }; d])
            .expect("valid truncated gaussian")
    }

    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    pub fn marginals(&self) -> &[Marginal] {
        &self.marginals
    }

    /// The full support as a cell.
    pub fn support(&self) -> Cell {
        let (lo, hi) = self.marginals.iter().map(|m| m.support()).unzip();
        Cell { lo, hi }
    }

    /// Exact probability of an axis-aligned cell.
    pub fn cell_probability(&self, cell: &Cell) -> Result<f64> {
        if cell.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: cell.dim() });
        }
        let mut p = 1.0;
        for (k, m) in self.marginals.iter().enumerate() {
            let (s_lo, s_hi) = m.support();
            if cell.lo[k] < s_lo || cell.hi[k] > s_hi {
                return Err(Error::OutsideSupport { dim: k, lo: cell.lo[k], hi: cell.hi[k] });
            }
            p *= m.interval_probability(cell.lo[k], cell.hi[k]);
        }
        Ok(p.clamp(0.0, 1.0))
    }

    /// Product density at `x`; zero (not an error) outside the support.
    pub fn density(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim(), "point dimension mismatch");
        self.marginals.iter().zip(x).map(|(m, &v)| m.density(v)).product()
    }

    /// `l` i.i.d. draws; deterministic for a fixed seed.
    pub fn sample(&self, l: usize, seed: u64) -> Result<SampleSet> {
        if l == 0 {
            return Err(Error::InvalidArgument("sample count must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut points = PointMatrix::with_capacity(self.dim(), l);
        let mut row = vec![0.0; self.dim()];
        for _ in 0..l {
            for (k, m) in self.marginals.iter().enumerate() {
                row[k] = m.sample_from_uniform(rng.random::<f64>());
            }
            points.push_row(&row)?;
        }
        Ok(SampleSet { points, seed })
    }
}

/// A batch of points representative of a measure, either drawn from a
/// [`ProductMeasure`] or provided directly (empirical pools).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleSet {
    pub points: PointMatrix,
    pub seed: u64,
}

impl SampleSet {
    /// Wraps an existing point set (e.g. a survey pool, uniform weights).
    pub fn from_points(points: PointMatrix) -> Self {
        Self { points, seed: 0 }
    }

    pub fn len(&self) -> usize {
        self.points.n_rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}
