//! Portfolio credit loss indicator: `d` obligors with exposures `c_i`
//! default once their financial strain exceeds a threshold, and the event
//! of interest is a total loss above `gamma` under independent Exp(1)
//! strains.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_ENUM_DIM: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioSpec {
    pub dimension: usize,
    /// Exposure of each loan; positive.
    pub exposures: Vec<f64>,
    /// Strain threshold after which loan `i` defaults.
    pub thresholds: Vec<f64>,
    /// Loss level defining the rare event.
    pub loss_level: f64,
}

impl PortfolioSpec {
    /// Defaults `gamma = 2`, `d_i = 0.5 i`, `c_i = 0.2 i`.
    pub fn with_defaults(dimension: usize) -> Result<Self> {
        let exposures = (1..=dimension).map(|i| 0.2 * i as f64).collect();
        let thresholds = (1..=dimension).map(|i| 0.5 * i as f64).collect();
        Self::new(dimension, exposures, thresholds, 2.0)
    }

    pub fn new(
        dimension: usize,
        exposures: Vec<f64>,
        thresholds: Vec<f64>,
        loss_level: f64,
    ) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidArgument("portfolio dimension must be positive".into()));
        }
        if exposures.len() != dimension || thresholds.len() != dimension {
            return Err(Error::DimensionMismatch {
                expected: dimension,
                got: exposures.len().min(thresholds.len()),
            });
        }
        if exposures.iter().any(|&c| !(c > 0.0)) {
            return Err(Error::InvalidArgument("exposures must be positive".into()));
        }
        Ok(Self { dimension, exposures, thresholds, loss_level })
    }

    /// Total loss at strain vector `x`.
    pub fn loss(&self, x: &[f64]) -> f64 {
        self.exposures
            .iter()
            .zip(&self.thresholds)
            .zip(x)
            .filter(|((_, &t), &x)| x > t)
            .map(|((&c, _), _)| c)
            .sum()
    }

    /// Indicator of the loss exceeding the configured level.
    pub fn eval(&self, x: &[f64]) -> f64 {
        if self.loss(x) > self.loss_level {
            1.0
        } else {
            0.0
        }
    }

    /// Exact rare-event probability by enumerating default subsets; the
    /// marginal default probabilities are `exp(-threshold_i)` under Exp(1)
    /// strains. Feasible for `d <= 25`.
    pub fn true_probability(&self) -> Result<f64> {
        let d = self.dimension;
        if d > MAX_ENUM_DIM {
            return Err(Error::EnumerationTooLarge(d));
        }
        let p_default: Vec<f64> = self.thresholds.iter().map(|&t| (-t).exp()).collect();
        let mut total = 0.0;
        for mask in 0u32..(1u32 << d) {
            let loss: f64 =
                (0..d).filter(|&i| mask >> i & 1 == 1).map(|i| self.exposures[i]).sum();
            if loss > self.loss_level {
                let mut pr = 1.0;
                for (i, &p) in p_default.iter().enumerate() {
                    pr *= if mask >> i & 1 == 1 { p } else { 1.0 - p };
                }
                total += pr;
            }
        }
        Ok(total)
    }
}
