//! Test integrands with known ground truth: the six Genz families, a step
//! function, a portfolio loss indicator, and table-backed pool functions.

mod genz;
mod pool;
mod portfolio;

pub use genz::{GenzFamily, GenzSpec};
pub use pool::{ingest_pool, ColumnRole, EncodedColumn, PoolFunction, PoolSchema};
pub use portfolio::PortfolioSpec;

/// Indicator of `x_1 in (0.5, 1]`; the boundary point 0.5 maps to 0.
pub fn step_eval(x: &[f64]) -> f64 {
    if x[0] > 0.5 {
        1.0
    } else {
        0.0
    }
}
