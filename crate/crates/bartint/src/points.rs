use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major matrix of points in `R^d`. Rows are points, columns are
/// coordinates. Stored flat so that large sample sets (l = 10^6) do not
/// pay one allocation per point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointMatrix {
    data: Vec<f64>,
    dim: usize,
}

impl PointMatrix {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        Self { data: Vec::new(), dim }
    }

    pub fn with_capacity(dim: usize, rows: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        Self { data: Vec::with_capacity(dim * rows), dim }
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let mut m = Self::with_capacity(dim, rows.len());
        for r in rows {
            m.push_row(r)?;
        }
        Ok(m)
    }

    /// Builds from a flat row-major buffer; `data.len()` must be a multiple of `dim`.
    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::InvalidArgument(format!(
                "flat buffer of length {} is not a multiple of dim {}",
                data.len(),
                dim
            )));
        }
        Ok(Self { data, dim })
    }

    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: row.len() });
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// Column values gathered into a fresh vector.
    pub fn column(&self, k: usize) -> Vec<f64> {
        assert!(k < self.dim);
        self.rows().map(|r| r[k]).collect()
    }

    /// New matrix containing the selected rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut out = Self::with_capacity(self.dim, idx.len());
        for &i in idx {
            out.data.extend_from_slice(self.row(i));
        }
        out
    }
}

/// Paired design points and responses, with the dimension implied by `x`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub x: PointMatrix,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn new(x: PointMatrix, y: Vec<f64>) -> Result<Self> {
        if x.n_rows() != y.len() {
            return Err(Error::InvalidArgument(format!(
                "{} design points but {} responses",
                x.n_rows(),
                y.len()
            )));
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.dim()
    }

    pub fn push(&mut self, point: &[f64], response: f64) -> Result<()> {
        self.x.push_row(point)?;
        self.y.push(response);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_access_round_trips() {
        let m = PointMatrix::from_rows(2, &[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(m.n_rows(), 2);
        assert_eq!(m.row(1), &[3.0, 4.0]);
        assert_eq!(m.column(0), vec![1.0, 3.0]);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let mut m = PointMatrix::new(3);
        assert!(m.push_row(&[1.0, 2.0]).is_err());
    }
}
