//! Ingestion of tabular survey pools: one-hot encoding of declared
//! categorical columns, ordinals kept continuous, and a binary response
//! from thresholding the log of the raw response column.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::PointMatrix;

/// Role of a raw CSV column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRole {
    Continuous,
    Categorical,
    Ordinal,
    Response,
}

/// Declares each column's role; columns not mentioned are continuous.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoolSchema {
    pub response: String,
    pub categorical: Vec<String>,
    pub ordinal: Vec<String>,
    /// Response is binarized as `1{log(raw) > threshold}`.
    pub threshold: f64,
}

impl PoolSchema {
    fn role_of(&self, name: &str) -> ColumnRole {
        if name == self.response {
            ColumnRole::Response
        } else if self.categorical.iter().any(|c| c == name) {
            ColumnRole::Categorical
        } else if self.ordinal.iter().any(|c| c == name) {
            ColumnRole::Ordinal
        } else {
            ColumnRole::Continuous
        }
    }
}

/// How one raw column maps into encoded coordinates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncodedColumn {
    pub name: String,
    pub role: ColumnRole,
    /// Sorted category levels for one-hot columns; empty otherwise.
    pub levels: Vec<String>,
}

impl EncodedColumn {
    pub fn width(&self) -> usize {
        match self.role {
            ColumnRole::Categorical => self.levels.len(),
            _ => 1,
        }
    }
}

/// A table-backed integrand: encoded covariates with a binary response,
/// integrated against the empirical distribution of the pool (uniform
/// weights over rows).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoolFunction {
    pub covariates: PointMatrix,
    pub responses: Vec<f64>,
    pub encoding: Vec<EncodedColumn>,
    /// Rows dropped during ingestion because of missing or unparseable
    /// values.
    pub rejected_rows: usize,
}

impl PoolFunction {
    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.covariates.dim()
    }

    /// Population proportion: the full-pool average of the binary response.
    pub fn population_mean(&self) -> f64 {
        self.responses.iter().sum::<f64>() / self.responses.len() as f64
    }

    /// Encodes a raw covariate row (response column excluded) against the
    /// stored metadata; unseen categories are a structural error.
    pub fn encode_row(&self, raw: &[&str]) -> Result<Vec<f64>> {
        if raw.len() != self.encoding.len() {
            return Err(Error::DimensionMismatch { expected: self.encoding.len(), got: raw.len() });
        }
        let mut out = Vec::with_capacity(self.dim());
        for (col, &value) in self.encoding.iter().zip(raw) {
            match col.role {
                ColumnRole::Categorical => {
                    let idx = col
                        .levels
                        .iter()
                        .position(|l| l == value)
                        .ok_or_else(|| {
                            Error::Ingest(format!(
                                "unknown category '{value}' for column '{}'",
                                col.name
                            ))
                        })?;
                    for j in 0..col.levels.len() {
                        out.push(if j == idx { 1.0 } else { 0.0 });
                    }
                }
                _ => {
                    let v: f64 = value.parse().map_err(|_| {
                        Error::Ingest(format!(
                            "non-numeric value '{value}' in column '{}'",
                            col.name
                        ))
                    })?;
                    out.push(v);
                }
            }
        }
        Ok(out)
    }
}

/// Reads a headered CSV, one-hot encodes declared categoricals, keeps
/// ordinals continuous, and binarizes the response as
/// `1{log(raw) > threshold}` (strict). Rows with missing or unparseable
/// values are rejected and counted.
pub fn ingest_pool(path: &Path, schema: &PoolSchema) -> Result<PoolFunction> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.to_string()).collect();
    let response_idx = headers
        .iter()
        .position(|h| *h == schema.response)
        .ok_or_else(|| Error::Ingest(format!("response column '{}' not found", schema.response)))?;
    for declared in schema.categorical.iter().chain(&schema.ordinal) {
        if !headers.iter().any(|h| h == declared) {
            return Err(Error::Ingest(format!("declared column '{declared}' not found")));
        }
    }

    let covariate_cols: Vec<usize> =
        (0..headers.len()).filter(|&i| i != response_idx).collect();

    // First pass: keep complete rows, collect category levels.
    let mut rows: Vec<(Vec<String>, f64)> = Vec::new();
    let mut rejected = 0usize;
    let mut levels: Vec<BTreeSet<String>> = vec![BTreeSet::new(); covariate_cols.len()];
    for record in reader.records() {
        let record = record?;
        if record.len() != headers.len() {
            rejected += 1;
            continue;
        }
        let raw_response = record.get(response_idx).unwrap_or("").trim();
        let response: Option<f64> = raw_response.parse().ok().filter(|v: &f64| *v > 0.0);
        let mut fields = Vec::with_capacity(covariate_cols.len());
        let mut ok = response.is_some();
        for (slot, &ci) in covariate_cols.iter().enumerate() {
            let value = record.get(ci).unwrap_or("").trim().to_string();
            if value.is_empty() || value.eq_ignore_ascii_case("na") {
                ok = false;
                break;
            }
            match schema.role_of(&headers[ci]) {
                ColumnRole::Categorical => {
                    levels[slot].insert(value.clone());
                }
                _ => {
                    if value.parse::<f64>().is_err() {
                        ok = false;
                        break;
                    }
                }
            }
            fields.push(value);
        }
        if ok {
            rows.push((fields, response.unwrap()));
        } else {
            rejected += 1;
        }
    }
    if rows.is_empty() {
        return Err(Error::Ingest("no complete rows after ingestion".into()));
    }

    let encoding: Vec<EncodedColumn> = covariate_cols
        .iter()
        .enumerate()
        .map(|(slot, &ci)| {
            let role = schema.role_of(&headers[ci]);
            EncodedColumn {
                name: headers[ci].clone(),
                role,
                levels: if role == ColumnRole::Categorical {
                    levels[slot].iter().cloned().collect()
                } else {
                    Vec::new()
                },
            }
        })
        .collect();
    let dim: usize = encoding.iter().map(|c| c.width()).sum();

    let mut covariates = PointMatrix::with_capacity(dim, rows.len());
    let mut responses = Vec::with_capacity(rows.len());
    let shell = PoolFunction {
        covariates: PointMatrix::new(dim),
        responses: Vec::new(),
        encoding: encoding.clone(),
        rejected_rows: 0,
    };
    for (fields, raw_response) in &rows {
        let refs: Vec<&str> = fields.iter().map(|s| s.as_str()).collect();
        let encoded = shell.encode_row(&refs)?;
        covariates.push_row(&encoded)?;
        responses.push(if raw_response.ln() > schema.threshold { 1.0 } else { 0.0 });
    }

    Ok(PoolFunction { covariates, responses, encoding, rejected_rows: rejected })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(content: &str) -> tempdir::TempCsv {
        tempdir::TempCsv::new(content)
    }

    // Minimal scoped temp file helper so tests need no extra dependency.
    mod tempdir {
        use std::io::Write;
        use std::path::PathBuf;

        pub struct TempCsv {
            pub path: PathBuf,
        }

        impl TempCsv {
            pub fn new(content: &str) -> Self {
                let mut path = std::env::temp_dir();
                let unique = format!(
                    "bartint-pool-{}-{:?}.csv",
                    std::process::id(),
                    std::thread::current().id()
                );
                path.push(unique);
                let mut f = std::fs::File::create(&path).unwrap();
                f.write_all(content.as_bytes()).unwrap();
                Self { path }
            }
        }

        impl Drop for TempCsv {
            fn drop(&mut self) {
                let _ = std::fs::remove_file(&self.path);
            }
        }
    }

    fn toy_schema() -> PoolSchema {
        PoolSchema {
            response: "income".to_string(),
            categorical: vec!["color".to_string()],
            ordinal: vec!["grade".to_string()],
            threshold: 10.0,
        }
    }

    #[test]
    fn one_hot_expansion_and_binarization() {
        let csv = "age,color,grade,income\n30,red,3,30000\n40,blue,1,8000\n50,red,2,25000\n";
        let tmp = write_csv(csv);
        let pool = ingest_pool(&tmp.path, &toy_schema()).unwrap();
        // age (continuous) + color one-hot (2 levels) + grade (ordinal) = 4.
        assert_eq!(pool.dim(), 4);
        assert_eq!(pool.len(), 3);
        assert!(pool.responses.iter().all(|&y| y == 0.0 || y == 1.0));
        // ln(30000) = 10.3 > 10, ln(8000) = 8.99 < 10, ln(25000) = 10.13 > 10.
        assert_eq!(pool.responses, vec![1.0, 0.0, 1.0]);
        // Levels sorted: blue before red.
        assert_eq!(pool.covariates.row(0), &[30.0, 0.0, 1.0, 3.0]);
    }

    #[test]
    fn exact_threshold_maps_to_zero() {
        let income = format!("{:.10}", (10.0f64).exp());
        let csv = format!("age,color,grade,income\n30,red,3,{income}\n40,red,1,8000\n");
        let tmp = write_csv(&csv);
        let pool = ingest_pool(&tmp.path, &toy_schema()).unwrap();
        // e^10 rounds to a representation whose log is <= 10: strict
        // inequality keeps the indicator at 0.
        assert_eq!(pool.responses[0], 0.0);
    }

    #[test]
    fn missing_values_are_rejected_and_counted() {
        let csv = "age,color,grade,income\n30,red,3,30000\n,blue,1,8000\n50,red,NA,25000\n";
        let tmp = write_csv(csv);
        let pool = ingest_pool(&tmp.path, &toy_schema()).unwrap();
        assert_eq!(pool.len(), 1);
        assert_eq!(pool.rejected_rows, 2);
    }

    #[test]
    fn unknown_category_at_query_time_errors() {
        let csv = "age,color,grade,income\n30,red,3,30000\n40,blue,1,8000\n";
        let tmp = write_csv(csv);
        let pool = ingest_pool(&tmp.path, &toy_schema()).unwrap();
        assert!(pool.encode_row(&["33", "green", "2"]).is_err());
        assert_eq!(pool.encode_row(&["33", "blue", "2"]).unwrap(), vec![33.0, 1.0, 0.0, 2.0]);
    }

    #[test]
    fn writes_are_flushed_before_read() {
        // Guards the helper itself: large content must round-trip.
        let mut content = String::from("age,color,grade,income\n");
        for i in 0..100 {
            content.push_str(&format!("{},red,1,{}\n", 20 + i % 50, 5000 + 300 * i));
        }
        let tmp = write_csv(&content);
        let pool = ingest_pool(&tmp.path, &toy_schema()).unwrap();
        assert_eq!(pool.len(), 100);
        let mut file = std::fs::File::options().append(true).open(&tmp.path).unwrap();
        file.write_all(b"").unwrap();
    }
}
