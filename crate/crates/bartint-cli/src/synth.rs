//! Synthetic survey pool with the same schema shape as the census
//! experiment: eight demographic covariates (seven categorical, one
//! ordinal encoded as continuous) and an income response driven by the
//! covariates plus noise, so the log-income indicator is learnable.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::HarnessError;

pub const CATEGORICAL_COLUMNS: [&str; 7] = [
    "age_group",
    "sex",
    "own_child",
    "health_insurance",
    "marital_status",
    "employment",
    "disability",
];

const AGE_GROUPS: [(&str, f64); 5] = [
    ("18_29", -0.55),
    ("30_44", 0.25),
    ("45_59", 0.40),
    ("60_74", 0.05),
    ("75_plus", -0.35),
];
const SEXES: [(&str, f64); 2] = [("female", -0.08), ("male", 0.08)];
const OWN_CHILD: [(&str, f64); 2] = [("no", 0.0), ("yes", 0.06)];
const INSURANCE: [(&str, f64); 2] = [("no", -0.22), ("yes", 0.12)];
const MARITAL: [(&str, f64); 6] = [
    ("divorced", -0.10),
    ("married", 0.22),
    ("never_married", -0.15),
    ("partnered", 0.10),
    ("separated", -0.20),
    ("widowed", -0.12),
];
const EMPLOYMENT: [(&str, f64); 4] = [
    ("employed", 0.55),
    ("retired", -0.05),
    ("self_employed", 0.40),
    ("unemployed", -0.85),
];
const DISABILITY: [(&str, f64); 2] = [("no", 0.08), ("yes", -0.45)];

/// Encoded dimensionality of the schema after one-hot expansion:
/// 1 (education) + 5 + 2 + 2 + 2 + 6 + 4 + 2 = 24.
pub const ENCODED_DIM: usize = 24;

fn pick<'a, R: Rng>(rng: &mut R, options: &'a [(&'a str, f64)]) -> (&'a str, f64) {
    options[rng.random_range(0..options.len())]
}

/// Writes a deterministic pool CSV with `n_pool` rows and returns the path.
pub fn synth_survey_pool(n_pool: usize, schema_seed: u64, path: &Path) -> Result<(), HarnessError> {
    if n_pool == 0 {
        return Err(HarnessError::Config("pool must have at least one row".into()));
    }
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| HarnessError::Runtime(format!("creating {}: {e}", parent.display())))?;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(schema_seed);
    let file = std::fs::File::create(path)
        .map_err(|e| HarnessError::Runtime(format!("creating {}: {e}", path.display())))?;
    let mut out = std::io::BufWriter::new(file);
    writeln!(
        out,
        "education,age_group,sex,own_child,health_insurance,marital_status,employment,disability,income"
    )
    .map_err(|e| HarnessError::Runtime(e.to_string()))?;

    for _ in 0..n_pool {
        let education = rng.random_range(1..=16u32);
        let (age, age_c) = pick(&mut rng, &AGE_GROUPS);
        let (sex, sex_c) = pick(&mut rng, &SEXES);
        let (child, child_c) = pick(&mut rng, &OWN_CHILD);
        let (ins, ins_c) = pick(&mut rng, &INSURANCE);
        let (mar, mar_c) = pick(&mut rng, &MARITAL);
        let (emp, emp_c) = pick(&mut rng, &EMPLOYMENT);
        let (dis, dis_c) = pick(&mut rng, &DISABILITY);
        let noise: f64 = StandardNormal.sample(&mut rng);
        let log_income = 7.9
            + 0.15 * education as f64
            + age_c
            + sex_c
            + child_c
            + ins_c
            + mar_c
            + emp_c
            + dis_c
            + 0.55 * noise;
        let income = log_income.exp();
        writeln!(
            out,
            "{education},{age},{sex},{child},{ins},{mar},{emp},{dis},{income:.4}"
        )
        .map_err(|e| HarnessError::Runtime(e.to_string()))?;
    }
    out.flush().map_err(|e| HarnessError::Runtime(e.to_string()))?;
    Ok(())
}

/// Pool schema matching [`synth_survey_pool`]'s output.
pub fn synthetic_schema(threshold: f64) -> bartint::integrands::PoolSchema {
    bartint::integrands::PoolSchema {
        response: "income".to_string(),
        categorical: CATEGORICAL_COLUMNS.iter().map(|s| s.to_string()).collect(),
        ordinal: vec!["education".to_string()],
        threshold,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pool_is_deterministic_and_encodes_to_24_dims() {
        let dir = std::env::temp_dir();
        let p1 = dir.join(format!("bartint-synth-a-{}.csv", std::process::id()));
        let p2 = dir.join(format!("bartint-synth-b-{}.csv", std::process::id()));
        synth_survey_pool(500, 11, &p1).unwrap();
        synth_survey_pool(500, 11, &p2).unwrap();
        let a = std::fs::read(&p1).unwrap();
        let b = std::fs::read(&p2).unwrap();
        assert_eq!(a, b, "same schema seed must give byte-identical CSVs");

        let pool = bartint::integrands::ingest_pool(&p1, &synthetic_schema(10.0)).unwrap();
        assert_eq!(pool.dim(), ENCODED_DIM);
        assert_eq!(pool.len(), 500);
        let mean = pool.population_mean();
        assert!(mean > 0.05 && mean < 0.95, "indicator proportion {mean} uninformative");
        std::fs::remove_file(&p1).ok();
        std::fs::remove_file(&p2).ok();
    }
}
