//! Experiment configuration: one structured TOML file per experiment with
//! every default baked in; CLI flags override file values and the
//! `--paper-scale` flag applies the `[paper_scale]` overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use bartint::gpbq::GpConfig;
use bartint::integrands::GenzFamily;
use bartint::prior::BartPriorConfig;
use bartint::sampler::ChainConfig;

use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Genz,
    Step,
    Portfolio,
    Survey,
    Runtime,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Genz => "genz",
            ExperimentKind::Step => "step",
            ExperimentKind::Portfolio => "portfolio",
            ExperimentKind::Survey => "survey",
            ExperimentKind::Runtime => "runtime",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    BartInt,
    GpBq,
    Mc,
}

impl MethodKind {
    pub fn name(&self) -> &'static str {
        match self {
            MethodKind::BartInt => "bart_int",
            MethodKind::GpBq => "gp_bq",
            MethodKind::Mc => "mc",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointsSection {
    pub n_ini: usize,
    pub n_seq: usize,
}

impl Default for PointsSection {
    fn default() -> Self {
        Self { n_ini: 20, n_seq: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RepetitionsSection {
    pub count: usize,
    pub seed_base: u64,
    /// Explicit per-repetition seeds; must cover `count` when given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    /// Concurrent repetition workers; 0 means available parallelism.
    pub workers: usize,
}

impl Default for RepetitionsSection {
    fn default() -> Self {
        Self { count: 20, seed_base: 0, seeds: None, workers: 0 }
    }
}

impl RepetitionsSection {
    pub fn seed_for(&self, rep: usize) -> u64 {
        match &self.seeds {
            Some(list) => list[rep],
            None => bartint::seeds::derive(self.seed_base, "repetition", rep as u64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenzSection {
    pub dimension: usize,
    pub families: Vec<GenzFamily>,
    /// Optional override of the per-family default scaling.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_override: Option<Vec<f64>>,
}

impl Default for GenzSection {
    fn default() -> Self {
        Self { dimension: 1, families: GenzFamily::ALL.to_vec(), a_override: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMeasure {
    Uniform,
    TruncatedGaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepSection {
    pub dimension: usize,
    pub measure: StepMeasure,
}

impl Default for StepSection {
    fn default() -> Self {
        Self { dimension: 1, measure: StepMeasure::Uniform }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PortfolioSection {
    pub dimension: usize,
    /// Total design points (no sequential design for this experiment).
    pub n: usize,
}

impl Default for PortfolioSection {
    fn default() -> Self {
        Self { dimension: 5, n: 2500 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurveySection {
    /// Existing pool CSV; empty synthesizes one next to the results.
    pub pool_csv: String,
    pub pool_rows: usize,
    pub schema_seed: u64,
    pub response_column: String,
    pub categorical: Vec<String>,
    pub ordinal: Vec<String>,
    pub threshold: f64,
    /// Size of the fixed candidate set shared by all repetitions.
    pub candidate_set: usize,
}

impl Default for SurveySection {
    fn default() -> Self {
        Self {
            pool_csv: String::new(),
            pool_rows: 1500,
            schema_seed: 7,
            response_column: "income".to_string(),
            categorical: crate::synth::CATEGORICAL_COLUMNS.iter().map(|s| s.to_string()).collect(),
            ordinal: vec!["education".to_string()],
            threshold: 10.0,
            candidate_set: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuntimeSection {
    pub grid: Vec<usize>,
    pub dimension: usize,
}

impl Default for RuntimeSection {
    fn default() -> Self {
        Self { grid: vec![100, 500, 1000], dimension: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignSection {
    /// Candidate-set size per iteration in analytic mode.
    pub candidates: usize,
    pub observation_noise_sd: f64,
    /// Refit GP hyperparameters every iteration instead of rank-1 updates.
    pub gp_refit_hyperparams: bool,
}

impl Default for DesignSection {
    fn default() -> Self {
        Self { candidates: 100, observation_noise_sd: 0.0, gp_refit_hyperparams: true }
    }
}

/// Scale-sensitive knobs restored to the published settings by
/// `--paper-scale`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScaleOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_ini: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_seq: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repetitions: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_keep: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thin: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel_mean_samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub candidates: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub portfolio_n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pool_rows: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub candidate_set: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub output_dir: String,
    pub methods: Vec<MethodKind>,
    /// Dump the first repetition's final posterior trace (kept ensembles
    /// and noise path) as JSON next to the results.
    pub dump_trace: bool,
    pub points: PointsSection,
    pub repetitions: RepetitionsSection,
    pub genz: GenzSection,
    pub step: StepSection,
    pub portfolio: PortfolioSection,
    pub survey: SurveySection,
    pub runtime: RuntimeSection,
    pub prior: BartPriorConfig,
    pub chain: ChainConfig,
    pub gp: GpConfig,
    pub design: DesignSection,
    pub paper_scale: ScaleOverrides,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::Step,
            output_dir: "runs/default".to_string(),
            methods: vec![MethodKind::BartInt, MethodKind::Mc, MethodKind::GpBq],
            dump_trace: false,
            points: PointsSection::default(),
            repetitions: RepetitionsSection::default(),
            genz: GenzSection::default(),
            step: StepSection::default(),
            portfolio: PortfolioSection::default(),
            survey: SurveySection::default(),
            runtime: RuntimeSection::default(),
            prior: BartPriorConfig::default(),
            chain: ChainConfig::default(),
            gp: GpConfig::default(),
            design: DesignSection::default(),
            paper_scale: ScaleOverrides::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.methods.is_empty() {
            return Err(HarnessError::Config("at least one method is required".into()));
        }
        if self.repetitions.count == 0 {
            return Err(HarnessError::Config("repetitions.count must be >= 1".into()));
        }
        if let Some(seeds) = &self.repetitions.seeds {
            if seeds.len() < self.repetitions.count {
                return Err(HarnessError::Config(format!(
                    "seed list has {} entries but {} repetitions requested",
                    seeds.len(),
                    self.repetitions.count
                )));
            }
        }
        match self.kind {
            ExperimentKind::Genz => {
                if self.genz.dimension == 0 || self.genz.families.is_empty() {
                    return Err(HarnessError::Config("genz needs a dimension and families".into()));
                }
                if let Some(a) = &self.genz.a_override {
                    if a.len() != self.genz.dimension {
                        return Err(HarnessError::Config(
                            "genz.a_override length must equal the dimension".into(),
                        ));
                    }
                }
            }
            ExperimentKind::Step => {
                if self.step.dimension == 0 {
                    return Err(HarnessError::Config("step.dimension must be >= 1".into()));
                }
            }
            ExperimentKind::Portfolio => {
                if self.portfolio.n < 2 {
                    return Err(HarnessError::Config("portfolio.n must be >= 2".into()));
                }
            }
            ExperimentKind::Survey => {
                if self.survey.pool_rows < self.points.n_ini + self.points.n_seq {
                    return Err(HarnessError::Config(
                        "survey pool must cover n_ini + n_seq".into(),
                    ));
                }
                if self.survey.candidate_set < self.points.n_seq {
                    return Err(HarnessError::Config(
                        "survey candidate_set must cover n_seq selections".into(),
                    ));
                }
            }
            ExperimentKind::Runtime => {
                if self.runtime.grid.is_empty() {
                    return Err(HarnessError::Config("runtime.grid must be nonempty".into()));
                }
            }
        }
        self.prior
            .validate()
            .and_then(|_| self.chain.validate())
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        if self.points.n_seq > 0 && self.design.candidates == 0 {
            return Err(HarnessError::Config("design.candidates must be >= 1".into()));
        }
        Ok(())
    }

    /// Applies the `[paper_scale]` overrides in place.
    pub fn apply_paper_scale(&mut self) {
        let p = self.paper_scale.clone();
        if let Some(v) = p.n_ini {
            self.points.n_ini = v;
        }
        if let Some(v) = p.n_seq {
            self.points.n_seq = v;
        }
        if let Some(v) = p.repetitions {
            self.repetitions.count = v;
        }
        if let Some(v) = p.burn_in {
            self.chain.burn_in = v;
        }
        if let Some(v) = p.n_keep {
            self.chain.n_keep = v;
        }
        if let Some(v) = p.thin {
            self.chain.thin = v;
        }
        if let Some(v) = p.kernel_mean_samples {
            self.gp.kernel_mean_samples = v;
        }
        if let Some(v) = p.candidates {
            self.design.candidates = v;
        }
        if let Some(v) = p.portfolio_n {
            self.portfolio.n = v;
        }
        if let Some(v) = p.pool_rows {
            self.survey.pool_rows = v;
        }
        if let Some(v) = p.candidate_set {
            self.survey.candidate_set = v;
        }
    }

    /// Stable hex digest of the resolved configuration (FNV-1a over the
    /// canonical JSON serialization).
    pub fn hash(&self) -> String {
        let canon = serde_json::to_string(self).expect("config serializes");
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in canon.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100_0000_01b3);
        }
        format!("{h:016x}")
    }

    /// Run-metadata notes recorded with every result.
    pub fn metadata(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert(
            "proposal_node_selection".to_string(),
            "uniform over eligible nodes".to_string(),
        );
        m.insert("gp_prior_mean".to_string(), format!("{}", self.gp.prior_mean));
        m.insert("move_probs".to_string(), format!("{:?}", self.chain.move_probs));
        m
    }

    /// Resolves the output directory against `BARTINT_OUT_ROOT` when set.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os("BARTINT_OUT_ROOT") {
            Some(root) => PathBuf::from(root).join(&self.output_dir),
            None => PathBuf::from(&self.output_dir),
        }
    }
}
