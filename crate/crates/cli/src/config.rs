use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use targetkit_core::cate::CateMethod;
use targetkit_core::counterfactual::{ValueEstimator, DEFAULT_RANDOM_REPS};
use targetkit_core::mht::DEFAULT_BOOTSTRAP_REPS;
use targetkit_core::nuisance::{DEFAULT_CLIP, DEFAULT_FOLDS};
use targetkit_core::policy::Predicate;
use targetkit_core::sim::DgpSpec;
use targetkit_core::{Capacities, Error, LearnerSpec, Result};

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum,
)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Md,
}

fn default_formats() -> Vec<Format> {
    vec![Format::Json, Format::Md]
}

fn default_level() -> f64 {
    0.95
}

fn default_folds() -> usize {
    DEFAULT_FOLDS
}

fn default_clip() -> f64 {
    DEFAULT_CLIP
}

fn default_true() -> bool {
    true
}

/// Everything a run needs. Command-line flags override the matching fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default)]
    pub schema: Option<PathBuf>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
    /// Program arms to analyze; all programs when empty.
    #[serde(default)]
    pub treat: Vec<String>,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_clip")]
    pub clip: f64,
    #[serde(default = "LearnerSpec::linear")]
    pub outcome_learner: LearnerSpec,
    #[serde(default = "LearnerSpec::logit")]
    pub propensity_learner: LearnerSpec,
    /// Whether `ate` also reports covariate-adjusted AIPW effects.
    #[serde(default = "default_true")]
    pub adjusted: bool,
    #[serde(default)]
    pub cate: CateConfig,
    #[serde(default)]
    pub mht: MhtConfig,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CateConfig {
    #[serde(default)]
    pub method: CateMethod,
    /// When set, the outcome learner is chosen among these by out-of-fold
    /// error instead of using `outcome_learner`.
    #[serde(default)]
    pub candidates: Vec<LearnerSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypothesisConfig {
    pub label: String,
    /// Rows satisfying every predicate form the subgroup.
    #[serde(default, rename = "where")]
    pub filter: Vec<Predicate>,
    /// When set, the hypothesis is the difference between the `where`
    /// subgroup and this one.
    #[serde(default)]
    pub versus: Option<Vec<Predicate>>,
}

fn default_reps() -> usize {
    DEFAULT_BOOTSTRAP_REPS
}

fn default_alpha() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MhtConfig {
    #[serde(default)]
    pub hypotheses: Vec<HypothesisConfig>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

impl Default for MhtConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

fn default_depth() -> usize {
    2
}

fn default_random_reps() -> usize {
    DEFAULT_RANDOM_REPS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default)]
    pub approximate: bool,
    #[serde(default)]
    pub capacities: Option<Capacities>,
    #[serde(default)]
    pub status_quo: Option<Capacities>,
    #[serde(default = "default_random_reps")]
    pub random_reps: usize,
    #[serde(default)]
    pub estimator: ValueEstimator,
    /// Effect predictions written by `cate`; `assign` fits them when absent.
    #[serde(default)]
    pub cates: Option<PathBuf>,
    /// Policy JSON (rule, tree or plan) for `evaluate`.
    #[serde(default)]
    pub policy_file: Option<PathBuf>,
    /// Outcome learners compared by `compare`; defaults to linear, forest
    /// and boosted stumps.
    #[serde(default)]
    pub outcome_candidates: Vec<LearnerSpec>,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub spec: Option<DgpSpec>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.formats.is_empty() {
            return Err(Error::Config("formats must not be empty".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config(format!(
                "level must be in (0, 1), got {}",
                self.level
            )));
        }
        if self.folds < 2 {
            return Err(Error::Config("folds must be >= 2".into()));
        }
        if !(0.0..0.5).contains(&self.clip) {
            return Err(Error::Config("clip must be in [0, 0.5)".into()));
        }
        self.outcome_learner.validate()?;
        self.propensity_learner.validate()?;
        for s in self
            .cate
            .candidates
            .iter()
            .chain(&self.policy.outcome_candidates)
        {
            s.validate()?;
        }
        if !(self.mht.alpha > 0.0 && self.mht.alpha < 1.0) {
            return Err(Error::Config("mht.alpha must be in (0, 1)".into()));
        }
        if self.policy.random_reps == 0 {
            return Err(Error::Config("policy.random_reps must be >= 1".into()));
        }
        if self.policy.depth == 0 {
            return Err(Error::Config("policy.depth must be >= 1".into()));
        }
        if let Some(spec) = &self.simulate.spec {
            spec.validate()?;
        }
        Ok(())
    }

    /// Canonical JSON of the effective configuration; hashed into reports.
    /// Serialized effective config, without the output directory, which
    /// does not affect results.
    pub fn canonical_json(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        serde_json::to_string(&c).expect("config serializes")
    }
}
