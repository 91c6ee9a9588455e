//! Run configuration: one TOML file fully specifies an experiment. A single
//! global seed fans out to per-module seeds by a fixed derivation, and every
//! output file carries a hash of the effective configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::RatingScale;
use crate::error::{Error, Result};
use crate::fitted_q::QTrainConfig;
use crate::pmf::PmfHyperparams;
use crate::reward::RewardConfig;
use crate::transition::TransitionHyper;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    /// `UserID::MovieID::Rating::Timestamp` lines.
    Movielens,
    /// `user,item,value,timestamp` lines.
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: PathBuf,
    #[serde(default = "default_format")]
    pub format: DataFormat,
    #[serde(default = "default_rating_min")]
    pub rating_min: f64,
    #[serde(default = "default_rating_max")]
    pub rating_max: f64,
    /// Keep only this seeded fraction of users (1.0 = everyone).
    #[serde(default = "default_one")]
    pub user_sample_fraction: f64,
}

fn default_format() -> DataFormat {
    DataFormat::Movielens
}
fn default_rating_min() -> f64 {
    1.0
}
fn default_rating_max() -> f64 {
    5.0
}
fn default_one() -> f64 {
    1.0
}

impl DatasetConfig {
    pub fn scale(&self) -> Result<RatingScale> {
        RatingScale::new(self.rating_min, self.rating_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowConfig {
    pub count: usize,
    pub train_fraction: f64,
    /// Fit beliefs and build transitions on cumulative windows instead of
    /// per-interval ones.
    pub stack: bool,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            count: 10,
            train_fraction: 0.8,
            stack: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PmfSettings {
    pub latent_dim: usize,
    pub lambda_u: f64,
    pub lambda_v: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub init_scale: f64,
    pub center: bool,
}

impl Default for PmfSettings {
    fn default() -> Self {
        let base = PmfHyperparams::default();
        Self {
            latent_dim: base.latent_dim,
            lambda_u: base.lambda_u,
            lambda_v: base.lambda_v,
            learning_rate: base.learning_rate,
            epochs: base.epochs,
            init_scale: base.init_scale,
            center: base.center,
        }
    }
}

impl PmfSettings {
    pub fn to_hyper(&self, seed: u64) -> PmfHyperparams {
        PmfHyperparams {
            latent_dim: self.latent_dim,
            lambda_u: self.lambda_u,
            lambda_v: self.lambda_v,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            init_scale: self.init_scale,
            center: self.center,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransitionSettings {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for TransitionSettings {
    fn default() -> Self {
        let base = TransitionHyper::default();
        Self {
            learning_rate: base.learning_rate,
            epochs: base.epochs,
            l2: base.l2,
        }
    }
}

impl TransitionSettings {
    pub fn to_hyper(&self, seed: u64) -> TransitionHyper {
        TransitionHyper {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            l2: self.l2,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QTrainSettings {
    pub gamma: f64,
    pub iterations: usize,
    pub epochs_per_iteration: usize,
    pub learning_rate: f64,
    pub hidden_dim: usize,
    pub successor_samples: usize,
    pub diagnostic_interval: u64,
    /// Cap on triples used per iteration; 0 disables the cap.
    pub max_patterns: usize,
}

impl Default for QTrainSettings {
    fn default() -> Self {
        let base = QTrainConfig::default();
        Self {
            gamma: base.gamma,
            iterations: base.iterations,
            epochs_per_iteration: base.epochs_per_iteration,
            learning_rate: base.learning_rate,
            hidden_dim: base.hidden_dim,
            successor_samples: base.successor_samples,
            diagnostic_interval: base.diagnostic_interval,
            max_patterns: 150_000,
        }
    }
}

impl QTrainSettings {
    pub fn to_config(&self, seed: u64) -> QTrainConfig {
        QTrainConfig {
            gamma: self.gamma,
            iterations: self.iterations,
            epochs_per_iteration: self.epochs_per_iteration,
            learning_rate: self.learning_rate,
            hidden_dim: self.hidden_dim,
            successor_samples: self.successor_samples,
            diagnostic_interval: self.diagnostic_interval,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroundTruth {
    /// Belief-inferred interactions serve as the reward's ground truth.
    Belief,
    /// Logged ratings serve as the reward's ground truth.
    Logged,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardSettings {
    /// Scaling constant; when absent it is derived as 10 / rating range.
    pub c: Option<f64>,
    pub ground_truth: GroundTruth,
}

impl Default for RewardSettings {
    fn default() -> Self {
        Self {
            c: None,
            ground_truth: GroundTruth::Logged,
        }
    }
}

impl RewardSettings {
    pub fn to_config(&self, scale: &RatingScale) -> Result<RewardConfig> {
        match self.c {
            Some(c) => RewardConfig::new(c),
            None => Ok(RewardConfig::for_scale(scale)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicySettings {
    pub n_candidates: usize,
    /// Evaluate the plain factorization baseline only.
    pub baseline_only: bool,
}

impl Default for PolicySettings {
    fn default() -> Self {
        Self {
            n_candidates: 8,
            baseline_only: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSettings {
    pub n_users: u32,
    pub n_items: u32,
    pub k_true: usize,
    pub noise_sd: f64,
    pub drift_rate: f64,
    pub accept_threshold: f64,
    pub epochs: usize,
    pub top_n: usize,
    pub n_seeds: usize,
    pub probe_fraction: f64,
    pub strategies: Vec<String>,
    /// Latent dimension the loop strategies fit with.
    pub strategy_latent_dim: usize,
    pub strategy_epochs: usize,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            n_users: 500,
            n_items: 500,
            k_true: 8,
            noise_sd: 0.5,
            drift_rate: 0.05,
            accept_threshold: 4.0,
            epochs: 20,
            top_n: 10,
            n_seeds: 10,
            probe_fraction: 0.01,
            strategies: vec!["naive-mf".into()],
            strategy_latent_dim: 16,
            strategy_epochs: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

/// Full experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub windows: WindowConfig,
    #[serde(default)]
    pub pmf: PmfSettings,
    #[serde(default)]
    pub transition: TransitionSettings,
    #[serde(default)]
    pub qtrain: QTrainSettings,
    #[serde(default)]
    pub reward: RewardSettings,
    #[serde(default)]
    pub policy: PolicySettings,
    #[serde(default)]
    pub sim: SimSettings,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("bad config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_toml_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.scale()?;
        if !(self.dataset.user_sample_fraction > 0.0 && self.dataset.user_sample_fraction <= 1.0) {
            return Err(Error::Config(
                "user_sample_fraction must be in (0, 1]".into(),
            ));
        }
        if self.windows.count < 2 {
            return Err(Error::Config("windows.count must be >= 2".into()));
        }
        if !(self.windows.train_fraction > 0.0 && self.windows.train_fraction <= 1.0) {
            return Err(Error::Config("train_fraction must be in (0, 1]".into()));
        }
        self.pmf.to_hyper(0).validate()?;
        self.qtrain.to_config(0).validate()?;
        if self.policy.n_candidates == 0 {
            return Err(Error::Config("n_candidates must be >= 1".into()));
        }
        if self.sim.n_seeds == 0 || self.sim.epochs == 0 || self.sim.top_n == 0 {
            return Err(Error::Config("sim settings must be >= 1".into()));
        }
        if !(self.sim.probe_fraction > 0.0 && self.sim.probe_fraction <= 1.0) {
            return Err(Error::Config("probe_fraction must be in (0, 1]".into()));
        }
        Ok(())
    }

    /// Canonical serialized form used for hashing.
    pub fn to_canonical_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// First 16 hex characters of the SHA-256 of the canonical form.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_canonical_toml().as_bytes());
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Derives a module seed from the global seed and a label, so no two modules
/// ever share a random stream.
pub fn derive_seed(global: u64, label: &str) -> u64 {
    // FNV-1a over the label, mixed with the global seed via SplitMix64.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in label.as_bytes() {
        h ^= u64::from(*byte);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = global ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
