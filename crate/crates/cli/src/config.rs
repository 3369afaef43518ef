//! Run configuration: a single TOML file with every pipeline knob, loaded
//! into defaults and overridable by flags. Unknown keys are rejected.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use cardrec::corpus::LatencyUnit;
use cardrec::datagen::GenParams;
use cardrec::dml::{DmlConfig, LossKind};
use cardrec::encoder::EncoderConfig;
use cardrec::incremental::IncrementalConfig;
use cardrec::workload::WorkloadParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; every stage derives its own stream from it.
    pub seed: u64,
    /// Worker threads for dataset-level fan-out; 0 means available cores.
    pub jobs: usize,
    pub latency_unit: UnitConfig,
    pub gen: GenConfig,
    pub workload: WorkloadConfig,
    pub encoder: EncoderSection,
    pub dml: DmlSection,
    pub incremental: IncrementalSection,
    pub evaluate: EvaluateSection,
    /// Dataset regimes mixed into the corpus, in order.
    pub regimes: Vec<RegimeConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            jobs: 0,
            latency_unit: UnitConfig::Cost,
            gen: GenConfig::default(),
            workload: WorkloadConfig::default(),
            encoder: EncoderSection::default(),
            dml: DmlSection::default(),
            incremental: IncrementalSection::default(),
            evaluate: EvaluateSection::default(),
            regimes: default_regimes(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitConfig {
    Cost,
    Ms,
}

impl From<UnitConfig> for LatencyUnit {
    fn from(u: UnitConfig) -> Self {
        match u {
            UnitConfig::Cost => LatencyUnit::Cost,
            UnitConfig::Ms => LatencyUnit::Ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    pub train_count: usize,
    pub test_count: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            train_count: 200,
            test_count: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkloadConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub pred_prob: f64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            n_train: 300,
            n_test: 100,
            pred_prob: 0.6,
        }
    }
}

impl From<&WorkloadConfig> for WorkloadParams {
    fn from(c: &WorkloadConfig) -> Self {
        WorkloadParams {
            n_train: c.n_train,
            n_test: c.n_test,
            pred_prob: c.pred_prob,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderSection {
    pub n_layers: usize,
    pub hidden: usize,
    pub embed_dim: usize,
}

impl Default for EncoderSection {
    fn default() -> Self {
        EncoderSection {
            n_layers: 3,
            hidden: 64,
            embed_dim: 32,
        }
    }
}

impl EncoderSection {
    pub fn to_config(&self, seed: u64) -> EncoderConfig {
        EncoderConfig {
            n_layers: self.n_layers,
            hidden: self.hidden,
            embed_dim: self.embed_dim,
            init_seed: seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DmlSection {
    pub tau: f64,
    pub margin: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub clip_norm: f64,
    pub loss: LossConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossConfig {
    Weighted,
    Basic,
}

impl Default for DmlSection {
    fn default() -> Self {
        DmlSection {
            tau: 0.95,
            margin: 1.0,
            batch_size: 32,
            epochs: 100,
            lr: 1e-3,
            clip_norm: 5.0,
            loss: LossConfig::Weighted,
        }
    }
}

impl DmlSection {
    pub fn to_config(&self, w_a: f64, seed: u64) -> DmlConfig {
        DmlConfig {
            tau: self.tau,
            margin: self.margin,
            batch_size: self.batch_size,
            epochs: self.epochs,
            lr: self.lr,
            w_a,
            seed,
            loss_kind: match self.loss {
                LossConfig::Weighted => LossKind::Weighted,
                LossConfig::Basic => LossKind::Basic,
            },
            clip_norm: self.clip_norm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IncrementalSection {
    pub folds: usize,
    pub derr_threshold: f64,
    pub alpha: f64,
    pub beta: f64,
    pub extra_epochs: usize,
    pub k: usize,
}

impl Default for IncrementalSection {
    fn default() -> Self {
        IncrementalSection {
            folds: 5,
            derr_threshold: 0.1,
            alpha: 1.0,
            beta: 1.0,
            extra_epochs: 20,
            k: 2,
        }
    }
}

impl IncrementalSection {
    pub fn to_config(&self, seed: u64) -> IncrementalConfig {
        IncrementalConfig {
            folds: self.folds,
            derr_threshold: self.derr_threshold,
            alpha: self.alpha,
            beta: self.beta,
            extra_epochs: self.extra_epochs,
            k: self.k,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateSection {
    /// Accuracy weights to evaluate (and to train encoders for).
    pub wa_grid: Vec<f64>,
    /// Neighbors for the advisor and the raw-feature KNN baseline.
    pub k: usize,
    pub sampling_rate: f64,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        EvaluateSection {
            wa_grid: vec![1.0, 0.9, 0.7, 0.5],
            k: 2,
            sampling_rate: 0.1,
        }
    }
}

/// One corpus regime: a named block of generation parameter ranges plus its
/// share of the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeConfig {
    pub name: String,
    /// Relative share of the corpus (normalized over all regimes).
    #[serde(default = "one")]
    pub weight: f64,
    pub n_tables: (usize, usize),
    pub rows: (usize, usize),
    pub cols: (usize, usize),
    pub domain: (u64, u64),
    pub skew: (f64, f64),
    pub corr: (f64, f64),
    pub join_corr: (f64, f64),
    #[serde(default = "one_usize")]
    pub n_main_tables: usize,
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

impl RegimeConfig {
    /// Parameters for the `index`-th dataset of this regime. Table count and
    /// domain size are drawn per dataset from the configured ranges.
    pub fn gen_params(&self, seed: u64, index: u64) -> GenParams {
        use rand::Rng;
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(
            seed ^ index.wrapping_mul(0x9e3779b97f4a7c15),
        );
        let n_tables = rng.gen_range(self.n_tables.0..=self.n_tables.1);
        GenParams {
            n_tables,
            rows_range: self.rows,
            cols_range: self.cols,
            domain_size: rng.gen_range(self.domain.0..=self.domain.1),
            skew_range: self.skew,
            corr_range: self.corr,
            join_corr_range: self.join_corr,
            n_main_tables: self.n_main_tables.min(n_tables),
            seed,
        }
    }
}

/// Three regimes with genuinely different best estimators at high accuracy
/// weights: independent uniform data is a histogram/chain toss-up with tiny
/// margins, heavily correlated wide tables favor exact sampling, and skewed
/// small multi-table data favors the chain model; low accuracy weights hand
/// the win to the fastest member. Row and domain ranges overlap across
/// regimes so raw feature distances carry nuisance variation.
pub fn default_regimes() -> Vec<RegimeConfig> {
    vec![
        RegimeConfig {
            name: "uniform-independent".into(),
            weight: 1.0,
            n_tables: (1, 2),
            rows: (800, 2400),
            cols: (3, 4),
            domain: (1000, 4000),
            skew: (0.0, 0.1),
            corr: (0.0, 0.05),
            join_corr: (0.3, 1.0),
            n_main_tables: 1,
        },
        RegimeConfig {
            name: "correlated".into(),
            weight: 1.0,
            n_tables: (1, 2),
            rows: (800, 2400),
            cols: (3, 4),
            domain: (400, 1200),
            skew: (0.0, 0.3),
            corr: (0.85, 0.98),
            join_corr: (0.3, 1.0),
            n_main_tables: 1,
        },
        RegimeConfig {
            name: "skewed-joins".into(),
            weight: 1.0,
            n_tables: (2, 4),
            rows: (300, 900),
            cols: (3, 4),
            domain: (1200, 3000),
            skew: (0.7, 0.95),
            corr: (0.3, 0.7),
            join_corr: (0.1, 0.6),
            n_main_tables: 2,
        },
    ]
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self).context("serializing config")?;
        fs::write(path, text).with_context(|| format!("writing config {}", path.display()))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_roundtrips_through_toml() {
        let cfg = RunConfig::default();
        let text = toml::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<RunConfig>("definitely_not_a_key = 1");
        assert!(err.is_err());
        let err = toml::from_str::<RunConfig>("[gen]\nbogus = 2");
        assert!(err.is_err());
    }

    #[test]
    fn regime_params_are_deterministic() {
        let r = &default_regimes()[2];
        let a = r.gen_params(7, 3);
        let b = r.gen_params(7, 3);
        assert_eq!(a, b);
        assert!(a.n_tables >= 2 && a.n_tables <= 4);
    }
}
