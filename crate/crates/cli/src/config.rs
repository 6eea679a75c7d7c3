//! Run configuration: built-in defaults, overlaid by an optional TOML file,
//! overlaid by command-line flags.

use std::path::{Path, PathBuf};

use dorsiflex::adaptive::{AdaptiveConfig, PlayerModel};
use dorsiflex::corpus::CorpusConfig;
use dorsiflex::models::TrainOptions;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Drives every random choice: corpus generation, training, simulation.
    pub seed: u64,
    pub out: PathBuf,
    /// Dataset manifest. Defaults to `<out>/corpus/manifest.tsv`.
    pub manifest: Option<PathBuf>,
    /// Model file. Defaults to `<out>/model.dfx`.
    pub model: Option<PathBuf>,
    /// Held-out subjects. Empty means the last `corpus.test_subjects`
    /// subjects of the dataset in sorted order.
    pub test_subjects: Vec<String>,
    pub corpus: CorpusConfig,
    pub train: TrainOptions,
    pub adaptive: AdaptiveConfig,
    pub simulate: SimulateConfig,
    pub detect: DetectConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            out: PathBuf::from("out"),
            manifest: None,
            model: None,
            test_subjects: Vec::new(),
            corpus: CorpusConfig::default(),
            train: TrainOptions::default(),
            adaptive: AdaptiveConfig::default(),
            simulate: SimulateConfig::default(),
            detect: DetectConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub prompts: usize,
    pub rom_capability: f64,
    pub speed_capability: f64,
    pub noise_std: f64,
    pub compliance: f64,
    /// Starting thresholds when no state file is given.
    pub rom_threshold: f64,
    pub speed_threshold: f64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            prompts: 200,
            rom_capability: 2.0,
            speed_capability: 3.0,
            noise_std: 0.2,
            compliance: 0.9,
            rom_threshold: 1.0,
            speed_threshold: 1.0,
        }
    }
}

impl SimulateConfig {
    pub fn player(&self, seed: u64) -> PlayerModel {
        PlayerModel {
            rom_capability: self.rom_capability,
            speed_capability: self.speed_capability,
            noise_std: self.noise_std,
            compliance: self.compliance,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectConfig {
    pub window_s: f64,
    pub cadence_s: f64,
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig {
            window_s: 2.0,
            cadence_s: 1.0,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.message().to_string())
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_toml(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// Copies the top-level seed into every section that carries one.
    pub fn propagate_seed(&mut self) {
        self.corpus.seed = self.seed;
        self.train.seed = self.seed;
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.manifest
            .clone()
            .unwrap_or_else(|| self.out.join("corpus").join(dorsiflex::corpus::MANIFEST_FILE))
    }

    pub fn model_path(&self) -> PathBuf {
        self.model.clone().unwrap_or_else(|| self.out.join("model.dfx"))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration serializes")
    }
}
