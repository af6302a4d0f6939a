use std::path::{Path, PathBuf};

use mcsloc_core::dataset::DatasetSpec;
use mcsloc_core::locmap::RadioEnvironment;
use mcsloc_core::mcs::McsTable;
use mcsloc_core::optim::{AdamWConfig, OneCycleConfig, TrainConfig};
use mcsloc_core::phy::SignalConfig;
use mcsloc_core::tcn::NetworkConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Raised for unreadable or invalid configuration.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Which observations populate the map that `locate` searches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fingerprint {
    /// MCS values the network detects on survey transmissions.
    Detected,
    /// Link-adapted MCS values actually used by the survey transmissions.
    True,
}

impl std::fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Fingerprint::Detected => "detected",
            Fingerprint::True => "true",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizationConfig {
    pub rows: usize,
    pub cols: usize,
    pub survey_transmissions_per_tile: usize,
    pub test_positions_per_tile: usize,
    pub detections_per_position: usize,
    pub alpha: f64,
    pub merge_factor: usize,
    pub fingerprint: Fingerprint,
}

impl Default for LocalizationConfig {
    fn default() -> Self {
        Self {
            rows: 6,
            cols: 9,
            survey_transmissions_per_tile: 100,
            test_positions_per_tile: 10,
            detections_per_position: 5,
            alpha: 1.0,
            merge_factor: 2,
            fingerprint: Fingerprint::Detected,
        }
    }
}

/// Workspace-relative locations; absolute paths are used as given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub dataset_dir: PathBuf,
    pub checkpoint: PathBuf,
    /// Optional `index,modulation_order,code_rate` table replacing the
    /// built-in LTE uplink table; resolved against the working directory.
    pub mcs_table: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            dataset_dir: "dataset".into(),
            checkpoint: "model.ckpt".into(),
            mcs_table: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub signal: SignalConfig,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub one_cycle: OneCycleConfig,
    pub adamw: AdamWConfig,
    pub environment: RadioEnvironment,
    pub localization: LocalizationConfig,
    pub paths: PathsConfig,
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| ConfigError(format!("config {}: {e}", path.display())))
    }

    /// One seed drives signal synthesis, training and the environment.
    pub fn set_seed(&mut self, seed: u64) {
        self.signal.seed = seed;
        self.train.seed = seed;
        self.environment.seed = seed;
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let wrap = |what: &str, r: mcsloc_core::Result<()>| {
            r.map_err(|e| ConfigError(format!("{what}: {e}")))
        };
        wrap("dataset", self.dataset.validate())?;
        wrap("signal", self.signal.validate())?;
        wrap("network", self.network.validate())?;
        wrap("train", self.train.validate())?;
        let mut oc = self.one_cycle.clone();
        oc.total_steps = oc.total_steps.max(1);
        wrap("one_cycle", oc.validate())?;
        wrap("adamw", self.adamw.validate())?;
        wrap("environment", self.environment.validate())?;
        if self.network.n_classes != self.dataset.n_classes() {
            return Err(ConfigError(format!(
                "network has {} classes but the dataset has {} MCS values",
                self.network.n_classes,
                self.dataset.n_classes()
            )));
        }
        if self.network.in_channels != 2 {
            return Err(ConfigError("network in_channels must be 2 (I and Q)".into()));
        }
        let l = &self.localization;
        if l.rows == 0 || l.cols == 0 || l.merge_factor == 0 {
            return Err(ConfigError("localization grid and merge factor must be positive".into()));
        }
        if l.survey_transmissions_per_tile == 0
            || l.test_positions_per_tile == 0
            || l.detections_per_position == 0
        {
            return Err(ConfigError("localization transmission counts must be positive".into()));
        }
        if !(l.alpha >= 0.0 && l.alpha.is_finite()) {
            return Err(ConfigError(format!("localization alpha {} must be >= 0", l.alpha)));
        }
        Ok(())
    }

    /// The active MCS table, checked to hold every dataset MCS value.
    pub fn mcs_table(&self) -> mcsloc_core::Result<McsTable> {
        let table = match &self.paths.mcs_table {
            Some(p) => McsTable::from_file(p)?,
            None => McsTable::lte_uplink(),
        };
        for &m in &self.dataset.mcs_values {
            table.lookup(u32::from(m))?;
        }
        Ok(table)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the compact JSON encoding, hex.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn dataset_dir(&self, out: &Path) -> PathBuf {
        out.join(&self.paths.dataset_dir)
    }

    pub fn checkpoint_path(&self, out: &Path) -> PathBuf {
        out.join(&self.paths.checkpoint)
    }
}
