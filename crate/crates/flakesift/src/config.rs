//! One configuration document for a full experiment run.

use flakesift_core::dtm::MiningParams;
use flakesift_core::model::ModelConfig;
use flakesift_core::trainer::TrainingConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{AppError, AppResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mining: MiningParams,
    pub model: ModelConfig,
    pub training: TrainingConfig,
    pub split_k: usize,
    pub split_seed: u64,
    /// Disable the symbolic channel entirely (ablation).
    pub no_symbolic: bool,
    /// Train without adversarial augmentation.
    pub no_augment: bool,
    /// Keep the nine fixed indicator groups but zero the mined-token slots.
    pub hardcoded_symbols: bool,
    /// Run the stress-perturbation evaluation after clean evaluation.
    pub stress: bool,
}

impl RunConfig {
    /// Desk-scale defaults: the 64-wide from-scratch preset, so 4-fold
    /// experiments stay in CPU-minutes.
    pub fn desk_default(seed: u64) -> Self {
        RunConfig {
            mining: MiningParams::default(),
            model: ModelConfig::test_preset(seed),
            training: TrainingConfig::from_scratch(seed),
            split_k: 4,
            split_seed: seed,
            no_symbolic: false,
            no_augment: false,
            hardcoded_symbols: false,
            stress: true,
        }
    }

    pub fn validate(&self) -> AppResult<()> {
        self.model.validate()?;
        self.training.validate()?;
        if self.split_k < 2 {
            return Err(AppError::user("split_k must be >= 2"));
        }
        if self.no_symbolic && self.hardcoded_symbols {
            return Err(AppError::user(
                "--no-symbolic and --hardcoded-symbols are mutually exclusive",
            ));
        }
        Ok(())
    }

    /// Stable hash of the canonical JSON form, embedded in every output.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
