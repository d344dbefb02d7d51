use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::msgan::{DiscriminatorConfig, GeneratorConfig, TrainConfig};
use crate::stainsep::{MacenkoParams, VahadaneParams};
use crate::tiling::TileSpec;

/// Settings read from `--config`. Every section is optional and unknown keys
/// are rejected.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub quiet: Option<bool>,
    pub tiles: TileSpec,
    pub macenko: MacenkoParams,
    pub vahadane: VahadaneParams,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    /// Training settings. When resuming without this section the
    /// checkpoint's settings are used.
    pub train: Option<TrainConfig>,
    pub baseline: Option<String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::new("InvalidConfig", format!("{}: {e}", path.display())))
    }
}
