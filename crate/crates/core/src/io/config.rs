//! Run configuration (JSON): optimizer settings, loss weights, sample counts
//! and an optional scene spec. Unknown keys are rejected.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::OptimizerConfig;
use crate::scene::SceneSpec;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub optimizer: OptimizerConfig,
    pub scene: Option<SceneSpec>,
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::parse("config", e.line(), e.to_string()))?;
    cfg.optimizer.validate()?;
    if let Some(scene) = &cfg.scene {
        scene.validate()?;
    }
    Ok(cfg)
}
