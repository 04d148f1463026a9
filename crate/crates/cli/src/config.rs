//! Run configuration: a JSON file with one section per component, overridden
//! by command-line flags.

use std::path::Path;

use jumpdiff::corpus::CorpusConfig;
use jumpdiff::predictors::TrainConfig;
use jumpdiff::reverse::SamplerConfig;
use jumpdiff::{Error, NoiseSchedule, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub corpus: CorpusConfig,
    pub schedule: NoiseSchedule,
    pub train: TrainConfig,
    pub sampler: SamplerConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::invalid("config", format!("{}: {e}", path.display())))
    }

    /// The one schedule wins over the copies inside the train and sampler sections.
    pub fn sync_schedule(&mut self) {
        self.train.schedule = self.schedule;
        self.sampler.schedule = self.schedule;
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| {
            Error::invalid(
                "seed",
                "a seed is required (--seed or \"seed\" in the config)",
            )
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.corpus.validate()?;
        self.schedule.validate()?;
        self.train.validate()?;
        self.sampler.validate()
    }
}
