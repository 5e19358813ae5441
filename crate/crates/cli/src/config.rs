use std::path::Path;

use fccov_core::datagen::{Model, Scenario, SimulationSpec};
use fccov_core::experiment::{ExperimentSpec, ReportMetric};
use fccov_core::trainer::{DimensionConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::commands::{CliError, EXIT_OK};

/// Sections read by `train`; other sections are ignored, so an experiment
/// spec doubles as a training config.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FileConfig {
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub dimension: DimensionConfig,
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn load_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    path.map_or_else(|| Ok(FileConfig::default()), read_toml)
}

pub fn load_spec(path: &Path) -> Result<ExperimentSpec, CliError> {
    read_toml(path)
}

#[derive(Serialize)]
struct Defaults {
    replicates: usize,
    metrics: Vec<ReportMetric>,
    simulation: SimulationSpec,
    train: TrainConfig,
    dimension: DimensionConfig,
}

const PREAMBLE: &str = "\
# fccov-net configuration defaults.
# `benchmark` reads the whole file; `train` reads [train] and [dimension].
# Instead of [simulation] an experiment may use [data] with keys
# predictors, responses, metric, truth and test_fraction (default 0.2).
# Omitting train.architecture selects the default funnel network.
";

pub fn defaults_toml() -> String {
    let defaults = Defaults {
        replicates: 1,
        metrics: vec![ReportMetric::Dcor],
        simulation: SimulationSpec::new(Model::ModelI, Scenario::A, 1000, 10, 0),
        train: TrainConfig::default(),
        dimension: DimensionConfig::default(),
    };
    format!("{PREAMBLE}\n{}", toml::to_string(&defaults).expect("defaults serialize"))
}

pub fn print_defaults() -> Result<u8, CliError> {
    print!("{}", defaults_toml());
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn printed_defaults_parse_back() {
        let text = defaults_toml();
        let spec: ExperimentSpec = toml::from_str(&text).unwrap();
        assert_eq!(spec.train, TrainConfig::default());
        assert!(spec.validate().is_ok());
        let cfg: FileConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg.dimension, DimensionConfig::default());
    }
}
