use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::conformal::RapsConfig;
use crate::data::{read_records_path, LoadRecord, SchemaOptions, Stage, Topology};
use crate::error::{Error, Result};
use crate::nn::Registries;
use crate::predictor::{StageSpec, TrainConfig};
use crate::synth::{generate, GeneratorConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Generate(GeneratorConfig),
    Csv { path: PathBuf, topology: Option<Topology> },
}

impl DataSource {
    pub fn load(&self) -> Result<(Vec<LoadRecord>, Topology)> {
        match self {
            DataSource::Generate(g) => Ok((generate(g)?, g.topology()?)),
            DataSource::Csv { path, topology } => {
                let t = topology.clone().unwrap_or_default();
                t.validate()?;
                let records = read_records_path(path)?;
                for r in &records {
                    r.validate(&t)?;
                }
                Ok((records, t))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSpecs {
    pub building_week: StageSpec,
    pub sort_week: StageSpec,
    pub sort_day: StageSpec,
}

impl Default for StageSpecs {
    fn default() -> Self {
        Self {
            building_week: StageSpec::mlp_ql(Stage::BuildingWeek),
            sort_week: StageSpec::mlp_ql(Stage::SortWeek),
            sort_day: StageSpec::mlp_ql(Stage::SortDay),
        }
    }
}

impl StageSpecs {
    pub fn get(&self, stage: Stage) -> &StageSpec {
        match stage {
            Stage::BuildingWeek => &self.building_week,
            Stage::SortWeek => &self.sort_week,
            Stage::SortDay => &self.sort_day,
        }
    }

    pub fn all(&self) -> [&StageSpec; 3] {
        [&self.building_week, &self.sort_week, &self.sort_day]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: DataSource,
    pub horizons: usize,
    pub test_window_days: u32,
    pub stages: StageSpecs,
    pub train: TrainConfig,
    pub raps_building: RapsConfig,
    pub raps_sort: RapsConfig,
    pub noise_std: f64,
    pub output_dir: Option<PathBuf>,
    /// Drives encoder noise and every training run.
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DataSource::Generate(GeneratorConfig::default()),
            horizons: 5,
            test_window_days: 30,
            stages: StageSpecs::default(),
            train: TrainConfig::default(),
            raps_building: RapsConfig::building(),
            raps_sort: RapsConfig::sort(),
            noise_std: SchemaOptions::default().noise_std,
            output_dir: None,
            seed: 0,
        }
    }
}

/// splitmix64 step, used to give every (horizon, stage) its own seed.
pub fn derive_seed(seed: u64, horizon: usize, stage: usize) -> u64 {
    let mut z = seed
        .wrapping_add((horizon as u64) << 8 | stage as u64)
        .wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl ExperimentConfig {
    /// Checks ranges and that every strategy name is in the default registries.
    pub fn validate(&self) -> Result<()> {
        let registries = Registries::default();
        if self.horizons == 0 {
            return Err(Error::Config("horizons must be >= 1".into()));
        }
        if self.test_window_days == 0 {
            return Err(Error::Config("test_window_days must be >= 1".into()));
        }
        for stage in Stage::ALL {
            let spec = self.stages.get(stage);
            if spec.stage != stage {
                return Err(Error::Config(format!("stage spec for {stage} names {}", spec.stage)));
            }
            spec.validate()?;
            if !registries.backbone.contains(&spec.backbone.kind) {
                return Err(Error::UnknownStrategy {
                    kind: "backbone",
                    name: spec.backbone.kind.clone(),
                    registered: registries.backbone.names().join(", "),
                });
            }
            if !registries.numeric.contains(&spec.numeric_embedding.kind) {
                return Err(Error::UnknownStrategy {
                    kind: "numeric embedding",
                    name: spec.numeric_embedding.kind.clone(),
                    registered: registries.numeric.names().join(", "),
                });
            }
        }
        self.train.validate()?;
        self.raps_building.validate()?;
        self.raps_sort.validate()?;
        if let DataSource::Generate(g) = &self.dataset {
            g.validate()?;
        }
        Ok(())
    }

    pub fn raps(&self, stage: Stage) -> RapsConfig {
        if stage.predicts_building() {
            self.raps_building
        } else {
            self.raps_sort
        }
    }

    pub fn schema_options(&self, horizon: usize) -> SchemaOptions {
        SchemaOptions {
            noise_std: self.noise_std,
            seed: derive_seed(self.seed, horizon, 99),
        }
    }

    pub fn train_config(&self, horizon: usize, stage: Stage) -> TrainConfig {
        let index = Stage::ALL.iter().position(|s| *s == stage).expect("known stage");
        TrainConfig {
            seed: derive_seed(self.seed, horizon, index),
            ..self.train.clone()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        assert_eq!(c.raps(Stage::BuildingWeek).alpha, 0.01);
        assert_eq!(c.raps(Stage::SortDay).alpha, 0.05);
        let back = ExperimentConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_json() {
        let c = ExperimentConfig::from_json(r#"{"horizons": 2, "dataset": {"generate": {"n_loads": 100}}}"#).unwrap();
        assert_eq!(c.horizons, 2);
        assert!(matches!(c.dataset, DataSource::Generate(ref g) if g.n_loads == 100));
    }

    #[test]
    fn seeds_differ_per_stage_and_horizon() {
        let mut seen = std::collections::BTreeSet::new();
        for h in 1..=5 {
            for s in 0..3 {
                assert!(seen.insert(derive_seed(7, h, s)));
            }
        }
    }

    #[test]
    fn mismatched_stage_rejected() {
        let mut c = ExperimentConfig::default();
        c.stages.sort_week.stage = Stage::SortDay;
        assert!(c.validate().is_err());
    }
}
