use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{BuildingSource, EncodedMatrix, FeatureSchema, LoadRecord, Stage};
use crate::error::{Error, Result};
use crate::nn::loss::argmax;
use crate::nn::{Checkpoint, Network, Registries};
use crate::predictor::train::StageSpec;

pub const MANIFEST_VERSION: u32 = 1;
const MANIFEST_FILE: &str = "cascade.json";
const SCHEMA_FILE: &str = "schema.json";

/// Argmax labels and the probability matrix they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct StagePrediction {
    pub labels: Vec<usize>,
    pub proba: Array2<f64>,
}

impl StagePrediction {
    pub fn from_proba(proba: Array2<f64>) -> Self {
        let labels = proba.rows().into_iter().map(argmax).collect();
        Self { labels, proba }
    }
}

pub fn predict(network: &Network, m: &EncodedMatrix) -> Result<StagePrediction> {
    Ok(StagePrediction::from_proba(network.predict_proba(m)?))
}

/// Outputs of a full cascade pass, with the building values each sort model
/// actually consumed.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadePrediction {
    pub building: StagePrediction,
    pub sort_week: StagePrediction,
    pub sort_day: Option<StagePrediction>,
    pub week_building_input: Vec<usize>,
    pub day_building_input: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEntry {
    pub spec: StageSpec,
    pub checkpoint: String,
}

/// Where each sort model's building slot is filled from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Wiring {
    pub training: BuildingSource,
    pub inference: BuildingSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WiringManifest {
    pub version: u32,
    pub schema: String,
    pub schema_hash: String,
    pub stages: Vec<StageEntry>,
    pub building_feature: Wiring,
}

/// The three stage models sharing one fitted schema.
pub struct Cascade {
    pub schema: FeatureSchema,
    pub building: Network,
    pub sort_week: Network,
    pub sort_day: Network,
    pub specs: [StageSpec; 3],
}

impl Cascade {
    pub fn network(&self, stage: Stage) -> &Network {
        match stage {
            Stage::BuildingWeek => &self.building,
            Stage::SortWeek => &self.sort_week,
            Stage::SortDay => &self.sort_day,
        }
    }

    fn check(&self, m: &EncodedMatrix, stage: Stage) -> Result<()> {
        if m.stage != stage {
            return Err(Error::Contract(format!("expected a {stage} matrix, got {}", m.stage)));
        }
        let spec = self.network(stage).spec();
        if m.numeric.ncols() != spec.n_numeric || m.cardinalities != spec.cardinalities {
            return Err(Error::Contract(format!("{stage} matrix does not match the trained schema")));
        }
        Ok(())
    }

    pub fn predict_building(&self, m: &EncodedMatrix) -> Result<StagePrediction> {
        self.check(m, Stage::BuildingWeek)?;
        predict(&self.building, m)
    }

    /// Fills the building slot from `source` and runs a sort model.
    /// `Predicted` needs the building model's labels for the same rows.
    pub fn predict_sort(
        &self,
        m: &mut EncodedMatrix,
        source: BuildingSource,
        predicted_building: Option<&[usize]>,
    ) -> Result<StagePrediction> {
        if m.stage == Stage::BuildingWeek {
            return Err(Error::Contract("sort prediction needs a sort-stage matrix".into()));
        }
        self.check(m, m.stage)?;
        match source {
            BuildingSource::Truth => {
                let y = m
                    .y_building
                    .clone()
                    .ok_or_else(|| Error::Contract("missing building feature: rows are unlabeled".into()))?;
                m.set_building_feature(&y, BuildingSource::Truth)?;
            }
            BuildingSource::Predicted => {
                let p = predicted_building
                    .ok_or_else(|| Error::Contract("missing building feature: no building prediction".into()))?;
                m.set_building_feature(p, BuildingSource::Predicted)?;
            }
            BuildingSource::Missing => {
                return Err(Error::Contract("missing building feature".into()));
            }
        }
        predict(self.network(m.stage), m)
    }

    /// Building model, then both sort models fed its predictions. The day
    /// stage runs only when every record carries an arrival time.
    pub fn predict_records(&self, records: &[LoadRecord]) -> Result<CascadePrediction> {
        let building = self.predict_building(&self.schema.encode(records, Stage::BuildingWeek)?)?;
        let mut week = self.schema.encode(records, Stage::SortWeek)?;
        let sort_week = self.predict_sort(&mut week, BuildingSource::Predicted, Some(&building.labels))?;
        let (sort_day, day_input) = if records.iter().all(|r| r.est_arr_time.is_some()) {
            let mut day = self.schema.encode(records, Stage::SortDay)?;
            let p = self.predict_sort(&mut day, BuildingSource::Predicted, Some(&building.labels))?;
            (Some(p), day.building_feature())
        } else {
            (None, None)
        };
        Ok(CascadePrediction {
            week_building_input: week.building_feature().expect("sort stage has a slot"),
            building,
            sort_week,
            sort_day,
            day_building_input: day_input,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<WiringManifest> {
        std::fs::create_dir_all(dir)?;
        self.schema.save(dir.join(SCHEMA_FILE))?;
        let hash = self.schema.hash();
        let mut stages = Vec::new();
        for spec in &self.specs {
            let file = format!("{}.json", spec.stage.name());
            Checkpoint::capture(self.network(spec.stage), &hash).save(&dir.join(&file))?;
            stages.push(StageEntry {
                spec: spec.clone(),
                checkpoint: file,
            });
        }
        let manifest = WiringManifest {
            version: MANIFEST_VERSION,
            schema: SCHEMA_FILE.into(),
            schema_hash: hash,
            stages,
            building_feature: Wiring {
                training: BuildingSource::Truth,
                inference: BuildingSource::Predicted,
            },
        };
        std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
        Ok(manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Self::load_with(dir, &Registries::default())
    }

    pub fn load_with(dir: &Path, registries: &Registries) -> Result<Self> {
        let manifest: WiringManifest =
            serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
        if manifest.version != MANIFEST_VERSION {
            return Err(Error::Checkpoint(format!("unsupported manifest version {}", manifest.version)));
        }
        let schema = FeatureSchema::load(dir.join(&manifest.schema))?;
        if schema.hash() != manifest.schema_hash {
            return Err(Error::Checkpoint("schema file does not match manifest hash".into()));
        }
        let find = |stage: Stage| -> Result<(StageSpec, Network)> {
            let entry = manifest
                .stages
                .iter()
                .find(|e| e.spec.stage == stage)
                .ok_or_else(|| Error::Checkpoint(format!("manifest has no {stage} stage")))?;
            let ck = Checkpoint::load(&dir.join(&entry.checkpoint))?;
            ck.verify_schema(&manifest.schema_hash)?;
            Ok((entry.spec.clone(), ck.restore(registries)?))
        };
        let (b_spec, building) = find(Stage::BuildingWeek)?;
        let (w_spec, sort_week) = find(Stage::SortWeek)?;
        let (d_spec, sort_day) = find(Stage::SortDay)?;
        Ok(Self {
            schema,
            building,
            sort_week,
            sort_day,
            specs: [b_spec, w_spec, d_spec],
        })
    }
}
