//! Fitted feature schema and the per-stage design matrices it produces.

use std::collections::BTreeSet;
use std::path::Path;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::cyclical::TemporalComponent;
use crate::data::quantile::{default_noise_std, QuantileNormalizer};
use crate::data::record::{LoadRecord, Topology, WORKLOAD_FIELDS};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Which of the three prediction tasks a matrix is built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Week-ahead building prediction.
    BuildingWeek,
    /// Week-ahead sort prediction, with a building feature.
    SortWeek,
    /// Day-of-operations sort prediction, adding the arrival time.
    SortDay,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::BuildingWeek, Stage::SortWeek, Stage::SortDay];

    pub fn name(self) -> &'static str {
        match self {
            Stage::BuildingWeek => "building_week",
            Stage::SortWeek => "sort_week",
            Stage::SortDay => "sort_day",
        }
    }

    pub fn has_building_slot(self) -> bool {
        !matches!(self, Stage::BuildingWeek)
    }

    pub fn has_arrival_time(self) -> bool {
        matches!(self, Stage::SortDay)
    }

    pub fn predicts_building(self) -> bool {
        matches!(self, Stage::BuildingWeek)
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericFeature {
    pub name: String,
    pub normalizer: QuantileNormalizer,
}

/// Label encoder. Index `levels.len()` is the reserved unknown bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalFeature {
    pub name: String,
    pub levels: Vec<String>,
}

impl CategoricalFeature {
    pub fn cardinality(&self) -> usize {
        self.levels.len() + 1
    }

    pub fn unknown_index(&self) -> usize {
        self.levels.len()
    }

    pub fn index_of(&self, value: &str) -> usize {
        self.levels
            .binary_search_by(|l| l.as_str().cmp(value))
            .unwrap_or(self.unknown_index())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalFeature {
    pub name: String,
    pub components: Vec<TemporalComponent>,
}

/// Where the building feature of a sort-stage matrix came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuildingSource {
    /// Actual building label (training wiring).
    Truth,
    /// Output of the building model (inference wiring).
    Predicted,
    /// Not filled yet; holds the unknown index.
    Missing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuildingSlot {
    pub column: usize,
    pub source: BuildingSource,
}

/// Numeric + categorical design matrix for one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedMatrix {
    pub stage: Stage,
    pub numeric: Array2<f64>,
    pub categorical: Array2<usize>,
    pub numeric_names: Vec<String>,
    pub categorical_names: Vec<String>,
    pub cardinalities: Vec<usize>,
    pub building_slot: Option<BuildingSlot>,
    /// Actual building index per row, when every row is labeled.
    pub y_building: Option<Vec<usize>>,
    /// Actual sort index per row, when every row is labeled.
    pub y_sort: Option<Vec<usize>>,
}

impl EncodedMatrix {
    pub fn rows(&self) -> usize {
        self.numeric.nrows()
    }

    /// Labels for the stage's own prediction target.
    pub fn targets(&self) -> Result<&[usize]> {
        let y = if self.stage.predicts_building() {
            &self.y_building
        } else {
            &self.y_sort
        };
        y.as_deref()
            .ok_or_else(|| Error::Contract(format!("{} matrix has no labels", self.stage)))
    }

    pub fn select_rows(&self, rows: &[usize]) -> EncodedMatrix {
        let pick = |y: &Option<Vec<usize>>| y.as_ref().map(|v| rows.iter().map(|&r| v[r]).collect());
        EncodedMatrix {
            stage: self.stage,
            numeric: self.numeric.select(Axis(0), rows),
            categorical: self.categorical.select(Axis(0), rows),
            numeric_names: self.numeric_names.clone(),
            categorical_names: self.categorical_names.clone(),
            cardinalities: self.cardinalities.clone(),
            building_slot: self.building_slot,
            y_building: pick(&self.y_building),
            y_sort: pick(&self.y_sort),
        }
    }

    /// Overwrites the building feature column.
    pub fn set_building_feature(&mut self, values: &[usize], source: BuildingSource) -> Result<()> {
        let slot = self
            .building_slot
            .as_mut()
            .ok_or_else(|| Error::Contract(format!("{} matrix has no building slot", self.stage)))?;
        if values.len() != self.categorical.nrows() {
            return Err(Error::shape(
                format!("{} building values", self.categorical.nrows()),
                values.len(),
            ));
        }
        let card = self.cardinalities[slot.column];
        for (row, &v) in values.iter().enumerate() {
            if v >= card {
                return Err(Error::Contract(format!("building index {v} >= {card}")));
            }
            self.categorical[[row, slot.column]] = v;
        }
        slot.source = source;
        Ok(())
    }

    pub fn building_feature(&self) -> Option<Vec<usize>> {
        self.building_slot
            .map(|s| self.categorical.column(s.column).to_vec())
    }

    pub fn check_invariants(&self) -> Result<()> {
        if self.numeric.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("non-finite value in numeric block".into()));
        }
        for (j, &card) in self.cardinalities.iter().enumerate() {
            if self.categorical.column(j).iter().any(|&i| i >= card) {
                return Err(Error::Contract(format!(
                    "categorical column {j} index out of range"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemaOptions {
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SchemaOptions {
    fn default() -> Self {
        Self {
            noise_std: default_noise_std(),
            seed: 0,
        }
    }
}

const CATEGORICAL_FIELDS: [&str; 5] = [
    "org_building",
    "org_sort",
    "pln_dest_cluster",
    "pln_dest_building",
    "pln_dest_sort",
];

const BUILDING_FEATURE: &str = "building";
const ARRIVAL_TIME: &str = "est_arr_time";

fn categorical_value<'a>(r: &'a LoadRecord, field: &str) -> &'a str {
    match field {
        "org_building" => &r.org_building,
        "org_sort" => &r.org_sort,
        "pln_dest_cluster" => &r.pln_dest_cluster,
        "pln_dest_building" => &r.pln_dest_building,
        "pln_dest_sort" => &r.pln_dest_sort,
        _ => unreachable!("not a categorical field: {field}"),
    }
}

/// Encoders fitted on training records only. Immutable after `fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub version: u32,
    pub topology: Topology,
    pub options: SchemaOptions,
    pub numerical: Vec<NumericFeature>,
    pub categorical: Vec<CategoricalFeature>,
    pub temporal: Vec<TemporalFeature>,
    pub arrival_time: Option<NumericFeature>,
}

impl FeatureSchema {
    pub fn fit(records: &[LoadRecord], topology: &Topology, options: SchemaOptions) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Fit {
                what: "feature schema",
                reason: "no training records".into(),
            });
        }
        topology.validate()?;

        let numerical = WORKLOAD_FIELDS
            .iter()
            .enumerate()
            .map(|(j, name)| {
                let values: Vec<f64> = records.iter().map(|r| r.workload()[j]).collect();
                let seed = options.seed.wrapping_add(j as u64);
                Ok(NumericFeature {
                    name: name.to_string(),
                    normalizer: QuantileNormalizer::fit(&values, options.noise_std, seed)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let categorical = CATEGORICAL_FIELDS
            .iter()
            .map(|&field| {
                let levels: BTreeSet<&str> = records.iter().map(|r| categorical_value(r, field)).collect();
                CategoricalFeature {
                    name: field.to_string(),
                    levels: levels.into_iter().map(String::from).collect(),
                }
            })
            .collect();

        let temporal = ["load_creation_date", "est_arr_date"]
            .iter()
            .map(|name| TemporalFeature {
                name: name.to_string(),
                components: TemporalComponent::ALL.to_vec(),
            })
            .collect();

        let times: Vec<f64> = records
            .iter()
            .filter_map(|r| r.est_arr_time.map(f64::from))
            .collect();
        let arrival_time = if times.is_empty() {
            None
        } else {
            Some(NumericFeature {
                name: ARRIVAL_TIME.into(),
                normalizer: QuantileNormalizer::fit(
                    &times,
                    options.noise_std,
                    options.seed.wrapping_add(WORKLOAD_FIELDS.len() as u64),
                )?,
            })
        };

        Ok(Self {
            version: SCHEMA_VERSION,
            topology: topology.clone(),
            options,
            numerical,
            categorical,
            temporal,
            arrival_time,
        })
    }

    pub fn numeric_names(&self, stage: Stage) -> Vec<String> {
        let mut names: Vec<String> = self.numerical.iter().map(|f| f.name.clone()).collect();
        for t in &self.temporal {
            for c in &t.components {
                names.push(format!("{}_{}_sin", t.name, c.name()));
                names.push(format!("{}_{}_cos", t.name, c.name()));
            }
        }
        if stage.has_arrival_time() {
            names.push(ARRIVAL_TIME.into());
        }
        names
    }

    pub fn categorical_names(&self, stage: Stage) -> Vec<String> {
        let mut names: Vec<String> = self.categorical.iter().map(|f| f.name.clone()).collect();
        if stage.has_building_slot() {
            names.push(BUILDING_FEATURE.into());
        }
        names
    }

    pub fn cardinalities(&self, stage: Stage) -> Vec<usize> {
        let mut c: Vec<usize> = self.categorical.iter().map(|f| f.cardinality()).collect();
        if stage.has_building_slot() {
            c.push(self.topology.n_buildings() + 1);
        }
        c
    }

    pub fn n_classes(&self, stage: Stage) -> usize {
        if stage.predicts_building() {
            self.topology.n_buildings()
        } else {
            self.topology.n_sorts()
        }
    }

    /// Encodes records for a stage. On sort stages the building slot holds
    /// the actual building when every record is labeled, otherwise it is
    /// left `Missing` for the cascade to fill.
    pub fn encode(&self, records: &[LoadRecord], stage: Stage) -> Result<EncodedMatrix> {
        let numeric_names = self.numeric_names(stage);
        let categorical_names = self.categorical_names(stage);
        let cardinalities = self.cardinalities(stage);
        let n = records.len();
        let mut numeric = Array2::<f64>::zeros((n, numeric_names.len()));
        let mut categorical = Array2::<usize>::zeros((n, categorical_names.len()));

        let arrival = if stage.has_arrival_time() {
            Some(self.arrival_time.as_ref().ok_or_else(|| {
                Error::Contract("schema was fitted without arrival times".into())
            })?)
        } else {
            None
        };

        let y_building = labels(records, |r| r.actual_building.as_deref(), |b| self.topology.building_index(b))?;
        let y_sort = labels(records, |r| r.actual_sort.as_deref(), |s| self.topology.sort_index(s))?;

        for (i, r) in records.iter().enumerate() {
            let mut row = numeric.row_mut(i);
            let mut col = 0;
            for (f, x) in self.numerical.iter().zip(r.workload()) {
                row[col] = f.normalizer.transform(x);
                col += 1;
            }
            for t in &self.temporal {
                let date = match t.name.as_str() {
                    "load_creation_date" => r.load_creation_date,
                    _ => r.est_arr_date,
                };
                for c in &t.components {
                    let (s, co) = c.encode(date);
                    row[col] = s;
                    row[col + 1] = co;
                    col += 2;
                }
            }
            if let Some(f) = arrival {
                let t = r.est_arr_time.ok_or_else(|| {
                    Error::Contract(format!("load {} has no est_arr_time", r.load_id))
                })?;
                row[col] = f.normalizer.transform(f64::from(t));
            }

            for (j, f) in self.categorical.iter().enumerate() {
                categorical[[i, j]] = f.index_of(categorical_value(r, &f.name));
            }
        }

        let building_slot = if stage.has_building_slot() {
            let column = self.categorical.len();
            let source = match &y_building {
                Some(y) => {
                    for (i, &b) in y.iter().enumerate() {
                        categorical[[i, column]] = b;
                    }
                    BuildingSource::Truth
                }
                None => {
                    categorical.column_mut(column).fill(self.topology.n_buildings());
                    BuildingSource::Missing
                }
            };
            Some(BuildingSlot { column, source })
        } else {
            None
        };

        let m = EncodedMatrix {
            stage,
            numeric,
            categorical,
            numeric_names,
            categorical_names,
            cardinalities,
            building_slot,
            y_building,
            y_sort,
        };
        m.check_invariants()?;
        Ok(m)
    }

    /// Stable digest of the fitted state, used to pair checkpoints with schemas.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("schema serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text)?;
        if s.version != SCHEMA_VERSION {
            return Err(Error::Checkpoint(format!(
                "schema version {} unsupported (expected {SCHEMA_VERSION})",
                s.version
            )));
        }
        Ok(s)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn labels(
    records: &[LoadRecord],
    get: impl Fn(&LoadRecord) -> Option<&str>,
    index: impl Fn(&str) -> Result<usize>,
) -> Result<Option<Vec<usize>>> {
    if records.is_empty() || records.iter().any(|r| get(r).is_none()) {
        return Ok(None);
    }
    records
        .iter()
        .map(|r| index(get(r).expect("checked above")))
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::record::sample_record;

    fn records() -> Vec<LoadRecord> {
        (0..40)
            .map(|i| {
                let mut r = sample_record(i);
                r.pln_volume = 100.0 + i as f64 * 7.0;
                r.org_building = format!("O{}", i % 5);
                r.est_arr_time = Some((i as u32 * 37) % 1440);
                r.actual_building = Some(format!("B{}", 1 + i % 3));
                r
            })
            .collect()
    }

    fn schema() -> FeatureSchema {
        FeatureSchema::fit(&records(), &Topology::default(), SchemaOptions::default()).unwrap()
    }

    #[test]
    fn building_stage_has_no_arrival_time_or_building_slot() {
        let s = schema();
        let m = s.encode(&records(), Stage::BuildingWeek).unwrap();
        assert!(!m.numeric_names.iter().any(|n| n == "est_arr_time"));
        assert!(!m.categorical_names.iter().any(|n| n == "building"));
        assert!(m.building_slot.is_none());
        assert_eq!(m.numeric.ncols(), 9 + 12);
        assert_eq!(m.categorical.ncols(), 5);
    }

    #[test]
    fn day_stage_adds_exactly_one_numeric_column() {
        let s = schema();
        let week = s.encode(&records(), Stage::SortWeek).unwrap();
        let day = s.encode(&records(), Stage::SortDay).unwrap();
        assert_eq!(day.numeric.ncols(), week.numeric.ncols() + 1);
        assert_eq!(day.categorical.ncols(), week.categorical.ncols());
        assert_eq!(week.categorical.ncols(), 6);
        assert_eq!(week.building_slot.unwrap().source, BuildingSource::Truth);
    }

    #[test]
    fn unseen_category_maps_to_unknown() {
        let s = schema();
        let mut r = sample_record(99);
        r.org_building = "never-seen".into();
        let m = s.encode(&[r], Stage::BuildingWeek).unwrap();
        assert_eq!(m.categorical[[0, 0]], 5);
        assert_eq!(m.cardinalities[0], 6);
    }

    #[test]
    fn day_stage_requires_arrival_time() {
        let s = schema();
        let mut r = sample_record(0);
        r.est_arr_time = None;
        assert!(matches!(
            s.encode(&[r.clone()], Stage::SortDay),
            Err(Error::Contract(_))
        ));
        s.encode(&[r], Stage::SortWeek).unwrap();
    }

    #[test]
    fn unlabeled_rows_leave_building_slot_missing() {
        let s = schema();
        let mut r = sample_record(0);
        r.actual_building = None;
        let mut m = s.encode(&[r], Stage::SortWeek).unwrap();
        let slot = m.building_slot.unwrap();
        assert_eq!(slot.source, BuildingSource::Missing);
        assert_eq!(m.categorical[[0, slot.column]], 6);
        m.set_building_feature(&[2], BuildingSource::Predicted).unwrap();
        assert_eq!(m.building_feature().unwrap(), vec![2]);
        assert!(m.set_building_feature(&[9], BuildingSource::Predicted).is_err());
    }

    #[test]
    fn changing_building_touches_one_categorical_slot() {
        let s = schema();
        let recs = records();
        let a = s.encode(&recs[..1], Stage::SortWeek).unwrap();
        let mut b = a.clone();
        b.set_building_feature(&[4], BuildingSource::Predicted).unwrap();
        let diff = a
            .categorical
            .iter()
            .zip(b.categorical.iter())
            .filter(|(x, y)| x != y)
            .count();
        assert_eq!(diff, 1);
        assert_eq!(a.numeric, b.numeric);
    }

    #[test]
    fn schema_fitted_on_train_ignores_test_rows() {
        let recs = records();
        let (train, test) = recs.split_at(30);
        let mut test = test.to_vec();
        for r in &mut test {
            r.pln_volume = 1e6;
            r.org_building = "sentinel".into();
        }
        let train_only = FeatureSchema::fit(train, &Topology::default(), SchemaOptions::default()).unwrap();
        let all: Vec<LoadRecord> = train.iter().chain(test.iter()).cloned().collect();
        let leaky = FeatureSchema::fit(&all, &Topology::default(), SchemaOptions::default()).unwrap();
        assert_ne!(train_only, leaky);
        assert!(!train_only.categorical[0].levels.contains(&"sentinel".to_string()));
        let m = train_only.encode(&test, Stage::BuildingWeek).unwrap();
        assert!(m.categorical.column(0).iter().all(|&i| i == 5));
    }

    #[test]
    fn json_round_trip_preserves_hash() {
        let s = schema();
        let back = FeatureSchema::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.hash(), s.hash());
    }
}
