use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::conformal::{calibrate, conditional, overall, RapsCalibration, SetStats};
use crate::data::{
    record_shift_class, split::gather, temporal_split, FeatureSchema, LoadRecord, ShiftClass, Stage, Topology,
};
use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::predictor::{train_stage, Cascade, CascadePrediction};

/// Column of the accuracy and conformal tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    All,
    NoShift,
    InternalShift,
    ExternalShift,
}

impl Group {
    pub const ALL: [Group; 4] = [Group::All, Group::NoShift, Group::InternalShift, Group::ExternalShift];

    pub fn label(self) -> &'static str {
        match self {
            Group::All => "all",
            Group::NoShift => "no_shift",
            Group::InternalShift => "internal_shift",
            Group::ExternalShift => "external_shift",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Group::ALL
            .into_iter()
            .find(|g| g.label() == s)
            .ok_or_else(|| Error::Config(format!("unknown group {s:?}")))
    }
}

impl From<ShiftClass> for Group {
    fn from(c: ShiftClass) -> Self {
        match c {
            ShiftClass::NoShift => Group::NoShift,
            ShiftClass::InternalShift => Group::InternalShift,
            ShiftClass::ExternalShift => Group::ExternalShift,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hits {
    pub n: usize,
    pub correct: usize,
}

impl Hits {
    pub fn accuracy(&self) -> Option<f64> {
        (self.n > 0).then(|| self.correct as f64 / self.n as f64)
    }
}

pub type GroupHits = BTreeMap<Group, Hits>;

/// Accuracy counts overall and per shift class; every group is present.
pub fn grouped_hits(predicted: &[usize], truth: &[usize], classes: &[ShiftClass]) -> Result<GroupHits> {
    if predicted.len() != truth.len() || truth.len() != classes.len() {
        return Err(Error::shape(format!("{} rows", truth.len()), predicted.len().max(classes.len())));
    }
    let mut out: GroupHits = Group::ALL.iter().map(|g| (*g, Hits::default())).collect();
    for ((p, t), c) in predicted.iter().zip(truth).zip(classes) {
        for g in [Group::All, Group::from(*c)] {
            let h = out.get_mut(&g).expect("all groups present");
            h.n += 1;
            h.correct += usize::from(p == t);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformalResult {
    pub calibration: RapsCalibration,
    pub sets: BTreeMap<Group, SetStats>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochInfo {
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub best_validation_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub validation: usize,
    pub calibration: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonResult {
    pub test_start: NaiveDate,
    pub test_end: NaiveDate,
    pub sizes: SplitSizes,
    pub accuracy: BTreeMap<Stage, GroupHits>,
    /// Copy-the-plan: planned building and planned sort taken verbatim.
    pub baseline: BTreeMap<Stage, GroupHits>,
    pub conformal: BTreeMap<Stage, ConformalResult>,
    pub epochs: BTreeMap<Stage, EpochInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonOutcome {
    pub horizon: usize,
    pub result: Option<HorizonResult>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation (ddof = 1); 0 for a single value.
    pub std: f64,
    pub n: usize,
}

pub fn mean_std(values: &[f64]) -> Option<MeanStd> {
    if values.is_empty() {
        return None;
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n == 1 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    Some(MeanStd { mean, std, n })
}

pub type StageGroupStats = BTreeMap<Stage, BTreeMap<Group, MeanStd>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub complete_horizons: usize,
    pub incomplete_horizons: Vec<usize>,
    pub accuracy: StageGroupStats,
    pub baseline: StageGroupStats,
    pub coverage: StageGroupStats,
    pub efficiency: StageGroupStats,
    pub target_coverage: BTreeMap<Stage, f64>,
}

fn aggregate(results: &[&HorizonResult], value: impl Fn(&HorizonResult, Stage, Group) -> Option<f64>) -> StageGroupStats {
    let mut out = StageGroupStats::new();
    for stage in Stage::ALL {
        let mut row = BTreeMap::new();
        for g in Group::ALL {
            let vals: Vec<f64> = results.iter().filter_map(|r| value(r, stage, g)).collect();
            if let Some(m) = mean_std(&vals) {
                row.insert(g, m);
            }
        }
        out.insert(stage, row);
    }
    out
}

impl Summary {
    pub fn from_horizons(config: &ExperimentConfig, horizons: &[HorizonOutcome]) -> Self {
        let done: Vec<&HorizonResult> = horizons.iter().filter_map(|h| h.result.as_ref()).collect();
        let sets = |r: &HorizonResult, s: Stage, g: Group| r.conformal.get(&s)?.sets.get(&g).filter(|x| x.n > 0).copied();
        Self {
            complete_horizons: done.len(),
            incomplete_horizons: horizons.iter().filter(|h| h.result.is_none()).map(|h| h.horizon).collect(),
            accuracy: aggregate(&done, |r, s, g| r.accuracy.get(&s)?.get(&g)?.accuracy()),
            baseline: aggregate(&done, |r, s, g| r.baseline.get(&s)?.get(&g)?.accuracy()),
            coverage: aggregate(&done, |r, s, g| sets(r, s, g).map(|x| x.coverage())),
            efficiency: aggregate(&done, |r, s, g| sets(r, s, g).map(|x| x.efficiency())),
            target_coverage: Stage::ALL.iter().map(|s| (*s, config.raps(*s).target_coverage())).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub horizons: Vec<HorizonOutcome>,
    pub summary: Summary,
}

impl ExperimentReport {
    pub fn new(config: ExperimentConfig, horizons: Vec<HorizonOutcome>) -> Self {
        let summary = Summary::from_horizons(&config, &horizons);
        Self {
            config,
            horizons,
            summary,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.summary.incomplete_horizons.is_empty()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Trains the three stages on one horizon's training split. Sort stages see
/// the true building.
pub fn train_cascade(
    config: &ExperimentConfig,
    schema: &FeatureSchema,
    train: &[LoadRecord],
    validation: &[LoadRecord],
    horizon: usize,
) -> Result<(Cascade, BTreeMap<Stage, EpochInfo>)> {
    let mut nets = Vec::with_capacity(3);
    let mut epochs = BTreeMap::new();
    for stage in Stage::ALL {
        let tr = schema.encode(train, stage)?;
        let va = schema.encode(validation, stage)?;
        let trained = train_stage(
            config.stages.get(stage),
            &tr,
            &va,
            schema.n_classes(stage),
            &config.train_config(horizon, stage),
        )?;
        epochs.insert(
            stage,
            EpochInfo {
                best_epoch: trained.curve.best_epoch,
                epochs_run: trained.curve.validation_loss.len(),
                best_validation_loss: trained.best_validation_loss(),
            },
        );
        nets.push(trained.network);
    }
    let sort_day = nets.pop().expect("three stages");
    let sort_week = nets.pop().expect("three stages");
    let building = nets.pop().expect("three stages");
    let cascade = Cascade {
        schema: schema.clone(),
        building,
        sort_week,
        sort_day,
        specs: [
            config.stages.building_week.clone(),
            config.stages.sort_week.clone(),
            config.stages.sort_day.clone(),
        ],
    };
    Ok((cascade, epochs))
}

/// True building and sort indices of labeled records.
pub fn label_indices(topology: &Topology, records: &[LoadRecord]) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut b = Vec::with_capacity(records.len());
    let mut s = Vec::with_capacity(records.len());
    for r in records {
        let (Some(ab), Some(as_)) = (&r.actual_building, &r.actual_sort) else {
            return Err(Error::Contract(format!("load {} is unlabeled", r.load_id)));
        };
        b.push(topology.building_index(ab)?);
        s.push(topology.sort_index(as_)?);
    }
    Ok((b, s))
}

fn stage_output(p: &CascadePrediction, stage: Stage) -> Result<&crate::predictor::StagePrediction> {
    match stage {
        Stage::BuildingWeek => Ok(&p.building),
        Stage::SortWeek => Ok(&p.sort_week),
        Stage::SortDay => p
            .sort_day
            .as_ref()
            .ok_or_else(|| Error::Contract("records lack est_arr_time for the day stage".into())),
    }
}

/// RAPS calibration of every stage on labeled records, using the cascade's
/// inference wiring (predicted building).
pub fn calibrate_cascade(
    config: &ExperimentConfig,
    cascade: &Cascade,
    calibration: &[LoadRecord],
) -> Result<BTreeMap<Stage, RapsCalibration>> {
    let (yb, ys) = label_indices(&cascade.schema.topology, calibration)?;
    let pred = cascade.predict_records(calibration)?;
    Stage::ALL
        .iter()
        .map(|&stage| {
            let y = if stage.predicts_building() { &yb } else { &ys };
            Ok((stage, calibrate(&stage_output(&pred, stage)?.proba, y, config.raps(stage))?))
        })
        .collect()
}

pub struct Evaluation {
    pub accuracy: BTreeMap<Stage, GroupHits>,
    pub baseline: BTreeMap<Stage, GroupHits>,
    pub conformal: BTreeMap<Stage, ConformalResult>,
}

/// Scores a calibrated cascade on labeled test records.
pub fn evaluate_cascade(
    cascade: &Cascade,
    calibrations: &BTreeMap<Stage, RapsCalibration>,
    test: &[LoadRecord],
) -> Result<Evaluation> {
    let topology = &cascade.schema.topology;
    let (yb, ys) = label_indices(topology, test)?;
    let classes = test
        .iter()
        .map(|r| record_shift_class(topology, r))
        .collect::<Result<Vec<_>>>()?;
    let planned_b = test
        .iter()
        .map(|r| topology.building_index(&r.pln_dest_building))
        .collect::<Result<Vec<_>>>()?;
    let planned_s = test
        .iter()
        .map(|r| topology.sort_index(&r.pln_dest_sort))
        .collect::<Result<Vec<_>>>()?;
    let pred = cascade.predict_records(test)?;

    let mut accuracy = BTreeMap::new();
    let mut baseline = BTreeMap::new();
    let mut conformal = BTreeMap::new();
    for stage in Stage::ALL {
        let out = stage_output(&pred, stage)?;
        let (y, plan) = if stage.predicts_building() { (&yb, &planned_b) } else { (&ys, &planned_s) };
        accuracy.insert(stage, grouped_hits(&out.labels, y, &classes)?);
        baseline.insert(stage, grouped_hits(plan, y, &classes)?);
        let calib = *calibrations
            .get(&stage)
            .ok_or_else(|| Error::Contract(format!("no calibration for {stage}")))?;
        let sets = calib.predict_sets(&out.proba)?;
        let mut by: BTreeMap<Group, SetStats> = Group::ALL.iter().map(|g| (*g, SetStats::default())).collect();
        by.insert(Group::All, overall(&sets, y)?);
        for (c, s) in conditional(&sets, y, &classes)? {
            by.insert(c.into(), s);
        }
        conformal.insert(
            stage,
            ConformalResult {
                calibration: calib,
                sets: by,
            },
        );
    }
    Ok(Evaluation {
        accuracy,
        baseline,
        conformal,
    })
}

pub fn run_horizon(
    config: &ExperimentConfig,
    records: &[LoadRecord],
    topology: &Topology,
    horizon: usize,
) -> Result<HorizonResult> {
    let splits = temporal_split(records, horizon, config.test_window_days)?;
    let train = gather(records, &splits.train);
    let validation = gather(records, &splits.validation);
    let calibration = gather(records, &splits.calibration);
    let test = gather(records, &splits.test);
    let schema = FeatureSchema::fit(&train, topology, config.schema_options(horizon))?;
    let (cascade, epochs) = train_cascade(config, &schema, &train, &validation, horizon)?;
    let calibrations = calibrate_cascade(config, &cascade, &calibration)?;
    let eval = evaluate_cascade(&cascade, &calibrations, &test)?;
    Ok(HorizonResult {
        test_start: splits.test_start,
        test_end: splits.test_end,
        sizes: SplitSizes {
            train: train.len(),
            validation: validation.len(),
            calibration: calibration.len(),
            test: test.len(),
        },
        accuracy: eval.accuracy,
        baseline: eval.baseline,
        conformal: eval.conformal,
        epochs,
    })
}

/// Runs every horizon in order. A failing horizon is recorded with its
/// error and the remaining horizons still run.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let (records, topology) = config.dataset.load()?;
    let horizons = (1..=config.horizons)
        .map(|h| match run_horizon(config, &records, &topology, h) {
            Ok(r) => HorizonOutcome {
                horizon: h,
                result: Some(r),
                error: None,
            },
            Err(e) => HorizonOutcome {
                horizon: h,
                result: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    Ok(ExperimentReport::new(config.clone(), horizons))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_conventions() {
        let one = mean_std(&[0.7]).unwrap();
        assert_eq!((one.mean, one.std), (0.7, 0.0));
        let two = mean_std(&[1.0, 3.0]).unwrap();
        assert_eq!(two.mean, 2.0);
        assert!((two.std - 2f64.sqrt()).abs() < 1e-15);
        assert!(mean_std(&[]).is_none());
    }

    #[test]
    fn grouped_hits_partition() {
        let classes = [
            ShiftClass::NoShift,
            ShiftClass::NoShift,
            ShiftClass::InternalShift,
            ShiftClass::ExternalShift,
            ShiftClass::ExternalShift,
        ];
        let h = grouped_hits(&[0, 1, 2, 0, 1], &[0, 1, 0, 0, 0], &classes).unwrap();
        assert_eq!(h[&Group::All], Hits { n: 5, correct: 3 });
        assert_eq!(h[&Group::InternalShift], Hits { n: 1, correct: 0 });
        let weighted: f64 = [Group::NoShift, Group::InternalShift, Group::ExternalShift]
            .iter()
            .map(|g| h[g].n as f64 / 5.0 * h[g].accuracy().unwrap())
            .sum();
        assert!((weighted - h[&Group::All].accuracy().unwrap()).abs() < 1e-12);
        assert!(grouped_hits(&[0], &[0, 1], &classes[..2]).is_err());
    }
}
