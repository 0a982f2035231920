use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use loadplan::conformal::RapsCalibration;
use loadplan::data::{LoadRecord, Stage, Topology};
use loadplan::predictor::{CascadePrediction, StagePrediction};
use ndarray::Array2;

fn class_names(topology: &Topology, stage: Stage) -> &[String] {
    if stage.predicts_building() {
        &topology.buildings
    } else {
        &topology.sorts
    }
}

fn label_column(stage: Stage) -> &'static str {
    if stage.predicts_building() {
        "actual_building"
    } else {
        "actual_sort"
    }
}

fn outputs(pred: &CascadePrediction) -> Vec<(Stage, &StagePrediction)> {
    let mut v = vec![(Stage::BuildingWeek, &pred.building), (Stage::SortWeek, &pred.sort_week)];
    if let Some(d) = &pred.sort_day {
        v.push((Stage::SortDay, d));
    }
    v
}

/// One row per load: predicted labels, per-class probabilities, actual
/// labels when known, and prediction sets when calibrations are given.
pub fn write_predictions(
    path: &Path,
    topology: &Topology,
    records: &[LoadRecord],
    pred: &CascadePrediction,
    calibrations: Option<&BTreeMap<Stage, RapsCalibration>>,
) -> Result<()> {
    let outs = outputs(pred);
    let mut header = vec!["load_id".to_string()];
    for (stage, _) in &outs {
        header.push(format!("{stage}_pred"));
        for name in class_names(topology, *stage) {
            header.push(format!("{stage}_p_{name}"));
        }
        if calibrations.is_some() {
            header.extend([format!("{stage}_set"), format!("{stage}_set_size"), format!("{stage}_tau_hat")]);
        }
    }
    header.extend(["actual_building".to_string(), "actual_sort".to_string()]);

    let mut sets = BTreeMap::new();
    if let Some(cals) = calibrations {
        for (stage, out) in &outs {
            let cal = cals
                .get(stage)
                .ok_or_else(|| anyhow!("no calibration for {stage}"))?;
            sets.insert(*stage, (cal.tau_hat, cal.predict_sets(&out.proba)?));
        }
    }

    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(&header)?;
    for (i, r) in records.iter().enumerate() {
        let mut row = vec![r.load_id.clone()];
        for (stage, out) in &outs {
            let names = class_names(topology, *stage);
            row.push(names[out.labels[i]].clone());
            row.extend(out.proba.row(i).iter().map(|p| p.to_string()));
            if let Some((tau, s)) = sets.get(stage) {
                let members: Vec<&str> = s[i].labels.iter().map(|&l| names[l].as_str()).collect();
                row.extend([members.join("|"), s[i].len().to_string(), tau.to_string()]);
            }
        }
        row.push(r.actual_building.clone().unwrap_or_default());
        row.push(r.actual_sort.clone().unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Probability matrix and true labels of one stage from a predictions CSV.
pub fn read_probabilities(path: &Path, topology: &Topology, stage: Stage) -> Result<(Array2<f64>, Vec<usize>)> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let header = rdr.headers()?.clone();
    let names = class_names(topology, stage);
    let find = |col: &str| {
        header
            .iter()
            .position(|h| h == col)
            .ok_or_else(|| anyhow!("{} has no column {col}", path.display()))
    };
    let prob_cols = names
        .iter()
        .map(|n| find(&format!("{stage}_p_{n}")))
        .collect::<Result<Vec<_>>>()?;
    let label_col = find(label_column(stage))?;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        for &c in &prob_cols {
            let v: f64 = row[c]
                .parse()
                .with_context(|| format!("row {}: bad probability {:?}", line + 1, &row[c]))?;
            data.push(v);
        }
        let y = &row[label_col];
        if y.is_empty() {
            bail!("row {}: missing {}", line + 1, label_column(stage));
        }
        labels.push(
            names
                .iter()
                .position(|n| n == y)
                .ok_or_else(|| anyhow!("row {}: unknown label {y:?}", line + 1))?,
        );
    }
    Ok((Array2::from_shape_vec((labels.len(), names.len()), data)?, labels))
}
