use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::conformal::{RapsCalibration, RapsConfig, SetStats};
use crate::data::Stage;
use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::experiment::{
    ConformalResult, EpochInfo, ExperimentReport, Group, GroupHits, Hits, HorizonOutcome, HorizonResult, MeanStd,
    SplitSizes, StageGroupStats,
};

const HEADER: [&str; 6] = ["section", "horizon", "stage", "group", "field", "value"];

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into())
}

fn fmt_ms(m: Option<&MeanStd>) -> String {
    m.map(|m| format!("{:.4} ± {:.4}", m.mean, m.std))
        .unwrap_or_else(|| "n/a".into())
}

fn accuracy_table(out: &mut String, title: &str, report: &ExperimentReport, stage: Stage, baseline: bool) {
    let _ = writeln!(out, "\n{title}: {stage}");
    let _ = write!(out, "{:<10}", "horizon");
    for g in Group::ALL {
        let _ = write!(out, "{:>22}", g.label());
    }
    out.push('\n');
    for h in &report.horizons {
        let _ = write!(out, "{:<10}", h.horizon);
        match &h.result {
            Some(r) => {
                let table = if baseline { &r.baseline } else { &r.accuracy };
                for g in Group::ALL {
                    let v = table.get(&stage).and_then(|t| t.get(&g)).and_then(Hits::accuracy);
                    let _ = write!(out, "{:>22}", fmt_opt(v));
                }
            }
            None => {
                let _ = write!(out, "  INCOMPLETE: {}", h.error.as_deref().unwrap_or("unknown error"));
            }
        }
        out.push('\n');
    }
    let stats = if baseline { &report.summary.baseline } else { &report.summary.accuracy };
    let _ = write!(out, "{:<10}", "mean±std");
    for g in Group::ALL {
        let _ = write!(out, "{:>22}", fmt_ms(stats.get(&stage).and_then(|t| t.get(&g))));
    }
    out.push('\n');
}

/// Plain-text tables: accuracy by shift class per task, the copy-the-plan
/// baseline, and coverage/efficiency against the target coverage.
pub fn render_text(report: &ExperimentReport) -> String {
    let s = &report.summary;
    let mut out = format!(
        "experiment report: {} horizon(s), {} complete\n",
        report.horizons.len(),
        s.complete_horizons
    );
    if !s.incomplete_horizons.is_empty() {
        let _ = writeln!(out, "WARNING: incomplete horizons {:?}", s.incomplete_horizons);
    }
    for stage in Stage::ALL {
        accuracy_table(&mut out, "accuracy", report, stage, false);
    }
    for stage in [Stage::BuildingWeek, Stage::SortWeek] {
        accuracy_table(&mut out, "copy-the-plan baseline", report, stage, true);
    }
    let _ = writeln!(out, "\nconformal prediction sets");
    let _ = writeln!(
        out,
        "{:<15}{:>8}{:<16}{:>22}{:>22}",
        "stage", "target", "  group", "coverage", "efficiency"
    );
    for stage in Stage::ALL {
        for g in Group::ALL {
            let cov = s.coverage.get(&stage).and_then(|t| t.get(&g));
            let eff = s.efficiency.get(&stage).and_then(|t| t.get(&g));
            let _ = writeln!(
                out,
                "{:<15}{:>8.2}  {:<14}{:>22}{:>22}",
                stage.name(),
                s.target_coverage.get(&stage).copied().unwrap_or(f64::NAN),
                g.label(),
                fmt_ms(cov),
                fmt_ms(eff)
            );
        }
    }
    out
}

struct Writer(csv::Writer<Vec<u8>>);

impl Writer {
    fn row(&mut self, section: &str, horizon: &str, stage: &str, group: &str, field: &str, value: impl ToString) -> Result<()> {
        self.0
            .write_record([section, horizon, stage, group, field, &value.to_string()])?;
        Ok(())
    }
}

fn write_stats(w: &mut Writer, name: &str, stats: &StageGroupStats) -> Result<()> {
    for (stage, row) in stats {
        for (g, m) in row {
            w.row("summary", "", stage.name(), g.label(), &format!("{name}_mean"), m.mean)?;
            w.row("summary", "", stage.name(), g.label(), &format!("{name}_std"), m.std)?;
        }
    }
    Ok(())
}

/// Long-format CSV. Summary rows are derived and skipped by [`from_csv`].
pub fn to_csv(report: &ExperimentReport) -> Result<String> {
    let mut w = Writer(csv::Writer::from_writer(Vec::new()));
    w.0.write_record(HEADER)?;
    w.row("config", "", "", "", "json", serde_json::to_string(&report.config)?)?;
    for h in &report.horizons {
        let hz = h.horizon.to_string();
        let Some(r) = &h.result else {
            w.row("horizon", &hz, "", "", "error", h.error.as_deref().unwrap_or(""))?;
            continue;
        };
        w.row("horizon", &hz, "", "", "test_start", r.test_start)?;
        w.row("horizon", &hz, "", "", "test_end", r.test_end)?;
        w.row("horizon", &hz, "", "", "n_train", r.sizes.train)?;
        w.row("horizon", &hz, "", "", "n_validation", r.sizes.validation)?;
        w.row("horizon", &hz, "", "", "n_calibration", r.sizes.calibration)?;
        w.row("horizon", &hz, "", "", "n_test", r.sizes.test)?;
        for (section, table) in [("accuracy", &r.accuracy), ("baseline", &r.baseline)] {
            for (stage, row) in table {
                for (g, hits) in row {
                    w.row(section, &hz, stage.name(), g.label(), "n", hits.n)?;
                    w.row(section, &hz, stage.name(), g.label(), "correct", hits.correct)?;
                }
            }
        }
        for (stage, c) in &r.conformal {
            let k = &c.calibration;
            w.row("conformal", &hz, stage.name(), "", "alpha", k.config.alpha)?;
            w.row("conformal", &hz, stage.name(), "", "lambda", k.config.lambda)?;
            w.row("conformal", &hz, stage.name(), "", "k_reg", k.config.k_reg)?;
            w.row("conformal", &hz, stage.name(), "", "tau_hat", k.tau_hat)?;
            w.row("conformal", &hz, stage.name(), "", "n", k.n)?;
            for (g, s) in &c.sets {
                w.row("sets", &hz, stage.name(), g.label(), "n", s.n)?;
                w.row("sets", &hz, stage.name(), g.label(), "covered", s.covered)?;
                w.row("sets", &hz, stage.name(), g.label(), "total_size", s.total_size)?;
            }
        }
        for (stage, e) in &r.epochs {
            w.row("epochs", &hz, stage.name(), "", "best_epoch", e.best_epoch)?;
            w.row("epochs", &hz, stage.name(), "", "epochs_run", e.epochs_run)?;
            w.row("epochs", &hz, stage.name(), "", "best_validation_loss", e.best_validation_loss)?;
        }
    }
    let s = &report.summary;
    write_stats(&mut w, "accuracy", &s.accuracy)?;
    write_stats(&mut w, "baseline", &s.baseline)?;
    write_stats(&mut w, "coverage", &s.coverage)?;
    write_stats(&mut w, "efficiency", &s.efficiency)?;
    for (stage, t) in &s.target_coverage {
        w.row("summary", "", stage.name(), "", "target_coverage", t)?;
    }
    let bytes = w.0.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Default)]
struct Partial {
    error: Option<String>,
    fields: BTreeMap<String, String>,
    accuracy: BTreeMap<Stage, GroupHits>,
    baseline: BTreeMap<Stage, GroupHits>,
    conformal: BTreeMap<Stage, BTreeMap<String, String>>,
    sets: BTreeMap<Stage, BTreeMap<Group, SetStats>>,
    epochs: BTreeMap<Stage, BTreeMap<String, String>>,
}

fn parse<T: FromStr>(what: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("report csv: bad {what} value {v:?}")))
}

fn take<T: FromStr>(m: &BTreeMap<String, String>, key: &str) -> Result<T> {
    let v = m
        .get(key)
        .ok_or_else(|| Error::Config(format!("report csv: missing {key}")))?;
    parse(key, v)
}

impl Partial {
    fn finish(self, horizon: usize) -> Result<HorizonOutcome> {
        if let Some(e) = self.error {
            return Ok(HorizonOutcome {
                horizon,
                result: None,
                error: Some(e),
            });
        }
        let f = &self.fields;
        let mut conformal = BTreeMap::new();
        for (stage, m) in &self.conformal {
            let config = RapsConfig {
                alpha: take(m, "alpha")?,
                lambda: take(m, "lambda")?,
                k_reg: take(m, "k_reg")?,
            };
            conformal.insert(
                *stage,
                ConformalResult {
                    calibration: RapsCalibration {
                        config,
                        tau_hat: take(m, "tau_hat")?,
                        n: take(m, "n")?,
                    },
                    sets: self.sets.get(stage).cloned().unwrap_or_default(),
                },
            );
        }
        let mut epochs = BTreeMap::new();
        for (stage, m) in &self.epochs {
            epochs.insert(
                *stage,
                EpochInfo {
                    best_epoch: take(m, "best_epoch")?,
                    epochs_run: take(m, "epochs_run")?,
                    best_validation_loss: take(m, "best_validation_loss")?,
                },
            );
        }
        Ok(HorizonOutcome {
            horizon,
            result: Some(HorizonResult {
                test_start: take(f, "test_start")?,
                test_end: take(f, "test_end")?,
                sizes: SplitSizes {
                    train: take(f, "n_train")?,
                    validation: take(f, "n_validation")?,
                    calibration: take(f, "n_calibration")?,
                    test: take(f, "n_test")?,
                },
                accuracy: self.accuracy,
                baseline: self.baseline,
                conformal,
                epochs,
            }),
            error: None,
        })
    }
}

/// Rebuilds a report from [`to_csv`] output.
pub fn from_csv(text: &str) -> Result<ExperimentReport> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut config: Option<ExperimentConfig> = None;
    let mut horizons: BTreeMap<usize, Partial> = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let [section, horizon, stage, group, field, value] =
            std::array::from_fn(|i| row.get(i).unwrap_or_default());
        match section {
            "config" => config = Some(serde_json::from_str(value)?),
            "summary" => continue,
            _ => {}
        }
        if section == "config" {
            continue;
        }
        let p = horizons.entry(parse("horizon", horizon)?).or_default();
        let stage = || -> Result<Stage> { stage.parse() };
        let set_count = |hits: &mut Hits| -> Result<()> {
            match field {
                "n" => hits.n = parse(field, value)?,
                "correct" => hits.correct = parse(field, value)?,
                _ => return Err(Error::Config(format!("report csv: unknown field {field}"))),
            }
            Ok(())
        };
        match section {
            "horizon" if field == "error" => p.error = Some(value.to_string()),
            "horizon" => {
                p.fields.insert(field.into(), value.into());
            }
            "accuracy" => set_count(p.accuracy.entry(stage()?).or_default().entry(Group::parse(group)?).or_default())?,
            "baseline" => set_count(p.baseline.entry(stage()?).or_default().entry(Group::parse(group)?).or_default())?,
            "conformal" => {
                p.conformal.entry(stage()?).or_default().insert(field.into(), value.into());
            }
            "sets" => {
                let s = p.sets.entry(stage()?).or_default().entry(Group::parse(group)?).or_default();
                match field {
                    "n" => s.n = parse(field, value)?,
                    "covered" => s.covered = parse(field, value)?,
                    "total_size" => s.total_size = parse(field, value)?,
                    _ => return Err(Error::Config(format!("report csv: unknown field {field}"))),
                }
            }
            "epochs" => {
                p.epochs.entry(stage()?).or_default().insert(field.into(), value.into());
            }
            other => return Err(Error::Config(format!("report csv: unknown section {other:?}"))),
        }
    }
    let config = config.ok_or_else(|| Error::Config("report csv: missing config row".into()))?;
    let horizons = horizons
        .into_iter()
        .map(|(h, p)| p.finish(h))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport::new(config, horizons))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn hits(n: usize, correct: usize) -> Hits {
        Hits { n, correct }
    }

    fn hand_built(error_on_second: bool) -> ExperimentReport {
        let config = ExperimentConfig {
            horizons: 2,
            ..Default::default()
        };
        let mut result = HorizonResult {
            test_start: NaiveDate::from_ymd_opt(2023, 12, 1).unwrap(),
            test_end: NaiveDate::from_ymd_opt(2023, 12, 30).unwrap(),
            sizes: SplitSizes {
                train: 80,
                validation: 10,
                calibration: 10,
                test: 7,
            },
            accuracy: BTreeMap::new(),
            baseline: BTreeMap::new(),
            conformal: BTreeMap::new(),
            epochs: BTreeMap::new(),
        };
        for (i, stage) in Stage::ALL.into_iter().enumerate() {
            let row: GroupHits = [
                (Group::All, hits(7, 5 + i % 2)),
                (Group::NoShift, hits(5, 4)),
                (Group::InternalShift, hits(2, 1 + i % 2)),
                (Group::ExternalShift, hits(0, 0)),
            ]
            .into_iter()
            .collect();
            result.accuracy.insert(stage, row.clone());
            result.baseline.insert(stage, row);
            let sets = [(Group::All, SetStats { n: 7, covered: 7, total_size: 12 })].into_iter().collect();
            result.conformal.insert(
                stage,
                ConformalResult {
                    calibration: RapsCalibration {
                        config: config.raps(stage),
                        tau_hat: if i == 0 { f64::INFINITY } else { 0.1 + 0.2 },
                        n: 10,
                    },
                    sets,
                },
            );
            result.epochs.insert(
                stage,
                EpochInfo {
                    best_epoch: 3,
                    epochs_run: 8,
                    best_validation_loss: 1.0 / 3.0,
                },
            );
        }
        let second = if error_on_second {
            HorizonOutcome {
                horizon: 2,
                result: None,
                error: Some("split error: \"quoted\", with comma".into()),
            }
        } else {
            HorizonOutcome {
                horizon: 2,
                result: Some(result.clone()),
                error: None,
            }
        };
        ExperimentReport::new(
            config,
            vec![
                HorizonOutcome {
                    horizon: 1,
                    result: Some(result),
                    error: None,
                },
                second,
            ],
        )
    }

    #[test]
    fn csv_round_trip() {
        for err in [false, true] {
            let r = hand_built(err);
            assert_eq!(from_csv(&to_csv(&r).unwrap()).unwrap(), r);
            assert_eq!(ExperimentReport::from_json(&r.to_json().unwrap()).unwrap(), r);
        }
    }

    #[test]
    fn summary_of_identical_horizons() {
        let r = hand_built(false);
        let m = r.summary.accuracy[&Stage::BuildingWeek][&Group::All];
        assert_eq!((m.mean, m.std, m.n), (5.0 / 7.0, 0.0, 2));
        assert!(!r.summary.accuracy[&Stage::BuildingWeek].contains_key(&Group::ExternalShift));
    }

    #[test]
    fn text_shows_targets_values_and_gaps() {
        let text = render_text(&hand_built(true));
        assert!(text.contains("0.99"));
        assert!(text.contains("0.95"));
        assert!(text.contains(&format!("{:.4}", 5.0 / 7.0)));
        assert!(text.contains("INCOMPLETE"));
        assert!(text.contains("n/a"));
    }

    #[test]
    fn unknown_sections_rejected() {
        let csv = "section,horizon,stage,group,field,value\nbogus,1,,,x,1\n";
        assert!(from_csv(csv).is_err());
    }
}
