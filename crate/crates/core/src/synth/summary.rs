use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::Datelike;
use serde::{Deserialize, Serialize};

use crate::data::{record_shift_class, LoadRecord, ShiftClass, Topology};
use crate::error::{Error, Result};

pub const WEEKDAYS: [&str; 7] = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"];

/// Counts over a labeled dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub n_loads: usize,
    pub shift_classes: BTreeMap<ShiftClass, usize>,
    /// Keyed by actual building.
    pub buildings: BTreeMap<String, usize>,
    /// Keyed by actual sort.
    pub sorts: BTreeMap<String, usize>,
    /// Monday first.
    pub weekdays: [usize; 7],
    /// External shifts whose actual building is in a different cluster.
    pub cross_cluster: usize,
}

pub fn summarize(topology: &Topology, records: &[LoadRecord]) -> Result<DistributionSummary> {
    if records.is_empty() {
        return Err(Error::Contract("cannot summarize an empty dataset".into()));
    }
    let mut s = DistributionSummary {
        n_loads: records.len(),
        shift_classes: ShiftClass::ALL.iter().map(|c| (*c, 0)).collect(),
        buildings: topology.buildings.iter().map(|b| (b.clone(), 0)).collect(),
        sorts: topology.sorts.iter().map(|x| (x.clone(), 0)).collect(),
        weekdays: [0; 7],
        cross_cluster: 0,
    };
    for r in records {
        let class = record_shift_class(topology, r)?;
        *s.shift_classes.entry(class).or_default() += 1;
        let actual_b = r.actual_building.as_deref().unwrap_or_default();
        *s.buildings.entry(actual_b.to_string()).or_default() += 1;
        *s.sorts.entry(r.actual_sort.clone().unwrap_or_default()).or_default() += 1;
        s.weekdays[r.est_arr_date.weekday().num_days_from_monday() as usize] += 1;
        if class == ShiftClass::ExternalShift && topology.cluster_of(actual_b)? != r.pln_dest_cluster {
            s.cross_cluster += 1;
        }
    }
    Ok(s)
}

impl DistributionSummary {
    fn frac(&self, count: usize) -> f64 {
        count as f64 / self.n_loads as f64
    }

    pub fn class_rate(&self, class: ShiftClass) -> f64 {
        self.frac(self.shift_classes.get(&class).copied().unwrap_or(0))
    }

    pub fn building_share(&self, building: &str) -> f64 {
        self.frac(self.buildings.get(building).copied().unwrap_or(0))
    }

    pub fn sort_share(&self, sort: &str) -> f64 {
        self.frac(self.sorts.get(sort).copied().unwrap_or(0))
    }

    pub fn cross_cluster_rate(&self) -> f64 {
        self.frac(self.cross_cluster)
    }

    /// Mean Saturday/Sunday count over mean Monday–Friday count.
    pub fn weekend_ratio(&self) -> f64 {
        let weekday = self.weekdays[..5].iter().sum::<usize>() as f64 / 5.0;
        let weekend = self.weekdays[5..].iter().sum::<usize>() as f64 / 2.0;
        if weekday == 0.0 {
            f64::INFINITY
        } else {
            weekend / weekday
        }
    }

    /// Long-format `group,key,count` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("group,key,count\n");
        for (c, n) in &self.shift_classes {
            let _ = writeln!(out, "shift_class,{c},{n}");
        }
        for (b, n) in &self.buildings {
            let _ = writeln!(out, "building,{b},{n}");
        }
        for (x, n) in &self.sorts {
            let _ = writeln!(out, "sort,{x},{n}");
        }
        for (d, n) in WEEKDAYS.iter().zip(self.weekdays) {
            let _ = writeln!(out, "weekday,{d},{n}");
        }
        let _ = writeln!(out, "cross_cluster,external_shift,{}", self.cross_cluster);
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("loads: {}\n", self.n_loads);
        let mut section = |title: &str, rows: Vec<(String, usize)>| {
            let _ = writeln!(out, "\n{title}");
            for (k, n) in rows {
                let _ = writeln!(out, "  {k:<16}{n:>8}  {:>6.2}%", 100.0 * n as f64 / self.n_loads as f64);
            }
        };
        section(
            "shift class",
            self.shift_classes.iter().map(|(c, n)| (c.to_string(), *n)).collect(),
        );
        section("building", self.buildings.iter().map(|(k, n)| (k.clone(), *n)).collect());
        section("sort", self.sorts.iter().map(|(k, n)| (k.clone(), *n)).collect());
        section(
            "weekday",
            WEEKDAYS.iter().zip(self.weekdays).map(|(d, n)| (d.to_string(), n)).collect(),
        );
        let _ = writeln!(out, "\ncross-cluster external shifts: {}", self.cross_cluster);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::record::sample_record;

    #[test]
    fn toy_counts_are_exact() {
        let t = Topology::default();
        let mut a = sample_record(1);
        a.pln_dest_building = "B1".into();
        a.pln_dest_cluster = "C1".into();
        a.pln_dest_sort = "S1".into();
        a.actual_building = Some("B1".into());
        a.actual_sort = Some("S1".into());
        let mut b = a.clone();
        b.actual_sort = Some("S2".into());
        let mut c = a.clone();
        c.actual_building = Some("B4".into());
        let s = summarize(&t, &[a, b, c]).unwrap();
        assert_eq!(s.shift_classes[&ShiftClass::NoShift], 1);
        assert_eq!(s.shift_classes[&ShiftClass::InternalShift], 1);
        assert_eq!(s.shift_classes[&ShiftClass::ExternalShift], 1);
        assert_eq!(s.buildings["B1"], 2);
        assert_eq!(s.buildings["B4"], 1);
        assert_eq!(s.sorts["S1"], 2);
        assert_eq!(s.cross_cluster, 1);
        assert_eq!(s.weekdays.iter().sum::<usize>(), 3);
    }

    #[test]
    fn empty_is_an_error() {
        assert!(summarize(&Topology::default(), &[]).is_err());
    }
}
