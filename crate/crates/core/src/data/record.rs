use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One planned inbound load. Column names match the CSV header exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadRecord {
    pub load_id: String,
    pub org_building: String,
    pub org_sort: String,
    pub pln_dest_cluster: String,
    pub pln_dest_building: String,
    pub pln_dest_sort: String,
    pub pln_volume: f64,
    pub pln_pph: f64,
    pub pln_payroll: f64,
    pub pln_work_staff: f64,
    pub pln_runtime: f64,
    pub pln_process_rate: f64,
    pub pln_fph: f64,
    pub pln_unload_span: f64,
    pub load_volume: f64,
    pub load_creation_date: NaiveDate,
    pub est_arr_date: NaiveDate,
    /// Minutes since midnight. Only known on the day of operations.
    pub est_arr_time: Option<u32>,
    pub actual_building: Option<String>,
    pub actual_sort: Option<String>,
}

/// Names of the planned-workload columns, in schema order.
pub const WORKLOAD_FIELDS: [&str; 9] = [
    "pln_volume",
    "pln_pph",
    "pln_payroll",
    "pln_work_staff",
    "pln_runtime",
    "pln_process_rate",
    "pln_fph",
    "pln_unload_span",
    "load_volume",
];

impl LoadRecord {
    pub fn workload(&self) -> [f64; 9] {
        [
            self.pln_volume,
            self.pln_pph,
            self.pln_payroll,
            self.pln_work_staff,
            self.pln_runtime,
            self.pln_process_rate,
            self.pln_fph,
            self.pln_unload_span,
            self.load_volume,
        ]
    }

    /// Checks the record invariants against a topology.
    pub fn validate(&self, topology: &Topology) -> Result<()> {
        let members = topology.cluster_members(&self.pln_dest_cluster)?;
        if !members.iter().any(|b| b == &self.pln_dest_building) {
            return Err(Error::Contract(format!(
                "load {}: building {} is not in cluster {}",
                self.load_id, self.pln_dest_building, self.pln_dest_cluster
            )));
        }
        if self.est_arr_date < self.load_creation_date {
            return Err(Error::Contract(format!(
                "load {}: arrival {} precedes creation {}",
                self.load_id, self.est_arr_date, self.load_creation_date
            )));
        }
        for (name, value) in WORKLOAD_FIELDS.iter().zip(self.workload()) {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::Contract(format!(
                    "load {}: {name} = {value} is not a finite nonnegative number",
                    self.load_id
                )));
            }
        }
        if let Some(t) = self.est_arr_time {
            if t >= 24 * 60 {
                return Err(Error::Contract(format!(
                    "load {}: est_arr_time {t} is not a minute of the day",
                    self.load_id
                )));
            }
        }
        topology.building_index(&self.pln_dest_building)?;
        topology.sort_index(&self.pln_dest_sort)?;
        if let Some(b) = &self.actual_building {
            topology.building_index(b)?;
        }
        if let Some(s) = &self.actual_sort {
            topology.sort_index(s)?;
        }
        Ok(())
    }
}

/// Declared buildings, sorts and cluster membership of the destination network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub buildings: Vec<String>,
    pub sorts: Vec<String>,
    pub clusters: BTreeMap<String, Vec<String>>,
}

impl Default for Topology {
    fn default() -> Self {
        let b = |i: usize| format!("B{i}");
        let mut clusters = BTreeMap::new();
        clusters.insert("C1".to_string(), (1..=3).map(b).collect());
        clusters.insert("C2".to_string(), (4..=6).map(b).collect());
        Self {
            buildings: (1..=6).map(b).collect(),
            sorts: vec!["S1".into(), "S2".into(), "S3".into()],
            clusters,
        }
    }
}

impl Topology {
    pub fn n_buildings(&self) -> usize {
        self.buildings.len()
    }

    pub fn n_sorts(&self) -> usize {
        self.sorts.len()
    }

    pub fn building_index(&self, name: &str) -> Result<usize> {
        self.buildings
            .iter()
            .position(|b| b == name)
            .ok_or_else(|| Error::Vocabulary {
                kind: "building",
                value: name.to_string(),
            })
    }

    pub fn sort_index(&self, name: &str) -> Result<usize> {
        self.sorts
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| Error::Vocabulary {
                kind: "sort",
                value: name.to_string(),
            })
    }

    pub fn cluster_members(&self, cluster: &str) -> Result<&[String]> {
        self.clusters
            .get(cluster)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Vocabulary {
                kind: "cluster",
                value: cluster.to_string(),
            })
    }

    pub fn cluster_of(&self, building: &str) -> Result<&str> {
        self.clusters
            .iter()
            .find(|(_, members)| members.iter().any(|m| m == building))
            .map(|(c, _)| c.as_str())
            .ok_or_else(|| Error::Vocabulary {
                kind: "building",
                value: building.to_string(),
            })
    }

    pub fn validate(&self) -> Result<()> {
        if self.buildings.is_empty() || self.sorts.is_empty() {
            return Err(Error::Config("topology needs buildings and sorts".into()));
        }
        let mut seen = 0;
        for members in self.clusters.values() {
            for m in members {
                self.building_index(m)?;
                seen += 1;
            }
        }
        if seen != self.buildings.len() {
            return Err(Error::Config(
                "every building must belong to exactly one cluster".into(),
            ));
        }
        Ok(())
    }
}

pub fn read_records<R: Read>(reader: R) -> Result<Vec<LoadRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn write_records<W: Write>(writer: W, records: &[LoadRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for r in records {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_records_path(path: impl AsRef<Path>) -> Result<Vec<LoadRecord>> {
    read_records(std::fs::File::open(path)?)
}

pub fn write_records_path(path: impl AsRef<Path>, records: &[LoadRecord]) -> Result<()> {
    write_records(std::io::BufWriter::new(std::fs::File::create(path)?), records)
}

#[cfg(test)]
pub(crate) fn sample_record(id: usize) -> LoadRecord {
    LoadRecord {
        load_id: format!("L{id}"),
        org_building: "O1".into(),
        org_sort: "OS1".into(),
        pln_dest_cluster: "C1".into(),
        pln_dest_building: "B1".into(),
        pln_dest_sort: "S1".into(),
        pln_volume: 1000.0,
        pln_pph: 50.0,
        pln_payroll: 20.0,
        pln_work_staff: 18.0,
        pln_runtime: 8.0,
        pln_process_rate: 125.0,
        pln_fph: 900.0,
        pln_unload_span: 6.0,
        load_volume: 300.0,
        load_creation_date: NaiveDate::from_ymd_opt(2023, 1, 1).unwrap(),
        est_arr_date: NaiveDate::from_ymd_opt(2023, 1, 4).unwrap(),
        est_arr_time: Some(300),
        actual_building: Some("B1".into()),
        actual_sort: Some("S1".into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_header_uses_field_names() {
        let mut buf = Vec::new();
        write_records(&mut buf, &[sample_record(0)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let header = text.lines().next().unwrap();
        assert!(header.starts_with("load_id,org_building,org_sort,pln_dest_cluster"));
        assert!(header.ends_with("est_arr_date,est_arr_time,actual_building,actual_sort"));
        assert!(text.contains("2023-01-04"));
    }

    #[test]
    fn missing_arrival_time_and_labels_parse_as_none() {
        let mut r = sample_record(1);
        r.est_arr_time = None;
        r.actual_building = None;
        r.actual_sort = None;
        let mut buf = Vec::new();
        write_records(&mut buf, &[r.clone()]).unwrap();
        let back = read_records(buf.as_slice()).unwrap();
        assert_eq!(back, vec![r]);
    }

    #[test]
    fn validation_catches_invariant_breaks() {
        let topo = Topology::default();
        sample_record(0).validate(&topo).unwrap();

        let mut r = sample_record(0);
        r.pln_dest_building = "B5".into();
        assert!(matches!(r.validate(&topo), Err(Error::Contract(_))));

        let mut r = sample_record(0);
        r.est_arr_date = NaiveDate::from_ymd_opt(2022, 12, 1).unwrap();
        assert!(r.validate(&topo).is_err());

        let mut r = sample_record(0);
        r.pln_fph = f64::NAN;
        assert!(r.validate(&topo).is_err());

        let mut r = sample_record(0);
        r.actual_sort = Some("S9".into());
        assert!(matches!(r.validate(&topo), Err(Error::Vocabulary { .. })));
    }

    #[test]
    fn default_topology_is_consistent() {
        let t = Topology::default();
        t.validate().unwrap();
        assert_eq!(t.cluster_of("B5").unwrap(), "C2");
        assert_eq!(t.n_buildings(), 6);
        assert_eq!(t.n_sorts(), 3);
    }
}
