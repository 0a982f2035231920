use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::data::Topology;
use crate::error::{Error, Result};

/// Operating window of one sort, in minutes since midnight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SortWindow {
    pub name: String,
    pub start_minute: u32,
    pub end_minute: u32,
}

impl SortWindow {
    pub fn new(name: &str, start_minute: u32, end_minute: u32) -> Self {
        Self {
            name: name.into(),
            start_minute,
            end_minute,
        }
    }

    pub fn length(&self) -> f64 {
        f64::from(self.end_minute - self.start_minute)
    }
}

/// Everything the synthetic generator is parameterized by. Shares are over
/// actual (processed) loads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_loads: usize,
    pub seed: u64,
    pub external_shift_rate: f64,
    pub internal_shift_rate: f64,
    /// Fraction of all loads that shift to a building in another cluster.
    pub cross_cluster_rate: f64,
    pub buildings: Vec<String>,
    pub building_shares: Vec<f64>,
    /// building → cluster.
    pub cluster_map: BTreeMap<String, String>,
    /// In processing order; a late load moves to the next entry, wrapping.
    pub sorts: Vec<SortWindow>,
    pub sort_shares: Vec<f64>,
    /// Daily volume on Saturday and Sunday relative to a weekday.
    pub weekend_activity: f64,
    pub start_date: NaiveDate,
    pub date_span_days: u32,
    /// Std of true arrival time around the time planned a week ahead.
    pub arrival_noise_week_std: f64,
    /// Mean latent utilization per building.
    pub utilization_mean: Vec<f64>,
    pub utilization_std: f64,
    /// Per-load noise added to utilization before the capacity test.
    pub trigger_noise_std: f64,
    /// Relative noise on the planned-workload features.
    pub feature_noise: f64,
    pub n_origin_buildings: usize,
    pub n_origin_sorts: usize,
    pub creation_lead_days: (u32, u32),
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        let buildings: Vec<String> = (1..=6).map(|i| format!("B{i}")).collect();
        let cluster_map = buildings
            .iter()
            .enumerate()
            .map(|(i, b)| (b.clone(), if i < 3 { "C1" } else { "C2" }.to_string()))
            .collect();
        Self {
            n_loads: 50_000,
            seed: 0,
            external_shift_rate: 0.02,
            internal_shift_rate: 0.10,
            cross_cluster_rate: 0.0005,
            buildings,
            building_shares: vec![0.41, 0.21, 0.095, 0.095, 0.095, 0.095],
            cluster_map,
            sorts: vec![
                SortWindow::new("S1", 60, 480),
                SortWindow::new("S2", 480, 780),
                SortWindow::new("S3", 780, 1200),
            ],
            sort_shares: vec![0.415, 0.17, 0.415],
            weekend_activity: 0.02,
            start_date: NaiveDate::from_ymd_opt(2022, 9, 1).expect("valid date"),
            date_span_days: 480,
            arrival_noise_week_std: 240.0,
            utilization_mean: vec![0.85, 0.8, 0.72, 0.82, 0.8, 0.72],
            utilization_std: 0.1,
            trigger_noise_std: 0.03,
            feature_noise: 0.01,
            n_origin_buildings: 329,
            n_origin_sorts: 8,
            creation_lead_days: (7, 13),
        }
    }
}

fn check_shares(name: &str, shares: &[f64], expected_len: usize) -> Result<()> {
    if shares.len() != expected_len {
        return Err(Error::Config(format!(
            "{name}: {} entries for {expected_len} classes",
            shares.len()
        )));
    }
    if shares.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::Config(format!("{name}: shares must be nonnegative")));
    }
    let total: f64 = shares.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("{name}: shares sum to {total}, not 1")));
    }
    Ok(())
}

fn check_fraction(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::Config(format!("{name} = {v} is not in [0, 1]")));
    }
    Ok(())
}

impl GeneratorConfig {
    /// No trigger or feature noise: labels are exact functions of what the
    /// models see (up to the unobserved redirect target).
    pub fn noiseless(n_loads: usize, seed: u64) -> Self {
        Self {
            n_loads,
            seed,
            trigger_noise_std: 0.0,
            feature_noise: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_loads == 0 {
            return Err(Error::Config("n_loads must be at least 1".into()));
        }
        if self.date_span_days == 0 {
            return Err(Error::Config("date_span_days must be at least 1".into()));
        }
        check_fraction("external_shift_rate", self.external_shift_rate)?;
        check_fraction("internal_shift_rate", self.internal_shift_rate)?;
        check_fraction("cross_cluster_rate", self.cross_cluster_rate)?;
        check_fraction("weekend_activity", self.weekend_activity)?;
        if self.cross_cluster_rate > self.external_shift_rate {
            return Err(Error::Config(
                "cross_cluster_rate cannot exceed external_shift_rate".into(),
            ));
        }
        check_shares("building_shares", &self.building_shares, self.buildings.len())?;
        check_shares("sort_shares", &self.sort_shares, self.sorts.len())?;
        if self.utilization_mean.len() != self.buildings.len() {
            return Err(Error::Config("utilization_mean needs one entry per building".into()));
        }
        for (name, v) in [
            ("arrival_noise_week_std", self.arrival_noise_week_std),
            ("utilization_std", self.utilization_std),
            ("trigger_noise_std", self.trigger_noise_std),
            ("feature_noise", self.feature_noise),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} must be finite and nonnegative")));
            }
        }
        if self.external_shift_rate > 0.0 && self.utilization_std + self.trigger_noise_std == 0.0 {
            return Err(Error::Config("external shifts need utilization or trigger noise".into()));
        }
        for w in &self.sorts {
            if w.start_minute >= w.end_minute || w.end_minute >= 24 * 60 {
                return Err(Error::Config(format!("sort {}: invalid window", w.name)));
            }
        }
        if self.n_origin_buildings == 0 || self.n_origin_sorts == 0 {
            return Err(Error::Config("origin vocabularies must be nonempty".into()));
        }
        if self.creation_lead_days.0 > self.creation_lead_days.1 {
            return Err(Error::Config("creation_lead_days must be (min, max)".into()));
        }
        let topology = self.topology()?;
        if self.external_shift_rate > 0.0 {
            for members in topology.clusters.values() {
                if members.len() < 2 {
                    return Err(Error::Config(
                        "external shifts need at least two buildings per cluster".into(),
                    ));
                }
            }
            if self.cross_cluster_rate > 0.0 && topology.clusters.len() < 2 {
                return Err(Error::Config("cross-cluster shifts need two clusters".into()));
            }
        }
        Ok(())
    }

    pub fn topology(&self) -> Result<Topology> {
        let mut clusters: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for b in &self.buildings {
            let c = self
                .cluster_map
                .get(b)
                .ok_or_else(|| Error::Config(format!("building {b} has no cluster")))?;
            clusters.entry(c.clone()).or_default().push(b.clone());
        }
        if self.cluster_map.len() != self.buildings.len() {
            return Err(Error::Config("cluster_map names unknown buildings".into()));
        }
        let t = Topology {
            buildings: self.buildings.clone(),
            sorts: self.sorts.iter().map(|w| w.name.clone()).collect(),
            clusters,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
