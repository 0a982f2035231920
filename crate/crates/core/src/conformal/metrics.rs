use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::conformal::raps::PredictionSet;
use crate::data::ShiftClass;
use crate::error::{Error, Result};

pub fn coverage(sets: &[PredictionSet], labels: &[usize]) -> Result<f64> {
    check_len(sets.len(), labels.len())?;
    let hits = sets.iter().zip(labels).filter(|(s, &y)| s.contains(y)).count();
    Ok(hits as f64 / sets.len().max(1) as f64)
}

pub fn efficiency(sets: &[PredictionSet]) -> f64 {
    sets.iter().map(PredictionSet::len).sum::<usize>() as f64 / sets.len().max(1) as f64
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::shape(format!("{a} entries"), b));
    }
    Ok(())
}

/// Raw counts behind coverage and efficiency for one group of rows.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SetStats {
    pub n: usize,
    pub covered: usize,
    pub total_size: usize,
}

impl SetStats {
    pub fn coverage(&self) -> f64 {
        self.covered as f64 / self.n as f64
    }

    pub fn efficiency(&self) -> f64 {
        self.total_size as f64 / self.n as f64
    }

    fn add(&mut self, set: &PredictionSet, label: usize) {
        self.n += 1;
        self.covered += usize::from(set.contains(label));
        self.total_size += set.len();
    }
}

/// Coverage/efficiency counts per shift class.
pub fn conditional(
    sets: &[PredictionSet],
    labels: &[usize],
    classes: &[ShiftClass],
) -> Result<BTreeMap<ShiftClass, SetStats>> {
    check_len(sets.len(), labels.len())?;
    check_len(sets.len(), classes.len())?;
    let mut out: BTreeMap<ShiftClass, SetStats> = BTreeMap::new();
    for ((s, &y), &c) in sets.iter().zip(labels).zip(classes) {
        out.entry(c).or_default().add(s, y);
    }
    Ok(out)
}

pub fn overall(sets: &[PredictionSet], labels: &[usize]) -> Result<SetStats> {
    check_len(sets.len(), labels.len())?;
    let mut s = SetStats::default();
    for (set, &y) in sets.iter().zip(labels) {
        s.add(set, y);
    }
    Ok(s)
}
