use serde::{Deserialize, Serialize};

use crate::data::record::{LoadRecord, Topology};
use crate::error::{Error, Result};

/// How the actual processing location of a load relates to its plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftClass {
    NoShift,
    InternalShift,
    ExternalShift,
}

impl ShiftClass {
    pub const ALL: [ShiftClass; 3] = [
        ShiftClass::NoShift,
        ShiftClass::InternalShift,
        ShiftClass::ExternalShift,
    ];

    /// Classifies vocabulary indices. A building change always wins over a
    /// sort change.
    pub fn from_indices(
        planned_building: usize,
        planned_sort: usize,
        actual_building: usize,
        actual_sort: usize,
    ) -> Self {
        if planned_building != actual_building {
            ShiftClass::ExternalShift
        } else if planned_sort != actual_sort {
            ShiftClass::InternalShift
        } else {
            ShiftClass::NoShift
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ShiftClass::NoShift => "no_shift",
            ShiftClass::InternalShift => "internal_shift",
            ShiftClass::ExternalShift => "external_shift",
        }
    }
}

impl std::fmt::Display for ShiftClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

pub fn derive_shift_class(
    topology: &Topology,
    planned_building: &str,
    planned_sort: &str,
    actual_building: &str,
    actual_sort: &str,
) -> Result<ShiftClass> {
    Ok(ShiftClass::from_indices(
        topology.building_index(planned_building)?,
        topology.sort_index(planned_sort)?,
        topology.building_index(actual_building)?,
        topology.sort_index(actual_sort)?,
    ))
}

/// Shift class of a labeled record.
pub fn record_shift_class(topology: &Topology, record: &LoadRecord) -> Result<ShiftClass> {
    let (Some(b), Some(s)) = (&record.actual_building, &record.actual_sort) else {
        return Err(Error::Contract(format!(
            "load {} has no actual building/sort",
            record.load_id
        )));
    };
    derive_shift_class(
        topology,
        &record.pln_dest_building,
        &record.pln_dest_sort,
        b,
        s,
    )
}
