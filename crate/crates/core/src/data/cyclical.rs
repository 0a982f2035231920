//! Sine/cosine encoding of periodic calendar components.

use std::f64::consts::TAU;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maps `g` in `[0, period)` onto the unit circle.
///
/// The angle is `2πg / period`, so the last value of a cycle sits one step
/// before the first (December next to January, Sunday next to Monday)
/// instead of colliding with it.
pub fn cyclical_encode(g: u32, period: u32) -> Result<(f64, f64)> {
    if period == 0 {
        return Err(Error::Config("cyclical period must be positive".into()));
    }
    if g >= period {
        return Err(Error::Contract(format!(
            "cyclical component {g} outside [0, {period})"
        )));
    }
    let angle = TAU * f64::from(g) / f64::from(period);
    Ok(angle.sin_cos())
}

/// Calendar components a date is decomposed into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemporalComponent {
    /// Monday = 0 .. Sunday = 6.
    Weekday,
    /// ISO week number minus one, 0..=52.
    Week,
    /// January = 0 .. December = 11.
    Month,
}

impl TemporalComponent {
    pub const ALL: [TemporalComponent; 3] = [
        TemporalComponent::Weekday,
        TemporalComponent::Week,
        TemporalComponent::Month,
    ];

    pub fn period(self) -> u32 {
        match self {
            TemporalComponent::Weekday => 7,
            TemporalComponent::Week => 53,
            TemporalComponent::Month => 12,
        }
    }

    pub fn extract(self, date: NaiveDate) -> u32 {
        match self {
            TemporalComponent::Weekday => date.weekday().num_days_from_monday(),
            TemporalComponent::Week => date.iso_week().week0(),
            TemporalComponent::Month => date.month0(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TemporalComponent::Weekday => "weekday",
            TemporalComponent::Week => "week",
            TemporalComponent::Month => "month",
        }
    }

    pub fn encode(self, date: NaiveDate) -> (f64, f64) {
        // extract() always lands inside the period.
        cyclical_encode(self.extract(date), self.period()).expect("component within period")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_angle() {
        let (s, c) = cyclical_encode(0, 7).unwrap();
        assert_eq!(s, 0.0);
        assert_eq!(c, 1.0);
    }

    #[test]
    fn quarter_period() {
        for period in [4u32, 12, 52, 400] {
            let (s, c) = cyclical_encode(period / 4, period).unwrap();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(c.abs() < 1e-12);
        }
    }

    #[test]
    fn sunday_is_one_step_from_monday() {
        let a = cyclical_encode(6, 7).unwrap();
        let b = cyclical_encode(0, 7).unwrap();
        assert_ne!(a, b);
        let dot = a.0 * b.0 + a.1 * b.1;
        assert!((dot.acos() - TAU / 7.0).abs() < 1e-12);
    }

    #[test]
    fn bad_period_or_component() {
        assert!(matches!(cyclical_encode(0, 0), Err(Error::Config(_))));
        assert!(cyclical_encode(7, 7).is_err());
    }

    #[test]
    fn calendar_extraction() {
        let d = NaiveDate::from_ymd_opt(2023, 12, 31).unwrap(); // Sunday
        assert_eq!(TemporalComponent::Weekday.extract(d), 6);
        assert_eq!(TemporalComponent::Month.extract(d), 11);
        assert!(TemporalComponent::Week.extract(d) < 53);
        let d = NaiveDate::from_ymd_opt(2020, 12, 31).unwrap(); // ISO week 53
        assert_eq!(TemporalComponent::Week.extract(d), 52);
    }

    #[test]
    fn every_used_pair_is_on_the_unit_circle() {
        for comp in TemporalComponent::ALL {
            for g in 0..comp.period() {
                let (s, c) = cyclical_encode(g, comp.period()).unwrap();
                assert!((s * s + c * c - 1.0).abs() < 1e-12);
            }
        }
    }
}
