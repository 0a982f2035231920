use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::data::record::LoadRecord;
use crate::error::{Error, Result};

/// Disjoint index sets into the record list a split was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSplits {
    pub horizon: usize,
    pub test_start: NaiveDate,
    pub test_end: NaiveDate,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub calibration: Vec<usize>,
    pub test: Vec<usize>,
}

impl DataSplits {
    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.calibration.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Temporal split for experiment `horizon` (1 = most recent test window).
///
/// Records are ordered by arrival date. The test set is the
/// `test_window_days` window ending `(horizon - 1)` windows before the last
/// date; anything after it is excluded. Everything before the window is cut
/// contiguously into train (earliest 80%), validation (10%) and calibration
/// (latest 10%, adjacent to test).
pub fn temporal_split(
    records: &[LoadRecord],
    horizon: usize,
    test_window_days: u32,
) -> Result<DataSplits> {
    if horizon == 0 {
        return Err(Error::Config("horizon must be >= 1".into()));
    }
    if test_window_days == 0 {
        return Err(Error::Config("test window must be >= 1 day".into()));
    }
    let last = records
        .iter()
        .map(|r| r.est_arr_date)
        .max()
        .ok_or_else(|| Error::Split("no records".into()))?;

    let window = i64::from(test_window_days);
    let test_end = last - Duration::days(window * (horizon as i64 - 1));
    let test_start = test_end - Duration::days(window - 1);

    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by_key(|&i| (records[i].est_arr_date, i));

    let mut earlier = Vec::new();
    let mut test = Vec::new();
    for i in order {
        let d = records[i].est_arr_date;
        if d < test_start {
            earlier.push(i);
        } else if d <= test_end {
            test.push(i);
        }
    }

    let n = earlier.len();
    let n_val = n / 10;
    let n_cal = n / 10;
    let n_train = n - n_val - n_cal;
    if n_train == 0 || n_val == 0 || n_cal == 0 || test.is_empty() {
        return Err(Error::Split(format!(
            "horizon {horizon}: need four non-empty splits, got train {n_train}, \
             validation {n_val}, calibration {n_cal}, test {}",
            test.len()
        )));
    }
    let calibration = earlier.split_off(n_train + n_val);
    let validation = earlier.split_off(n_train);
    Ok(DataSplits {
        horizon,
        test_start,
        test_end,
        train: earlier,
        validation,
        calibration,
        test,
    })
}

pub fn gather<T: Clone>(items: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| items[i].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::record::sample_record;
    use proptest::prelude::*;

    fn day(offset: i64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2023, 1, 1).unwrap() + Duration::days(offset)
    }

    /// Records with the given day offsets, stored in the given order.
    fn dated(days: &[i64]) -> Vec<LoadRecord> {
        days.iter()
            .enumerate()
            .map(|(i, &d)| {
                let mut r = sample_record(i);
                r.load_creation_date = day(d);
                r.est_arr_date = day(d);
                r
            })
            .collect()
    }

    #[test]
    fn hundred_records_ten_windows() {
        // One record per day, ten-day windows, shuffled storage order.
        let mut days: Vec<i64> = (0..100).collect();
        days.reverse();
        let recs = dated(&days);
        let s = temporal_split(&recs, 1, 10).unwrap();

        // Oracle: position p in date order is stored at index 99 - p.
        let at = |p: usize| 99 - p;
        assert_eq!(s.test, (90..100).map(at).collect::<Vec<_>>());
        assert_eq!(s.train, (0..72).map(at).collect::<Vec<_>>());
        assert_eq!(s.validation, (72..81).map(at).collect::<Vec<_>>());
        assert_eq!(s.calibration, (81..90).map(at).collect::<Vec<_>>());
    }

    #[test]
    fn second_horizon_moves_test_back_one_window() {
        let days: Vec<i64> = (0..100).collect();
        let recs = dated(&days);
        let s = temporal_split(&recs, 2, 10).unwrap();
        assert_eq!(s.test, (80..90).collect::<Vec<_>>());
        assert_eq!(s.train.len() + s.validation.len() + s.calibration.len(), 80);
        assert_eq!(s.len(), 90, "records after the test window are excluded");
        assert!(s.train.iter().chain(&s.test).all(|&i| i < 90));
    }

    #[test]
    fn single_date_is_a_split_error() {
        let recs = dated(&[5; 30]);
        assert!(matches!(temporal_split(&recs, 1, 7), Err(Error::Split(_))));
        assert!(matches!(temporal_split(&[], 1, 7), Err(Error::Split(_))));
    }

    proptest! {
        #[test]
        fn splits_are_disjoint_and_time_ordered(
            days in proptest::collection::vec(0i64..200, 40..300),
            horizon in 1usize..3,
        ) {
            let recs = dated(&days);
            let Ok(s) = temporal_split(&recs, horizon, 20) else { return Ok(()); };
            let mut all: Vec<usize> = s.train.iter().chain(&s.validation).chain(&s.calibration).chain(&s.test).copied().collect();
            let n = all.len();
            all.sort();
            all.dedup();
            prop_assert_eq!(all.len(), n);
            let date = |i: &usize| recs[*i].est_arr_date;
            let max_train = s.train.iter().map(date).max().unwrap();
            let min_val = s.validation.iter().map(date).min().unwrap();
            let max_val = s.validation.iter().map(date).max().unwrap();
            let min_cal = s.calibration.iter().map(date).min().unwrap();
            let max_cal = s.calibration.iter().map(date).max().unwrap();
            let min_test = s.test.iter().map(date).min().unwrap();
            prop_assert!(max_train <= min_val);
            prop_assert!(max_val <= min_cal);
            prop_assert!(max_cal < min_test);
            // Exhaustive over the experiment window.
            let in_window = recs.iter().filter(|r| r.est_arr_date <= s.test_end).count();
            prop_assert_eq!(n, in_window);
        }
    }
}
