use chrono::{Datelike, Duration, Weekday};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::LoadRecord;
use crate::error::{Error, Result};
use crate::synth::config::{GeneratorConfig, SortWindow};

const LAST_MINUTE: f64 = 1439.0;
const CELL_VOLUME: f64 = 40_000.0;
const HOURLY_WAGE: f64 = 21.5;

/// Quantities derived from the configured rates before any sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPlan {
    /// Minutes after a sort's end before an arriving load rolls to the next sort.
    pub grace_minutes: f64,
    /// Per-sort probability that a load planned there arrives late.
    pub lateness: Vec<f64>,
    /// Planned-sort shares that yield the configured actual shares.
    pub planned_sort_shares: Vec<f64>,
    /// Standardized utilization excess that triggers an external shift.
    pub external_threshold: f64,
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// P(arrival > end + grace) when the planned time is uniform over the window
/// and the true arrival adds N(0, std²) noise, clipped to the day.
pub fn lateness_probability(window: &SortWindow, grace: f64, std: f64) -> f64 {
    let cutoff = f64::from(window.end_minute) + grace;
    if cutoff >= LAST_MINUTE {
        return 0.0;
    }
    let (start, len) = (f64::from(window.start_minute), window.length());
    if std == 0.0 {
        return ((start + len - cutoff.max(start)) / len).clamp(0.0, 1.0);
    }
    const STEPS: usize = 512;
    let n = std_normal();
    (0..STEPS)
        .map(|i| {
            let t = start + len * (i as f64 + 0.5) / STEPS as f64;
            n.sf((cutoff - t) / std)
        })
        .sum::<f64>()
        / STEPS as f64
}

/// Solves for planned shares p with M p = actual, where a fraction `late[j]`
/// of sort j rolls into sort j+1 (wrapping).
fn planned_shares(actual: &[f64], late: &[f64]) -> Result<Vec<f64>> {
    let n = actual.len();
    let mut m = vec![vec![0.0; n + 1]; n];
    for j in 0..n {
        m[j][j] += 1.0 - late[j];
        m[(j + 1) % n][j] += late[j];
    }
    for (i, row) in m.iter_mut().enumerate() {
        row[n] = actual[i];
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .expect("nonempty");
        if m[pivot][col].abs() < 1e-12 {
            return Err(Error::Config("sort shares cannot be reached with this lateness".into()));
        }
        m.swap(col, pivot);
        for r in 0..n {
            if r != col {
                let f = m[r][col] / m[col][col];
                for c in col..=n {
                    m[r][c] -= f * m[col][c];
                }
            }
        }
    }
    Ok((0..n).map(|i| m[i][n] / m[i][i]).collect())
}

impl LatentPlan {
    pub fn solve(config: &GeneratorConfig) -> Result<Self> {
        let std = config.arrival_noise_week_std;
        let n_sorts = config.sorts.len();
        let evaluate = |grace: f64| -> Result<(Vec<f64>, Vec<f64>, f64)> {
            let late: Vec<f64> = config
                .sorts
                .iter()
                .map(|w| lateness_probability(w, grace, std))
                .collect();
            let p = planned_shares(&config.sort_shares, &late)?;
            let rate = p.iter().zip(&late).map(|(a, b)| a * b).sum();
            Ok((late, p, rate))
        };
        let target = if config.internal_shift_rate == 0.0 {
            0.0
        } else if n_sorts < 2 || config.external_shift_rate >= 1.0 {
            return Err(Error::Config("internal shifts need two sorts and a non-shifted remainder".into()));
        } else {
            config.internal_shift_rate / (1.0 - config.external_shift_rate)
        };
        let grace = if target == 0.0 {
            LAST_MINUTE
        } else {
            let longest = config.sorts.iter().map(SortWindow::length).fold(0.0, f64::max);
            let (mut lo, mut hi) = (-longest, LAST_MINUTE);
            if evaluate(lo)?.2 < target {
                return Err(Error::Config(format!(
                    "internal_shift_rate {} is unreachable with these sort windows",
                    config.internal_shift_rate
                )));
            }
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if evaluate(mid)?.2 > target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let g = 0.5 * (lo + hi);
            // Rates jump where a cutoff reaches the end of the day.
            if (evaluate(g)?.2 - target).abs() > 1e-6 {
                return Err(Error::Config(format!(
                    "internal_shift_rate {} falls in a gap of the lateness curve; move the sort windows",
                    config.internal_shift_rate
                )));
            }
            g
        };
        let (lateness, mut planned, _) = evaluate(grace)?;
        if planned.iter().any(|&p| p < -1e-9) {
            return Err(Error::Config(
                "sort shares are infeasible under the internal-shift rate".into(),
            ));
        }
        for p in &mut planned {
            *p = p.max(0.0);
        }
        let spread = config.utilization_std.hypot(config.trigger_noise_std);
        let external_threshold = match config.external_shift_rate {
            r if r <= 0.0 => f64::INFINITY,
            r if r >= 1.0 => f64::NEG_INFINITY,
            r => std_normal().inverse_cdf(1.0 - r) * spread,
        };
        Ok(Self {
            grace_minutes: grace,
            lateness,
            planned_sort_shares: planned,
            external_threshold,
        })
    }
}

fn jitter(rng: &mut ChaCha8Rng, scale: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    (1.0 + scale * z).max(0.0)
}

fn least_utilized(candidates: &[usize], utilization: impl Fn(usize) -> f64) -> Option<usize> {
    candidates
        .iter()
        .copied()
        .min_by(|&a, &b| utilization(a).total_cmp(&utilization(b)).then(a.cmp(&b)))
}

/// Draws a labeled synthetic dataset. Output depends only on the config.
pub fn generate(config: &GeneratorConfig) -> Result<Vec<LoadRecord>> {
    config.validate()?;
    let topology = config.topology()?;
    let plan = LatentPlan::solve(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let n_b = config.buildings.len();
    let n_s = config.sorts.len();
    let days: Vec<_> = (0..config.date_span_days)
        .map(|d| config.start_date + Duration::days(i64::from(d)))
        .collect();
    let day_weights: Vec<f64> = days
        .iter()
        .map(|d| match d.weekday() {
            Weekday::Sat | Weekday::Sun => config.weekend_activity,
            _ => 1.0,
        })
        .collect();
    let bad = |e: rand::distr::weighted::Error| Error::Config(format!("sampling weights: {e}"));
    let day_dist = WeightedIndex::new(&day_weights).map_err(bad)?;
    let building_dist = WeightedIndex::new(&config.building_shares).map_err(bad)?;
    let sort_dist = WeightedIndex::new(&plan.planned_sort_shares).map_err(bad)?;

    let z: Vec<f64> = (0..days.len() * n_b * n_s).map(|_| rng.sample(StandardNormal)).collect();
    let cell = |d: usize, b: usize, s: usize| (d * n_b + b) * n_s + s;
    let utilization = |d: usize, b: usize, s: usize| {
        config.utilization_mean[b] + config.utilization_std * z[cell(d, b, s)]
    };

    let cluster_of: Vec<&str> = config
        .buildings
        .iter()
        .map(|b| topology.cluster_of(b))
        .collect::<Result<_>>()?;
    let max_share = config.building_shares.iter().copied().fold(0.0, f64::max);
    let cross_given_external = if config.external_shift_rate > 0.0 {
        config.cross_cluster_rate / config.external_shift_rate
    } else {
        0.0
    };

    let mut records = Vec::with_capacity(config.n_loads);
    for i in 0..config.n_loads {
        let d = day_dist.sample(&mut rng);
        let b = building_dist.sample(&mut rng);
        let s = sort_dist.sample(&mut rng);
        let origin_b = rng.random_range(0..config.n_origin_buildings);
        let origin_s = rng.random_range(0..config.n_origin_sorts);
        let lead = rng.random_range(config.creation_lead_days.0..=config.creation_lead_days.1);
        let window = &config.sorts[s];
        let planned_time = rng.random_range(f64::from(window.start_minute)..f64::from(window.end_minute));
        let delay: f64 = rng.sample(StandardNormal);
        let trigger: f64 = rng.sample(StandardNormal);
        let cross_coin: f64 = rng.random();

        let arrival = (planned_time + config.arrival_noise_week_std * delay)
            .round()
            .clamp(0.0, LAST_MINUTE);
        let late = arrival > f64::from(window.end_minute) + plan.grace_minutes;
        let actual_sort = if late { (s + 1) % n_s } else { s };

        let excess = config.utilization_std * z[cell(d, b, s)] + config.trigger_noise_std * trigger;
        let actual_building = if excess > plan.external_threshold {
            let cross = cross_coin < cross_given_external;
            let candidates: Vec<usize> = (0..n_b)
                .filter(|&o| o != b && (cluster_of[o] == cluster_of[b]) != cross)
                .collect();
            least_utilized(&candidates, |o| utilization(d, o, s)).unwrap_or(b)
        } else {
            b
        };

        let u = utilization(d, b, s).max(0.05);
        let capacity = config.building_shares[b] / max_share;
        let f = config.feature_noise;
        let pln_volume = CELL_VOLUME * capacity * u * jitter(&mut rng, f);
        let pln_runtime = window.length() / 60.0 * jitter(&mut rng, f);
        let pln_pph = pln_volume / pln_runtime.max(1e-9);
        let pln_process_rate = (90.0 + 8.0 * b as f64) * jitter(&mut rng, f);
        let pln_work_staff = pln_pph / pln_process_rate.max(1e-9);
        let pln_payroll = pln_work_staff * pln_runtime * HOURLY_WAGE * jitter(&mut rng, f);
        let pln_fph = 0.12 * pln_work_staff * jitter(&mut rng, f);
        let pln_unload_span = pln_runtime * (0.6 + 0.4 * u.min(1.5)) * jitter(&mut rng, f);
        let load_volume = 1200.0 * (0.35 * rng.sample::<f64, _>(StandardNormal)).exp();

        let date = days[d];
        records.push(LoadRecord {
            load_id: format!("L{:07}", i + 1),
            org_building: format!("O{:03}", origin_b + 1),
            org_sort: format!("OS{}", origin_s + 1),
            pln_dest_cluster: cluster_of[b].to_string(),
            pln_dest_building: config.buildings[b].clone(),
            pln_dest_sort: window.name.clone(),
            pln_volume,
            pln_pph,
            pln_payroll,
            pln_work_staff,
            pln_runtime,
            pln_process_rate,
            pln_fph,
            pln_unload_span,
            load_volume,
            load_creation_date: date - Duration::days(i64::from(lead)),
            est_arr_date: date,
            est_arr_time: Some(arrival as u32),
            actual_building: Some(config.buildings[actual_building].clone()),
            actual_sort: Some(config.sorts[actual_sort].name.clone()),
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{record_shift_class, write_records, ShiftClass};

    #[test]
    fn planned_shares_invert_the_flow() {
        let late = [0.1, 0.2, 0.05];
        let actual = [0.415, 0.17, 0.415];
        let p = planned_shares(&actual, &late).unwrap();
        for i in 0..3 {
            let prev = (i + 2) % 3;
            let got = p[i] * (1.0 - late[i]) + p[prev] * late[prev];
            assert!((got - actual[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn lateness_without_noise_is_geometric() {
        let w = SortWindow::new("S", 100, 200);
        assert!((lateness_probability(&w, -25.0, 0.0) - 0.25).abs() < 1e-12);
        assert_eq!(lateness_probability(&w, 10.0, 0.0), 0.0);
        assert_eq!(lateness_probability(&SortWindow::new("S", 1000, 1400), 60.0, 100.0), 0.0);
    }

    #[test]
    fn latent_plan_hits_internal_rate() {
        let c = GeneratorConfig::default();
        let plan = LatentPlan::solve(&c).unwrap();
        let rate: f64 = plan
            .planned_sort_shares
            .iter()
            .zip(&plan.lateness)
            .map(|(p, r)| p * r)
            .sum();
        assert!((rate * (1.0 - c.external_shift_rate) - c.internal_shift_rate).abs() < 1e-9);
        assert!((plan.planned_sort_shares.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn same_seed_same_bytes() {
        let c = GeneratorConfig {
            n_loads: 300,
            seed: 5,
            ..Default::default()
        };
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_records(&mut a, &generate(&c).unwrap()).unwrap();
        write_records(&mut b, &generate(&c).unwrap()).unwrap();
        assert_eq!(a, b);
        let other = GeneratorConfig { seed: 6, ..c };
        let mut o = Vec::new();
        write_records(&mut o, &generate(&other).unwrap()).unwrap();
        assert_ne!(a, o);
    }

    #[test]
    fn records_are_valid_and_shifts_follow_rules() {
        let c = GeneratorConfig {
            n_loads: 4000,
            seed: 1,
            ..Default::default()
        };
        let t = c.topology().unwrap();
        let plan = LatentPlan::solve(&c).unwrap();
        for r in generate(&c).unwrap() {
            r.validate(&t).unwrap();
            let s = t.sort_index(&r.pln_dest_sort).unwrap();
            let late = f64::from(r.est_arr_time.unwrap())
                > f64::from(c.sorts[s].end_minute) + plan.grace_minutes;
            let expected_sort = if late { (s + 1) % 3 } else { s };
            assert_eq!(r.actual_sort.as_deref(), Some(t.sorts[expected_sort].as_str()));
            if record_shift_class(&t, &r).unwrap() == ShiftClass::ExternalShift {
                assert_ne!(r.actual_building, Some(r.pln_dest_building.clone()));
            }
        }
    }

    #[test]
    fn no_shift_rates_produce_no_shifts() {
        let c = GeneratorConfig {
            n_loads: 500,
            external_shift_rate: 0.0,
            internal_shift_rate: 0.0,
            cross_cluster_rate: 0.0,
            ..Default::default()
        };
        let t = c.topology().unwrap();
        for r in generate(&c).unwrap() {
            assert_eq!(record_shift_class(&t, &r).unwrap(), ShiftClass::NoShift);
        }
    }
}
