use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PROBABILITY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RapsConfig {
    pub alpha: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_k_reg")]
    pub k_reg: usize,
}

fn default_lambda() -> f64 {
    0.001
}

fn default_k_reg() -> usize {
    2
}

impl RapsConfig {
    pub fn new(alpha: f64) -> Self {
        Self {
            alpha,
            lambda: default_lambda(),
            k_reg: default_k_reg(),
        }
    }

    pub fn building() -> Self {
        Self::new(0.01)
    }

    pub fn sort() -> Self {
        Self::new(0.05)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha {} not in [0, 1]", self.alpha)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda {} must be >= 0", self.lambda)));
        }
        Ok(())
    }

    pub fn target_coverage(&self) -> f64 {
        1.0 - self.alpha
    }
}

/// Label indices by descending probability, ties to the lower index.
pub fn rank_order(probs: ArrayView1<f64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    order
}

/// Cumulative mass of the top-p labels plus the rank penalty, for p = 1..=K.
fn penalized_cumsum(probs: ArrayView1<f64>, order: &[usize], config: &RapsConfig) -> Vec<f64> {
    let mut acc = 0.0;
    order
        .iter()
        .enumerate()
        .map(|(i, &label)| {
            acc += probs[label];
            acc + config.lambda * (i + 1).saturating_sub(config.k_reg) as f64
        })
        .collect()
}

pub fn check_probabilities(probs: ArrayView1<f64>) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::Probability("empty probability vector".into()));
    }
    if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::Probability(format!("negative or non-finite entry in {probs}")));
    }
    let total = probs.sum();
    if (total - 1.0).abs() > PROBABILITY_TOLERANCE {
        return Err(Error::Probability(format!("entries sum to {total}")));
    }
    Ok(())
}

/// Conformity score of the true label.
pub fn raps_score(probs: ArrayView1<f64>, true_label: usize, config: &RapsConfig) -> Result<f64> {
    check_probabilities(probs)?;
    if true_label >= probs.len() {
        return Err(Error::Contract(format!("label {true_label} >= K = {}", probs.len())));
    }
    let order = rank_order(probs);
    let rank = order.iter().position(|&l| l == true_label).expect("label present");
    Ok(penalized_cumsum(probs, &order, config)[rank])
}

/// Calibrated threshold; `tau_hat` may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RapsCalibration {
    pub config: RapsConfig,
    #[serde(with = "extended_float")]
    pub tau_hat: f64,
    pub n: usize,
}

/// Prediction set, labels in descending probability.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub labels: Vec<usize>,
}

impl PredictionSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn contains(&self, label: usize) -> bool {
        self.labels.contains(&label)
    }
}

/// 1-based order statistic used as the conformal quantile.
pub fn quantile_rank(n: usize, alpha: f64) -> usize {
    ((1.0 - alpha) * (n as f64 + 1.0) - 1e-9).ceil().max(1.0) as usize
}

/// The ⌈(1−α)(n+1)⌉-th smallest score, or +∞ when that exceeds n.
pub fn conformal_quantile(scores: &[f64], alpha: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Contract("empty calibration set".into()));
    }
    let k = quantile_rank(scores.len(), alpha);
    if k > scores.len() {
        return Ok(f64::INFINITY);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[k - 1])
}

pub fn calibrate(proba: &Array2<f64>, labels: &[usize], config: RapsConfig) -> Result<RapsCalibration> {
    config.validate()?;
    if proba.nrows() != labels.len() {
        return Err(Error::shape(format!("{} labels", proba.nrows()), labels.len()));
    }
    let scores = proba
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(row, &y)| raps_score(row, y, &config))
        .collect::<Result<Vec<_>>>()?;
    Ok(RapsCalibration {
        config,
        tau_hat: conformal_quantile(&scores, config.alpha)?,
        n: scores.len(),
    })
}

impl RapsCalibration {
    pub fn with_tau(config: RapsConfig, tau_hat: f64) -> Self {
        Self { config, tau_hat, n: 0 }
    }

    pub fn predict_set(&self, probs: ArrayView1<f64>) -> Result<PredictionSet> {
        check_probabilities(probs)?;
        let order = rank_order(probs);
        let qualifying = penalized_cumsum(probs, &order, &self.config)
            .iter()
            .filter(|&&v| v <= self.tau_hat)
            .count();
        let m = (qualifying + 1).min(order.len());
        Ok(PredictionSet {
            labels: order[..m].to_vec(),
        })
    }

    pub fn predict_sets(&self, proba: &Array2<f64>) -> Result<Vec<PredictionSet>> {
        proba.rows().into_iter().map(|r| self.predict_set(r)).collect()
    }
}

/// f64 that may be ±∞, stored in JSON as a number or "inf"/"-inf".
mod extended_float {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                _ => Err(serde::de::Error::custom(format!("bad float {t:?}"))),
            },
        }
    }
}
