use ndarray::Axis;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{EncodedMatrix, Stage};
use crate::embed::NumericEmbeddingSpec;
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState, BackboneSpec, Network, NetworkSpec, Parameterized, Registries};
use crate::predictor::early_stopping::{EarlyStopping, Verdict};

pub const N_BLOCKS_RANGE: (usize, usize) = (2, 10);
pub const D_BLOCK_RANGE: (usize, usize) = (64, 256);

/// Architecture of one cascade stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSpec {
    pub stage: Stage,
    pub backbone: BackboneSpec,
    pub numeric_embedding: NumericEmbeddingSpec,
}

impl StageSpec {
    pub fn new(stage: Stage, backbone: BackboneSpec, numeric_embedding: NumericEmbeddingSpec) -> Self {
        Self {
            stage,
            backbone,
            numeric_embedding,
        }
    }

    pub fn mlp_ql(stage: Stage) -> Self {
        Self::new(stage, BackboneSpec::default(), NumericEmbeddingSpec::of_kind("ql"))
    }

    /// Checks the tuned-parameter ranges.
    pub fn validate(&self) -> Result<()> {
        let b = &self.backbone;
        if !(N_BLOCKS_RANGE.0..=N_BLOCKS_RANGE.1).contains(&b.n_blocks) {
            return Err(Error::Config(format!("n_blocks {} outside {N_BLOCKS_RANGE:?}", b.n_blocks)));
        }
        if !(D_BLOCK_RANGE.0..=D_BLOCK_RANGE.1).contains(&b.d_block) {
            return Err(Error::Config(format!("d_block {} outside {D_BLOCK_RANGE:?}", b.d_block)));
        }
        Ok(())
    }

    pub fn network_spec(&self, m: &EncodedMatrix, n_classes: usize) -> Result<NetworkSpec> {
        if m.stage != self.stage {
            return Err(Error::Contract(format!(
                "{} spec given a {} matrix",
                self.stage, m.stage
            )));
        }
        Ok(NetworkSpec::for_matrix(
            m,
            n_classes,
            self.numeric_embedding.clone(),
            self.backbone.clone(),
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 20,
            patience: 5,
            batch_size: 256,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("max_epochs and batch_size must be positive".into()));
        }
        if self.patience > self.max_epochs {
            return Err(Error::Config("patience cannot exceed max_epochs".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingCurve {
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
}

pub struct TrainedStage {
    pub spec: StageSpec,
    pub network: Network,
    pub curve: TrainingCurve,
}

impl TrainedStage {
    pub fn best_validation_loss(&self) -> f64 {
        self.curve.validation_loss[self.curve.best_epoch - 1]
    }
}

/// Mini-batch Adam on cross-entropy with early stopping on validation loss.
/// Returns the parameters of the best validation epoch.
pub fn train_stage(
    spec: &StageSpec,
    train: &EncodedMatrix,
    validation: &EncodedMatrix,
    n_classes: usize,
    config: &TrainConfig,
) -> Result<TrainedStage> {
    train_stage_with(spec, train, validation, n_classes, config, &Registries::default())
}

pub fn train_stage_with(
    spec: &StageSpec,
    train: &EncodedMatrix,
    validation: &EncodedMatrix,
    n_classes: usize,
    config: &TrainConfig,
    registries: &Registries,
) -> Result<TrainedStage> {
    config.validate()?;
    if train.rows() == 0 || validation.rows() == 0 {
        return Err(Error::Split(format!("{}: empty train or validation matrix", spec.stage)));
    }
    let y = train.targets()?.to_vec();
    validation.targets()?;
    let net_spec = spec.network_spec(train, n_classes)?;
    let mut net = Network::build(
        net_spec,
        crate::embed::EmbeddingInit::Fit(train.numeric.view()),
        registries,
        config.seed,
    )?;
    let mut adam = AdamState::new(AdamConfig {
        learning_rate: config.learning_rate,
        ..AdamConfig::default()
    });
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..train.rows()).collect();
    let mut stopper = EarlyStopping::new(config.patience);
    let mut curve = TrainingCurve::default();
    let mut best = net.parameter_values();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (step, batch) in order.chunks(config.batch_size).enumerate() {
            let num = train.numeric.select(Axis(0), batch);
            let cat = train.categorical.select(Axis(0), batch);
            let labels: Vec<usize> = batch.iter().map(|&i| y[i]).collect();
            net.zero_grad();
            let loss = net.loss_and_backward(&num, &cat, &labels, true)?;
            if !loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    step,
                    reason: format!("loss is {loss}"),
                });
            }
            adam.step(&mut net.params_mut()).map_err(|e| match e {
                Error::Training { reason, .. } => Error::Training { epoch, step, reason },
                other => other,
            })?;
            total += loss * batch.len() as f64;
        }
        net.clear_cache();
        curve.train_loss.push(total / train.rows() as f64);
        let val = net.mean_loss(validation)?;
        if !val.is_finite() {
            return Err(Error::Training {
                epoch,
                step: 0,
                reason: format!("validation loss is {val}"),
            });
        }
        curve.validation_loss.push(val);
        match stopper.observe(val) {
            Verdict::Improved => best = net.parameter_values(),
            Verdict::Continue => {}
            Verdict::Stop => break,
        }
    }
    net.set_parameter_values(&best)?;
    curve.best_epoch = stopper.best_epoch().expect("at least one finite epoch");
    Ok(TrainedStage {
        spec: spec.clone(),
        network: net,
        curve,
    })
}
