//! Two-step training, validation-based checkpoint selection and the
//! deterministic epoch pipeline.
//!
//! Step 1 trains the backbone, the semantic heads and the classifier on
//! `L_c + λ₂ L_b` while the noise stream stays frozen. Step 2 trains every
//! parameter on the full objective.

pub mod adam;
pub mod data;
pub mod eval;
pub mod manifest;
pub mod objective;

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use adam::Adam;
pub use data::{load_sample, load_samples, DataOptions, Sample};
pub use eval::{evaluate, predict, Evaluation, SamplePrediction};
pub use manifest::{parse_manifest, read_manifest, write_manifest, Label, ManifestRecord, Quality, Split};
pub use objective::{batch_objective, sample_objective, LossWeights, SampleLoss, SampleTargets};

use crate::error::{Error, Result};
use crate::losses::{LossBundle, Reduction};
use crate::metrics::{roc_auc, ScoredSample};
use crate::net::{Backbone, Model};
use crate::nn::params::ParamGroup;
use crate::residual::NoiseFilter;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub batch_size: usize,
    pub epochs_step1: usize,
    pub epochs_step2: usize,
    pub seed: u64,
    /// Weight of the noise loss in step 2.
    pub lambda1: f64,
    /// Weight of the mask loss.
    pub lambda2: f64,
    /// Filter σ; unset means 5 for `hq` and 10 for `lq` records.
    pub sigma: Option<f64>,
    pub noise_filter: NoiseFilter,
    pub noise_reduction: Reduction,
    /// How many times each real sample appears per epoch.
    pub real_replication: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 2e-4,
            weight_decay: 1e-5,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            batch_size: 8,
            epochs_step1: 10,
            epochs_step2: 10,
            seed: 0,
            lambda1: 1.0,
            lambda2: 1.0,
            sigma: None,
            noise_filter: NoiseFilter::Wavelet,
            noise_reduction: Reduction::Mean,
            real_replication: 4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if self.weight_decay < 0.0 {
            return bad("weight_decay must be non-negative");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must lie in [0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.real_replication == 0 {
            return bad("real_replication must be at least 1");
        }
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 {
            return bad("loss weights must be non-negative");
        }
        if let Some(s) = self.sigma {
            if !(0.0..=50.0).contains(&s) {
                return bad("sigma must lie in [0, 50]");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Step1,
    Step2,
}

impl Stage {
    pub fn number(self) -> u8 {
        match self {
            Stage::Step1 => 1,
            Stage::Step2 => 2,
        }
    }

    /// Whether parameters of `group` are updated in this stage.
    pub fn trains(self, group: ParamGroup) -> bool {
        match self {
            Stage::Step1 => !group.is_noise_stream(),
            Stage::Step2 => true,
        }
    }

    pub fn loss_weights(self, cfg: &TrainConfig) -> LossWeights {
        LossWeights {
            lambda1: match self {
                Stage::Step1 => 0.0,
                Stage::Step2 => cfg.lambda1,
            },
            lambda2: cfg.lambda2,
            reduction: cfg.noise_reduction,
        }
    }

    pub fn epochs(self, cfg: &TrainConfig) -> usize {
        match self {
            Stage::Step1 => cfg.epochs_step1,
            Stage::Step2 => cfg.epochs_step2,
        }
    }
}

/// Sample order for one epoch: every real index `real_replication` times,
/// every fake once, shuffled by a generator keyed on `(seed, epoch)`.
pub fn build_epoch(labels: &[Label], real_replication: usize, seed: u64, epoch: u64) -> Result<Vec<usize>> {
    if labels.is_empty() {
        return Err(Error::Empty("no training samples".into()));
    }
    if real_replication == 0 {
        return Err(Error::Config("real_replication must be at least 1".into()));
    }
    let mut order = Vec::new();
    for (i, l) in labels.iter().enumerate() {
        let times = if l.is_fake() { 1 } else { real_replication };
        order.extend(std::iter::repeat_n(i, times));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    order.shuffle(&mut rng);
    Ok(order)
}

/// Validation result for one epoch's weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRecord {
    pub epoch: usize,
    pub val_auc: Option<f64>,
}

/// Highest validation AUC, earliest epoch on ties. Without any validation
/// score the last epoch wins.
pub fn select_checkpoint(records: &[CheckpointRecord]) -> Result<CheckpointRecord> {
    let last = *records.last().ok_or_else(|| Error::Empty("no checkpoints".into()))?;
    let mut best: Option<CheckpointRecord> = None;
    for r in records {
        let Some(auc) = r.val_auc else { continue };
        match best {
            Some(b) if b.val_auc.is_some_and(|v| v > auc || (v == auc && b.epoch <= r.epoch)) => {}
            _ => best = Some(*r),
        }
    }
    Ok(best.unwrap_or(last))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub stage: u8,
    pub epoch: usize,
    pub step: usize,
    #[serde(rename = "L_c")]
    pub l_c: f64,
    #[serde(rename = "L_n")]
    pub l_n: f64,
    #[serde(rename = "L_b")]
    pub l_b: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub stage: u8,
    pub epoch: usize,
    pub mean_total: f64,
    pub val_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageOutcome {
    pub stage: Stage,
    pub steps: Vec<StepLog>,
    pub epochs: Vec<EpochLog>,
    pub selected: CheckpointRecord,
}

/// Validation AUC of the current weights; `None` without validation data.
pub fn validation_auc<T: Scalar, B: Backbone>(model: &Model<T, B>, val: &[Sample<T>]) -> Result<Option<f64>> {
    if val.is_empty() {
        return Ok(None);
    }
    let scored: Vec<ScoredSample<T>> = val
        .par_iter()
        .map(|s| {
            let tr = model.network.forward(&model.params, &s.input, None)?;
            Ok(ScoredSample {
                score: tr.fake_score(),
                label: u8::from(s.label.is_fake()),
            })
        })
        .collect::<Result<_>>()?;
    Ok(Some(roc_auc(&scored)?.as_f64()))
}

fn bundle_f64<T: Scalar>(b: &LossBundle<T>) -> [f64; 4] {
    [b.l_c.as_f64(), b.l_n.as_f64(), b.l_b.as_f64(), b.total.as_f64()]
}

/// Run one training stage in place. On return `model` holds the weights of
/// the selected epoch.
pub fn train_stage<T: Scalar, B: Backbone>(
    model: &mut Model<T, B>,
    train: &[Sample<T>],
    val: &[Sample<T>],
    cfg: &TrainConfig,
    stage: Stage,
    log: &mut dyn Write,
) -> Result<StageOutcome> {
    cfg.validate()?;
    let labels: Vec<Label> = train.iter().map(|s| s.label).collect();
    let trainable = model.network.layout().mask(|g| stage.trains(g));
    let weights = stage.loss_weights(cfg);
    let mut opt = Adam::new(model.params.len(), cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.weight_decay);
    let stage_key = cfg.seed.wrapping_add(u64::from(stage.number()) << 32);

    let mut steps = Vec::new();
    let mut epochs = Vec::new();
    let mut records = Vec::new();
    let mut best_params = model.params.clone();
    let mut best: Option<CheckpointRecord> = None;
    let mut step = 0usize;
    for epoch in 1..=stage.epochs(cfg) {
        let order = build_epoch(&labels, cfg.real_replication, stage_key, epoch as u64)?;
        let mut epoch_total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<_> = chunk.iter().map(|&i| (&train[i].input, &train[i].targets)).collect();
            let (bundle, grads) = batch_objective(&model.network, &model.params, &batch, &weights)?;
            let [l_c, l_n, l_b, total] = bundle_f64(&bundle);
            if !total.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite loss or gradient at stage {} epoch {epoch} step {step}",
                    stage.number()
                )));
            }
            opt.step(&mut model.params, &grads, &trainable);
            step += 1;
            epoch_total += total;
            batches += 1;
            let line = StepLog {
                stage: stage.number(),
                epoch,
                step,
                l_c,
                l_n,
                l_b,
                total,
            };
            writeln!(log, "{}", serde_json::to_string(&line)?).map_err(|e| Error::io("training log", e))?;
            steps.push(line);
        }
        let val_auc = validation_auc(model, val)?;
        let record = CheckpointRecord { epoch, val_auc };
        records.push(record);
        let chosen = select_checkpoint(&records)?;
        if best != Some(chosen) {
            best = Some(chosen);
            if chosen.epoch == epoch {
                best_params.clone_from(&model.params);
            }
        }
        let line = EpochLog {
            stage: stage.number(),
            epoch,
            mean_total: epoch_total / batches as f64,
            val_auc,
        };
        writeln!(log, "{}", serde_json::to_string(&line)?).map_err(|e| Error::io("training log", e))?;
        epochs.push(line);
    }
    let selected = match best {
        Some(b) => {
            model.params = best_params;
            b
        }
        None => CheckpointRecord { epoch: 0, val_auc: None },
    };
    Ok(StageOutcome {
        stage,
        steps,
        epochs,
        selected,
    })
}

/// Step 1 followed by step 2 from the selected step-1 weights.
pub fn train_two_step<T: Scalar, B: Backbone>(
    model: &mut Model<T, B>,
    train: &[Sample<T>],
    val: &[Sample<T>],
    cfg: &TrainConfig,
    log: &mut dyn Write,
) -> Result<[StageOutcome; 2]> {
    let s1 = train_stage(model, train, val, cfg, Stage::Step1, log)?;
    let s2 = train_stage(model, train, val, cfg, Stage::Step2, log)?;
    Ok([s1, s2])
}
