//! Corpora, augmentation and the optimization loop.

mod augment;
mod dataset;
mod synth;

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use augment::{augment, Transform, MAX_SCALE, MIN_SCALE};
pub use dataset::{extract_patches, patches_from_pages, DatasetManifest, Page, Patch, Record, Split};
pub use synth::{
    generate_synthetic_corpus, synthesize_page, synthetic_corpus, CorpusSpec, Degradation, SyntheticCorpus,
    FOREGROUND_BAND,
};

use crate::error::{Error, Result};
use crate::evaluation::evaluate_model;
use crate::sae::{Model, Param, DEFAULT_TAU};
use crate::tensor::{Graph, Tensor};

// Independent random streams derived from the run seed.
const STREAM_AUGMENT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub max_epochs: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Augmented copies generated per training window.
    pub augment_factor: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 200,
            patience: 10,
            batch_size: 10,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            augment_factor: 3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.patience == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs, patience and batch size must be positive"));
        }
        if self.patience > self.max_epochs {
            return Err(Error::invalid(format!(
                "patience {} exceeds max epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("Adam hyper-parameters out of range"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    MaxEpochs,
    EarlyStop,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::MaxEpochs => "max_epochs",
            StopReason::EarlyStop => "early_stop",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    /// Mean mini-batch loss over the epoch.
    pub train_loss: f64,
    /// Micro F-m on the validation pages at the default threshold.
    pub validation_fm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stop_reason: StopReason,
}

impl TrainHistory {
    pub fn best_validation_fm(&self) -> f64 {
        self.epochs[self.best_epoch].validation_fm
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_fm\n");
        for (i, e) in self.epochs.iter().enumerate() {
            out.push_str(&format!("{},{:.6},{:.6}\n", i, e.train_loss, e.validation_fm));
        }
        out
    }
}

/// Adam with bias-corrected moment estimates.
pub struct Adam {
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step: i32,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(config: &TrainConfig, params: &[Param]) -> Self {
        let zeros = || params.iter().map(|p| vec![0.0f32; p.tensor.len()]).collect();
        Adam {
            learning_rate: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            epsilon: config.epsilon,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn step(&mut self, params: &mut [Param], grads: &[&[f32]]) {
        self.step += 1;
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let (lr, eps) = (self.learning_rate, self.epsilon);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (i, w) in p.tensor.values_mut().iter_mut().enumerate() {
                let gi = g[i];
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let m_hat = m[i] as f64 / c1;
                let v_hat = v[i] as f64 / c2;
                *w -= (lr * m_hat / (v_hat.sqrt() + eps)) as f32;
            }
        }
    }
}

/// Trains on the manifest's train split, early-stopping on its validation
/// split (or on the last 10% of the training pages when there is none).
pub fn train(model: Model, manifest: &DatasetManifest, config: &TrainConfig) -> Result<(Model, TrainHistory)> {
    let mut train_pages = manifest.load_pages(Split::Train)?;
    let mut val_pages = manifest.load_pages(Split::Validation)?;
    if val_pages.is_empty() && train_pages.len() > 1 {
        let n_val = train_pages.len().div_ceil(10);
        val_pages = train_pages.split_off(train_pages.len() - n_val);
    }
    train_on_pages(model, &train_pages, &val_pages, config)
}

pub fn train_on_pages(
    model: Model,
    train_pages: &[Page],
    val_pages: &[Page],
    config: &TrainConfig,
) -> Result<(Model, TrainHistory)> {
    config.validate()?;
    if train_pages.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    if val_pages.is_empty() {
        return Err(Error::EmptySplit("validation"));
    }
    let patches = training_windows(train_pages, model.window_side(), config.augment_factor, config.seed)?;
    log::info!(
        "training {} on {} windows ({} pages), validating on {} pages",
        model.spec().kind,
        patches.len(),
        train_pages.len(),
        val_pages.len()
    );

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(STREAM_SHUFFLE);
    let mut model = model;
    let mut adam = Adam::new(config, model.params());
    let mut order: Vec<usize> = (0..patches.len()).collect();
    let mut epochs = Vec::new();
    let mut best: Option<(usize, f64, Model)> = None;
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 0..config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let loss = train_step(&mut model, &mut adam, &patches, chunk)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            loss_sum += loss;
            batches += 1;
        }
        let validation_fm = evaluate_model(&model, val_pages, DEFAULT_TAU)?.micro_f_measure();
        let record = EpochRecord {
            train_loss: loss_sum / batches as f64,
            validation_fm,
        };
        log::info!(
            "epoch {epoch}: loss {:.5}, validation F-m {:.5}",
            record.train_loss,
            record.validation_fm
        );
        epochs.push(record);

        if best.as_ref().is_none_or(|(_, fm, _)| validation_fm > *fm) {
            best = Some((epoch, validation_fm, model.clone()));
        }
        let best_epoch = best.as_ref().map_or(0, |b| b.0);
        if epoch - best_epoch >= config.patience {
            stop_reason = StopReason::EarlyStop;
            break;
        }
    }
    let (best_epoch, _, best_model) = best.expect("at least one epoch ran");
    Ok((
        best_model,
        TrainHistory {
            epochs,
            best_epoch,
            stop_reason,
        },
    ))
}

/// The grid windows of `pages` followed by `augment_factor` transformed copies
/// of each, drawn once from the seeded augmentation stream.
pub fn training_windows(pages: &[Page], window_side: usize, augment_factor: usize, seed: u64) -> Result<Vec<Patch>> {
    let mut patches = patches_from_pages(pages, window_side)?;
    if augment_factor > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(STREAM_AUGMENT);
        let extra: Vec<Patch> = patches
            .iter()
            .flat_map(|p| augment(p, &mut rng, augment_factor))
            .collect();
        patches.extend(extra);
    }
    Ok(patches)
}

/// One Adam update on the windows `indices`; returns the batch loss.
fn train_step(model: &mut Model, adam: &mut Adam, patches: &[Patch], indices: &[usize]) -> Result<f64> {
    let side = model.window_side();
    let plane = side * side;
    let mut input = Vec::with_capacity(indices.len() * plane);
    let mut target = Vec::with_capacity(indices.len() * plane);
    for &i in indices {
        input.extend_from_slice(patches[i].image.as_slice());
        target.extend(patches[i].gt.as_slice().iter().map(|&b| if b { 1.0f32 } else { 0.0 }));
    }
    let mut g = Graph::<f32>::new();
    let params = model.bind(&mut g, true);
    let x = g.input(Tensor::new([indices.len(), 1, side, side], input)?);
    let y = model.forward(&mut g, &params, x)?;
    let loss = g.soft_fmeasure_loss(y, &target)?;
    let value = g.value(loss).values()[0] as f64;
    if !value.is_finite() {
        return Ok(value);
    }
    g.backward(loss)?;
    let zero: Vec<Vec<f32>> = model.params().iter().map(|p| vec![0.0; p.tensor.len()]).collect();
    let grads: Vec<&[f32]> = params.iter().zip(&zero).map(|(&v, z)| g.grad(v).unwrap_or(z)).collect();
    adam.step(model.params_mut(), &grads);
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sae::{Kind, TopologySpec};

    #[test]
    fn config_invariants() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            patience: 20,
            max_epochs: 10,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let spec = TopologySpec::with_depth(Kind::Cae, 8, 1, 1, 1).unwrap();
        let mut model = Model::zeros(spec).unwrap();
        let config = TrainConfig::default();
        let mut adam = Adam::new(&config, model.params());
        let grads: Vec<Vec<f32>> = model.params().iter().map(|p| vec![2.0; p.tensor.len()]).collect();
        let refs: Vec<&[f32]> = grads.iter().map(|g| g.as_slice()).collect();
        adam.step(model.params_mut(), &refs);
        for p in model.params() {
            for &v in p.tensor.values() {
                assert!((v + 1e-3).abs() < 1e-6, "{v}");
            }
        }
    }

    #[test]
    fn empty_splits_rejected() {
        let spec = TopologySpec::with_depth(Kind::Cae, 16, 2, 3, 2).unwrap();
        let model = Model::build(spec, 0).unwrap();
        let page = synthesize_page(0, 0, 32, 32, &Degradation::default()).unwrap();
        let config = TrainConfig {
            max_epochs: 1,
            patience: 1,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train_on_pages(model.clone(), &[], std::slice::from_ref(&page), &config),
            Err(Error::EmptySplit("train"))
        ));
        assert!(matches!(
            train_on_pages(model, &[page], &[], &config),
            Err(Error::EmptySplit("validation"))
        ));
    }
}
