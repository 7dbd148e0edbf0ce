//! Ensemble training, learning-rate schedule, initialization and
//! distillation to the student.

mod distill;

use std::collections::{BTreeMap, BTreeSet};

use log::{debug, info, warn};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use distill::{distillation_loss, train_student, train_student_with, DistillLoss, KdConfig, StudentTraining};

use crate::error::{Error, Result};
use crate::models::{Ensemble, NUM_CLASSES};
use crate::msfs::{FeatureRecord, FeatureSubspace};
use crate::nn::{adam_step, AdamConfig, Mode, ParamRole, ParamStore, Tape, Tensor, Var};
use crate::rng::{derive_seed, substream};

/// Stacked maps lie in [0, 255]; networks see them scaled to [0, 1].
pub const INPUT_SCALE: f32 = 1.0 / 255.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub base_lr: f64,
    pub decay: f64,
    pub batch_size: usize,
    pub init_std: f64,
    pub seed: u64,
    /// Fractions of `epochs` at which the rate is multiplied by `lr_factor`.
    pub milestones: Vec<f64>,
    pub lr_factor: f64,
    /// Train on the loss of averaged logits; otherwise each member on its own.
    pub joint: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 400,
            base_lr: 0.001,
            decay: 0.0005,
            batch_size: 50,
            init_std: 0.01,
            seed: 0,
            milestones: vec![0.5, 0.75],
            lr_factor: 0.1,
            joint: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0) {
            return Err(Error::invalid(format!("learning rate must be positive, got {}", self.base_lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.milestones.iter().any(|&m| !(m > 0.0 && m < 1.0)) {
            return Err(Error::invalid(format!("milestones {:?} must lie in (0, 1)", self.milestones)));
        }
        if !(self.init_std > 0.0) || self.decay < 0.0 {
            return Err(Error::invalid("init std must be positive and decay non-negative"));
        }
        Ok(())
    }
}

/// Piecewise-constant schedule: `base_lr · lr_factor^(milestones passed)`.
pub fn lr_at_epoch(cfg: &TrainConfig, epoch: usize) -> Result<f64> {
    if epoch >= cfg.epochs {
        return Err(Error::invalid(format!("epoch {epoch} outside 0..{}", cfg.epochs)));
    }
    let passed = cfg
        .milestones
        .iter()
        .filter(|&&m| epoch as f64 >= m * cfg.epochs as f64)
        .count();
    Ok(cfg.base_lr * cfg.lr_factor.powi(passed as i32))
}

/// Conv and linear weights ~ N(0, std²) from the seed's `init` stream, in
/// registration order; biases, shifts and running means 0; scales and
/// running variances 1.
pub fn init_weights(store: &mut ParamStore<f32>, std: f64, seed: u64) -> Result<()> {
    let normal = Normal::new(0.0, std).map_err(|e| Error::invalid(format!("init std {std}: {e}")))?;
    let mut rng = substream(seed, "init");
    for e in store.entries_mut() {
        match e.role {
            ParamRole::ConvWeight | ParamRole::LinearWeight => {
                e.value.data.iter_mut().for_each(|v| *v = normal.sample(&mut rng) as f32);
            }
            ParamRole::Bias | ParamRole::BnShift | ParamRole::RunningMean => e.value.data.fill(0.0),
            ParamRole::BnScale | ParamRole::RunningVar => e.value.data.fill(1.0),
        }
        e.m.fill(0.0);
        e.v.fill(0.0);
    }
    store.step = 0;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

/// Events present in every member's subspace, with each member's windows.
///
/// A training example is an (event, slot) pair; slot `j` of an event maps
/// member `m` to window `floor(j · n_m / n_max)`, so all members see the
/// same event (and label) in each batch position.
#[derive(Debug, Clone)]
pub struct AlignedEvents {
    pub events: Vec<u32>,
    pub labels: Vec<u8>,
    /// `windows[m][e]`: record indices of member `m` for event `e`, by window.
    pub windows: Vec<Vec<Vec<usize>>>,
}

impl AlignedEvents {
    pub fn new(subspaces: &[FeatureSubspace]) -> Result<Self> {
        if subspaces.is_empty() {
            return Err(Error::invalid("no feature subspaces"));
        }
        let mut per_member: Vec<BTreeMap<u32, Vec<usize>>> = Vec::with_capacity(subspaces.len());
        let mut labels: BTreeMap<u32, u8> = BTreeMap::new();
        for s in subspaces {
            if s.records.is_empty() {
                return Err(Error::invalid(format!("subspace of member {} is empty", s.member)));
            }
            let mut map: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
            for (i, r) in s.records.iter().enumerate() {
                if r.label as usize >= NUM_CLASSES {
                    return Err(Error::invalid(format!("label {} outside [0, {NUM_CLASSES})", r.label)));
                }
                if *labels.entry(r.event).or_insert(r.label) != r.label {
                    return Err(Error::invalid(format!("event {} carries two labels", r.event)));
                }
                map.entry(r.event).or_default().push(i);
            }
            for idx in map.values_mut() {
                idx.sort_by_key(|&i| s.records[i].window);
            }
            per_member.push(map);
        }
        let common: BTreeSet<u32> = per_member[0]
            .keys()
            .copied()
            .filter(|e| per_member.iter().all(|m| m.contains_key(e)))
            .collect();
        let skipped = labels.len() - common.len();
        if skipped > 0 {
            warn!("{skipped} event(s) lack windows in some member and are skipped");
        }
        if common.is_empty() {
            return Err(Error::invalid("no event has windows in every member"));
        }
        let events: Vec<u32> = common.into_iter().collect();
        Ok(Self {
            labels: events.iter().map(|e| labels[e]).collect(),
            windows: per_member
                .into_iter()
                .map(|mut m| events.iter().map(|e| m.remove(e).unwrap_or_default()).collect())
                .collect(),
            events,
        })
    }

    pub fn members(&self) -> usize {
        self.windows.len()
    }

    /// Every (event position, slot) pair in canonical order.
    pub fn slots(&self) -> Vec<(usize, usize)> {
        (0..self.events.len())
            .flat_map(|e| {
                let n = self.windows.iter().map(|w| w[e].len()).max().unwrap_or(0);
                (0..n).map(move |j| (e, j))
            })
            .collect()
    }

    /// Record index of `member` for slot `(e, j)`.
    pub fn record(&self, member: usize, (e, j): (usize, usize)) -> usize {
        let n_max = self.windows.iter().map(|w| w[e].len()).max().unwrap_or(1);
        let own = &self.windows[member][e];
        own[j * own.len() / n_max]
    }
}

/// `N×3×H×W` batch from records, scaled by [`INPUT_SCALE`].
pub fn batch_tensor(records: &[&FeatureRecord]) -> Result<Tensor<f32>> {
    let first = records.first().ok_or_else(|| Error::invalid("empty batch"))?;
    let (h, w) = (first.height, first.width);
    let mut data = Vec::with_capacity(records.len() * 3 * h * w);
    for r in records {
        if (r.height, r.width) != (h, w) {
            return Err(Error::shape("records of one batch differ in size"));
        }
        data.extend(r.stacked.iter().map(|&v| v * INPUT_SCALE));
    }
    Tensor::new(vec![records.len(), 3, h, w], data)
}

/// Slot order for one epoch, shuffled from the epoch's own stream so a
/// resumed run reproduces it.
pub(crate) fn epoch_order(slots: &[(usize, usize)], seed: u64, epoch: usize) -> Vec<(usize, usize)> {
    let mut order = slots.to_vec();
    order.shuffle(&mut substream(seed, &format!("shuffle/{epoch}")));
    order
}

/// Batches of the epoch; a trailing batch of one is dropped since batch
/// norm cannot normalize a single value.
pub(crate) fn epoch_batches(order: &[(usize, usize)], batch_size: usize) -> Vec<&[(usize, usize)]> {
    let mut batches: Vec<&[(usize, usize)]> = order.chunks(batch_size).collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() < 2) {
        batches.pop();
    }
    batches
}

pub(crate) fn dropout_seed(seed: u64, epoch: usize, batch: usize) -> u64 {
    derive_seed(seed, &format!("dropout/{epoch}/{batch}"))
}

pub(crate) fn argmax(row: &[f32]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f32::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

/// Train epochs `start_epoch..cfg.epochs` of the ensemble in `store`. Each
/// step forwards every member on its own subspace, averages logits and
/// applies one Adam update to all members.
pub fn train_ensemble(
    ensemble: &Ensemble,
    store: &mut ParamStore<f32>,
    subspaces: &[FeatureSubspace],
    cfg: &TrainConfig,
    start_epoch: usize,
) -> Result<TrainHistory> {
    train_ensemble_with(ensemble, store, subspaces, cfg, start_epoch, &mut |_, _| Ok(()))
}

/// Called after every epoch with the epoch's stats and the updated store.
pub type EpochHook<'a> = dyn FnMut(&EpochStats, &ParamStore<f32>) -> Result<()> + 'a;

/// [`train_ensemble`] with a per-epoch hook, e.g. for checkpointing.
pub fn train_ensemble_with(
    ensemble: &Ensemble,
    store: &mut ParamStore<f32>,
    subspaces: &[FeatureSubspace],
    cfg: &TrainConfig,
    start_epoch: usize,
    hook: &mut EpochHook<'_>,
) -> Result<TrainHistory> {
    cfg.validate()?;
    if subspaces.len() != ensemble.len() {
        return Err(Error::invalid(format!(
            "{} subspaces for {} ensemble members",
            subspaces.len(),
            ensemble.len()
        )));
    }
    let aligned = AlignedEvents::new(subspaces)?;
    let slots = aligned.slots();
    let adam = AdamConfig::default();
    let mut history = TrainHistory::default();
    for epoch in start_epoch..cfg.epochs {
        let lr = lr_at_epoch(cfg, epoch)?;
        let order = epoch_order(&slots, cfg.seed, epoch);
        let (mut loss_sum, mut correct, mut seen) = (0.0, 0usize, 0usize);
        for (b, batch) in epoch_batches(&order, cfg.batch_size).into_iter().enumerate() {
            let labels: Vec<usize> = batch.iter().map(|&(e, _)| aligned.labels[e] as usize).collect();
            let mut tape = Tape::new(Mode::Train, dropout_seed(cfg.seed, epoch, b));
            let inputs = (0..ensemble.len())
                .map(|m| {
                    let recs: Vec<&FeatureRecord> =
                        batch.iter().map(|&s| &subspaces[m].records[aligned.record(m, s)]).collect();
                    Ok(tape.input(batch_tensor(&recs)?))
                })
                .collect::<Result<Vec<Var>>>()?;
            let logits = ensemble.member_logits(&mut tape, store, &inputs)?;
            let combined = crate::models::ensemble_forward(&mut tape, &logits)?;
            let loss = if cfg.joint {
                tape.softmax_cross_entropy(combined, &labels)?
            } else {
                let mut total = tape.softmax_cross_entropy(logits[0], &labels)?;
                for &l in &logits[1..] {
                    let ce = tape.softmax_cross_entropy(l, &labels)?;
                    total = tape.add(total, ce)?;
                }
                total
            };
            let grads = tape.backward(loss)?;
            let param_grads = grads.for_params(&tape, store);
            let k = tape.value(combined).shape[1];
            correct += tape
                .value(combined)
                .data
                .chunks(k)
                .zip(&labels)
                .filter(|(row, &y)| argmax(row) == y)
                .count();
            loss_sum += f64::from(tape.value(loss).item()) * labels.len() as f64;
            seen += labels.len();
            let updates = tape.take_stat_updates();
            drop(tape);
            store.apply_stat_updates(&updates)?;
            adam_step(store, &param_grads, lr, cfg.decay, &adam)?;
        }
        let stats = EpochStats {
            epoch,
            lr,
            loss: loss_sum / seen.max(1) as f64,
            accuracy: correct as f64 / seen.max(1) as f64,
        };
        debug!("epoch {epoch}: lr {lr:e}, loss {:.4}, accuracy {:.3}", stats.loss, stats.accuracy);
        hook(&stats, store)?;
        history.epochs.push(stats);
    }
    if let Some(last) = history.epochs.last() {
        info!("trained to epoch {}: loss {:.4}, accuracy {:.3}", last.epoch + 1, last.loss, last.accuracy);
    }
    Ok(history)
}
