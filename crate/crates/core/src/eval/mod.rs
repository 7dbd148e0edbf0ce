//! Cross-validation folds, confusion matrices, weighted F1 and model
//! evaluation at window and event level.

mod folds;
mod metrics;

use std::collections::{BTreeMap, BTreeSet};

use log::info;
use serde::{Deserialize, Serialize};

pub use folds::{make_folds, patient_wise_folds, seizure_wise_folds, FoldMode, FoldSpec};
pub use metrics::{confusion_matrix, weighted_f1, ClassScore, ConfusionMatrix};

use crate::error::{Error, Result};
use crate::models::{Ensemble, EnsembleConfig, Network, NUM_CLASSES};
use crate::msfs::{FeatureRecord, FeatureSubspace};
use crate::nn::{Mode, ParamStore, Tape};
use crate::train::{batch_tensor, init_weights, train_ensemble, TrainConfig, TrainHistory};

/// Eval-mode logits of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowLogits {
    pub event: u32,
    pub start_ms: u64,
    pub label: u8,
    pub logits: Vec<f32>,
}

/// Logits of every record of `subspace` under `net`.
pub fn window_logits<N: Network>(
    net: &N,
    store: &ParamStore<f32>,
    subspace: &FeatureSubspace,
    batch_size: usize,
) -> Result<Vec<WindowLogits>> {
    let mut out = Vec::with_capacity(subspace.len());
    for chunk in subspace.records.chunks(batch_size.max(1)) {
        let refs: Vec<&FeatureRecord> = chunk.iter().collect();
        let mut tape = Tape::new(Mode::Eval, 0);
        let x = tape.input(batch_tensor(&refs)?);
        let y = net.forward(&mut tape, store, x)?;
        let k = tape.value(y).shape[1];
        for (r, row) in chunk.iter().zip(tape.value(y).data.chunks(k)) {
            out.push(WindowLogits {
                event: r.event,
                start_ms: r.start_ms(),
                label: r.label,
                logits: row.to_vec(),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelMetrics {
    pub confusion: ConfusionMatrix,
    pub per_class: Vec<ClassScore>,
    pub weighted_f1: f64,
    pub samples: u64,
}

impl LevelMetrics {
    pub fn from_predictions(truth: &[usize], predictions: &[usize]) -> Result<Self> {
        let confusion = confusion_matrix(truth, predictions, NUM_CLASSES)?;
        Ok(Self {
            per_class: confusion.class_scores(),
            weighted_f1: weighted_f1(&confusion)?,
            samples: confusion.total(),
            confusion,
        })
    }
}

/// Window-level scores use windows whose start time is shared by every
/// member, with member logits averaged. Event-level scores average each
/// member's window logits over the event, then across members; the vote
/// variant takes the most frequent window-level prediction (ties go to the
/// lower class index).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub window: LevelMetrics,
    pub event: LevelMetrics,
    pub event_vote: LevelMetrics,
}

fn argmax(row: &[f32]) -> usize {
    crate::train::argmax(row)
}

fn mean_rows<'a>(rows: impl Iterator<Item = &'a [f32]>, k: usize) -> Vec<f32> {
    let mut acc = vec![0.0f64; k];
    let mut n = 0usize;
    for r in rows {
        acc.iter_mut().zip(r).for_each(|(a, &v)| *a += f64::from(v));
        n += 1;
    }
    acc.iter().map(|&v| (v / n.max(1) as f64) as f32).collect()
}

/// Combine per-member window logits into window- and event-level metrics.
pub fn aggregate(members: &[Vec<WindowLogits>]) -> Result<EvalMetrics> {
    if members.is_empty() || members.iter().any(Vec::is_empty) {
        return Err(Error::invalid("empty test set"));
    }
    let k = members[0][0].logits.len();
    let keyed: Vec<BTreeMap<(u32, u64), &WindowLogits>> = members
        .iter()
        .map(|m| m.iter().map(|w| ((w.event, w.start_ms), w)).collect())
        .collect();
    let mut labels: BTreeMap<u32, u8> = BTreeMap::new();
    for w in members.iter().flatten() {
        labels.insert(w.event, w.label);
    }

    let mut window_truth = Vec::new();
    let mut window_pred = Vec::new();
    let mut votes: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (key, first) in &keyed[0] {
        if keyed.iter().all(|m| m.contains_key(key)) {
            let combined = mean_rows(keyed.iter().map(|m| m[key].logits.as_slice()), k);
            let p = argmax(&combined);
            window_truth.push(first.label as usize);
            window_pred.push(p);
            votes.entry(key.0).or_insert_with(|| vec![0; k])[p] += 1;
        }
    }
    if window_truth.is_empty() {
        return Err(Error::invalid("members share no window start times"));
    }

    let events: BTreeSet<u32> = members
        .iter()
        .map(|m| m.iter().map(|w| w.event).collect::<BTreeSet<u32>>())
        .reduce(|a, b| a.intersection(&b).copied().collect())
        .unwrap_or_default();
    let mut event_truth = Vec::new();
    let mut event_pred = Vec::new();
    let mut vote_truth = Vec::new();
    let mut vote_pred = Vec::new();
    for &e in &events {
        let per_member: Vec<Vec<f32>> = members
            .iter()
            .map(|m| mean_rows(m.iter().filter(|w| w.event == e).map(|w| w.logits.as_slice()), k))
            .collect();
        let combined = mean_rows(per_member.iter().map(Vec::as_slice), k);
        event_truth.push(labels[&e] as usize);
        event_pred.push(argmax(&combined));
        if let Some(v) = votes.get(&e) {
            let best = v.iter().enumerate().fold(0, |b, (i, &c)| if c > v[b] { i } else { b });
            vote_truth.push(labels[&e] as usize);
            vote_pred.push(best);
        }
    }
    Ok(EvalMetrics {
        window: LevelMetrics::from_predictions(&window_truth, &window_pred)?,
        event: LevelMetrics::from_predictions(&event_truth, &event_pred)?,
        event_vote: LevelMetrics::from_predictions(&vote_truth, &vote_pred)?,
    })
}

pub fn evaluate_ensemble(
    ensemble: &Ensemble,
    store: &ParamStore<f32>,
    subspaces: &[FeatureSubspace],
    batch_size: usize,
) -> Result<EvalMetrics> {
    if subspaces.len() != ensemble.len() {
        return Err(Error::invalid(format!(
            "{} subspaces for {} ensemble members",
            subspaces.len(),
            ensemble.len()
        )));
    }
    let logits = ensemble
        .members
        .iter()
        .zip(subspaces)
        .map(|(m, s)| window_logits(m, store, s, batch_size))
        .collect::<Result<Vec<_>>>()?;
    aggregate(&logits)
}

pub fn evaluate_single<N: Network>(
    net: &N,
    store: &ParamStore<f32>,
    subspace: &FeatureSubspace,
    batch_size: usize,
) -> Result<EvalMetrics> {
    aggregate(&[window_logits(net, store, subspace, batch_size)?])
}

/// Copies of `subspaces` keeping only records of `events`.
pub fn restrict(subspaces: &[FeatureSubspace], events: &BTreeSet<u32>) -> Vec<FeatureSubspace> {
    subspaces
        .iter()
        .map(|s| FeatureSubspace {
            member: s.member,
            params: s.params,
            records: s.records.iter().filter(|r| events.contains(&r.event)).cloned().collect(),
            dropped_segments: s.dropped_segments,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train_events: usize,
    pub test_events: usize,
    pub metrics: EvalMetrics,
    pub history: TrainHistory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValReport {
    pub fold_spec_hash: String,
    pub folds: Vec<FoldResult>,
    pub mean_window_f1: f64,
    pub mean_event_f1: f64,
    pub mean_event_vote_f1: f64,
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len().max(1) as f64
}

impl CrossValReport {
    pub fn new(spec: &FoldSpec, folds: Vec<FoldResult>) -> Self {
        let pick = |f: fn(&EvalMetrics) -> f64| mean(&folds.iter().map(|r| f(&r.metrics)).collect::<Vec<_>>());
        Self {
            fold_spec_hash: spec.hash(),
            mean_window_f1: pick(|m| m.window.weighted_f1),
            mean_event_f1: pick(|m| m.event.weighted_f1),
            mean_event_vote_f1: pick(|m| m.event_vote.weighted_f1),
            folds,
        }
    }
}

/// Train a fresh ensemble on each fold's training events and score it on
/// the held-out events.
pub fn cross_validate_ensemble(
    cfg: &EnsembleConfig,
    subspaces: &[FeatureSubspace],
    spec: &FoldSpec,
    train: &TrainConfig,
) -> Result<CrossValReport> {
    let mut results = Vec::with_capacity(spec.k);
    for fold in 0..spec.k {
        let test_ids = spec.test_events(fold);
        let train_ids = spec.train_events(fold);
        if test_ids.is_empty() || train_ids.is_empty() {
            return Err(Error::Fold(format!("fold {fold} has an empty train or test split")));
        }
        let ensemble = Ensemble::new(cfg)?;
        let mut store = ParamStore::new();
        ensemble.register(&mut store)?;
        init_weights(&mut store, train.init_std, train.seed)?;
        let history = train_ensemble(&ensemble, &mut store, &restrict(subspaces, &train_ids), train, 0)?;
        let metrics = evaluate_ensemble(&ensemble, &store, &restrict(subspaces, &test_ids), train.batch_size)?;
        info!(
            "fold {fold}: window F1 {:.3}, event F1 {:.3}",
            metrics.window.weighted_f1, metrics.event.weighted_f1
        );
        results.push(FoldResult {
            fold,
            train_events: train_ids.len(),
            test_events: test_ids.len(),
            metrics,
            history,
        });
    }
    Ok(CrossValReport::new(spec, results))
}
