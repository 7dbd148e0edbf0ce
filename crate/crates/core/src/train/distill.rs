use log::{debug, info};
use serde::{Deserialize, Serialize};

use super::{
    argmax, batch_tensor, dropout_seed, epoch_batches, epoch_order, lr_at_epoch, AlignedEvents, EpochHook,
    EpochStats, TrainConfig, TrainHistory,
};
use crate::error::{Error, Result};
use crate::models::{Ensemble, Network, Student};
use crate::msfs::{FeatureRecord, FeatureSubspace};
use crate::nn::{adam_step, log_softmax_rows, softmax_rows, AdamConfig, Mode, ParamStore, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KdConfig {
    /// Weight of the teacher's cross-entropy (logged, no gradient).
    pub alpha: f64,
    /// Weight of the student's cross-entropy.
    pub beta: f64,
    /// Weight of the divergence term.
    pub gamma: f64,
    pub temperature: f64,
    /// Use `σ(P_s)·(log σ(P_s) − σ(P_t)/T)` instead of the scaled KL.
    pub literal_kl: bool,
}

impl Default for KdConfig {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            beta: 0.5,
            gamma: 1.0,
            temperature: 2.0,
            literal_kl: false,
        }
    }
}

impl KdConfig {
    /// Plain supervised training expressed as a distillation config.
    pub fn supervised() -> Self {
        Self {
            alpha: 0.0,
            beta: 1.0,
            gamma: 0.0,
            temperature: 1.0,
            literal_kl: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::invalid(format!("temperature must be positive, got {}", self.temperature)));
        }
        let w = [self.alpha, self.beta, self.gamma];
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid(format!("loss weights {w:?} must be finite and non-negative")));
        }
        if w.iter().all(|&v| v == 0.0) {
            return Err(Error::invalid("alpha, beta and gamma cannot all be zero"));
        }
        Ok(())
    }

    fn needs_teacher(&self) -> bool {
        self.alpha != 0.0 || self.gamma != 0.0
    }
}

/// Terms of the distillation objective and its gradient w.r.t. the student
/// logits (row-major `N×K`). All terms are batch means.
#[derive(Debug, Clone, PartialEq)]
pub struct DistillLoss {
    pub total: f64,
    pub teacher_ce: f64,
    pub student_ce: f64,
    pub divergence: f64,
    pub grad: Vec<f64>,
}

fn cross_entropy(logits: &[f64], labels: &[usize], k: usize) -> f64 {
    let logp = log_softmax_rows(logits, k);
    -labels.iter().enumerate().map(|(i, &y)| logp[i * k + y]).sum::<f64>() / labels.len() as f64
}

pub fn distillation_loss(
    student: &[f64],
    teacher: &[f64],
    labels: &[usize],
    classes: usize,
    kd: &KdConfig,
) -> Result<DistillLoss> {
    kd.validate()?;
    let n = labels.len();
    if classes == 0 || student.len() != n * classes || teacher.len() != student.len() {
        return Err(Error::shape(format!(
            "student {} / teacher {} logits for {n} labels of {classes} classes",
            student.len(),
            teacher.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::invalid(format!("label {bad} out of range for {classes} classes")));
    }
    let inv_n = 1.0 / n as f64;
    let t = kd.temperature;
    let teacher_ce = if kd.alpha != 0.0 { cross_entropy(teacher, labels, classes) } else { 0.0 };
    let student_ce = cross_entropy(student, labels, classes);
    let mut grad = vec![0.0; student.len()];
    if kd.beta != 0.0 {
        let p = softmax_rows(student, classes);
        for (i, &y) in labels.iter().enumerate() {
            for j in 0..classes {
                let onehot = if j == y { 1.0 } else { 0.0 };
                grad[i * classes + j] += kd.beta * (p[i * classes + j] - onehot) * inv_n;
            }
        }
    }
    let mut divergence = 0.0;
    if kd.gamma != 0.0 {
        if kd.literal_kl {
            let s = softmax_rows(student, classes);
            let log_s = log_softmax_rows(student, classes);
            let q = softmax_rows(teacher, classes);
            for i in 0..n {
                let row = i * classes..(i + 1) * classes;
                let a: Vec<f64> = row.clone().map(|j| log_s[j] - q[j] / t).collect();
                let mean_a: f64 = row.clone().zip(&a).map(|(j, &aj)| s[j] * aj).sum();
                divergence += mean_a * inv_n;
                for (j, &aj) in row.zip(&a) {
                    grad[j] += kd.gamma * s[j] * (aj - mean_a) * inv_n;
                }
            }
        } else {
            let zs: Vec<f64> = student.iter().map(|v| v / t).collect();
            let zt: Vec<f64> = teacher.iter().map(|v| v / t).collect();
            let p_s = softmax_rows(&zs, classes);
            let log_s = log_softmax_rows(&zs, classes);
            let p_t = softmax_rows(&zt, classes);
            let log_t = log_softmax_rows(&zt, classes);
            for j in 0..student.len() {
                if p_t[j] > 0.0 {
                    divergence += t * t * p_t[j] * (log_t[j] - log_s[j]) * inv_n;
                }
                grad[j] += kd.gamma * t * (p_s[j] - p_t[j]) * inv_n;
            }
        }
    }
    Ok(DistillLoss {
        total: kd.alpha * teacher_ce + kd.beta * student_ce + kd.gamma * divergence,
        teacher_ce,
        student_ce,
        divergence,
        grad,
    })
}

/// Inputs to [`train_student`]. The student sees the windows of
/// `student_member`'s subspace; the teacher sees every member's windows for
/// the same slot.
pub struct StudentTraining<'a> {
    pub student: &'a Student,
    pub teacher: &'a Ensemble,
    pub teacher_store: &'a ParamStore<f32>,
    pub subspaces: &'a [FeatureSubspace],
    pub student_member: usize,
}

/// Frozen teacher logits for every slot, in eval mode.
fn teacher_logits(job: &StudentTraining<'_>, aligned: &AlignedEvents, slots: &[(usize, usize)], batch: usize) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(slots.len());
    for chunk in slots.chunks(batch.max(1)) {
        let mut tape = Tape::new(Mode::Eval, 0);
        let inputs = (0..job.teacher.len())
            .map(|m| {
                let recs: Vec<&FeatureRecord> = chunk
                    .iter()
                    .map(|&s| &job.subspaces[m].records[aligned.record(m, s)])
                    .collect();
                Ok(tape.input(batch_tensor(&recs)?))
            })
            .collect::<Result<Vec<Var>>>()?;
        let combined = job.teacher.forward(&mut tape, job.teacher_store, &inputs)?;
        let k = tape.value(combined).shape[1];
        out.extend(tape.value(combined).data.chunks(k).map(|r| r.iter().map(|&v| f64::from(v)).collect()));
    }
    Ok(out)
}

/// Train the student in `store` against the frozen teacher; only the
/// student's parameters change.
pub fn train_student(
    job: &StudentTraining<'_>,
    store: &mut ParamStore<f32>,
    cfg: &TrainConfig,
    kd: &KdConfig,
    start_epoch: usize,
) -> Result<TrainHistory> {
    train_student_with(job, store, cfg, kd, start_epoch, &mut |_, _| Ok(()))
}

/// [`train_student`] with a per-epoch hook.
pub fn train_student_with(
    job: &StudentTraining<'_>,
    store: &mut ParamStore<f32>,
    cfg: &TrainConfig,
    kd: &KdConfig,
    start_epoch: usize,
    hook: &mut EpochHook<'_>,
) -> Result<TrainHistory> {
    cfg.validate()?;
    kd.validate()?;
    if job.student_member >= job.subspaces.len() {
        return Err(Error::invalid(format!(
            "student member {} outside {} subspaces",
            job.student_member,
            job.subspaces.len()
        )));
    }
    if kd.needs_teacher() {
        if job.subspaces.len() != job.teacher.len() {
            return Err(Error::invalid("teacher needs one subspace per member"));
        }
        if job.teacher.members[0].num_classes() != job.student.num_classes() {
            return Err(Error::invalid("teacher and student disagree on the class count"));
        }
    }
    let aligned = AlignedEvents::new(job.subspaces)?;
    let slots = aligned.slots();
    let teacher = if kd.needs_teacher() {
        teacher_logits(job, &aligned, &slots, cfg.batch_size)?
    } else {
        Vec::new()
    };
    let slot_index: std::collections::HashMap<(usize, usize), usize> =
        slots.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let adam = AdamConfig::default();
    let m = job.student_member;
    let mut history = TrainHistory::default();
    for epoch in start_epoch..cfg.epochs {
        let lr = lr_at_epoch(cfg, epoch)?;
        let order = epoch_order(&slots, cfg.seed, epoch);
        let (mut loss_sum, mut correct, mut seen) = (0.0, 0usize, 0usize);
        for (b, batch) in epoch_batches(&order, cfg.batch_size).into_iter().enumerate() {
            let labels: Vec<usize> = batch.iter().map(|&(e, _)| aligned.labels[e] as usize).collect();
            let recs: Vec<&FeatureRecord> = batch.iter().map(|&s| &job.subspaces[m].records[aligned.record(m, s)]).collect();
            let mut tape = Tape::new(Mode::Train, dropout_seed(cfg.seed, epoch, b));
            let x = tape.input(batch_tensor(&recs)?);
            let logits = job.student.forward(&mut tape, store, x)?;
            let k = tape.value(logits).shape[1];
            let student: Vec<f64> = tape.value(logits).data.iter().map(|&v| f64::from(v)).collect();
            let teacher_rows: Vec<f64> = if kd.needs_teacher() {
                batch.iter().flat_map(|s| teacher[slot_index[s]].iter().copied()).collect()
            } else {
                student.clone()
            };
            let terms = distillation_loss(&student, &teacher_rows, &labels, k, kd)?;
            let grad = terms.grad.iter().map(|&g| g as f32).collect();
            let loss = tape.loss_with_grad(logits, terms.total as f32, grad)?;
            let grads = tape.backward(loss)?;
            let param_grads = grads.for_params(&tape, store);
            correct += tape
                .value(logits)
                .data
                .chunks(k)
                .zip(&labels)
                .filter(|(row, &y)| argmax(row) == y)
                .count();
            loss_sum += terms.total * labels.len() as f64;
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
        debug!("student epoch {epoch}: loss {:.4}, accuracy {:.3}", stats.loss, stats.accuracy);
        hook(&stats, store)?;
        history.epochs.push(stats);
    }
    if let Some(last) = history.epochs.last() {
        info!("student trained to epoch {}: loss {:.4}", last.epoch + 1, last.loss);
    }
    Ok(history)
}
