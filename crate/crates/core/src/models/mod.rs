//! Densely connected sub-networks, their ensemble, and the residual student.

mod dcn;
mod graph;
mod student;

use serde::{Deserialize, Serialize};

pub use dcn::{Dcn, DcnConfig, INPUT_CHANNELS, NUM_CLASSES};
pub use graph::{Graph, LayerRow, ModelSummary, Network, ParamSpec, ShapeGraph, TapeGraph};
pub use student::{Student, StudentConfig};

use crate::error::{Error, Result};
use crate::msfs::ENSEMBLE_SIZE;
use crate::nn::{Float, ParamStore, Tape, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub members: Vec<DcnConfig>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            members: vec![
                DcnConfig::new([6, 12, 18, 12]),
                DcnConfig::new([6, 12, 24, 16]),
                DcnConfig::new([6, 12, 30, 20]),
            ],
        }
    }
}

impl EnsembleConfig {
    pub fn desk() -> Self {
        Self {
            members: vec![
                DcnConfig::desk([1, 1, 1, 1]),
                DcnConfig::desk([1, 1, 2, 1]),
                DcnConfig::desk([1, 1, 1, 2]),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.members.len() != ENSEMBLE_SIZE {
            return Err(Error::invalid(format!(
                "ensemble needs {ENSEMBLE_SIZE} members, got {}",
                self.members.len()
            )));
        }
        for (i, a) in self.members.iter().enumerate() {
            a.validate()?;
            for (j, b) in self.members.iter().enumerate().skip(i + 1) {
                if a.layers_per_block[2..] == b.layers_per_block[2..] {
                    return Err(Error::invalid(format!(
                        "members {i} and {j} must differ in the layer counts of blocks 3 or 4"
                    )));
                }
                if a.input_size != b.input_size {
                    return Err(Error::invalid("ensemble members must share the input size"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub members: Vec<Dcn>,
}

impl Ensemble {
    /// Members are prefixed `m0.`, `m1.`, ...
    pub fn new(cfg: &EnsembleConfig) -> Result<Self> {
        cfg.validate()?;
        let members = cfg
            .members
            .iter()
            .enumerate()
            .map(|(i, c)| Dcn::new(c.clone(), &format!("m{i}.")))
            .collect::<Result<Vec<_>>>()?;
        Self::from_members(members)
    }

    /// Any non-empty member list with a common class count. Members sharing a
    /// prefix share parameters.
    pub fn from_members(members: Vec<Dcn>) -> Result<Self> {
        let first = members.first().ok_or_else(|| Error::invalid("ensemble without members"))?;
        if members.iter().any(|m| m.num_classes() != first.num_classes()) {
            return Err(Error::invalid("ensemble members disagree on the class count"));
        }
        Ok(Self { members })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn input_size(&self) -> usize {
        self.members[0].input_size()
    }

    /// Registers each distinct prefix once.
    pub fn register<T: Float>(&self, store: &mut ParamStore<T>) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for m in &self.members {
            if seen.insert(m.prefix.clone()) {
                m.register(store)?;
            }
        }
        Ok(())
    }

    /// Per-member logits; `inputs[i]` feeds member `i`.
    pub fn member_logits<T: Float>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, inputs: &[Var]) -> Result<Vec<Var>> {
        if inputs.len() != self.members.len() {
            return Err(Error::shape(format!(
                "{} inputs for {} ensemble members",
                inputs.len(),
                self.members.len()
            )));
        }
        self.members.iter().zip(inputs).map(|(m, &x)| m.forward(tape, store, x)).collect()
    }

    /// Combined logits: the mean of member logits.
    pub fn forward<T: Float>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, inputs: &[Var]) -> Result<Var> {
        let logits = self.member_logits(tape, store, inputs)?;
        ensemble_forward(tape, &logits)
    }

    pub fn describe(&self) -> Result<Vec<ModelSummary>> {
        self.members.iter().map(Network::describe).collect()
    }
}

/// Arithmetic mean of member logits.
pub fn ensemble_forward<T: Float>(tape: &mut Tape<T>, logits: &[Var]) -> Result<Var> {
    let k = logits.first().map(|&v| tape.value(v).shape.clone());
    if logits.iter().any(|&v| Some(&tape.value(v).shape) != k.as_ref()) {
        return Err(Error::shape("ensemble members disagree on the logit shape"));
    }
    tape.mean(logits)
}
