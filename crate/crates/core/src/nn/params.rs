use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::tensor::{Float, Tensor};
use crate::error::{Error, Result};

pub const SNCK_MAGIC: &[u8; 4] = b"SNCK";
pub const SNCK_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ParamRole {
    ConvWeight,
    LinearWeight,
    Bias,
    BnScale,
    BnShift,
    RunningMean,
    RunningVar,
}

impl ParamRole {
    /// Running statistics are buffers, updated by the forward pass only.
    pub fn trainable(self) -> bool {
        !matches!(self, Self::RunningMean | Self::RunningVar)
    }

    fn code(self) -> u8 {
        match self {
            Self::ConvWeight => 0,
            Self::LinearWeight => 1,
            Self::Bias => 2,
            Self::BnScale => 3,
            Self::BnShift => 4,
            Self::RunningMean => 5,
            Self::RunningVar => 6,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => Self::ConvWeight,
            1 => Self::LinearWeight,
            2 => Self::Bias,
            3 => Self::BnScale,
            4 => Self::BnShift,
            5 => Self::RunningMean,
            6 => Self::RunningVar,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry<T> {
    pub name: String,
    pub role: ParamRole,
    pub value: Tensor<T>,
    /// First and second Adam moments; same length as `value`.
    pub m: Vec<T>,
    pub v: Vec<T>,
}

/// Named parameters and buffers in registration order, with optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    entries: Vec<ParamEntry<T>>,
    index: HashMap<String, usize>,
    pub step: u64,
}

impl<T: Float> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// One running-statistics refresh produced by a training-mode batch norm.
#[derive(Debug, Clone)]
pub struct StatUpdate<T> {
    pub mean_name: String,
    pub var_name: String,
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

/// Gradients aligned with the entries of a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct ParamGrads<T> {
    pub grads: Vec<Option<Vec<T>>>,
}

impl<T: Float> ParamGrads<T> {
    pub fn zeros_like(store: &ParamStore<T>) -> Self {
        Self {
            grads: store.entries.iter().map(|_| None).collect(),
        }
    }

    /// Add `other` into `self`, entry by entry.
    pub fn accumulate(&mut self, other: &ParamGrads<T>) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            if let Some(b) = b {
                match a {
                    Some(a) => a.iter_mut().zip(b).for_each(|(x, &y)| *x += y),
                    None => *a = Some(b.clone()),
                }
            }
        }
    }

    pub fn get(&self, store: &ParamStore<T>, name: &str) -> Option<&[T]> {
        store.index.get(name).and_then(|&i| self.grads[i].as_deref())
    }

    pub fn l2_norm(&self) -> f64 {
        self.grads
            .iter()
            .flatten()
            .flat_map(|g| g.iter())
            .map(|v| v.as_f64() * v.as_f64())
            .sum::<f64>()
            .sqrt()
    }
}

impl<T: Float> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            entries: Vec::new(),
            index: HashMap::new(),
            step: 0,
        }
    }

    pub fn register(&mut self, name: &str, role: ParamRole, value: Tensor<T>) -> Result<()> {
        if self.index.contains_key(name) {
            return Err(Error::invalid(format!("parameter `{name}` registered twice")));
        }
        let n = value.numel();
        self.index.insert(name.to_string(), self.entries.len());
        self.entries.push(ParamEntry {
            name: name.to_string(),
            role,
            value: value.detached(),
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
        });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ParamEntry<T>] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [ParamEntry<T>] {
        &mut self.entries
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn entry(&self, name: &str) -> Result<&ParamEntry<T>> {
        self.position(name)
            .map(|i| &self.entries[i])
            .ok_or_else(|| Error::invalid(format!("unknown parameter `{name}`")))
    }

    pub fn value(&self, name: &str) -> Result<&Tensor<T>> {
        self.entry(name).map(|e| &e.value)
    }

    pub fn value_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        let i = self
            .position(name)
            .ok_or_else(|| Error::invalid(format!("unknown parameter `{name}`")))?;
        Ok(&mut self.entries[i].value)
    }

    /// Number of trainable scalars (running statistics excluded).
    pub fn trainable_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.role.trainable())
            .map(|e| e.value.numel())
            .sum()
    }

    pub fn apply_stat_updates(&mut self, updates: &[StatUpdate<T>]) -> Result<()> {
        for u in updates {
            self.value_mut(&u.mean_name)?.data.clone_from(&u.mean);
            self.value_mut(&u.var_name)?.data.clone_from(&u.var);
        }
        Ok(())
    }

    pub fn cast<U: Float>(&self) -> ParamStore<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::of(x.as_f64())).collect();
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|e| ParamEntry {
                    name: e.name.clone(),
                    role: e.role,
                    value: e.value.cast(),
                    m: conv(&e.m),
                    v: conv(&e.v),
                })
                .collect(),
            index: self.index.clone(),
            step: self.step,
        }
    }

    /// Serialize to the SNCK layout: magic, u16 version, u64 step, u32 entry
    /// count, then per entry `u32 name length, name, u8 role, u32 ndim,
    /// u32 dims, f32 values, f32 m, f32 v`, all little-endian.
    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(SNCK_MAGIC);
        out.extend_from_slice(&SNCK_VERSION.to_le_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.push(e.role.code());
            out.extend_from_slice(&(e.value.shape.len() as u32).to_le_bytes());
            for &d in &e.value.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for buf in [&e.value.data, &e.m, &e.v] {
                for &x in buf.iter() {
                    out.extend_from_slice(&(x.as_f64() as f32).to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != SNCK_MAGIC {
            return Err(Error::Checkpoint("bad magic, expected SNCK".into()));
        }
        let version = u16::from_le_bytes(r.array()?);
        if version != SNCK_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let mut store = Self::new();
        store.step = u64::from_le_bytes(r.array()?);
        let count = r.u32()?;
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?;
            let role = ParamRole::from_code(r.take(1)?[0])
                .ok_or_else(|| Error::Checkpoint(format!("unknown role for `{name}`")))?;
            let ndim = r.u32()? as usize;
            let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let value = Tensor::new(shape, r.floats(n)?)?;
            let m = r.floats(n)?;
            let v = r.floats(n)?;
            store.register(&name, role, value)?;
            let e = store.entries.last_mut().expect("just registered");
            e.m = m;
            e.v = v;
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_checkpoint_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn floats<T: Float>(&mut self, n: usize) -> Result<Vec<T>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| Error::Checkpoint("size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| T::of(f64::from(f32::from_le_bytes(c.try_into().expect("chunk of 4")))))
            .collect())
    }
}
