//! Multi-spectral feature sampling.
//!
//! Each ensemble member trains on its own feature subspace: the seizure
//! segments are resampled to a randomly drawn frequency `f`, cut into windows
//! of `w` seconds every `o` seconds, and featurized into saliency-encoded
//! spectrograms.

use std::collections::HashMap;
use std::path::PathBuf;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eeg_io::{
    apply_tcp_montage, extract_event_segment, read_edf, resample_signal, DatasetManifest, MontageSignal, Recording,
};
use crate::error::{Error, Result};
use crate::rng::{substream, SplitMix64};
use crate::saliency::{saliency_spectrogram, S1Variant};

/// Candidate sampling frequencies (Hz).
pub const FREQUENCIES: [u32; 4] = [24, 48, 64, 96];
/// Candidate window lengths (s).
pub const WINDOW_LENGTHS: [f64; 1] = [1.0];
/// Candidate window steps (s).
pub const WINDOW_STEPS: [f64; 2] = [0.5, 1.0];
/// Ensemble size.
pub const ENSEMBLE_SIZE: usize = 3;

const TIME_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    /// Sampling frequency in Hz.
    pub f: u32,
    /// Window length in seconds.
    pub w: f64,
    /// Window step in seconds.
    pub o: f64,
    pub seed: u64,
}

impl SamplingParams {
    pub fn new(f: u32, w: f64, o: f64, seed: u64) -> Result<Self> {
        if !FREQUENCIES.contains(&f) {
            return Err(Error::invalid(format!("sampling frequency {f} Hz not in {FREQUENCIES:?}")));
        }
        if !WINDOW_LENGTHS.contains(&w) {
            return Err(Error::invalid(format!("window length {w} s not in {WINDOW_LENGTHS:?}")));
        }
        if !WINDOW_STEPS.contains(&o) {
            return Err(Error::invalid(format!("window step {o} s not in {WINDOW_STEPS:?}")));
        }
        Ok(Self { f, w, o, seed })
    }

    pub(crate) fn from_stored(f: f32, w: f32, o: f32, seed: u64) -> Result<Self> {
        Self::new(f.round() as u32, f64::from(w), f64::from(o), seed)
    }

    /// Samples per window (`f * w`).
    pub fn window_samples(&self) -> usize {
        (f64::from(self.f) * self.w).round() as usize
    }

    /// Number of windows a segment of `duration` seconds yields.
    pub fn window_count(&self, duration: f64) -> usize {
        if duration + TIME_TOL < self.w {
            0
        } else {
            ((duration - self.w) / self.o + TIME_TOL).floor() as usize + 1
        }
    }

    /// Start of window `index`, in integer milliseconds (used to align members).
    pub fn window_start_ms(&self, index: u32) -> u64 {
        (f64::from(index) * self.o * 1000.0).round() as u64
    }
}

/// Draw `f`, `w` and `o` uniformly and independently, in that order, then a
/// per-member seed. Each component is `values[rng.below(len)]`.
pub fn draw_sampling_params(rng: &mut SplitMix64) -> SamplingParams {
    let f = FREQUENCIES[rng.below(FREQUENCIES.len() as u64) as usize];
    let w = WINDOW_LENGTHS[rng.below(WINDOW_LENGTHS.len() as u64) as usize];
    let o = WINDOW_STEPS[rng.below(WINDOW_STEPS.len() as u64) as usize];
    let seed = rng.next();
    SamplingParams { f, w, o, seed }
}

/// Pin parts of the drawn parameters (e.g. a single frequency for ablations).
/// The draw still consumes the same random numbers, so overriding `f`
/// leaves the other components unchanged for a given seed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SamplingOverrides {
    pub frequency: Option<u32>,
    pub step: Option<f64>,
}

impl SamplingOverrides {
    pub fn apply(&self, mut p: SamplingParams) -> Result<SamplingParams> {
        if let Some(f) = self.frequency {
            p.f = f;
        }
        if let Some(o) = self.step {
            p.o = o;
        }
        SamplingParams::new(p.f, p.w, p.o, p.seed)
    }
}

/// One parameter draw per member from the root seed's `sampling` stream.
pub fn draw_ensemble_params(
    root_seed: u64,
    members: usize,
    overrides: &SamplingOverrides,
) -> Result<Vec<SamplingParams>> {
    draw_params_from(&mut substream(root_seed, "sampling"), members, overrides)
}

pub(crate) fn draw_params_from(
    rng: &mut SplitMix64,
    members: usize,
    overrides: &SamplingOverrides,
) -> Result<Vec<SamplingParams>> {
    (0..members).map(|_| overrides.apply(draw_sampling_params(rng))).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    pub windows: Vec<MontageSignal>,
    /// The segment was shorter than one window and produced nothing.
    pub dropped: bool,
}

/// Resample `seg` to `params.f` and cut `w`-second windows every `o` seconds;
/// yields `floor((duration - w) / o) + 1` windows.
pub fn window_segments(seg: &MontageSignal, params: &SamplingParams) -> Result<WindowSet> {
    let count = params.window_count(seg.duration());
    if count == 0 {
        return Ok(WindowSet {
            windows: Vec::new(),
            dropped: true,
        });
    }
    let resampled = resample_signal(seg, f64::from(params.f))?;
    let p = params.window_samples();
    let windows = (0..count)
        .map(|k| {
            let start = (k as f64 * params.o * f64::from(params.f)).round() as usize;
            let start = start.min(resampled.len().saturating_sub(p));
            resampled.slice(start, p)
        })
        .collect();
    Ok(WindowSet {
        windows,
        dropped: false,
    })
}

/// One featurized window.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    /// Ensemble member whose subspace this record belongs to.
    pub member: u16,
    /// Index of the source event in the manifest.
    pub event: u32,
    /// Window index within the event.
    pub window: u32,
    pub params: SamplingParams,
    /// Class index.
    pub label: u8,
    pub height: usize,
    pub width: usize,
    /// `3 x height x width` stacked maps.
    pub stacked: Vec<f32>,
}

impl FeatureRecord {
    pub fn start_ms(&self) -> u64 {
        self.params.window_start_ms(self.window)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSubspace {
    pub member: u16,
    pub params: SamplingParams,
    pub records: Vec<FeatureRecord>,
    /// Events shorter than one window.
    pub dropped_segments: usize,
}

impl FeatureSubspace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn input_size(&self) -> Option<(usize, usize)> {
        self.records.first().map(|r| (r.height, r.width))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureOptions {
    /// `(height, width)` of the stacked maps.
    pub out_size: (usize, usize),
    pub s1_variant: S1Variant,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        Self {
            out_size: (crate::saliency::DEFAULT_STACK_SIZE, crate::saliency::DEFAULT_STACK_SIZE),
            s1_variant: S1Variant::Residual,
        }
    }
}

/// A montaged seizure segment at the recording's native rate.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSegment {
    pub event: usize,
    pub label: usize,
    pub signal: MontageSignal,
}

/// Read, montage and cut every event of the manifest. Recordings shared by
/// several events are read once.
pub fn load_event_segments(manifest: &DatasetManifest) -> Result<Vec<EventSegment>> {
    let mut recordings: HashMap<PathBuf, Recording> = HashMap::new();
    let mut out = Vec::with_capacity(manifest.len());
    for (i, ev) in manifest.events.iter().enumerate() {
        let path = manifest.resolve(&ev.recording_path);
        if !recordings.contains_key(&path) {
            let rec = read_edf(&path)?;
            recordings.insert(path.clone(), rec);
        }
        let segment = extract_event_segment(&recordings[&path], ev)?;
        out.push(EventSegment {
            event: i,
            label: ev.label(),
            signal: apply_tcp_montage(&segment)?,
        });
    }
    Ok(out)
}

/// Featurize every segment under `params` for ensemble member `member`.
pub fn build_subspace_from_segments(
    segments: &[EventSegment],
    params: &SamplingParams,
    member: u16,
    opts: &FeatureOptions,
) -> Result<FeatureSubspace> {
    let per_event: Vec<Result<(bool, Vec<FeatureRecord>)>> = segments
        .par_iter()
        .map(|seg| {
            let set = window_segments(&seg.signal, params)?;
            let records = set
                .windows
                .iter()
                .enumerate()
                .map(|(k, win)| {
                    let spec = saliency_spectrogram(win, opts.out_size, opts.s1_variant)?;
                    Ok(FeatureRecord {
                        member,
                        event: seg.event as u32,
                        window: k as u32,
                        params: *params,
                        label: seg.label as u8,
                        height: spec.height,
                        width: spec.width,
                        stacked: spec.stacked,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((set.dropped, records))
        })
        .collect();

    let mut records = Vec::new();
    let mut dropped = 0;
    for r in per_event {
        let (was_dropped, recs) = r?;
        dropped += usize::from(was_dropped);
        records.extend(recs);
    }
    if dropped > 0 {
        warn!(
            "member {member}: dropped {dropped} segment(s) shorter than the {} s window",
            params.w
        );
    }
    Ok(FeatureSubspace {
        member,
        params: *params,
        records,
        dropped_segments: dropped,
    })
}

/// Load the manifest's recordings and featurize them under `params`.
pub fn build_subspace(
    manifest: &DatasetManifest,
    params: &SamplingParams,
    member: u16,
    opts: &FeatureOptions,
) -> Result<FeatureSubspace> {
    let segments = load_event_segments(manifest)?;
    build_subspace_from_segments(&segments, params, member, opts)
}

/// One subspace per drawn parameter set.
pub fn build_subspaces(
    segments: &[EventSegment],
    params: &[SamplingParams],
    opts: &FeatureOptions,
) -> Result<Vec<FeatureSubspace>> {
    params
        .iter()
        .enumerate()
        .map(|(m, p)| {
            info!("featurizing member {m} at f={} Hz, w={} s, o={} s", p.f, p.w, p.o);
            build_subspace_from_segments(segments, p, m as u16, opts)
        })
        .collect()
}

/// Regroup cached records into per-member subspaces, ordered by member.
pub fn subspaces_from_records(records: Vec<FeatureRecord>) -> Result<Vec<FeatureSubspace>> {
    let mut by_member: Vec<Option<FeatureSubspace>> = Vec::new();
    for r in records {
        let m = r.member as usize;
        if by_member.len() <= m {
            by_member.resize(m + 1, None);
        }
        let slot = by_member[m].get_or_insert_with(|| FeatureSubspace {
            member: r.member,
            params: r.params,
            records: Vec::new(),
            dropped_segments: 0,
        });
        if slot.params != r.params {
            return Err(Error::Cache(format!("member {m} mixes sampling parameters")));
        }
        slot.records.push(r);
    }
    by_member
        .into_iter()
        .enumerate()
        .map(|(m, s)| s.ok_or_else(|| Error::Cache(format!("no records for member {m}"))))
        .collect()
}
