//! EEG ingestion: EDF parsing, the 20-channel TCP bipolar montage, linear
//! resampling, and the seizure-event manifest.

mod edf;
mod manifest;
mod montage;
mod resample;

pub use edf::{read_edf, read_edf_bytes, write_edf, EdfHeader, EdfSignalHeader, EdfWriteOptions};
pub use manifest::{load_manifest, manifest_to_csv, parse_manifest, DatasetManifest, SeizureEvent, SeizureType};
pub use montage::{apply_tcp_montage, normalize_electrode_label, MontageSignal, TCP_PAIRS};
pub use resample::resample_signal;

use crate::error::{Error, Result};

/// A multi-channel EEG recording at a single sampling rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub patient_id: String,
    pub recording_id: String,
    /// Samples per second per channel.
    pub native_rate: f64,
    pub electrode_labels: Vec<String>,
    /// Channel-major samples in microvolts.
    pub samples: Vec<Vec<f64>>,
}

impl Recording {
    pub fn new(
        patient_id: impl Into<String>,
        recording_id: impl Into<String>,
        native_rate: f64,
        electrode_labels: Vec<String>,
        samples: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if !(native_rate > 0.0) || !native_rate.is_finite() {
            return Err(Error::invalid(format!("native rate must be > 0, got {native_rate}")));
        }
        if electrode_labels.len() != samples.len() {
            return Err(Error::shape(format!(
                "{} labels for {} channels",
                electrode_labels.len(),
                samples.len()
            )));
        }
        if let Some(first) = samples.first() {
            if samples.iter().any(|c| c.len() != first.len()) {
                return Err(Error::shape("channels have unequal sample counts"));
            }
        }
        Ok(Self {
            patient_id: patient_id.into(),
            recording_id: recording_id.into(),
            native_rate,
            electrode_labels,
            samples,
        })
    }

    pub fn sample_count(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn channel_count(&self) -> usize {
        self.samples.len()
    }

    /// Duration in seconds (`sample_count / native_rate`).
    pub fn duration(&self) -> f64 {
        self.sample_count() as f64 / self.native_rate
    }
}

/// Slack allowed when an event's stop time is compared to the recording end.
const TIME_SLACK: f64 = 1e-9;

/// Cut the sub-recording covering `[ev.start, ev.stop)` out of `rec`.
pub fn extract_event_segment(rec: &Recording, ev: &SeizureEvent) -> Result<Recording> {
    if ev.stop > rec.duration() + TIME_SLACK {
        return Err(Error::invalid(format!(
            "event [{}, {}) extends past the end of recording {} ({:.3} s)",
            ev.start,
            ev.stop,
            rec.recording_id,
            rec.duration()
        )));
    }
    if !(ev.start >= 0.0 && ev.start < ev.stop) {
        return Err(Error::invalid(format!("event interval [{}, {}) is empty or negative", ev.start, ev.stop)));
    }
    let n = rec.sample_count();
    let lo = ((ev.start * rec.native_rate).round() as usize).min(n);
    let hi = ((ev.stop * rec.native_rate).round() as usize).min(n);
    Ok(Recording {
        patient_id: rec.patient_id.clone(),
        recording_id: rec.recording_id.clone(),
        native_rate: rec.native_rate,
        electrode_labels: rec.electrode_labels.clone(),
        samples: rec.samples.iter().map(|c| c[lo..hi].to_vec()).collect(),
    })
}
