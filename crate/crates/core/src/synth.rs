//! Synthetic seizure recordings: each class concentrates its power in its
//! own frequency band, so classes separate in the Fourier map.

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::eeg_io::{
    manifest_to_csv, write_edf, DatasetManifest, EdfWriteOptions, Recording, SeizureEvent, SeizureType,
};
use crate::error::{Error, Result};
use crate::rng::substream;

/// The 10-20 electrodes written to every file (a superset of the montage).
pub const SYNTH_ELECTRODES: [&str; 19] = [
    "FP1", "FP2", "F7", "F3", "FZ", "F4", "F8", "T3", "C3", "CZ", "C4", "T4", "T5", "P3", "PZ", "P4", "T6", "O1",
    "O2",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub classes: usize,
    pub patients: usize,
    pub seizures_per_class: usize,
    /// Seizure length in seconds.
    pub duration: f64,
    /// Signal-to-noise ratio in dB; infinity gives noiseless signals.
    pub snr_db: f64,
    pub rate: f64,
    /// Background before and after each seizure, in seconds.
    pub padding: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            classes: 3,
            patients: 6,
            seizures_per_class: 10,
            duration: 10.0,
            snr_db: 20.0,
            rate: 256.0,
            padding: 1.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.classes > SeizureType::COUNT {
            return Err(Error::invalid(format!("classes must be in 1..=7, got {}", self.classes)));
        }
        if self.patients < self.classes {
            return Err(Error::invalid(format!(
                "need at least as many patients ({}) as classes ({})",
                self.patients, self.classes
            )));
        }
        if self.seizures_per_class == 0 {
            return Err(Error::invalid("seizures per class must be at least 1"));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) || !(self.padding >= 0.0) {
            return Err(Error::invalid("duration must be positive and padding non-negative"));
        }
        if !(self.rate >= 1.0) || self.rate.fract() != 0.0 {
            return Err(Error::invalid(format!("rate must be a whole number of Hz, got {}", self.rate)));
        }
        if self.snr_db.is_nan() {
            return Err(Error::invalid("SNR must be a number"));
        }
        Ok(())
    }
}

/// Center frequency of class `j`: 4 + 3j Hz.
pub fn class_frequency(class: usize) -> f64 {
    4.0 + 3.0 * class as f64
}

/// Small per-patient shift of the class frequency, within ±0.25 Hz.
pub fn patient_offset(patient: usize, patients: usize) -> f64 {
    if patients <= 1 {
        return 0.0;
    }
    0.5 * patient as f64 / (patients - 1) as f64 - 0.25
}

/// Seizure `index` of `class` belongs to patient `index mod patients`.
pub fn patient_of(index: usize, patients: usize) -> usize {
    index % patients
}

fn synth_recording(spec: &SynthSpec, class: usize, index: usize) -> Result<Recording> {
    let patient = patient_of(index, spec.patients);
    let freq = class_frequency(class) + patient_offset(patient, spec.patients);
    let mut rng = substream(spec.seed, &format!("dataset/{class}/{index}"));
    let n = ((spec.duration + 2.0 * spec.padding) * spec.rate).round() as usize;
    let start = (spec.padding * spec.rate).round() as usize;
    let stop = start + (spec.duration * spec.rate).round() as usize;
    let noise_scale = |amp: f64| {
        if spec.snr_db.is_infinite() && spec.snr_db > 0.0 {
            0.0
        } else {
            (amp * amp / 2.0 / 10f64.powf(spec.snr_db / 10.0)).sqrt()
        }
    };
    let samples = SYNTH_ELECTRODES
        .iter()
        .map(|_| {
            let amp = rng.random_range(30.0..60.0);
            let phase = rng.random_range(0.0..TAU);
            let sigma = noise_scale(amp);
            (0..n)
                .map(|t| {
                    let noise: f64 = rng.sample(StandardNormal);
                    let tone = if (start..stop).contains(&t) {
                        amp * (TAU * freq * t as f64 / spec.rate + phase).sin()
                    } else {
                        0.0
                    };
                    tone + sigma * noise
                })
                .collect()
        })
        .collect();
    Recording::new(
        format!("p{patient:02}"),
        format!("{}_{index:03}", SeizureType::ALL[class].code()),
        spec.rate,
        SYNTH_ELECTRODES.iter().map(|s| s.to_string()).collect(),
        samples,
    )
}

/// Write one EDF per seizure under `out_dir/edf/` and `out_dir/manifest.csv`.
pub fn generate_synthetic_dataset(spec: &SynthSpec, out_dir: &Path) -> Result<DatasetManifest> {
    spec.validate()?;
    let edf_dir = out_dir.join("edf");
    fs::create_dir_all(&edf_dir).map_err(|e| Error::io(&edf_dir, e))?;
    let opts = EdfWriteOptions::default();
    let mut events = Vec::with_capacity(spec.classes * spec.seizures_per_class);
    for class in 0..spec.classes {
        let kind = SeizureType::ALL[class];
        for index in 0..spec.seizures_per_class {
            let rec = synth_recording(spec, class, index)?;
            let rel = format!("edf/{}_{}_{index:03}.edf", rec.patient_id, kind.code());
            write_edf(out_dir.join(&rel), &rec, &opts)?;
            events.push(SeizureEvent {
                patient_id: rec.patient_id,
                recording_path: rel,
                seizure_type: kind,
                start: spec.padding,
                stop: spec.padding + spec.duration,
            });
        }
    }
    let manifest = DatasetManifest {
        version_tag: "synthetic".into(),
        events,
        base_dir: out_dir.to_path_buf(),
        excluded_myoclonic: 0,
    };
    let path = out_dir.join("manifest.csv");
    fs::write(&path, manifest_to_csv(&manifest)).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
