use std::collections::HashMap;

use super::Recording;
use crate::error::{Error, Result};

/// Bipolar pairs of the TCP montage, in channel order.
pub const TCP_PAIRS: [(&str, &str); 20] = [
    ("FP1", "F7"),
    ("F7", "T3"),
    ("T3", "T5"),
    ("T5", "O1"),
    ("FP2", "F8"),
    ("F8", "T4"),
    ("T4", "T6"),
    ("T6", "O2"),
    ("T3", "C3"),
    ("C3", "CZ"),
    ("CZ", "C4"),
    ("C4", "T4"),
    ("FP1", "F3"),
    ("F3", "C3"),
    ("C3", "P3"),
    ("P3", "O1"),
    ("FP2", "F4"),
    ("F4", "C4"),
    ("C4", "P4"),
    ("P4", "O2"),
];

/// The 20 bipolar channels, rows in [`TCP_PAIRS`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct MontageSignal {
    pub channels: Vec<Vec<f64>>,
    pub rate: f64,
}

impl MontageSignal {
    pub const CHANNELS: usize = 20;

    pub fn new(channels: Vec<Vec<f64>>, rate: f64) -> Result<Self> {
        if channels.len() != Self::CHANNELS {
            return Err(Error::shape(format!("montage needs 20 channels, got {}", channels.len())));
        }
        if channels.iter().any(|c| c.len() != channels[0].len()) {
            return Err(Error::shape("montage channels have unequal lengths"));
        }
        if !(rate > 0.0) {
            return Err(Error::invalid(format!("rate must be > 0, got {rate}")));
        }
        Ok(Self { channels, rate })
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.rate
    }

    pub fn channel_names() -> impl Iterator<Item = String> {
        TCP_PAIRS.iter().map(|(a, b)| format!("{a}-{b}"))
    }

    /// Samples `[start, start + len)` of every channel.
    pub fn slice(&self, start: usize, len: usize) -> MontageSignal {
        MontageSignal {
            channels: self.channels.iter().map(|c| c[start..start + len].to_vec()).collect(),
            rate: self.rate,
        }
    }
}

/// Canonical electrode name: upper case, without the `EEG ` prefix and the
/// `-REF` / `-LE` reference suffixes found in TUH files.
pub fn normalize_electrode_label(label: &str) -> String {
    let mut s = label.trim().to_ascii_uppercase();
    if let Some(rest) = s.strip_prefix("EEG ") {
        s = rest.trim().to_string();
    }
    for suffix in ["-REF", "-LE"] {
        if let Some(rest) = s.strip_suffix(suffix) {
            s = rest.trim().to_string();
        }
    }
    s
}

/// Derive the 20 TCP bipolar channels (`a - b`, sample-wise) from a referential recording.
pub fn apply_tcp_montage(rec: &Recording) -> Result<MontageSignal> {
    let index: HashMap<String, usize> = rec
        .electrode_labels
        .iter()
        .enumerate()
        .map(|(i, l)| (normalize_electrode_label(l), i))
        .collect();

    let lookup = |name: &str| -> Result<usize> {
        index.get(name).copied().ok_or_else(|| Error::MissingElectrode {
            electrode: name.to_string(),
            pairs: TCP_PAIRS
                .iter()
                .filter(|(a, b)| *a == name || *b == name)
                .map(|(a, b)| format!("{a}-{b}"))
                .collect(),
        })
    };

    let mut channels = Vec::with_capacity(TCP_PAIRS.len());
    for (a, b) in TCP_PAIRS {
        let (ia, ib) = (lookup(a)?, lookup(b)?);
        let ch = rec.samples[ia]
            .iter()
            .zip(&rec.samples[ib])
            .map(|(x, y)| x - y)
            .collect();
        channels.push(ch);
    }
    MontageSignal::new(channels, rec.native_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    const ELECTRODES: [&str; 17] = [
        "FP1", "FP2", "F7", "F8", "F3", "F4", "T3", "T4", "T5", "T6", "C3", "C4", "CZ", "P3", "P4", "O1", "O2",
    ];

    fn recording(labels: &[&str], value: impl Fn(usize) -> f64) -> Recording {
        let samples = (0..labels.len()).map(|i| vec![value(i); 8]).collect();
        Recording::new("p", "r", 8.0, labels.iter().map(|s| s.to_string()).collect(), samples).unwrap()
    }

    #[test]
    fn label_normalization() {
        assert_eq!(normalize_electrode_label("EEG FP1-REF"), "FP1");
        assert_eq!(normalize_electrode_label("eeg cz-le"), "CZ");
        assert_eq!(normalize_electrode_label(" T3 "), "T3");
    }

    #[test]
    fn twenty_channels_in_pair_order() {
        let mut labels: Vec<String> = ELECTRODES.iter().map(|e| format!("EEG {e}-REF")).collect();
        labels.push("EKG".into());
        labels.reverse();
        let samples = labels.iter().enumerate().map(|(i, _)| vec![i as f64; 4]).collect();
        let rec = Recording::new("p", "r", 4.0, labels.clone(), samples).unwrap();
        let m = apply_tcp_montage(&rec).unwrap();
        assert_eq!(m.channels.len(), 20);
        let pos = |e: &str| labels.iter().position(|l| normalize_electrode_label(l) == e).unwrap() as f64;
        for (ch, (a, b)) in m.channels.iter().zip(TCP_PAIRS) {
            assert_eq!(ch[0], pos(a) - pos(b));
        }
    }

    #[test]
    fn identical_electrodes_cancel() {
        let rec = recording(&ELECTRODES, |_| 7.0);
        let m = apply_tcp_montage(&rec).unwrap();
        assert!(m.channels[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_difference() {
        let rec = recording(&ELECTRODES, |i| match ELECTRODES[i] {
            "FP1" => 5.0,
            "F7" => 2.0,
            _ => 0.0,
        });
        let m = apply_tcp_montage(&rec).unwrap();
        assert!(m.channels[0].iter().all(|&v| v == 3.0));
    }

    #[test]
    fn missing_cz_names_its_pairs() {
        let labels: Vec<&str> = ELECTRODES.iter().copied().filter(|e| *e != "CZ").collect();
        let rec = recording(&labels, |_| 0.0);
        match apply_tcp_montage(&rec) {
            Err(Error::MissingElectrode { electrode, pairs }) => {
                assert_eq!(electrode, "CZ");
                assert_eq!(pairs, vec!["C3-CZ".to_string(), "CZ-C4".to_string()]);
            }
            other => panic!("expected missing electrode, got {other:?}"),
        }
    }
}
