use std::fs;
use std::path::Path;

use seizure_forge::eeg_io::load_manifest;
use seizure_forge::msfs::{load_event_segments, window_segments, SamplingParams};
use seizure_forge::saliency::compute_ft_map;
use seizure_forge::synth::{class_frequency, generate_synthetic_dataset, SynthSpec};

fn spec(seed: u64, snr_db: f64) -> SynthSpec {
    SynthSpec {
        seed,
        snr_db,
        ..SynthSpec::default()
    }
}

/// Peak positive-frequency bin of the channel-summed FT map, per window.
fn peak_bins(dir: &Path) -> Vec<(usize, Vec<usize>)> {
    let manifest = load_manifest(dir.join("manifest.csv")).unwrap();
    let params = SamplingParams::new(64, 1.0, 1.0, 0).unwrap();
    load_event_segments(&manifest)
        .unwrap()
        .iter()
        .map(|seg| {
            let peaks = window_segments(&seg.signal, &params)
                .unwrap()
                .windows
                .iter()
                .map(|w| {
                    let ft = compute_ft_map(w).unwrap().values;
                    (1..=ft.rows / 2)
                        .max_by(|&a, &b| {
                            let sa: f64 = (0..ft.cols).map(|c| ft.at(a, c)).sum();
                            let sb: f64 = (0..ft.cols).map(|c| ft.at(b, c)).sum();
                            sa.total_cmp(&sb)
                        })
                        .unwrap()
                })
                .collect();
            (seg.label, peaks)
        })
        .collect()
}

#[test]
fn default_spec_layout() {
    let dir = tempfile::tempdir().unwrap();
    let m = generate_synthetic_dataset(&spec(1, 20.0), dir.path()).unwrap();
    assert_eq!(m.len(), 30);
    assert_eq!(m.excluded_myoclonic, 0);
    let reread = load_manifest(dir.path().join("manifest.csv")).unwrap();
    assert_eq!(reread.events, m.events);
    let patients: std::collections::BTreeSet<&str> = m.events.iter().map(|e| e.patient_id.as_str()).collect();
    assert_eq!(patients.len(), 6);
    assert!(m.events.iter().all(|e| (e.stop - e.start - 10.0).abs() < 1e-9));
}

#[test]
fn peak_bin_threshold_rule_separates_classes_at_20_db() {
    let dir = tempfile::tempdir().unwrap();
    generate_synthetic_dataset(&spec(3, 20.0), dir.path()).unwrap();
    // One feature, fixed thresholds halfway between the class centers.
    let classify = |bin: usize| {
        (0..3)
            .min_by(|&a, &b| {
                let da = (bin as f64 - class_frequency(a)).abs();
                let db = (bin as f64 - class_frequency(b)).abs();
                da.total_cmp(&db)
            })
            .unwrap()
    };
    let mut windows = 0;
    for (label, peaks) in peak_bins(dir.path()) {
        for bin in peaks {
            assert_eq!(classify(bin), label, "bin {bin} for class {label}");
            windows += 1;
        }
    }
    assert_eq!(windows, 30 * 10);
}

#[test]
fn noiseless_classes_have_disjoint_dominant_bins() {
    let dir = tempfile::tempdir().unwrap();
    generate_synthetic_dataset(&spec(4, f64::INFINITY), dir.path()).unwrap();
    let mut bins = vec![std::collections::BTreeSet::new(); 3];
    for (label, peaks) in peak_bins(dir.path()) {
        bins[label].extend(peaks);
    }
    for a in 0..3 {
        for b in a + 1..3 {
            assert!(bins[a].is_disjoint(&bins[b]), "{:?} vs {:?}", bins[a], bins[b]);
        }
    }
}

fn tree_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn same_seed_gives_identical_bytes() {
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    generate_synthetic_dataset(&spec(9, 20.0), a.path()).unwrap();
    generate_synthetic_dataset(&spec(9, 20.0), b.path()).unwrap();
    generate_synthetic_dataset(&spec(10, 20.0), c.path()).unwrap();
    let (ta, tb, tc) = (tree_bytes(a.path()), tree_bytes(b.path()), tree_bytes(c.path()));
    assert_eq!(ta.len(), 31);
    assert_eq!(ta, tb);
    assert_ne!(ta, tc);
}

#[test]
fn invalid_specs_rejected() {
    let dir = tempfile::tempdir().unwrap();
    for bad in [
        SynthSpec { classes: 8, ..SynthSpec::default() },
        SynthSpec { classes: 4, patients: 3, ..SynthSpec::default() },
        SynthSpec { duration: 0.0, ..SynthSpec::default() },
    ] {
        assert!(generate_synthetic_dataset(&bad, dir.path()).is_err(), "{bad:?}");
    }
}
