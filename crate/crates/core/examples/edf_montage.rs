//! Write a small EDF recording, read it back and apply the 20-channel bipolar montage.

use seizure_forge::eeg_io::{
    apply_tcp_montage, extract_event_segment, read_edf, resample_signal, write_edf, EdfWriteOptions, Recording,
    SeizureEvent, SeizureType,
};

fn main() -> seizure_forge::Result<()> {
    let rate = 250.0;
    let labels = [
        "FP1", "FP2", "F7", "F3", "FZ", "F4", "F8", "T3", "C3", "CZ", "C4", "T4", "T5", "P3", "PZ", "P4", "T6", "O1", "O2",
    ];
    let samples: Vec<Vec<f64>> = labels
        .iter()
        .enumerate()
        .map(|(c, _)| (0..2500).map(|i| 40.0 * (i as f64 * 0.05 + c as f64).sin()).collect())
        .collect();
    // Labels the way TUH files spell them.
    let names = labels.iter().map(|l| format!("EEG {l}-REF")).collect();
    let rec = Recording::new("p001", "demo", rate, names, samples)?;

    let path = std::env::temp_dir().join("seizure-forge-demo.edf");
    write_edf(&path, &rec, &EdfWriteOptions::default())?;
    let back = read_edf(&path)?;
    println!("{}: {} channels, {:.1} s at {} Hz", path.display(), back.channel_count(), back.duration(), back.native_rate);

    let event = SeizureEvent {
        patient_id: "p001".into(),
        recording_path: path.display().to_string(),
        seizure_type: SeizureType::Fn,
        start: 2.0,
        stop: 6.5,
    };
    let segment = extract_event_segment(&back, &event)?;
    let montage = apply_tcp_montage(&segment)?;
    println!("montage: {} samples per channel, {:.2} s", montage.len(), montage.duration());
    for (name, ch) in seizure_forge::eeg_io::MontageSignal::channel_names().zip(&montage.channels).take(4) {
        let rms = (ch.iter().map(|v| v * v).sum::<f64>() / ch.len() as f64).sqrt();
        println!("  {name:<8} rms {rms:7.2} uV");
    }
    let down = resample_signal(&montage, 64.0)?;
    println!("resampled to 64 Hz: {} samples", down.len());
    Ok(())
}
