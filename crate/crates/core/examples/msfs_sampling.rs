//! Multi-spectral sampling: draw one (rate, window, overlap) tuple per member and cut windows.

use seizure_forge::eeg_io::MontageSignal;
use seizure_forge::msfs::{draw_ensemble_params, window_segments, SamplingOverrides, FREQUENCIES, WINDOW_STEPS};

fn main() -> seizure_forge::Result<()> {
    println!("rates {FREQUENCIES:?}, window steps {WINDOW_STEPS:?}");
    let signal = MontageSignal::new(vec![(0..2560).map(|i| (i as f64 * 0.1).sin()).collect(); 20], 256.0)?;
    for seed in [0, 1, 2] {
        let params = draw_ensemble_params(seed, 3, &SamplingOverrides::default())?;
        println!("seed {seed}:");
        for p in &params {
            let set = window_segments(&signal, p)?;
            println!(
                "  f {:>3} Hz, w {:.2} s, overlap {:.2} -> {} windows of {} samples (dropped {})",
                p.f,
                p.w,
                p.o,
                set.windows.len(),
                p.window_samples(),
                set.dropped
            );
        }
    }
    let pinned = draw_ensemble_params(0, 3, &SamplingOverrides { frequency: Some(64), step: None })?;
    println!("rate pinned to 64 Hz: {:?}", pinned.iter().map(|p| (p.f, p.w, p.o)).collect::<Vec<_>>());
    Ok(())
}
