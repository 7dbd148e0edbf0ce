//! Saliency-encoded spectrogram of one synthetic 20-channel window.

use seizure_forge::eeg_io::MontageSignal;
use seizure_forge::saliency::{saliency_spectrogram, S1Variant};

fn main() -> seizure_forge::Result<()> {
    let rate = 64.0;
    let channels = (0..20)
        .map(|c| {
            (0..64)
                .map(|i| {
                    let t = i as f64 / rate;
                    (2.0 * std::f64::consts::PI * 7.0 * t).sin() * (1.0 + c as f64 / 20.0) + 0.1 * (i as f64 * 1.7).cos()
                })
                .collect()
        })
        .collect();
    let window = MontageSignal::new(channels, rate)?;
    for variant in [S1Variant::Residual, S1Variant::Literal] {
        let spec = saliency_spectrogram(&window, (32, 32), variant)?;
        println!("{variant:?}: FT {}x{}, stack 3x{}x{}", spec.ft.values.rows, spec.ft.values.cols, spec.height, spec.width);
        for (name, map) in [("FT", &spec.ft.values), ("S1", &spec.s1), ("S2", &spec.s2)] {
            println!("  {name}: min {:9.4}, max {:9.4}", map.min(), map.max());
        }
        // Frequency row with the strongest log amplitude, averaged over channels.
        let ft = &spec.ft.values;
        let peak = (0..ft.rows / 2 + 1)
            .max_by(|&a, &b| {
                let row = |r: usize| (0..ft.cols).map(|c| ft.at(r, c)).sum::<f64>();
                row(a).total_cmp(&row(b))
            })
            .unwrap_or(0);
        println!("  peak bin {peak} ({} Hz)", peak as f64 * rate / ft.rows as f64);
    }
    Ok(())
}
