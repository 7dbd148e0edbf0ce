//! Generate the synthetic EDF corpus and print its manifest.

use seizure_forge::eeg_io::manifest_to_csv;
use seizure_forge::synth::{class_frequency, generate_synthetic_dataset, SynthSpec};

fn main() -> seizure_forge::Result<()> {
    let spec = SynthSpec {
        seizures_per_class: 4,
        snr_db: 10.0,
        seed: 42,
        ..SynthSpec::default()
    };
    let dir = std::env::temp_dir().join("seizure-forge-synth");
    let manifest = generate_synthetic_dataset(&spec, &dir)?;
    for class in 0..spec.classes {
        println!("class {class}: {} Hz carrier", class_frequency(class));
    }
    println!("{} events written to {}", manifest.len(), dir.display());
    print!("{}", manifest_to_csv(&manifest));
    Ok(())
}
