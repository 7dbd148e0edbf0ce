//! Patient-wise cross validation of a small ensemble on a synthetic set.

use std::time::Instant;

use seizure_forge::eval::{cross_validate_ensemble, patient_wise_folds};
use seizure_forge::models::EnsembleConfig;
use seizure_forge::msfs::{build_subspaces, draw_ensemble_params, load_event_segments, FeatureOptions, SamplingOverrides};
use seizure_forge::synth::{generate_synthetic_dataset, SynthSpec};
use seizure_forge::train::TrainConfig;

fn main() -> seizure_forge::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let dir = std::env::temp_dir().join("seizure-forge-cv");
    let seed = 7;
    let t0 = Instant::now();
    let manifest = generate_synthetic_dataset(&SynthSpec { seed, ..SynthSpec::default() }, &dir)?;
    let segments = load_event_segments(&manifest)?;
    let params = draw_ensemble_params(seed, 3, &SamplingOverrides::default())?;
    let opts = FeatureOptions {
        out_size: (32, 32),
        ..FeatureOptions::default()
    };
    let subspaces = build_subspaces(&segments, &params, &opts)?;
    println!("featurized {} windows in {:.1?}", subspaces.iter().map(|s| s.len()).sum::<usize>(), t0.elapsed());

    let folds = patient_wise_folds(&manifest, 3, seed)?;
    let train = TrainConfig {
        epochs: 20,
        batch_size: 32,
        seed,
        ..TrainConfig::default()
    };
    let t1 = Instant::now();
    let report = cross_validate_ensemble(&EnsembleConfig::desk(), &subspaces, &folds, &train)?;
    for f in &report.folds {
        println!(
            "fold {}: window F1 {:.3}, event F1 {:.3}, final train loss {:.3}",
            f.fold,
            f.metrics.window.weighted_f1,
            f.metrics.event.weighted_f1,
            f.history.epochs.last().map_or(f64::NAN, |e| e.loss)
        );
    }
    println!(
        "mean window F1 {:.3}, mean event F1 {:.3} ({:.1?})",
        report.mean_window_f1,
        report.mean_event_f1,
        t1.elapsed()
    );
    Ok(())
}
