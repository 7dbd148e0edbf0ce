//! Train the desk-sized ensemble on a synthetic set and score a held-out patient fold.

use seizure_forge::eval::{evaluate_ensemble, patient_wise_folds, restrict};
use seizure_forge::models::{Ensemble, EnsembleConfig};
use seizure_forge::msfs::{FeatureOptions, SamplingOverrides};
use seizure_forge::nn::ParamStore;
use seizure_forge::pipeline::featurize;
use seizure_forge::synth::{generate_synthetic_dataset, SynthSpec};
use seizure_forge::train::{init_weights, train_ensemble, TrainConfig};

fn main() -> seizure_forge::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let seed = 3;
    let dir = std::env::temp_dir().join("seizure-forge-train");
    let manifest = generate_synthetic_dataset(&SynthSpec { seed, ..SynthSpec::default() }, &dir)?;
    let opts = FeatureOptions {
        out_size: (32, 32),
        ..FeatureOptions::default()
    };
    let subspaces = featurize(&manifest, seed, &SamplingOverrides::default(), &opts)?;
    let folds = patient_wise_folds(&manifest, 3, seed)?;

    let ensemble = Ensemble::new(&EnsembleConfig::desk())?;
    let mut store = ParamStore::new();
    ensemble.register(&mut store)?;
    let cfg = TrainConfig {
        epochs: 15,
        batch_size: 32,
        seed,
        ..TrainConfig::default()
    };
    init_weights(&mut store, cfg.init_std, seed)?;
    let history = train_ensemble(&ensemble, &mut store, &restrict(&subspaces, &folds.train_events(0)), &cfg, 0)?;
    for e in history.epochs.iter().step_by(5) {
        println!("epoch {:>2}: lr {:.1e}, loss {:.4}, accuracy {:.3}", e.epoch, e.lr, e.loss, e.accuracy);
    }
    let metrics = evaluate_ensemble(&ensemble, &store, &restrict(&subspaces, &folds.test_events(0)), cfg.batch_size)?;
    println!("held-out window F1 {:.3}, event F1 {:.3}", metrics.window.weighted_f1, metrics.event.weighted_f1);

    let path = dir.join("ensemble.snck");
    store.save(&path)?;
    println!("checkpoint written to {}", path.display());
    Ok(())
}
