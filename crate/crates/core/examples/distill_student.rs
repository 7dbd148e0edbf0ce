//! Distill a trained ensemble into the small student and compare against plain supervision.

use seizure_forge::eval::{evaluate_single, patient_wise_folds, restrict};
use seizure_forge::models::{Ensemble, EnsembleConfig, Network, Student, StudentConfig};
use seizure_forge::msfs::{FeatureOptions, SamplingOverrides};
use seizure_forge::nn::ParamStore;
use seizure_forge::pipeline::featurize;
use seizure_forge::synth::{generate_synthetic_dataset, SynthSpec};
use seizure_forge::train::{init_weights, train_ensemble, train_student, KdConfig, StudentTraining, TrainConfig};

fn main() -> seizure_forge::Result<()> {
    let seed = 5;
    let dir = std::env::temp_dir().join("seizure-forge-distill");
    let manifest = generate_synthetic_dataset(&SynthSpec { seed, ..SynthSpec::default() }, &dir)?;
    let opts = FeatureOptions {
        out_size: (32, 32),
        ..FeatureOptions::default()
    };
    let subspaces = featurize(&manifest, seed, &SamplingOverrides::default(), &opts)?;
    let folds = patient_wise_folds(&manifest, 3, seed)?;
    let train = restrict(&subspaces, &folds.train_events(0));
    let test = restrict(&subspaces, &folds.test_events(0));
    let cfg = TrainConfig {
        epochs: 15,
        batch_size: 32,
        seed,
        ..TrainConfig::default()
    };

    let teacher = Ensemble::new(&EnsembleConfig::desk())?;
    let mut teacher_store = ParamStore::new();
    teacher.register(&mut teacher_store)?;
    init_weights(&mut teacher_store, cfg.init_std, seed)?;
    train_ensemble(&teacher, &mut teacher_store, &train, &cfg, 0)?;

    let student = Student::new(StudentConfig::desk(), "student.")?;
    let job = StudentTraining {
        student: &student,
        teacher: &teacher,
        teacher_store: &teacher_store,
        subspaces: &train,
        student_member: 0,
    };
    for (name, kd) in [("distilled", KdConfig::default()), ("supervised", KdConfig::supervised())] {
        let mut store = ParamStore::new();
        student.register(&mut store)?;
        init_weights(&mut store, cfg.init_std, seed)?;
        let history = train_student(&job, &mut store, &cfg, &kd, 0)?;
        let m = evaluate_single(&student, &store, &test[0], cfg.batch_size)?;
        println!(
            "{name:<10} final loss {:.4}, window F1 {:.3}, event F1 {:.3}",
            history.epochs.last().map_or(f64::NAN, |e| e.loss),
            m.window.weighted_f1,
            m.event.weighted_f1
        );
    }
    Ok(())
}
