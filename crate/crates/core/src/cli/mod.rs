//! Command-line front end: `synth`, `featurize`, `train`, `distill`,
//! `evaluate` and `describe`.

mod args;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use log::{info, warn};
use serde_json::json;

pub use args::*;

use crate::eeg_io::{load_manifest, DatasetManifest};
use crate::error::{Error, Result};
use crate::eval::{
    cross_validate_ensemble, evaluate_ensemble, evaluate_single, make_folds, restrict, EvalMetrics, FoldSpec,
};
use crate::models::{Ensemble, Network, Student};
use crate::msfs::{FeatureOptions, FeatureRecord, FeatureSubspace, SamplingOverrides};
use crate::nn::ParamStore;
use crate::pipeline::{ensemble_config, featurize, load_checkpoint_into, load_features, student_config, Preset};
use crate::report::{read_json, write_json, write_report, MetricsDoc, RunManifest};
use crate::saliency::{write_feature_cache, S1Variant};
use crate::synth::{generate_synthetic_dataset, SynthSpec};
use crate::train::{
    init_weights, train_ensemble_with, train_student, train_student_with, EpochStats, KdConfig, StudentTraining,
    TrainConfig, TrainHistory,
};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

/// Parse `argv` (program name first), run the subcommand and return the
/// process exit status.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("SEIZURE_FORGE_LOG", "info")).try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_data_error() {
        EXIT_DATA
    } else {
        EXIT_RUNTIME
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::invalid(format!("cannot start {n} worker threads: {e}")))?
            .install(|| execute(cli.command)),
        None => execute(cli.command),
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Featurize(a) => featurize_cmd(a),
        Command::Train(a) => train(a),
        Command::Distill(a) => distill(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Describe(a) => describe(a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn synth(a: SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        classes: a.classes,
        patients: a.patients,
        seizures_per_class: a.seizures,
        duration: a.duration,
        snr_db: a.snr_db,
        rate: a.rate,
        seed: a.seed,
        ..SynthSpec::default()
    };
    let manifest = generate_synthetic_dataset(&spec, &a.out)?;
    let mut run = RunManifest::new("synth", a.seed, &json!({ "out": a.out, "spec": spec }))?;
    run.output("manifest", &a.out.join("manifest.csv"));
    write_json(&a.out.join("run_manifest.json"), &run)?;
    info!("wrote {} events to {}", manifest.len(), a.out.display());
    Ok(())
}

/// Where `featurize` writes the run manifest for `cache`.
pub fn cache_run_manifest_path(cache: &Path) -> PathBuf {
    PathBuf::from(format!("{}.run.json", cache.display()))
}

fn featurize_cmd(a: FeaturizeArgs) -> Result<()> {
    let manifest = load_manifest(&a.manifest)?;
    let overrides = SamplingOverrides {
        frequency: a.sampling.frequency,
        step: a.sampling.step,
    };
    let opts = FeatureOptions {
        out_size: (a.size, a.size),
        s1_variant: if a.literal_s1 { S1Variant::Literal } else { S1Variant::Residual },
    };
    let subspaces = featurize(&manifest, a.seed, &overrides, &opts)?;
    for s in subspaces.iter().filter(|s| s.dropped_segments > 0) {
        warn!("member {}: {} event(s) shorter than one window", s.member, s.dropped_segments);
    }
    let config = json!({
        "manifest": a.manifest,
        "cache": a.out,
        "size": a.size,
        "s1_variant": opts.s1_variant,
        "frequency": a.sampling.frequency,
        "step": a.sampling.step,
    });
    let mut run = RunManifest::new("featurize", a.seed, &config)?;
    run.sampling = subspaces.iter().map(|s| s.params).collect();
    run.output("cache", &a.out);
    let records: Vec<FeatureRecord> = subspaces.into_iter().flat_map(|s| s.records).collect();
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_feature_cache(&a.out, &records)?;
    write_json(&cache_run_manifest_path(&a.out), &run)?;
    info!("wrote {} feature records to {}", records.len(), a.out.display());
    Ok(())
}

fn train_config(t: &TrainingArgs, joint: bool) -> TrainConfig {
    TrainConfig {
        epochs: t.epochs,
        base_lr: t.lr,
        decay: t.decay,
        batch_size: t.batch_size,
        seed: t.seed,
        joint,
        ..TrainConfig::default()
    }
}

/// Train and held-out subspaces for the requested fold; without a fold
/// every event trains and nothing is held out.
struct Split {
    spec: Option<FoldSpec>,
    fold: usize,
    train: Vec<FeatureSubspace>,
    test: Option<Vec<FeatureSubspace>>,
}

fn split(a: &SplitArgs, manifest: &DatasetManifest, subspaces: &[FeatureSubspace], seed: u64) -> Result<Split> {
    let Some(mode) = a.folds else {
        return Ok(Split {
            spec: None,
            fold: 0,
            train: subspaces.to_vec(),
            test: None,
        });
    };
    let k = a.k.unwrap_or_else(|| default_k(mode.into()));
    let spec = make_folds(manifest, mode.into(), k, seed)?;
    let fold = a.fold.unwrap_or(0);
    if fold >= k {
        return Err(Error::invalid(format!("fold {fold} outside 0..{k}")));
    }
    Ok(Split {
        train: restrict(subspaces, &spec.train_events(fold)),
        test: Some(restrict(subspaces, &spec.test_events(fold))),
        spec: Some(spec),
        fold,
    })
}

fn split_json(s: &Split) -> serde_json::Value {
    match &s.spec {
        Some(spec) => json!({ "mode": spec.mode, "k": spec.k, "fold": s.fold }),
        None => serde_json::Value::Null,
    }
}

fn summarize(prefix: &str, m: &EvalMetrics, into: &mut BTreeMap<String, f64>) {
    into.insert(format!("{prefix}window_weighted_f1"), m.window.weighted_f1);
    into.insert(format!("{prefix}event_weighted_f1"), m.event.weighted_f1);
    into.insert(format!("{prefix}event_vote_weighted_f1"), m.event_vote.weighted_f1);
    into.insert(format!("{prefix}window_accuracy"), m.window.confusion.accuracy());
    into.insert(format!("{prefix}event_accuracy"), m.event.confusion.accuracy());
}

fn write_confusions(out: &Path, prefix: &str, m: &EvalMetrics, run: &mut RunManifest) -> Result<()> {
    for (level, lm) in [("window", &m.window), ("event", &m.event), ("event_vote", &m.event_vote)] {
        let path = out.join(format!("confusion_{prefix}{level}.csv"));
        fs::write(&path, lm.confusion.to_csv()).map_err(|e| Error::io(&path, e))?;
        run.output(&format!("confusion_{prefix}{level}"), &path);
    }
    Ok(())
}

/// Per-epoch checkpointing into `out`, resuming from it when asked.
struct Checkpointing {
    checkpoint: PathBuf,
    history: PathBuf,
    run_manifest: PathBuf,
}

impl Checkpointing {
    fn new(out: &Path, checkpoint_name: &str) -> Result<Self> {
        create_dir(out)?;
        Ok(Self {
            checkpoint: out.join(checkpoint_name),
            history: out.join("history.json"),
            run_manifest: out.join("run_manifest.json"),
        })
    }

    /// Load the previous state into `store` and return the finished epochs,
    /// or initialize `store` and return none.
    fn start(&self, resume: bool, run: &RunManifest, store: &mut ParamStore<f32>, cfg: &TrainConfig) -> Result<Vec<EpochStats>> {
        if resume && self.checkpoint.exists() {
            let previous = RunManifest::load(&self.run_manifest)?;
            if previous.config != run.config || previous.seed != run.seed {
                return Err(Error::Checkpoint(format!(
                    "{} was written with a different configuration",
                    self.run_manifest.display()
                )));
            }
            load_checkpoint_into(store, &self.checkpoint)?;
            let done = read_json::<TrainHistory>(&self.history)?.epochs;
            info!("resuming after epoch {}", done.len());
            return Ok(done);
        }
        if resume {
            info!("nothing to resume in {}, starting fresh", self.checkpoint.display());
        }
        init_weights(store, cfg.init_std, cfg.seed)?;
        write_json(&self.run_manifest, run)?;
        Ok(Vec::new())
    }

    fn hook<'a>(&'a self, epochs: &'a mut Vec<EpochStats>) -> impl FnMut(&EpochStats, &ParamStore<f32>) -> Result<()> + 'a {
        move |stats, store| {
            epochs.push(stats.clone());
            store.save(&self.checkpoint)?;
            write_json(&self.history, &TrainHistory { epochs: epochs.clone() })
        }
    }

    fn finish(&self, run: &mut RunManifest, epochs: Vec<EpochStats>) -> Result<()> {
        run.output("checkpoint", &self.checkpoint);
        run.output("history", &self.history);
        run.epochs = epochs;
        write_json(&self.run_manifest, run)
    }
}

fn train(a: TrainArgs) -> Result<()> {
    let feats = load_features(&a.manifest, &a.cache)?;
    let cfg = train_config(&a.training, !a.independent);
    let ens_cfg = ensemble_config(a.training.config, feats.size)?;
    let ensemble = Ensemble::new(&ens_cfg)?;
    let s = split(&a.split, &feats.manifest, &feats.subspaces, cfg.seed)?;
    let config = json!({
        "manifest": a.manifest,
        "cache": a.cache,
        "preset": a.training.config,
        "ensemble": ens_cfg,
        "train": cfg,
        "split": split_json(&s),
    });
    let mut run = RunManifest::new("train", cfg.seed, &config)?;
    run.sampling = feats.subspaces.iter().map(|s| s.params).collect();
    run.fold_spec_hash = s.spec.as_ref().map(FoldSpec::hash);

    let ckpt = Checkpointing::new(&a.out, "ensemble.snck")?;
    let mut store = ParamStore::new();
    ensemble.register(&mut store)?;
    let mut epochs = ckpt.start(a.resume, &run, &mut store, &cfg)?;
    let start = epochs.len();
    if start < cfg.epochs {
        train_ensemble_with(&ensemble, &mut store, &s.train, &cfg, start, &mut ckpt.hook(&mut epochs))?;
    }
    if let Some(test) = &s.test {
        let metrics = evaluate_ensemble(&ensemble, &store, test, cfg.batch_size)?;
        let mut summary = BTreeMap::new();
        summarize("", &metrics, &mut summary);
        write_confusions(&a.out, "", &metrics, &mut run)?;
        ckpt.finish(&mut run, epochs)?;
        let doc = MetricsDoc {
            seed: cfg.seed,
            config: run.config.clone(),
            summary,
            detail: serde_json::to_value(&metrics)?,
        };
        write_report(&run, &doc, &a.out)?;
    } else {
        ckpt.finish(&mut run, epochs)?;
    }
    Ok(())
}

/// Weightings tried by `distill --sweep`.
pub fn sweep_grid(literal_kl: bool) -> Vec<KdConfig> {
    let levels = [0.0, 0.5, 1.0];
    let mut grid = Vec::new();
    for &alpha in &levels {
        for &beta in &levels {
            for &gamma in &levels {
                if alpha == 0.0 && beta == 0.0 && gamma == 0.0 {
                    continue;
                }
                for temperature in [1.0, 2.0, 4.0] {
                    grid.push(KdConfig {
                        alpha,
                        beta,
                        gamma,
                        temperature,
                        literal_kl,
                    });
                }
            }
        }
    }
    grid
}

fn kd_key(kd: &KdConfig) -> String {
    format!("a{}_b{}_g{}_t{}.", kd.alpha, kd.beta, kd.gamma, kd.temperature)
}

fn distill(a: DistillArgs) -> Result<()> {
    let feats = load_features(&a.manifest, &a.cache)?;
    let cfg = train_config(&a.training, true);
    let ens_cfg = ensemble_config(a.training.config, feats.size)?;
    let teacher = Ensemble::new(&ens_cfg)?;
    let mut teacher_store = ParamStore::new();
    teacher.register(&mut teacher_store)?;
    load_checkpoint_into(&mut teacher_store, &a.teacher)?;
    let student = Student::new(student_config(feats.size), "student.")?;
    let s = split(&a.split, &feats.manifest, &feats.subspaces, cfg.seed)?;
    let kd = KdConfig {
        alpha: a.alpha,
        beta: a.beta,
        gamma: a.gamma,
        temperature: a.temperature,
        literal_kl: a.literal_kl,
    };
    if !a.sweep {
        kd.validate()?;
    }
    if a.student_member >= feats.subspaces.len() {
        return Err(Error::invalid(format!("student member {} outside 0..{}", a.student_member, feats.subspaces.len())));
    }
    let config = json!({
        "manifest": a.manifest,
        "cache": a.cache,
        "teacher": a.teacher,
        "preset": a.training.config,
        "ensemble": ens_cfg,
        "student": student.config,
        "student_member": a.student_member,
        "train": cfg,
        "kd": if a.sweep { serde_json::to_value(sweep_grid(a.literal_kl))? } else { serde_json::to_value(kd)? },
        "split": split_json(&s),
    });
    let mut run = RunManifest::new(if a.sweep { "distill-sweep" } else { "distill" }, cfg.seed, &config)?;
    run.sampling = feats.subspaces.iter().map(|s| s.params).collect();
    run.fold_spec_hash = s.spec.as_ref().map(FoldSpec::hash);
    let job = StudentTraining {
        student: &student,
        teacher: &teacher,
        teacher_store: &teacher_store,
        subspaces: &s.train,
        student_member: a.student_member,
    };

    if a.sweep {
        create_dir(&a.out)?;
        let test = s.test.as_ref().ok_or_else(|| Error::invalid("--sweep needs a held-out fold"))?;
        let mut summary = BTreeMap::new();
        let mut detail = Vec::new();
        for point in sweep_grid(a.literal_kl) {
            let mut store = ParamStore::new();
            student.register(&mut store)?;
            init_weights(&mut store, cfg.init_std, cfg.seed)?;
            let history = train_student(&job, &mut store, &cfg, &point, 0)?;
            let metrics = evaluate_single(&student, &store, &test[a.student_member], cfg.batch_size)?;
            info!("{}: event F1 {:.3}", kd_key(&point).trim_end_matches('.'), metrics.event.weighted_f1);
            summarize(&kd_key(&point), &metrics, &mut summary);
            detail.push(json!({ "kd": point, "metrics": metrics, "history": history }));
        }
        let run_path = a.out.join("run_manifest.json");
        write_json(&run_path, &run)?;
        let doc = MetricsDoc {
            seed: cfg.seed,
            config: run.config.clone(),
            summary,
            detail: serde_json::Value::Array(detail),
        };
        write_report(&run, &doc, &a.out)?;
        return Ok(());
    }

    let ckpt = Checkpointing::new(&a.out, "student.snck")?;
    let mut store = ParamStore::new();
    student.register(&mut store)?;
    let mut epochs = ckpt.start(a.resume, &run, &mut store, &cfg)?;
    let start = epochs.len();
    if start < cfg.epochs {
        train_student_with(&job, &mut store, &cfg, &kd, start, &mut ckpt.hook(&mut epochs))?;
    }
    if let Some(test) = &s.test {
        let metrics = evaluate_single(&student, &store, &test[a.student_member], cfg.batch_size)?;
        let mut summary = BTreeMap::new();
        summarize("", &metrics, &mut summary);
        write_confusions(&a.out, "", &metrics, &mut run)?;
        ckpt.finish(&mut run, epochs)?;
        let doc = MetricsDoc {
            seed: cfg.seed,
            config: run.config.clone(),
            summary,
            detail: serde_json::to_value(&metrics)?,
        };
        write_report(&run, &doc, &a.out)?;
    } else {
        ckpt.finish(&mut run, epochs)?;
    }
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let feats = load_features(&a.manifest, &a.cache)?;
    let cfg = train_config(&a.training, true);
    let ens_cfg = ensemble_config(a.training.config, feats.size)?;
    let mode = a.folds.into();
    let k = a.k.unwrap_or_else(|| default_k(mode));
    create_dir(&a.out)?;
    let mut summary = BTreeMap::new();

    let Some(checkpoint) = &a.checkpoint else {
        let spec = make_folds(&feats.manifest, mode, k, cfg.seed)?;
        let config = json!({
            "manifest": a.manifest,
            "cache": a.cache,
            "preset": a.training.config,
            "ensemble": ens_cfg,
            "train": cfg,
            "folds": { "mode": mode, "k": k },
        });
        let mut run = RunManifest::new("evaluate", cfg.seed, &config)?;
        run.sampling = feats.subspaces.iter().map(|s| s.params).collect();
        run.fold_spec_hash = Some(spec.hash());
        let folds_path = a.out.join("folds.json");
        write_json(&folds_path, &spec)?;
        run.output("folds", &folds_path);

        let report = cross_validate_ensemble(&ens_cfg, &feats.subspaces, &spec, &cfg)?;
        summary.insert("mean_window_weighted_f1".to_string(), report.mean_window_f1);
        summary.insert("mean_event_weighted_f1".to_string(), report.mean_event_f1);
        summary.insert("mean_event_vote_weighted_f1".to_string(), report.mean_event_vote_f1);
        for f in &report.folds {
            let prefix = format!("fold{}.", f.fold);
            summarize(&prefix, &f.metrics, &mut summary);
            write_confusions(&a.out, &format!("fold{}_", f.fold), &f.metrics, &mut run)?;
        }
        run.epochs = report.folds.iter().flat_map(|f| f.history.epochs.iter().cloned()).collect();
        write_json(&a.out.join("run_manifest.json"), &run)?;
        let doc = MetricsDoc {
            seed: cfg.seed,
            config: run.config.clone(),
            summary,
            detail: serde_json::to_value(&report)?,
        };
        write_report(&run, &doc, &a.out)?;
        return Ok(());
    };

    let (subspaces, spec) = match a.fold {
        Some(fold) => {
            let spec = make_folds(&feats.manifest, mode, k, cfg.seed)?;
            if fold >= k {
                return Err(Error::invalid(format!("fold {fold} outside 0..{k}")));
            }
            (restrict(&feats.subspaces, &spec.test_events(fold)), Some(spec))
        }
        None => (feats.subspaces.clone(), None),
    };
    let (metrics, model) = if a.student {
        let student = Student::new(student_config(feats.size), "student.")?;
        let mut store = ParamStore::new();
        student.register(&mut store)?;
        load_checkpoint_into(&mut store, checkpoint)?;
        let member = subspaces
            .get(a.student_member)
            .ok_or_else(|| Error::invalid(format!("student member {} outside 0..{}", a.student_member, subspaces.len())))?;
        (evaluate_single(&student, &store, member, cfg.batch_size)?, serde_json::to_value(&student.config)?)
    } else {
        let ensemble = Ensemble::new(&ens_cfg)?;
        let mut store = ParamStore::new();
        ensemble.register(&mut store)?;
        load_checkpoint_into(&mut store, checkpoint)?;
        (evaluate_ensemble(&ensemble, &store, &subspaces, cfg.batch_size)?, serde_json::to_value(&ens_cfg)?)
    };
    let config = json!({
        "manifest": a.manifest,
        "cache": a.cache,
        "checkpoint": checkpoint,
        "model": model,
        "student_member": a.student.then_some(a.student_member),
        "batch_size": cfg.batch_size,
        "folds": a.fold.map(|fold| json!({ "mode": mode, "k": k, "fold": fold })),
    });
    let mut run = RunManifest::new("evaluate", cfg.seed, &config)?;
    run.sampling = feats.subspaces.iter().map(|s| s.params).collect();
    run.fold_spec_hash = spec.as_ref().map(FoldSpec::hash);
    run.output("checkpoint", checkpoint);
    summarize("", &metrics, &mut summary);
    write_confusions(&a.out, "", &metrics, &mut run)?;
    write_json(&a.out.join("run_manifest.json"), &run)?;
    let doc = MetricsDoc {
        seed: cfg.seed,
        config: run.config.clone(),
        summary,
        detail: serde_json::to_value(&metrics)?,
    };
    write_report(&run, &doc, &a.out)?;
    Ok(())
}

fn describe(a: DescribeArgs) -> Result<()> {
    let size = a.size.unwrap_or(match a.config {
        Preset::Default => 224,
        Preset::Desk => 32,
    });
    let ens_cfg = ensemble_config(a.config, size)?;
    let ensemble = Ensemble::new(&ens_cfg)?;
    let student = Student::new(student_config(size), "student.")?;
    let members = ensemble.describe()?;
    let student_summary = student.describe()?;
    for m in &members {
        println!("{m}");
    }
    println!("{student_summary}");
    let params: usize = members.iter().map(|m| m.params).sum();
    let flops: u64 = members.iter().map(|m| m.flops()).sum();
    println!("ensemble: {params} parameters, {flops} FLOPs per sample");
    println!(
        "student: {} parameters, {} FLOPs per sample",
        student_summary.params,
        student_summary.flops()
    );
    if let Some(out) = &a.out {
        create_dir(out)?;
        let path = out.join("models.json");
        write_json(&path, &json!({ "ensemble": members, "student": student_summary }))?;
        let mut run = RunManifest::new(
            "describe",
            0,
            &json!({ "preset": a.config, "size": size, "ensemble": ens_cfg, "student": student.config }),
        )?;
        run.output("models", &path);
        write_json(&out.join("run_manifest.json"), &run)?;
    }
    Ok(())
}
