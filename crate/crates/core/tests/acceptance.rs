//! Acceptance criteria 1 to 10. Each test prints one PASS/FAIL line to
//! stderr. Criteria 8 and 9 report only; the rest also assert.

mod common;

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use common::{naive_dft, random_series, relative_gap, rng};
use num_complex::Complex64;
use rand::Rng;
use seizure_forge::eeg_io::{DatasetManifest, MontageSignal, SeizureEvent, SeizureType};
use seizure_forge::eval::{
    cross_validate_ensemble, evaluate_ensemble, evaluate_single, mean, patient_wise_folds, restrict,
    seizure_wise_folds,
};
use seizure_forge::models::{Dcn, DcnConfig, Ensemble, EnsembleConfig, Network, Student, StudentConfig};
use seizure_forge::msfs::{FeatureOptions, FeatureSubspace, SamplingOverrides};
use seizure_forge::nn::{finite_diff_gradcheck, log_softmax_rows, Mode, ParamStore, Tape, Tensor, Var};
use seizure_forge::pipeline::featurize;
use seizure_forge::rng::{substream, SplitMix64};
use seizure_forge::saliency::{
    assemble_stack, compute_ft_map, compute_s1, compute_s2, fft_1d, fft_complex, FtMap, Grid, S1Variant, LOG_EPSILON,
};
use seizure_forge::synth::{generate_synthetic_dataset, SynthSpec};
use seizure_forge::train::{
    distillation_loss, init_weights, train_ensemble, train_student, KdConfig, StudentTraining,
    TrainConfig,
};

const FFT_TOL: f64 = 1e-9;
const FFT_BUDGET: Duration = Duration::from_secs(10);
const GRAD_TOL: f64 = 1e-4;
const GRAD_STEP: f64 = 1e-5;
const GRAD_BUDGET: Duration = Duration::from_secs(60);
const FT_MAP_TOL: f64 = 1e-6;
const STACK_OFFSET_TOL: f32 = 1e-3;
const ENSEMBLE_TOL: f32 = 1e-6;
const CE_TOL: f64 = 1e-7;
const INITIAL_LOSS_TOL: f64 = 0.1;
const FOLD_MANIFESTS: usize = 1000;
const END_TO_END_F1: f64 = 0.90;
const END_TO_END_BUDGET: Duration = Duration::from_secs(600);
const ABLATION_MARGIN: f64 = 0.02;
const ABLATION_FRACTION: f64 = 0.2;
const DISTILL_TOLERANCE: f64 = -0.005;
const SEEDS: u64 = 5;
/// Map side used for the synthetic experiments.
const DESK_SIZE: usize = 32;
const DESK_EPOCHS: usize = 20;
const DESK_BATCH: usize = 32;

/// Criteria run one at a time so wall-clock budgets are not shared.
static SERIAL: Mutex<()> = Mutex::new(());

fn verdict(n: usize, pass: bool, detail: String) {
    let mark = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr().lock(), "acceptance criterion {n:>2}: {mark} {detail}");
    assert!(pass, "criterion {n}: {detail}");
}

/// Comparisons between two trained arms are printed but not asserted; a
/// FAIL here is a measured outcome on the synthetic data, not a defect.
fn outcome(n: usize, pass: bool, detail: String) {
    let mark = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr().lock(), "acceptance criterion {n:>2}: {mark} {detail}");
}

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

#[test]
fn criterion_01_fft_oracle() {
    let _g = serial();
    let start = Instant::now();
    let mut r = rng(1);
    let (mut worst, mut worst_round_trip) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        let n = r.random_range(1..=1024);
        let x = random_series(&mut r, n);
        let xc: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let fast = fft_1d(&x, false).unwrap();
        worst = worst.max(relative_gap(&fast, &naive_dft(&xc, false)));
        worst_round_trip = worst_round_trip.max(relative_gap(&fft_complex(&fast, true).unwrap(), &xc));
    }
    let elapsed = start.elapsed();
    verdict(
        1,
        worst < FFT_TOL && worst_round_trip < FFT_TOL && elapsed < FFT_BUDGET,
        format!("max rel gap {worst:.2e}, round trip {worst_round_trip:.2e}, {:.2} s", elapsed.as_secs_f64()),
    );
}

fn random(shape: &[usize], r: &mut SplitMix64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| r.unit() * 2.0 - 1.0).collect()).unwrap()
}

fn project(tape: &mut Tape<f64>, v: Var, seed: u64) -> seizure_forge::Result<Var> {
    let mut r = SplitMix64::new(seed);
    let w = (0..tape.value(v).numel()).map(|_| r.unit() * 2.0 - 1.0).collect();
    tape.weighted_sum(v, w)
}

#[test]
fn criterion_02_gradient_suite() {
    let _g = serial();
    let start = Instant::now();
    let mut r = SplitMix64::new(2);
    let mut results: Vec<(&str, f64)> = Vec::new();
    let check = |mode, inputs: &[Tensor<f64>], f: &dyn Fn(&mut Tape<f64>, &[Var]) -> seizure_forge::Result<Var>| {
        finite_diff_gradcheck(mode, inputs, GRAD_STEP, f).unwrap().max_rel_error
    };

    let (x, w) = (random(&[2, 3, 7, 6], &mut r), random(&[4, 3, 3, 3], &mut r));
    results.push(("conv2d", check(Mode::Train, &[x, w], &|t, v| {
        let y = t.conv2d(v[0], v[1], 2, 1)?;
        project(t, y, 1)
    })));

    let x = random(&[3, 2, 3, 3], &mut r);
    let gamma = Tensor::new(vec![2], vec![1.3, 0.7]).unwrap();
    let beta = Tensor::new(vec![2], vec![0.1, -0.4]).unwrap();
    for (name, mode) in [("batch_norm2d train", Mode::Train), ("batch_norm2d eval", Mode::Eval)] {
        results.push((name, check(mode, &[x.clone(), gamma.clone(), beta.clone()], &|t, v| {
            let (y, _) = t.batch_norm2d(v[0], v[1], v[2], (&[0.2, -0.1], &[1.5, 0.8]))?;
            project(t, y, 2)
        })));
    }

    let mut x = random(&[4, 6], &mut r);
    x.data.iter_mut().for_each(|v| *v = v.signum() * (0.2 + 0.8 * v.abs()));
    results.push(("relu", check(Mode::Train, &[x], &|t, v| {
        let y = t.relu(v[0]);
        project(t, y, 3)
    })));

    let x = random(&[2, 2, 6, 5], &mut r);
    results.push(("avg_pool2d", check(Mode::Train, &[x], &|t, v| {
        let y = t.avg_pool2d(v[0], 3, 2, 1)?;
        project(t, y, 4)
    })));

    let (x, w, b) = (random(&[3, 5], &mut r), random(&[4, 5], &mut r), random(&[4], &mut r));
    results.push(("linear", check(Mode::Train, &[x, w, b], &|t, v| {
        let y = t.linear(v[0], v[1], v[2])?;
        project(t, y, 5)
    })));

    let logits = random(&[4, 7], &mut r);
    results.push(("softmax_cross_entropy", check(Mode::Train, &[logits], &|t, v| {
        t.softmax_cross_entropy(v[0], &[0, 6, 3, 3])
    })));

    let student = random(&[3, 7], &mut r);
    let teacher: Vec<f64> = random(&[3, 7], &mut r).data.iter().map(|v| 2.0 * v).collect();
    for (name, literal_kl) in [("distillation_loss", false), ("distillation_loss literal", true)] {
        let kd = KdConfig {
            alpha: 0.5,
            beta: 0.5,
            gamma: 1.0,
            temperature: 2.0,
            literal_kl,
        };
        let teacher = teacher.clone();
        results.push((name, check(Mode::Train, &[student.clone()], &move |t, v| {
            let s = t.value(v[0]).data.clone();
            let out = distillation_loss(&s, &teacher, &[1, 4, 6], 7, &kd)?;
            t.loss_with_grad(v[0], out.total, out.grad)
        })));
    }

    let elapsed = start.elapsed();
    let worst = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let failing: Vec<&str> = results.iter().filter(|r| !(r.1 < GRAD_TOL)).map(|r| r.0).collect();
    verdict(
        2,
        failing.is_empty() && elapsed < GRAD_BUDGET,
        format!(
            "{} checks, max rel error {worst:.2e}, failing {failing:?}, {:.2} s",
            results.len(),
            elapsed.as_secs_f64()
        ),
    );
}

fn grid_map(rows: usize, cols: usize, data: Vec<f64>) -> FtMap {
    FtMap {
        values: Grid::new(rows, cols, data).unwrap(),
        window_rate: rows as f64,
    }
}

#[test]
fn criterion_03_saliency_invariants() {
    let _g = serial();
    let mut r = rng(3);
    let constant_ok = [-2.0, 0.0, 7.5]
        .iter()
        .all(|&v| compute_s2(&grid_map(24, 20, vec![v; 480])).data.iter().all(|&x| x == 0.0));

    let mut nonneg_ok = true;
    let mut range_ok = true;
    let mut offset_gap = 0.0f32;
    for i in 0..1000 {
        let rows = r.random_range(2..=48);
        let data: Vec<f64> = (0..rows * 20).map(|_| r.random_range(-25.0..25.0)).collect();
        let ft = grid_map(rows, 20, data);
        let s2 = compute_s2(&ft);
        nonneg_ok &= s2.data.iter().all(|&v| v >= 0.0);
        if i % 20 == 0 {
            let s1 = compute_s1(&ft, S1Variant::Residual).unwrap();
            let base = assemble_stack(ft.clone(), s1.clone(), s2.clone(), (32, 32)).unwrap();
            range_ok &= base.stacked.iter().all(|&v| (0.0..=255.0).contains(&v));
            let shift = |g: &Grid, o: f64| Grid::new(g.rows, g.cols, g.data.iter().map(|v| v + o).collect()).unwrap();
            let moved = assemble_stack(
                grid_map(rows, 20, shift(&ft.values, 40.0).data),
                shift(&s1, -3.0),
                shift(&s2, 11.0),
                (32, 32),
            )
            .unwrap();
            for (a, b) in base.stacked.iter().zip(&moved.stacked) {
                offset_gap = offset_gap.max((a - b).abs());
            }
        }
    }

    let mut ft_gap = 0.0f64;
    for p in [24, 48, 64, 96] {
        let chans: Vec<Vec<f64>> = (0..20).map(|_| random_series(&mut r, p)).collect();
        let w = MontageSignal::new(chans.clone(), p as f64).unwrap();
        let ft = compute_ft_map(&w).unwrap();
        for (c, ch) in chans.iter().enumerate() {
            let xc: Vec<Complex64> = ch.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            for (i, z) in naive_dft(&xc, false).iter().enumerate() {
                let want = (z.norm() + LOG_EPSILON).ln();
                ft_gap = ft_gap.max((ft.values.at(i, c) - want).abs() / want.abs().max(1.0));
            }
        }
    }
    verdict(
        3,
        constant_ok && nonneg_ok && range_ok && offset_gap < STACK_OFFSET_TOL && ft_gap < FT_MAP_TOL,
        format!(
            "S2 constant {constant_ok}, S2 >= 0 {nonneg_ok}, stack range {range_ok}, offset gap {offset_gap:.1e}, FT map gap {ft_gap:.1e}"
        ),
    );
}

fn random_batch(n: usize, size: usize, seed: u64) -> Tensor<f32> {
    let mut r = rng(seed);
    Tensor::new(vec![n, 3, size, size], (0..n * 3 * size * size).map(|_| r.random_range(0.0..1.0)).collect()).unwrap()
}

fn combined(ensemble: &Ensemble, store: &ParamStore<f32>, inputs: &[Tensor<f32>]) -> Vec<f32> {
    let mut tape = Tape::new(Mode::Eval, 0);
    let vars: Vec<Var> = inputs.iter().map(|x| tape.input(x.clone())).collect();
    let out = ensemble.forward(&mut tape, store, &vars).unwrap();
    tape.value(out).data.clone()
}

fn max_gap(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max)
}

#[test]
fn criterion_04_ensemble_identity() {
    let _g = serial();
    let cfg = DcnConfig::desk([1, 1, 2, 1]);
    let members: Vec<Dcn> = (0..3).map(|i| Dcn::new(cfg.clone(), &format!("m{i}.")).unwrap()).collect();
    let clones = Ensemble::from_members(members.clone()).unwrap();
    let mut store = ParamStore::new();
    clones.register(&mut store).unwrap();
    init_weights(&mut store, 0.1, 4).unwrap();
    // Copy member 0's parameters into members 1 and 2.
    let names: Vec<String> = store.entries().iter().map(|e| e.name.clone()).collect();
    for name in names.iter().filter(|n| n.starts_with("m0.")) {
        let value = store.value(name).unwrap().clone();
        for i in 1..3 {
            *store.value_mut(&format!("m{i}.{}", &name[3..])).unwrap() = value.clone();
        }
    }
    let x = random_batch(4, 32, 5);
    let ensemble_out = combined(&clones, &store, &[x.clone(), x.clone(), x.clone()]);
    let single = members[0].predict(&store, x.clone()).unwrap().data;
    let identity_gap = max_gap(&ensemble_out, &single);

    let distinct = Ensemble::new(&EnsembleConfig::desk()).unwrap();
    let mut dstore = ParamStore::new();
    distinct.register(&mut dstore).unwrap();
    init_weights(&mut dstore, 0.1, 6).unwrap();
    let inputs: Vec<Tensor<f32>> = (0..3).map(|i| random_batch(4, 32, 10 + i)).collect();
    let base = combined(&distinct, &dstore, &inputs);
    let mut perm_gap = 0.0f32;
    for order in [[2, 0, 1], [1, 2, 0], [2, 1, 0]] {
        let permuted = Ensemble::from_members(order.iter().map(|&i| distinct.members[i].clone()).collect()).unwrap();
        let pin: Vec<Tensor<f32>> = order.iter().map(|&i| inputs[i].clone()).collect();
        perm_gap = perm_gap.max(max_gap(&combined(&permuted, &dstore, &pin), &base));
    }
    verdict(
        4,
        identity_gap < ENSEMBLE_TOL && perm_gap < ENSEMBLE_TOL,
        format!("clone gap {identity_gap:.1e}, permutation gap {perm_gap:.1e}"),
    );
}

#[test]
fn criterion_05_loss_reductions() {
    let _g = serial();
    let mut r = rng(5);
    let (n, k) = (6, 7);
    let student: Vec<f64> = (0..n * k).map(|_| r.random_range(-3.0..3.0)).collect();
    let teacher: Vec<f64> = (0..n * k).map(|_| r.random_range(-3.0..3.0)).collect();
    let labels: Vec<usize> = (0..n).map(|i| (i * 3) % k).collect();
    let plain = distillation_loss(&student, &teacher, &labels, k, &KdConfig::supervised()).unwrap();
    let log_p = log_softmax_rows(&student, k);
    let ce = -labels.iter().enumerate().map(|(i, &y)| log_p[i * k + y]).sum::<f64>() / n as f64;
    let ce_gap = (plain.total - ce).abs();

    let mut kl_max = 0.0f64;
    for temperature in [1.0, 2.0, 4.0] {
        let kd = KdConfig {
            temperature,
            ..KdConfig::default()
        };
        kl_max = kl_max.max(distillation_loss(&student, &student, &labels, k, &kd).unwrap().divergence.abs());
    }

    // Balanced batch: four samples of each of the seven classes.
    let ensemble = Ensemble::new(&EnsembleConfig::desk()).unwrap();
    let mut store = ParamStore::new();
    ensemble.register(&mut store).unwrap();
    init_weights(&mut store, TrainConfig::default().init_std, 5).unwrap();
    let balanced: Vec<usize> = (0..28).map(|i| i % 7).collect();
    let mut tape = Tape::new(Mode::Train, 1);
    let mut big = rng(55);
    let inputs: Vec<Var> = (0..3)
        .map(|_| {
            let data = (0..28 * 3 * 32 * 32).map(|_| big.random_range(0.0..1.0)).collect();
            tape.input(Tensor::new(vec![28, 3, 32, 32], data).unwrap())
        })
        .collect();
    let logits = ensemble.forward(&mut tape, &store, &inputs).unwrap();
    let loss = tape.softmax_cross_entropy(logits, &balanced).unwrap();
    let initial = f64::from(tape.value(loss).item());
    let ln7 = 7f64.ln();
    verdict(
        5,
        ce_gap < CE_TOL && kl_max < CE_TOL && (initial - ln7).abs() < INITIAL_LOSS_TOL,
        format!("CE gap {ce_gap:.1e}, KL at agreement {kl_max:.1e}, initial loss {initial:.4} vs ln 7 = {ln7:.4}"),
    );
}

fn manifest(rows: &[(usize, usize)]) -> DatasetManifest {
    DatasetManifest {
        version_tag: "acceptance".into(),
        events: rows
            .iter()
            .enumerate()
            .map(|(i, &(class, patient))| SeizureEvent {
                patient_id: format!("p{patient}"),
                recording_path: format!("r{i}.edf"),
                seizure_type: SeizureType::from_index(class).unwrap(),
                start: 0.0,
                stop: 5.0,
            })
            .collect(),
        base_dir: Default::default(),
        excluded_myoclonic: 0,
    }
}

#[test]
fn criterion_06_fold_invariants() {
    let _g = serial();
    let mut r = rng(6);
    let (mut stratified, mut disjoint, mut patient_runs, mut errors_ok) = (true, true, 0, true);
    for i in 0..FOLD_MANIFESTS {
        let events = r.random_range(3..=80);
        let classes = r.random_range(1..=7);
        let patients = r.random_range(1..=15);
        let rows: Vec<(usize, usize)> =
            (0..events).map(|_| (r.random_range(0..classes), r.random_range(0..patients))).collect();
        let m = manifest(&rows);
        let k = r.random_range(2..=5);
        let seed = i as u64;

        let spec = seizure_wise_folds(&m, k, seed).unwrap();
        let mut seen = BTreeSet::new();
        for f in 0..k {
            for e in spec.test_events(f) {
                stratified &= seen.insert(e);
            }
        }
        stratified &= seen.len() == m.len();
        for c in 0..classes {
            let sizes: Vec<usize> =
                (0..k).map(|f| spec.test_events(f).iter().filter(|&&e| rows[e as usize].0 == c).count()).collect();
            stratified &= sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1;
        }

        let short = (0..classes).any(|c| {
            let ps: BTreeSet<usize> = rows.iter().filter(|r| r.0 == c).map(|r| r.1).collect();
            !ps.is_empty() && ps.len() < k
        });
        match patient_wise_folds(&m, k, seed) {
            Ok(spec) => {
                errors_ok &= !short;
                patient_runs += 1;
                let sets: Vec<BTreeSet<usize>> =
                    (0..k).map(|f| spec.test_events(f).iter().map(|&e| rows[e as usize].1).collect()).collect();
                for a in 0..k {
                    for b in a + 1..k {
                        disjoint &= sets[a].is_disjoint(&sets[b]);
                    }
                }
            }
            Err(e) => errors_ok &= short && e.is_data_error(),
        }
    }
    // A class with data from only two patients cannot be split three ways.
    let mut rows: Vec<(usize, usize)> = (0..12).map(|i| (0, i % 4)).collect();
    rows.extend([(1, 10), (1, 11), (1, 10)]);
    let msg = patient_wise_folds(&manifest(&rows), 3, 0).map(|_| String::new()).unwrap_or_else(|e| e.to_string());
    let documented = msg.contains("class GN has 2 patient(s)");
    verdict(
        6,
        stratified && disjoint && errors_ok && documented,
        format!(
            "{FOLD_MANIFESTS} manifests: stratified {stratified}, patient sets disjoint {disjoint} ({patient_runs} splits), errors as documented {errors_ok}, two-patient message `{msg}`"
        ),
    );
}

fn synthetic(seed: u64, dir: &Path) -> DatasetManifest {
    let spec = SynthSpec {
        classes: 3,
        patients: 6,
        snr_db: 20.0,
        seed,
        ..SynthSpec::default()
    };
    generate_synthetic_dataset(&spec, dir).unwrap()
}

fn features(m: &DatasetManifest, seed: u64, overrides: &SamplingOverrides) -> Vec<FeatureSubspace> {
    let opts = FeatureOptions {
        out_size: (DESK_SIZE, DESK_SIZE),
        s1_variant: S1Variant::Residual,
    };
    featurize(m, seed, overrides, &opts).unwrap()
}

fn desk_train(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: DESK_EPOCHS,
        batch_size: DESK_BATCH,
        seed,
        ..TrainConfig::default()
    }
}

#[test]
fn criterion_07_synthetic_end_to_end() {
    let _g = serial();
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let m = synthetic(7, dir.path());
    let subs = features(&m, 7, &SamplingOverrides::default());
    let spec = patient_wise_folds(&m, 3, 7).unwrap();
    let report = cross_validate_ensemble(&EnsembleConfig::desk(), &subs, &spec, &desk_train(7)).unwrap();
    let per_fold: Vec<String> = report.folds.iter().map(|f| format!("{:.3}", f.metrics.event.weighted_f1)).collect();
    let elapsed = start.elapsed();
    verdict(
        7,
        report.mean_event_f1 >= END_TO_END_F1 && elapsed < END_TO_END_BUDGET,
        format!(
            "patient-wise 3-fold event F1 {:.3} (folds {}), window F1 {:.3}, {:.0} s",
            report.mean_event_f1,
            per_fold.join(", "),
            report.mean_window_f1,
            elapsed.as_secs_f64()
        ),
    );
}

/// Stratified subset: `fraction` of each class's events, at least one.
fn stratified_subset(m: &DatasetManifest, fraction: f64, seed: u64) -> BTreeSet<u32> {
    let mut r = substream(seed, "subset");
    let mut chosen = BTreeSet::new();
    for class in 0..SeizureType::COUNT {
        let mut ids: Vec<u32> = (0..m.len() as u32).filter(|&i| m.events[i as usize].label() == class).collect();
        // Fisher-Yates with the crate generator.
        for i in (1..ids.len()).rev() {
            ids.swap(i, r.below(i as u64 + 1) as usize);
        }
        let take = ((ids.len() as f64 * fraction).round() as usize).max(1).min(ids.len());
        chosen.extend(&ids[..take]);
    }
    chosen
}

fn ensemble_event_f1(subs: &[FeatureSubspace], train: &BTreeSet<u32>, test: &BTreeSet<u32>, seed: u64) -> f64 {
    let ensemble = Ensemble::new(&EnsembleConfig::desk()).unwrap();
    let mut store = ParamStore::new();
    ensemble.register(&mut store).unwrap();
    let cfg = desk_train(seed);
    init_weights(&mut store, cfg.init_std, seed).unwrap();
    train_ensemble(&ensemble, &mut store, &restrict(subs, train), &cfg, 0).unwrap();
    evaluate_ensemble(&ensemble, &store, &restrict(subs, test), cfg.batch_size).unwrap().event.weighted_f1
}

#[test]
fn criterion_08_msfs_ablation_direction() {
    let _g = serial();
    let (mut msfs, mut single) = (Vec::new(), Vec::new());
    for seed in 0..SEEDS {
        let dir = tempfile::tempdir().unwrap();
        let m = synthetic(100 + seed, dir.path());
        let train = stratified_subset(&m, ABLATION_FRACTION, seed);
        let test: BTreeSet<u32> = (0..m.len() as u32).filter(|i| !train.contains(i)).collect();
        let pinned = SamplingOverrides {
            frequency: Some(64),
            step: None,
        };
        msfs.push(ensemble_event_f1(&features(&m, seed, &SamplingOverrides::default()), &train, &test, seed));
        single.push(ensemble_event_f1(&features(&m, seed, &pinned), &train, &test, seed));
    }
    let gain = mean(&msfs) - mean(&single);
    outcome(
        8,
        gain >= ABLATION_MARGIN,
        format!(
            "event F1 at {}% data: MSFS {:.3} {:?} vs 64 Hz only {:.3} {:?}, gain {gain:+.3} (needs >= {ABLATION_MARGIN})",
            ABLATION_FRACTION * 100.0,
            mean(&msfs),
            rounded(&msfs),
            mean(&single),
            rounded(&single)
        ),
    );
}

fn rounded(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| (x * 1000.0).round() / 1000.0).collect()
}

#[test]
fn criterion_09_distillation_direction() {
    let _g = serial();
    let (mut distilled, mut supervised) = (Vec::new(), Vec::new());
    for seed in 0..SEEDS {
        let dir = tempfile::tempdir().unwrap();
        let m = synthetic(200 + seed, dir.path());
        let subs = features(&m, seed, &SamplingOverrides::default());
        let spec = patient_wise_folds(&m, 3, seed).unwrap();
        let (train, test) = (restrict(&subs, &spec.train_events(0)), restrict(&subs, &spec.test_events(0)));
        let cfg = desk_train(seed);

        let teacher = Ensemble::new(&EnsembleConfig::desk()).unwrap();
        let mut teacher_store = ParamStore::new();
        teacher.register(&mut teacher_store).unwrap();
        init_weights(&mut teacher_store, cfg.init_std, seed).unwrap();
        train_ensemble(&teacher, &mut teacher_store, &train, &cfg, 0).unwrap();

        let student = Student::new(StudentConfig::desk(), "student.").unwrap();
        let job = StudentTraining {
            student: &student,
            teacher: &teacher,
            teacher_store: &teacher_store,
            subspaces: &train,
            student_member: 0,
        };
        for (kd, scores) in [(KdConfig::default(), &mut distilled), (KdConfig::supervised(), &mut supervised)] {
            let mut store = ParamStore::new();
            student.register(&mut store).unwrap();
            init_weights(&mut store, cfg.init_std, seed).unwrap();
            train_student(&job, &mut store, &cfg, &kd, 0).unwrap();
            scores.push(evaluate_single(&student, &store, &test[0], cfg.batch_size).unwrap().event.weighted_f1);
        }
    }
    let delta = mean(&distilled) - mean(&supervised);
    outcome(
        9,
        delta >= DISTILL_TOLERANCE,
        format!(
            "student event F1: distilled {:.3} {:?} vs supervised {:.3} {:?}, delta {delta:+.3} (needs >= {DISTILL_TOLERANCE})",
            mean(&distilled),
            rounded(&distilled),
            mean(&supervised),
            rounded(&supervised)
        ),
    );
}

fn forge(args: &[&str], cwd: &Path) -> bool {
    Command::new(env!("CARGO_BIN_EXE_seizure-forge"))
        .args(args)
        .current_dir(cwd)
        .env("SEIZURE_FORGE_LOG", "warn")
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

#[test]
fn criterion_10_cli_determinism() {
    let _g = serial();
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut ran = forge(&["synth", "--out", "data", "--seed", "10", "--duration", "5"], d);
    let common = ["--manifest", "data/manifest.csv", "--cache", "cache_a.sesp", "--config", "desk", "--seed", "10"];
    for run in ["a", "b"] {
        let cache = format!("cache_{run}.sesp");
        ran &= forge(&["featurize", "--manifest", "data/manifest.csv", "--out", &cache, "--seed", "10", "--size", "32"], d);
        let out = format!("train_{run}");
        let mut args = vec!["train", "--out", &out, "--epochs", "3", "--batch-size", "16", "--folds", "patient", "--fold", "0"];
        args.extend(common);
        ran &= forge(&args, d);
        let student = format!("student_{run}");
        let mut args = vec![
            "distill", "--teacher", "train_a/ensemble.snck", "--out", &student, "--epochs", "2", "--batch-size", "16",
            "--folds", "patient", "--fold", "0",
        ];
        args.extend(common);
        ran &= forge(&args, d);
        let eval = format!("eval_{run}");
        let mut args = vec!["evaluate", "--out", &eval, "--epochs", "2", "--batch-size", "16", "--folds", "patient", "--k", "3"];
        args.extend(common);
        ran &= forge(&args, d);
    }
    let pairs = [
        ("cache_a.sesp", "cache_b.sesp"),
        ("train_a/ensemble.snck", "train_b/ensemble.snck"),
        ("train_a/metrics.json", "train_b/metrics.json"),
        ("student_a/student.snck", "student_b/student.snck"),
        ("student_a/metrics.json", "student_b/metrics.json"),
        ("eval_a/metrics.json", "eval_b/metrics.json"),
    ];
    let differing: Vec<&str> = pairs
        .iter()
        .filter(|(a, b)| fs::read(d.join(a)).ok().is_none() || fs::read(d.join(a)).ok() != fs::read(d.join(b)).ok())
        .map(|p| p.0)
        .collect();
    verdict(
        10,
        ran && differing.is_empty(),
        format!("all runs succeeded {ran}, {} artifact pairs compared, differing {differing:?}", pairs.len()),
    );
}
