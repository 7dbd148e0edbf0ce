use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use proptest::prelude::*;
use seizure_forge::eeg_io::{DatasetManifest, SeizureEvent, SeizureType};
use seizure_forge::eval::{patient_wise_folds, seizure_wise_folds, FoldMode};
use seizure_forge::Error;

fn manifest(rows: &[(usize, usize)]) -> DatasetManifest {
    DatasetManifest {
        version_tag: "test".into(),
        events: rows
            .iter()
            .enumerate()
            .map(|(i, &(class, patient))| SeizureEvent {
                patient_id: format!("p{patient:03}"),
                recording_path: format!("r{i}.edf"),
                seizure_type: SeizureType::from_index(class).unwrap(),
                start: 0.0,
                stop: 10.0,
            })
            .collect(),
        base_dir: PathBuf::new(),
        excluded_myoclonic: 0,
    }
}

/// (class, patient) rows: up to 7 classes, up to 12 patients, 1..=60 events.
fn rows() -> impl Strategy<Value = Vec<(usize, usize)>> {
    prop::collection::vec((0usize..7, 0usize..12), 1..=60)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn seizure_folds_are_stratified_partitions(rows in rows(), k in 2usize..6, seed in any::<u64>()) {
        let m = manifest(&rows);
        let spec = seizure_wise_folds(&m, k, seed).unwrap();
        prop_assert_eq!(spec.mode, FoldMode::Seizure);
        prop_assert_eq!(spec.assignments.len(), m.len());
        let mut seen = BTreeSet::new();
        for fold in 0..k {
            let test = spec.test_events(fold);
            let train = spec.train_events(fold);
            prop_assert!(test.is_disjoint(&train));
            prop_assert_eq!(test.len() + train.len(), m.len());
            for e in &test {
                prop_assert!(seen.insert(*e), "event {} in two test folds", e);
            }
        }
        prop_assert_eq!(seen.len(), m.len());
        for class in 0..7 {
            let per_fold: Vec<usize> = (0..k)
                .map(|f| spec.test_events(f).iter().filter(|&&e| rows[e as usize].0 == class).count())
                .collect();
            let (lo, hi) = (per_fold.iter().min().unwrap(), per_fold.iter().max().unwrap());
            prop_assert!(hi - lo <= 1, "class {} sizes {:?}", class, per_fold);
        }
    }

    #[test]
    fn patient_folds_keep_patients_together(rows in rows(), k in 2usize..5, seed in any::<u64>()) {
        let m = manifest(&rows);
        let mut patients: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        for &(c, p) in &rows {
            patients.entry(c).or_default().insert(p);
        }
        let short = patients.values().any(|ps| ps.len() < k);
        match patient_wise_folds(&m, k, seed) {
            Err(Error::Fold(msg)) => prop_assert!(short, "unexpected error {}", msg),
            Err(e) => prop_assert!(false, "wrong error kind {}", e),
            Ok(spec) => {
                prop_assert!(!short);
                let fold_patients: Vec<BTreeSet<usize>> = (0..k)
                    .map(|f| spec.test_events(f).iter().map(|&e| rows[e as usize].1).collect())
                    .collect();
                for a in 0..k {
                    for b in a + 1..k {
                        prop_assert!(fold_patients[a].is_disjoint(&fold_patients[b]));
                    }
                }
                let covered: usize = (0..k).map(|f| spec.test_events(f).len()).sum();
                prop_assert_eq!(covered, m.len());
                // With single-class patients every class reaches every test fold.
                let mut classes_of: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
                for &(c, p) in &rows {
                    classes_of.entry(p).or_default().insert(c);
                }
                let single = classes_of.values().all(|cs| cs.len() == 1);
                for (&class, _) in patients.iter().filter(|_| single) {
                    for f in 0..k {
                        prop_assert!(spec.test_events(f).iter().any(|&e| rows[e as usize].0 == class));
                    }
                }
            }
        }
    }

    #[test]
    fn single_class_patients_reach_every_fold(
        rows in prop::collection::vec((0usize..7, 0usize..6), 1..=60),
        k in 2usize..4,
        seed in any::<u64>(),
    ) {
        // Patient ids unique to their class.
        let rows: Vec<(usize, usize)> = rows.into_iter().map(|(c, p)| (c, c * 10 + p)).collect();
        let m = manifest(&rows);
        if let Ok(spec) = patient_wise_folds(&m, k, seed) {
            let classes: BTreeSet<usize> = rows.iter().map(|r| r.0).collect();
            for c in classes {
                for f in 0..k {
                    prop_assert!(spec.test_events(f).iter().any(|&e| rows[e as usize].0 == c));
                }
            }
        }
    }
}

#[test]
fn two_patient_class_rejected_for_three_folds() {
    // Class AB (index 4) has data from only two patients.
    let mut rows: Vec<(usize, usize)> = (0..9).map(|i| (0, i % 5)).collect();
    rows.extend([(4, 7), (4, 8), (4, 7)]);
    let err = patient_wise_folds(&manifest(&rows), 3, 0).unwrap_err();
    let msg = err.to_string();
    assert!(matches!(err, Error::Fold(_)));
    assert!(msg.contains("class AB has 2 patient(s)"), "{msg}");
    assert!(err.is_data_error());
}

#[test]
fn folds_and_hash_are_deterministic() {
    let rows: Vec<(usize, usize)> = (0..42).map(|i| (i % 3, i % 7)).collect();
    let m = manifest(&rows);
    for make in [seizure_wise_folds, patient_wise_folds] {
        let a = make(&m, 3, 9).unwrap();
        let b = make(&m, 3, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
    assert_ne!(seizure_wise_folds(&m, 3, 9).unwrap().hash(), seizure_wise_folds(&m, 3, 10).unwrap().hash());
}
