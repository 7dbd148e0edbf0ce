use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::eeg_io::{DatasetManifest, SeizureType};
use crate::error::{Error, Result};
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FoldMode {
    Seizure,
    Patient,
}

/// Assignment of every manifest event (by index) to one of `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSpec {
    pub mode: FoldMode,
    pub k: usize,
    pub seed: u64,
    pub assignments: Vec<usize>,
}

impl FoldSpec {
    pub fn test_events(&self, fold: usize) -> BTreeSet<u32> {
        self.events_where(|f| f == fold)
    }

    pub fn train_events(&self, fold: usize) -> BTreeSet<u32> {
        self.events_where(|f| f != fold)
    }

    fn events_where(&self, keep: impl Fn(usize) -> bool) -> BTreeSet<u32> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|&(_, &f)| keep(f))
            .map(|(i, _)| i as u32)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        self.assignments.iter().for_each(|&f| sizes[f] += 1);
        sizes
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("fold spec serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn check_k(k: usize, events: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::Fold(format!("need at least 2 folds, got {k}")));
    }
    if events == 0 {
        return Err(Error::Fold("manifest has no events".into()));
    }
    Ok(())
}

fn by_class(manifest: &DatasetManifest) -> BTreeMap<usize, Vec<usize>> {
    let mut classes: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, ev) in manifest.events.iter().enumerate() {
        classes.entry(ev.label()).or_default().push(i);
    }
    classes
}

fn class_name(c: usize) -> String {
    SeizureType::from_index(c).map_or_else(|| c.to_string(), |t| t.code().to_string())
}

/// Within each class, shuffle the seizures and deal them round-robin; the
/// deal continues where the previous class stopped so fold totals stay
/// balanced too.
pub fn seizure_wise_folds(manifest: &DatasetManifest, k: usize, seed: u64) -> Result<FoldSpec> {
    check_k(k, manifest.len())?;
    let mut rng = substream(seed, "folds");
    let mut assignments = vec![0; manifest.len()];
    let mut offset = 0;
    for (class, mut events) in by_class(manifest) {
        if events.len() < k {
            warn!(
                "class {} has {} seizure(s) for {k} folds; some folds get none",
                class_name(class),
                events.len()
            );
        }
        events.shuffle(&mut rng);
        for (i, &e) in events.iter().enumerate() {
            assignments[e] = (offset + i) % k;
        }
        offset += events.len();
    }
    Ok(FoldSpec {
        mode: FoldMode::Seizure,
        k,
        seed,
        assignments,
    })
}

/// Greedy patient placement. Classes with the fewest patients go first;
/// within a class, patients with the most seizures of that class go first,
/// each to the fold holding the fewest patients of the class, then the
/// fewest seizures of the class, then the fewest seizures overall. A
/// patient's events always share a fold.
pub fn patient_wise_folds(manifest: &DatasetManifest, k: usize, seed: u64) -> Result<FoldSpec> {
    check_k(k, manifest.len())?;
    // class -> patient -> seizure count
    let mut table: BTreeMap<usize, BTreeMap<&str, usize>> = BTreeMap::new();
    for ev in &manifest.events {
        *table.entry(ev.label()).or_default().entry(ev.patient_id.as_str()).or_default() += 1;
    }
    for (&class, patients) in &table {
        if patients.len() < k {
            return Err(Error::Fold(format!(
                "class {} has {} patient(s); patient-wise cross validation with k={k} needs at least {k}",
                class_name(class),
                patients.len()
            )));
        }
    }
    let mut patient_total: BTreeMap<&str, usize> = BTreeMap::new();
    for ev in &manifest.events {
        *patient_total.entry(ev.patient_id.as_str()).or_default() += 1;
    }
    let mut classes: Vec<usize> = table.keys().copied().collect();
    classes.sort_by_key(|c| (table[c].len(), table[c].values().sum::<usize>(), *c));

    // Seeded tie-breaking among equal patients.
    let mut rng = substream(seed, "folds");
    let mut names: Vec<&str> = patient_total.keys().copied().collect();
    names.shuffle(&mut rng);
    let rank: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, &p)| (p, i)).collect();

    let mut placed: BTreeMap<&str, usize> = BTreeMap::new();
    let mut fold_total = vec![0usize; k];
    for &class in &classes {
        let mut patients: Vec<(&str, usize)> = table[&class].iter().map(|(&p, &n)| (p, n)).collect();
        patients.sort_by_key(|&(p, n)| (std::cmp::Reverse(n), rank[p]));
        for (p, _) in patients {
            if placed.contains_key(p) {
                continue;
            }
            let mut class_patients = vec![0usize; k];
            let mut class_seizures = vec![0usize; k];
            for (&q, &f) in &placed {
                if let Some(&n) = table[&class].get(q) {
                    class_patients[f] += 1;
                    class_seizures[f] += n;
                }
            }
            let fold = (0..k)
                .min_by_key(|&f| (class_patients[f], class_seizures[f], fold_total[f], f))
                .expect("k >= 2");
            placed.insert(p, fold);
            fold_total[fold] += patient_total[p];
        }
    }
    let assignments = manifest.events.iter().map(|ev| placed[ev.patient_id.as_str()]).collect();
    Ok(FoldSpec {
        mode: FoldMode::Patient,
        k,
        seed,
        assignments,
    })
}

pub fn make_folds(manifest: &DatasetManifest, mode: FoldMode, k: usize, seed: u64) -> Result<FoldSpec> {
    match mode {
        FoldMode::Seizure => seizure_wise_folds(manifest, k, seed),
        FoldMode::Patient => patient_wise_folds(manifest, k, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eeg_io::SeizureEvent;

    fn manifest(rows: &[(&str, SeizureType)]) -> DatasetManifest {
        DatasetManifest {
            events: rows
                .iter()
                .map(|&(p, t)| SeizureEvent {
                    patient_id: p.into(),
                    recording_path: format!("{p}.edf"),
                    seizure_type: t,
                    start: 0.0,
                    stop: 10.0,
                })
                .collect(),
            ..Default::default()
        }
    }

    #[test]
    fn ten_seizures_two_per_fold() {
        let m = manifest(&[("a", SeizureType::Fn); 10]);
        let spec = seizure_wise_folds(&m, 5, 3).unwrap();
        assert_eq!(spec.fold_sizes(), vec![2; 5]);
    }

    #[test]
    fn three_patient_class_spreads_one_per_fold() {
        let mut rows = vec![("p1", SeizureType::Sp), ("p2", SeizureType::Sp), ("p3", SeizureType::Sp), ("p2", SeizureType::Sp)];
        for p in ["p1", "p2", "p3", "p4", "p5", "p6"] {
            rows.push((p, SeizureType::Fn));
            rows.push((p, SeizureType::Cp));
        }
        let m = manifest(&rows);
        let spec = patient_wise_folds(&m, 3, 9).unwrap();
        let mut sp_folds: Vec<usize> = ["p1", "p2", "p3"]
            .iter()
            .map(|p| spec.assignments[m.events.iter().position(|e| e.patient_id == *p).unwrap()])
            .collect();
        sp_folds.sort_unstable();
        assert_eq!(sp_folds, vec![0, 1, 2]);
    }

    #[test]
    fn two_patient_class_is_an_error() {
        let m = manifest(&[
            ("a", SeizureType::Ab),
            ("b", SeizureType::Ab),
            ("a", SeizureType::Fn),
            ("b", SeizureType::Fn),
            ("c", SeizureType::Fn),
        ]);
        let err = patient_wise_folds(&m, 3, 0).unwrap_err().to_string();
        assert!(err.contains("AB") && err.contains("2 patient"), "{err}");
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let m = manifest(&[("a", SeizureType::Fn); 6]);
        let a = seizure_wise_folds(&m, 3, 1).unwrap();
        assert_eq!(a.hash(), seizure_wise_folds(&m, 3, 1).unwrap().hash());
        assert_eq!(a.hash().len(), 64);
        let mut b = a.clone();
        b.seed = 2;
        assert_ne!(a.hash(), b.hash());
    }
}
