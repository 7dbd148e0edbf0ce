//! End-to-end helpers shared by the command-line tool and the examples.

use std::path::Path;

use clap::ValueEnum;
use serde::Serialize;

use crate::eeg_io::{load_manifest, DatasetManifest};
use crate::error::{Error, Result};
use crate::models::{EnsembleConfig, StudentConfig};
use crate::msfs::{
    build_subspaces, draw_ensemble_params, load_event_segments, subspaces_from_records, FeatureOptions,
    FeatureSubspace, SamplingOverrides, ENSEMBLE_SIZE,
};
use crate::nn::ParamStore;
use crate::saliency::read_feature_cache;

/// Network size family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Full-size dense networks.
    Default,
    /// Narrow, shallow networks for CPU-scale runs.
    Desk,
}

/// Ensemble of `preset` reading `size`×`size` maps.
pub fn ensemble_config(preset: Preset, size: usize) -> Result<EnsembleConfig> {
    let mut cfg = match preset {
        Preset::Default => EnsembleConfig::default(),
        Preset::Desk => EnsembleConfig::desk(),
    };
    for m in &mut cfg.members {
        m.input_size = size;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn student_config(size: usize) -> StudentConfig {
    StudentConfig {
        input_size: size,
        ..StudentConfig::default()
    }
}

/// Draw the member sampling parameters from `seed` and featurize every
/// event of `manifest`.
pub fn featurize(
    manifest: &DatasetManifest,
    seed: u64,
    overrides: &SamplingOverrides,
    opts: &FeatureOptions,
) -> Result<Vec<FeatureSubspace>> {
    let params = draw_ensemble_params(seed, ENSEMBLE_SIZE, overrides)?;
    let segments = load_event_segments(manifest)?;
    build_subspaces(&segments, &params, opts)
}

/// A manifest with the feature cache built from it.
#[derive(Debug, Clone)]
pub struct Features {
    pub manifest: DatasetManifest,
    pub subspaces: Vec<FeatureSubspace>,
    /// Side of the square maps.
    pub size: usize,
}

/// Load a manifest and cache and check that they belong together.
pub fn load_features(manifest_path: &Path, cache_path: &Path) -> Result<Features> {
    let manifest = load_manifest(manifest_path)?;
    let subspaces = subspaces_from_records(read_feature_cache(cache_path)?)?;
    let size = check_features(&manifest, &subspaces)?;
    Ok(Features {
        manifest,
        subspaces,
        size,
    })
}

/// Verify event ids and labels against the manifest; returns the map side.
pub fn check_features(manifest: &DatasetManifest, subspaces: &[FeatureSubspace]) -> Result<usize> {
    if subspaces.len() != ENSEMBLE_SIZE {
        return Err(Error::Cache(format!(
            "cache holds {} member subspaces, expected {ENSEMBLE_SIZE}",
            subspaces.len()
        )));
    }
    let mut size = None;
    for r in subspaces.iter().flat_map(|s| &s.records) {
        let ev = manifest.events.get(r.event as usize).ok_or_else(|| {
            Error::Cache(format!("cache refers to event {} but the manifest has {}", r.event, manifest.len()))
        })?;
        if ev.label() != r.label as usize {
            return Err(Error::Cache(format!(
                "event {} is labelled {} in the cache and {} in the manifest",
                r.event,
                r.label,
                ev.label()
            )));
        }
        if r.height != r.width || size.is_some_and(|s| s != r.height) {
            return Err(Error::Cache(format!("map size {}x{} differs from the rest", r.height, r.width)));
        }
        size = Some(r.height);
    }
    size.ok_or_else(|| Error::Cache("cache holds no records".into()))
}

/// Replace `expected` (freshly registered) with the checkpoint at `path`
/// after checking names, roles and shapes agree.
pub fn load_checkpoint_into(expected: &mut ParamStore<f32>, path: &Path) -> Result<()> {
    let loaded = ParamStore::<f32>::load(path)?;
    let mismatch = |what: String| Error::Checkpoint(format!("{}: {what}", path.display()));
    if loaded.entries().len() != expected.entries().len() {
        return Err(mismatch(format!(
            "{} parameters, model has {}",
            loaded.entries().len(),
            expected.entries().len()
        )));
    }
    for want in expected.entries() {
        let got = loaded
            .entry(&want.name)
            .map_err(|_| mismatch(format!("missing parameter `{}`", want.name)))?;
        if got.role != want.role || got.value.shape != want.value.shape {
            return Err(mismatch(format!(
                "parameter `{}` has shape {:?}, model expects {:?}",
                want.name, got.value.shape, want.value.shape
            )));
        }
    }
    *expected = loaded;
    Ok(())
}
