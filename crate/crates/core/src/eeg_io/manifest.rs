use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The seven retained TUH seizure types; myoclonic (MC) is excluded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SeizureType {
    Fn,
    Gn,
    Sp,
    Cp,
    Ab,
    Tn,
    Tc,
}

impl SeizureType {
    pub const ALL: [SeizureType; 7] = [
        SeizureType::Fn,
        SeizureType::Gn,
        SeizureType::Sp,
        SeizureType::Cp,
        SeizureType::Ab,
        SeizureType::Tn,
        SeizureType::Tc,
    ];
    pub const COUNT: usize = 7;

    /// Class index in `[0, 7)`.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn code(self) -> &'static str {
        match self {
            SeizureType::Fn => "FN",
            SeizureType::Gn => "GN",
            SeizureType::Sp => "SP",
            SeizureType::Cp => "CP",
            SeizureType::Ab => "AB",
            SeizureType::Tn => "TN",
            SeizureType::Tc => "TC",
        }
    }
}

impl fmt::Display for SeizureType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for SeizureType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let up = s.trim().to_ascii_uppercase();
        Self::ALL
            .iter()
            .copied()
            .find(|t| t.code() == up)
            .ok_or_else(|| format!("unknown seizure type {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeizureEvent {
    pub patient_id: String,
    /// As written in the manifest (relative paths are resolved against the manifest's directory).
    pub recording_path: String,
    pub seizure_type: SeizureType,
    pub start: f64,
    pub stop: f64,
}

impl SeizureEvent {
    pub fn duration(&self) -> f64 {
        self.stop - self.start
    }

    pub fn label(&self) -> usize {
        self.seizure_type.index()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version_tag: String,
    pub events: Vec<SeizureEvent>,
    /// Directory that relative recording paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
    /// Number of MC rows dropped while loading.
    pub excluded_myoclonic: usize,
}

impl DatasetManifest {
    pub fn resolve(&self, recording_path: &str) -> PathBuf {
        let p = Path::new(recording_path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Labels as class indices, in event order.
    pub fn labels(&self) -> Vec<usize> {
        self.events.iter().map(SeizureEvent::label).collect()
    }
}

pub const MANIFEST_HEADER: [&str; 6] = ["patient_id", "recording_path", "seizure_type", "start", "stop", "version"];

/// Load a manifest CSV and check that every referenced recording is readable.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let manifest = parse_manifest(&text, base)?;
    for (i, ev) in manifest.events.iter().enumerate() {
        let p = manifest.resolve(&ev.recording_path);
        fs::File::open(&p).map_err(|e| Error::Manifest {
            line: i + 2,
            message: format!("recording {} is not readable: {e}", p.display()),
        })?;
    }
    Ok(manifest)
}

/// Parse manifest CSV text. MC rows are dropped with a notice; any other
/// label outside the seven retained types is an error.
pub fn parse_manifest(text: &str, base_dir: PathBuf) -> Result<DatasetManifest> {
    let mut manifest = DatasetManifest {
        base_dir,
        ..Default::default()
    };
    if text.trim().is_empty() {
        return Ok(manifest);
    }
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::Manifest {
        line: 1,
        message: e.to_string(),
    })?;
    let headers: Vec<String> = headers.iter().map(str::to_ascii_lowercase).collect();
    let col = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Manifest {
            line: 1,
            message: format!("missing column {name:?} (expected {})", MANIFEST_HEADER.join(",")),
        })
    };
    let cols: Vec<usize> = MANIFEST_HEADER.iter().map(|c| col(c)).collect::<Result<_>>()?;

    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Manifest {
            line,
            message: e.to_string(),
        })?;
        let get = |c: usize| row.get(cols[c]).unwrap_or("");
        let label = get(2);
        if label.eq_ignore_ascii_case("MC") {
            warn!("manifest line {line}: excluding myoclonic (MC) seizure");
            manifest.excluded_myoclonic += 1;
            continue;
        }
        let seizure_type: SeizureType = label.parse().map_err(|message| Error::Manifest { line, message })?;
        let time = |c: usize, what: &str| -> Result<f64> {
            get(c).parse::<f64>().map_err(|_| Error::Manifest {
                line,
                message: format!("{what} is not a number: {:?}", get(c)),
            })
        };
        let (start, stop) = (time(3, "start")?, time(4, "stop")?);
        if !(start >= 0.0 && start < stop) {
            return Err(Error::Manifest {
                line,
                message: format!("need 0 <= start < stop, got start {start}, stop {stop}"),
            });
        }
        if manifest.version_tag.is_empty() {
            manifest.version_tag = get(5).to_string();
        }
        manifest.events.push(SeizureEvent {
            patient_id: get(0).to_string(),
            recording_path: get(1).to_string(),
            seizure_type,
            start,
            stop,
        });
    }
    if manifest.excluded_myoclonic > 0 {
        info!("excluded {} myoclonic seizure(s)", manifest.excluded_myoclonic);
    }
    Ok(manifest)
}

/// Serialize events in the manifest CSV layout.
pub fn manifest_to_csv(manifest: &DatasetManifest) -> String {
    let mut out = MANIFEST_HEADER.join(",");
    out.push('\n');
    for ev in &manifest.events {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            ev.patient_id, ev.recording_path, ev.seizure_type, ev.start, ev.stop, manifest.version_tag
        ));
    }
    out
}
