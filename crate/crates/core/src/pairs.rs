//! On-disk pair naming scheme and validated ingestion of external pairs.
//!
//! A pair with id `<id>` is stored as `<id>_img.png`, `<id>_mask.png` and a
//! `<id>.json` sidecar holding its provenance, seed and generator settings.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{mask_from_levels, ImageBuf, PairSample, Provenance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSidecar {
    pub provenance: Provenance,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub generator: serde_json::Value,
}

pub fn image_file(id: &str) -> String {
    format!("{id}_img.png")
}

pub fn mask_file(id: &str) -> String {
    format!("{id}_mask.png")
}

pub fn sidecar_file(id: &str) -> String {
    format!("{id}.json")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_pair(dir: &Path, id: &str, pair: &PairSample, sidecar: &PairSidecar) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    pair.image().save_png(&dir.join(image_file(id)))?;
    pair.mask().save_png(&dir.join(mask_file(id)))?;
    write_json(&dir.join(sidecar_file(id)), sidecar)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IngestProblem {
    /// Some of the three files of an id are absent.
    Orphan {
        missing: Vec<String>,
    },
    DimensionMismatch {
        image: (usize, usize),
        mask: (usize, usize),
    },
    NonBinaryMask,
    Unreadable(String),
    InvalidSidecar(String),
    UnrecognizedFile,
}

impl fmt::Display for IngestProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IngestProblem::Orphan { missing } => write!(f, "orphan: missing {}", missing.join(", ")),
            IngestProblem::DimensionMismatch { image, mask } => write!(
                f,
                "dimension mismatch: image {}x{}, mask {}x{}",
                image.0, image.1, mask.0, mask.1
            ),
            IngestProblem::NonBinaryMask => f.write_str("non-binary mask"),
            IngestProblem::Unreadable(msg) => write!(f, "unreadable: {msg}"),
            IngestProblem::InvalidSidecar(msg) => write!(f, "invalid sidecar: {msg}"),
            IngestProblem::UnrecognizedFile => f.write_str("unrecognized file name"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestIssue {
    /// Pair id, or the file name for unrecognized files.
    pub id: String,
    pub problem: IngestProblem,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub issues: Vec<IngestIssue>,
}

impl IngestReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }
}

impl fmt::Display for IngestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in &self.issues {
            writeln!(f, "{}: {}", i.id, i.problem)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestedPair {
    pub id: String,
    pub pair: PairSample,
    pub sidecar: PairSidecar,
}

#[derive(Default)]
struct Parts {
    image: bool,
    mask: bool,
    sidecar: bool,
}

fn load_one(dir: &Path, id: &str) -> std::result::Result<IngestedPair, IngestProblem> {
    let unreadable = |e: Error| IngestProblem::Unreadable(e.to_string());
    let sidecar: PairSidecar =
        read_json(&dir.join(sidecar_file(id))).map_err(|e| IngestProblem::InvalidSidecar(e.to_string()))?;
    let image = ImageBuf::load_png(&dir.join(image_file(id))).map_err(unreadable)?;
    let mask_img = ImageBuf::load_png(&dir.join(mask_file(id))).map_err(unreadable)?;
    if image.dims() != mask_img.dims() {
        return Err(IngestProblem::DimensionMismatch {
            image: image.dims(),
            mask: mask_img.dims(),
        });
    }
    let mask = mask_from_levels(&mask_img.to_gray()).map_err(|_| IngestProblem::NonBinaryMask)?;
    let pair = PairSample::new(image, mask, sidecar.provenance).map_err(unreadable)?;
    Ok(IngestedPair {
        id: id.to_string(),
        pair,
        sidecar,
    })
}

/// Loads every complete, valid pair in `dir` (sorted by id). Invalid or
/// incomplete pairs are skipped and itemized in the report.
pub fn ingest_external(dir: &Path) -> Result<(Vec<IngestedPair>, IngestReport)> {
    let mut ids: BTreeMap<String, Parts> = BTreeMap::new();
    let mut report = IngestReport::default();
    let mut names: Vec<String> = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if entry.file_type().map_err(|e| Error::io(entry.path(), e))?.is_file() {
            names.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    names.sort();
    for name in names {
        if let Some(id) = name.strip_suffix("_img.png") {
            ids.entry(id.to_string()).or_default().image = true;
        } else if let Some(id) = name.strip_suffix("_mask.png") {
            ids.entry(id.to_string()).or_default().mask = true;
        } else if let Some(id) = name.strip_suffix(".json") {
            ids.entry(id.to_string()).or_default().sidecar = true;
        } else {
            report.issues.push(IngestIssue {
                id: name,
                problem: IngestProblem::UnrecognizedFile,
            });
        }
    }
    let mut pairs = Vec::new();
    for (id, parts) in ids {
        let mut missing = Vec::new();
        if !parts.image {
            missing.push(image_file(&id));
        }
        if !parts.mask {
            missing.push(mask_file(&id));
        }
        if !parts.sidecar {
            missing.push(sidecar_file(&id));
        }
        let outcome = if missing.is_empty() {
            load_one(dir, &id)
        } else {
            Err(IngestProblem::Orphan { missing })
        };
        match outcome {
            Ok(p) => pairs.push(p),
            Err(problem) => report.issues.push(IngestIssue { id, problem }),
        }
    }
    Ok((pairs, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::MaskBuf;

    fn sample() -> PairSample {
        let mut mask = MaskBuf::zeros(4, 4);
        mask.set(1, 2, true);
        PairSample::new(ImageBuf::filled(4, 4, 1, 0.2).unwrap(), mask, Provenance::Real).unwrap()
    }

    fn sidecar() -> PairSidecar {
        PairSidecar {
            provenance: Provenance::Real,
            seed: Some(3),
            generator: serde_json::Value::Null,
        }
    }

    #[test]
    fn empty_dir() {
        let dir = tempfile::tempdir().unwrap();
        let (pairs, report) = ingest_external(dir.path()).unwrap();
        assert!(pairs.is_empty() && report.is_empty());
    }

    #[test]
    fn one_valid_pair_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        write_pair(dir.path(), "a", &sample(), &sidecar()).unwrap();
        let (pairs, report) = ingest_external(dir.path()).unwrap();
        assert!(report.is_empty());
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].pair.mask(), sample().mask());
        assert_eq!(pairs[0].sidecar, sidecar());
    }

    #[test]
    fn invalid_pairs_are_itemized() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        write_pair(d, "good", &sample(), &sidecar()).unwrap();
        write_pair(d, "gray", &sample(), &sidecar()).unwrap();
        ImageBuf::filled(4, 4, 1, 0.4)
            .unwrap()
            .save_png(&d.join(mask_file("gray")))
            .unwrap();
        write_pair(d, "size", &sample(), &sidecar()).unwrap();
        MaskBuf::zeros(5, 4).save_png(&d.join(mask_file("size"))).unwrap();
        sample().image().save_png(&d.join(image_file("lonely"))).unwrap();
        fs::write(d.join("notes.txt"), "x").unwrap();

        let (pairs, report) = ingest_external(d).unwrap();
        assert_eq!(pairs.iter().map(|p| p.id.as_str()).collect::<Vec<_>>(), ["good"]);
        let by_id: BTreeMap<_, _> = report
            .issues
            .iter()
            .map(|i| (i.id.as_str(), i.problem.to_string()))
            .collect();
        assert_eq!(by_id["gray"], "non-binary mask");
        assert!(by_id["size"].starts_with("dimension mismatch"));
        assert!(by_id["lonely"].starts_with("orphan"));
        assert_eq!(by_id["notes.txt"], "unrecognized file name");
    }
}
