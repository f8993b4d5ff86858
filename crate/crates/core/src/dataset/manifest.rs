//! Manifest CSV:
//!
//! ```text
//! sample_id,feature_path,admiration,amusement,determination,empathic_pain,excitement,joy,split
//! ```
//!
//! `feature_path` is relative to the manifest's directory. Targets are
//! pre-normalized to `[0, 1]`. Rows in the `test` split may leave all six
//! target cells empty.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{EmotionTargets, EMOTION_KEYS, NUM_EMOTIONS};

pub const MANIFEST_HEADER: [&str; 9] = [
    "sample_id",
    "feature_path",
    "admiration",
    "amusement",
    "determination",
    "empathic_pain",
    "excitement",
    "joy",
    "split",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!(
                "unknown split {other:?} (expected train, val or test)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRecord {
    pub sample_id: String,
    pub feature_path: PathBuf,
    pub targets: Option<EmotionTargets>,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    /// Directory that `feature_path`s are relative to.
    pub root: PathBuf,
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.split(split).count()
    }

    pub fn resolve(&self, record: &ManifestRecord) -> PathBuf {
        self.root.join(&record.feature_path)
    }
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;

    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().ne(MANIFEST_HEADER.iter().copied()) {
        return Err(Error::Manifest(format!(
            "{}: header must be `{}`, found `{}`",
            path.display(),
            MANIFEST_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| csv_error(path, e))?;
        // Data rows are numbered from 1; the header is row 0.
        let line = i + 1;
        if row.len() != MANIFEST_HEADER.len() {
            return Err(Error::Manifest(format!(
                "row {line}: expected {} columns, found {}",
                MANIFEST_HEADER.len(),
                row.len()
            )));
        }
        let sample_id = row[0].to_string();
        if sample_id.is_empty() {
            return Err(Error::Manifest(format!("row {line}: empty sample_id")));
        }
        if !seen.insert(sample_id.clone()) {
            return Err(Error::Manifest(format!(
                "row {line}: duplicate sample_id {sample_id:?}"
            )));
        }
        let split: Split = row[8]
            .parse()
            .map_err(|e| Error::Manifest(format!("row {line}: {e}")))?;
        let targets = parse_targets(&row, line, split)?;
        let feature_path = PathBuf::from(&row[1]);
        let resolved = root.join(&feature_path);
        if !resolved.is_file() {
            return Err(Error::Manifest(format!(
                "row {line}: feature file {} for {sample_id:?} not found",
                resolved.display()
            )));
        }
        records.push(ManifestRecord {
            sample_id,
            feature_path,
            targets,
            split,
        });
    }
    Ok(Manifest { root, records })
}

fn parse_targets(row: &csv::StringRecord, line: usize, split: Split) -> Result<Option<EmotionTargets>> {
    let cells: Vec<&str> = (0..NUM_EMOTIONS).map(|k| row[2 + k].trim()).collect();
    if cells.iter().all(|c| c.is_empty()) {
        if split == Split::Test {
            return Ok(None);
        }
        return Err(Error::Manifest(format!(
            "row {line}: {split} rows must carry targets"
        )));
    }
    let mut values = [0.0; NUM_EMOTIONS];
    for (k, cell) in cells.iter().enumerate() {
        let v: f64 = cell.parse().map_err(|_| {
            Error::Manifest(format!(
                "row {line}, column {}: cannot parse {cell:?} as a number",
                EMOTION_KEYS[k]
            ))
        })?;
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Manifest(format!(
                "row {line}, column {}: target {v} outside [0, 1]",
                EMOTION_KEYS[k]
            )));
        }
        values[k] = v;
    }
    Ok(Some(EmotionTargets::new(values)?))
}

pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(MANIFEST_HEADER).map_err(|e| csv_error(path, e))?;
    for r in records {
        let mut row = vec![r.sample_id.clone(), r.feature_path.to_string_lossy().into_owned()];
        match &r.targets {
            Some(t) => row.extend(t.values().iter().map(|v| v.to_string())),
            None => row.extend(std::iter::repeat_n(String::new(), NUM_EMOTIONS)),
        }
        row.push(r.split.to_string());
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Manifest(format!("{}: {other:?}", path.display())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn setup(rows: &[&str]) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        for name in ["a.emif", "b.emif", "c.emif"] {
            fs::write(dir.path().join(name), b"").unwrap();
        }
        let path = dir.path().join("manifest.csv");
        let mut text = MANIFEST_HEADER.join(",");
        text.push('\n');
        for r in rows {
            text.push_str(r);
            text.push('\n');
        }
        fs::write(&path, text).unwrap();
        (dir, path)
    }

    #[test]
    fn well_formed_file() {
        let (_d, path) = setup(&[
            "a,a.emif,0.1,0.2,0.3,0.4,0.5,0.6,train",
            "b,b.emif,0,0,0,0,0,1,val",
            "c,c.emif,,,,,,,test",
        ]);
        let m = load_manifest(&path).unwrap();
        assert_eq!(m.records.len(), 3);
        assert_eq!(m.records[0].targets.unwrap().values(), &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        assert_eq!(m.records[1].split, Split::Val);
        assert!(m.records[2].targets.is_none());
        assert_eq!(m.count(Split::Train), 1);
    }

    #[test]
    fn out_of_range_target_names_row_and_column() {
        let (_d, path) = setup(&[
            "a,a.emif,0.1,0.2,0.3,0.4,0.5,0.6,train",
            "b,b.emif,0.1,1.5,0.3,0.4,0.5,0.6,train",
        ]);
        let msg = load_manifest(&path).unwrap_err().to_string();
        assert!(msg.contains("row 2") && msg.contains("amusement"), "{msg}");
    }

    #[test]
    fn duplicate_ids_rejected() {
        let (_d, path) = setup(&[
            "a,a.emif,0.1,0.2,0.3,0.4,0.5,0.6,train",
            "a,b.emif,0.1,0.2,0.3,0.4,0.5,0.6,train",
        ]);
        let msg = load_manifest(&path).unwrap_err().to_string();
        assert!(msg.contains("duplicate"), "{msg}");
    }

    #[test]
    fn missing_file_and_bad_columns() {
        let (_d, path) = setup(&["a,zzz.emif,0.1,0.2,0.3,0.4,0.5,0.6,train"]);
        assert!(load_manifest(&path).unwrap_err().to_string().contains("not found"));

        let (_d, path) = setup(&["a,a.emif,0.1,0.2,0.3,0.4,0.5,train"]);
        assert!(load_manifest(&path).unwrap_err().to_string().contains("columns"));

        let (_d, path) = setup(&["a,a.emif,,,,,,,train"]);
        assert!(load_manifest(&path).is_err());
    }

    #[test]
    fn wrong_header_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        fs::write(&path, "id,path\n").unwrap();
        assert!(matches!(load_manifest(&path), Err(Error::Manifest(_))));
    }

    #[test]
    fn write_then_load() {
        let (dir, _) = setup(&[]);
        let recs = vec![
            ManifestRecord {
                sample_id: "a".into(),
                feature_path: "a.emif".into(),
                targets: Some(EmotionTargets::new([0.1, 0.25, 1.0 / 3.0, 0.0, 1.0, 0.7]).unwrap()),
                split: Split::Train,
            },
            ManifestRecord {
                sample_id: "c".into(),
                feature_path: "c.emif".into(),
                targets: None,
                split: Split::Test,
            },
        ];
        let path = dir.path().join("out.csv");
        write_manifest(&path, &recs).unwrap();
        let m = load_manifest(&path).unwrap();
        assert_eq!(m.records, recs);
    }
}
