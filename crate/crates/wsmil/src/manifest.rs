use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wsmil_core::BagLabel;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub slide_id: String,
    pub label: BagLabel,
    pub n_patches: usize,
    /// Relative paths resolve against the manifest's directory.
    pub feature_file: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub base_dir: PathBuf,
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut records = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ManifestRecord = serde_json::from_str(&line)
                .map_err(|e| Error::format(path, format!("line {}: {e}", n + 1)))?;
            records.push(rec);
        }
        if records.is_empty() {
            return Err(Error::format(path, "manifest has no records"));
        }
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Manifest { base_dir, records })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for r in &self.records {
            let line = serde_json::to_string(r).expect("manifest records serialize");
            writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn feature_path(&self, record: &ManifestRecord) -> PathBuf {
        if record.feature_file.is_absolute() {
            record.feature_file.clone()
        } else {
            self.base_dir.join(&record.feature_file)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_json_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("manifest.jsonl");
        fs::write(
            &p,
            "{\"slide_id\":\"a\",\"label\":1,\"n_patches\":3,\"feature_file\":\"a.csv\"}\n\n{\"slide_id\":\"b\",\"label\":0,\"n_patches\":2,\"feature_file\":\"/abs/b.csv\"}\n",
        )
        .unwrap();
        let m = Manifest::read(&p).unwrap();
        assert_eq!(m.records.len(), 2);
        assert_eq!(m.records[0].label, BagLabel::Positive);
        assert_eq!(m.feature_path(&m.records[0]), dir.path().join("a.csv"));
        assert_eq!(m.feature_path(&m.records[1]), PathBuf::from("/abs/b.csv"));
    }

    #[test]
    fn rejects_bad_labels_and_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        fs::write(
            &p,
            "{\"slide_id\":\"a\",\"label\":2,\"n_patches\":3,\"feature_file\":\"a.csv\"}\n",
        )
        .unwrap();
        assert!(matches!(Manifest::read(&p), Err(Error::Format { .. })));
        fs::write(
            &p,
            "{\"slide_id\":\"a\",\"label\":1,\"n_patches\":3,\"feature_file\":\"a.csv\",\"x\":1}\n",
        )
        .unwrap();
        assert!(Manifest::read(&p).is_err());
        assert!(matches!(
            Manifest::read(&dir.path().join("missing")),
            Err(Error::Io { .. })
        ));
    }
}
