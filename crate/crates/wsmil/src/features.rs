//! Per-slide feature CSV: `patch_id,x,y,f0..f{d-1}[,gt]`.

use std::path::Path;

use wsmil_core::Matrix;

use crate::{Error, Result};

/// How the optional `gt` column is treated when reading.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroundTruth {
    /// Never parsed, whether or not the column exists. Used on the training path.
    Ignore,
    /// Parsed when present.
    IfPresent,
    /// Missing column is an error.
    Require,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlideFeatures {
    pub patch_ids: Vec<String>,
    pub coords: Vec<(u32, u32)>,
    pub features: Matrix,
    pub gt: Option<Vec<u8>>,
}

impl SlideFeatures {
    pub fn len(&self) -> usize {
        self.patch_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patch_ids.is_empty()
    }

    pub fn read(path: &Path, gt: GroundTruth) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(|e| csv_error(path, e))?;
        let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
        let names: Vec<&str> = headers.iter().collect();
        if names.len() < 4 || names[..3] != ["patch_id", "x", "y"] {
            return Err(Error::format(
                path,
                "header must start with patch_id,x,y followed by f0..",
            ));
        }
        let has_gt = names.last() == Some(&"gt");
        let d = names.len() - 3 - usize::from(has_gt);
        for (i, name) in names[3..3 + d].iter().enumerate() {
            if *name != format!("f{i}") {
                return Err(Error::format(
                    path,
                    format!("expected column f{i}, found {name:?}"),
                ));
            }
        }
        if d == 0 {
            return Err(Error::format(path, "no feature columns"));
        }
        if gt == GroundTruth::Require && !has_gt {
            return Err(Error::format(path, "ground-truth column `gt` is required"));
        }
        let read_gt = has_gt && gt != GroundTruth::Ignore;

        let mut patch_ids = Vec::new();
        let mut coords = Vec::new();
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for (n, row) in rdr.records().enumerate() {
            let row = row.map_err(|e| csv_error(path, e))?;
            let line = n + 2;
            let bad = |what: &str| Error::format(path, format!("line {line}: {what}"));
            patch_ids.push(row[0].to_string());
            let x: u32 = row[1]
                .parse()
                .map_err(|_| bad("x is not a non-negative integer"))?;
            let y: u32 = row[2]
                .parse()
                .map_err(|_| bad("y is not a non-negative integer"))?;
            coords.push((x, y));
            for c in 3..3 + d {
                let v: f64 = row[c]
                    .parse()
                    .map_err(|_| bad(&format!("column f{} is not a number", c - 3)))?;
                if !v.is_finite() {
                    return Err(bad("non-finite feature"));
                }
                data.push(v);
            }
            if read_gt {
                labels.push(match &row[3 + d] {
                    "0" => 0,
                    "1" => 1,
                    other => return Err(bad(&format!("gt must be 0 or 1, got {other:?}"))),
                });
            }
        }
        let features = Matrix::from_vec(patch_ids.len(), d, data)?;
        Ok(SlideFeatures {
            patch_ids,
            coords,
            features,
            gt: read_gt.then_some(labels),
        })
    }

    /// Writes the file; the `gt` column is emitted only when `with_gt` and
    /// labels are present.
    pub fn write(&self, path: &Path, with_gt: bool) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        let d = self.features.cols();
        let gt = self.gt.as_ref().filter(|_| with_gt);
        let mut header = vec!["patch_id".to_string(), "x".into(), "y".into()];
        header.extend((0..d).map(|i| format!("f{i}")));
        if gt.is_some() {
            header.push("gt".into());
        }
        w.write_record(&header).map_err(|e| csv_error(path, e))?;
        let mut rec = Vec::with_capacity(header.len());
        for i in 0..self.len() {
            rec.clear();
            rec.push(self.patch_ids[i].clone());
            rec.push(self.coords[i].0.to_string());
            rec.push(self.coords[i].1.to_string());
            rec.extend(self.features.row(i).iter().map(|v| v.to_string()));
            if let Some(gt) = gt {
                rec.push(gt[i].to_string());
            }
            w.write_record(&rec).map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::format(path, e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> SlideFeatures {
        SlideFeatures {
            patch_ids: vec!["p0".into(), "p1".into()],
            coords: vec![(0, 0), (1, 0)],
            features: Matrix::from_rows(&[[0.1, -2.5e-8], [1.0 / 3.0, 7.0]]).unwrap(),
            gt: Some(vec![0, 1]),
        }
    }

    #[test]
    fn gt_modes() {
        let dir = tempfile::tempdir().unwrap();
        let with = dir.path().join("with.csv");
        let without = dir.path().join("without.csv");
        sample().write(&with, true).unwrap();
        sample().write(&without, false).unwrap();
        assert!(std::fs::read_to_string(&with)
            .unwrap()
            .starts_with("patch_id,x,y,f0,f1,gt\n"));
        assert!(std::fs::read_to_string(&without)
            .unwrap()
            .starts_with("patch_id,x,y,f0,f1\n"));

        assert_eq!(
            SlideFeatures::read(&with, GroundTruth::Require).unwrap(),
            sample()
        );
        assert_eq!(
            SlideFeatures::read(&with, GroundTruth::Ignore).unwrap().gt,
            None
        );
        assert_eq!(
            SlideFeatures::read(&without, GroundTruth::IfPresent)
                .unwrap()
                .gt,
            None
        );
        assert!(SlideFeatures::read(&without, GroundTruth::Require).is_err());
        assert_eq!(
            SlideFeatures::read(&with, GroundTruth::Ignore).unwrap(),
            SlideFeatures::read(&without, GroundTruth::Ignore).unwrap()
        );
    }

    #[test]
    fn malformed_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "patch_id,x,y,f1\np,0,0,1\n").unwrap();
        assert!(SlideFeatures::read(&p, GroundTruth::IfPresent).is_err());
        std::fs::write(&p, "patch_id,x,y,f0,gt\np,0,0,1,3\n").unwrap();
        assert!(SlideFeatures::read(&p, GroundTruth::IfPresent).is_err());
        // a bad gt value is never looked at on the training path
        assert!(SlideFeatures::read(&p, GroundTruth::Ignore).is_ok());
        std::fs::write(&p, "patch_id,x,y,f0\np,-1,0,1\n").unwrap();
        assert!(SlideFeatures::read(&p, GroundTruth::IfPresent).is_err());
        std::fs::write(&p, "patch_id,x,y,f0\np,0,0,nan\n").unwrap();
        assert!(SlideFeatures::read(&p, GroundTruth::IfPresent).is_err());
        assert!(matches!(
            SlideFeatures::read(&dir.path().join("nope.csv"), GroundTruth::Ignore),
            Err(Error::Io { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn values_round_trip_bitwise(values in prop::collection::vec(-1e6f64..1e6, 1..60)) {
            let n = values.len();
            let s = SlideFeatures {
                patch_ids: (0..n).map(|i| format!("p{i}")).collect(),
                coords: (0..n).map(|i| (i as u32, 0)).collect(),
                features: Matrix::from_vec(n, 1, values).unwrap(),
                gt: None,
            };
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("f.csv");
            s.write(&p, true).unwrap();
            prop_assert_eq!(SlideFeatures::read(&p, GroundTruth::IfPresent).unwrap(), s);
        }
    }
}
