//! Unfiltered tumor maps: one pixel per patch, no smoothing.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PatchScore {
    pub patch_id: String,
    pub x: u32,
    pub y: u32,
    pub score: f64,
}

/// 8-bit grayscale raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graymap {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

/// `round(255·score)`, halves rounded up.
pub fn gray_level(score: f64) -> u8 {
    (255.0 * score.clamp(0.0, 1.0) + 0.5).floor() as u8
}

impl Graymap {
    /// Places every patch at its grid coordinate. Dimensions are
    /// `(max_x + 1) × (max_y + 1)`; cells without a patch stay 0.
    pub fn from_scores(scores: &[PatchScore]) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::Config("no patches to render".into()));
        }
        let mut seen: BTreeMap<(u32, u32), Vec<&str>> = BTreeMap::new();
        for s in scores {
            seen.entry((s.x, s.y)).or_default().push(&s.patch_id);
        }
        let dups: Vec<String> = seen
            .iter()
            .filter(|(_, ids)| ids.len() > 1)
            .map(|((x, y), ids)| format!("({x},{y}): {}", ids.join(", ")))
            .collect();
        if !dups.is_empty() {
            return Err(Error::Config(format!(
                "coordinate collisions: {}",
                dups.join("; ")
            )));
        }
        let width = scores.iter().map(|s| s.x).max().unwrap() as usize + 1;
        let height = scores.iter().map(|s| s.y).max().unwrap() as usize + 1;
        let mut pixels = vec![0u8; width * height];
        for s in scores {
            pixels[s.y as usize * width + s.x as usize] = gray_level(s.score);
        }
        Ok(Graymap {
            width,
            height,
            pixels,
        })
    }

    /// Binary PGM (P5, maxval 255).
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_pgm()).map_err(|e| Error::io(path, e))
    }
}

pub fn write_scores_csv(scores: &[PatchScore], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let res = (|| -> csv::Result<()> {
        w.write_record(["patch_id", "x", "y", "score"])?;
        for s in scores {
            w.write_record([
                s.patch_id.clone(),
                s.x.to_string(),
                s.y.to_string(),
                s.score.to_string(),
            ])?;
        }
        Ok(())
    })();
    res.map_err(|e| Error::format(path, e.to_string()))?;
    w.flush().map_err(|e| Error::io(path, e))
}
