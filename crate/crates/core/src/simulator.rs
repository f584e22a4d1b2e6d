//! Synthetic cohorts with known instance ground truth.
//!
//! Normal instances are drawn from `N(−Δ/2·u, σ²I)` and tumor instances from
//! `N(+Δ/2·u, σ²I)` for a unit direction `u` fixed by the seed. Negative
//! slides hold only normal instances; a positive slide draws a tumor
//! fraction `f` uniformly from its range and holds `⌈f·B⌉` tumor instances
//! laid out as one contiguous run on a row-major grid.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::proxy::{ceil_count, BagLabel};
use crate::{Error, Result};

/// Patches per slide: a fixed count or an inclusive `[min, max]` range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PatchCount {
    Fixed(usize),
    Range([usize; 2]),
}

impl PatchCount {
    pub fn bounds(self) -> (usize, usize) {
        match self {
            PatchCount::Fixed(n) => (n, n),
            PatchCount::Range([lo, hi]) => (lo, hi),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_slides: usize,
    pub positive_fraction: f64,
    pub patches_per_slide: PatchCount,
    pub feature_dim: usize,
    pub tumor_fraction_range: [f64; 2],
    pub class_separation: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

fn invalid(field: &'static str, reason: String) -> Error {
    Error::InvalidSpec { field, reason }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_slides == 0 {
            return Err(invalid("n_slides", "must be >= 1".into()));
        }
        if !(self.positive_fraction > 0.0 && self.positive_fraction <= 1.0) {
            return Err(invalid(
                "positive_fraction",
                format!("must lie in (0, 1], got {}", self.positive_fraction),
            ));
        }
        let (lo, hi) = self.patches_per_slide.bounds();
        if lo == 0 || lo > hi {
            return Err(invalid(
                "patches_per_slide",
                format!("need 1 <= min <= max, got [{lo}, {hi}]"),
            ));
        }
        if self.feature_dim == 0 {
            return Err(invalid("feature_dim", "must be >= 1".into()));
        }
        let [f_min, f_max] = self.tumor_fraction_range;
        if !(f_min > 0.0 && f_min <= f_max && f_max <= 1.0) {
            return Err(invalid(
                "tumor_fraction_range",
                format!("need 0 < f_min <= f_max <= 1, got [{f_min}, {f_max}]"),
            ));
        }
        if f_min * (hi as f64) < 1.0 {
            return Err(invalid(
                "tumor_fraction_range",
                format!("f_min = {f_min} covers less than one patch even on the largest slide ({hi} patches)"),
            ));
        }
        if !(self.class_separation >= 0.0 && self.class_separation.is_finite()) {
            return Err(invalid(
                "class_separation",
                format!("must be finite and >= 0, got {}", self.class_separation),
            ));
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return Err(invalid(
                "noise_sigma",
                format!("must be finite and > 0, got {}", self.noise_sigma),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSlide {
    pub slide_id: String,
    pub label: BagLabel,
    pub tumor_fraction: f64,
    /// Grid coordinates `(x, y)` per patch.
    pub coords: Vec<(u32, u32)>,
    pub features: Matrix,
    pub gt: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    /// The unit direction separating the two classes.
    pub direction: Vec<f64>,
    pub slides: Vec<SyntheticSlide>,
}

fn slide_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Width of the square-ish grid holding `n` patches, `⌈√n⌉`.
pub fn grid_width(n: usize) -> usize {
    let mut w = libm::sqrt(n as f64) as usize;
    while w * w < n {
        w += 1;
    }
    while w > 1 && (w - 1) * (w - 1) >= n {
        w -= 1;
    }
    w.max(1)
}

/// Generates the cohort. Slide `i` draws from its own ChaCha stream, so the
/// result does not depend on generation order.
pub fn generate(spec: &SyntheticSpec) -> Result<Cohort> {
    spec.validate()?;
    let d = spec.feature_dim;
    let mut master = slide_rng(spec.seed, 0);
    let mut direction: Vec<f64> = (0..d).map(|_| master.sample(StandardNormal)).collect();
    let norm = libm::sqrt(direction.iter().map(|v| v * v).sum::<f64>());
    if norm > 0.0 {
        direction.iter_mut().for_each(|v| *v /= norm);
    } else {
        direction = alloc::vec![0.0; d];
        direction[0] = 1.0;
    }
    let n_positive =
        (libm::round(spec.n_slides as f64 * spec.positive_fraction) as usize).min(spec.n_slides);
    let mut positive = alloc::vec![false; spec.n_slides];
    for i in index::sample(&mut master, spec.n_slides, n_positive) {
        positive[i] = true;
    }

    let (lo, hi) = spec.patches_per_slide.bounds();
    let [f_min, f_max] = spec.tumor_fraction_range;
    let half = spec.class_separation / 2.0;
    let width = idwidth(spec.n_slides);
    let slides = (0..spec.n_slides)
        .map(|i| {
            let mut rng = slide_rng(spec.seed, i as u64 + 1);
            let b = rng.random_range(lo..=hi);
            let (label, tumor_fraction, tumor) = if positive[i] {
                let f = rng.random_range(f_min..=f_max);
                let k = ceil_count(b, f).max(1);
                let start = rng.random_range(0..=b - k);
                (BagLabel::Positive, f, start..start + k)
            } else {
                (BagLabel::Negative, 0.0, 0..0)
            };
            let gt: Vec<u8> = (0..b).map(|j| u8::from(tumor.contains(&j))).collect();
            let mut features = Matrix::zeros(b, d);
            for (j, &y) in gt.iter().enumerate() {
                let shift = if y == 1 { half } else { -half };
                for (x, u) in features.row_mut(j).iter_mut().zip(&direction) {
                    let z: f64 = rng.sample(StandardNormal);
                    *x = shift * u + spec.noise_sigma * z;
                }
            }
            let w = grid_width(b);
            let coords = (0..b).map(|j| ((j % w) as u32, (j / w) as u32)).collect();
            SyntheticSlide {
                slide_id: format!("slide_{i:0width$}"),
                label,
                tumor_fraction,
                coords,
                features,
                gt,
            }
        })
        .collect();
    Ok(Cohort { direction, slides })
}

fn idwidth(n: usize) -> usize {
    let mut w = 1;
    let mut m = n.saturating_sub(1);
    while m >= 10 {
        m /= 10;
        w += 1;
    }
    w.max(4)
}

/// Bayes-optimal instance AUC of the two-Gaussian design, `Φ(Δ / (σ√2))`.
pub fn oracle_separability(spec: &SyntheticSpec) -> f64 {
    // Φ(x) = erfc(−x/√2) / 2 with x = Δ/(σ√2)
    0.5 * libm::erfc(-spec.class_separation / (2.0 * spec.noise_sigma))
}

#[cfg(test)]
mod tests {
    use super::*;
    pub(crate) fn spec() -> SyntheticSpec {
        SyntheticSpec {
            n_slides: 10,
            positive_fraction: 0.5,
            patches_per_slide: PatchCount::Range([40, 60]),
            feature_dim: 4,
            tumor_fraction_range: [0.2, 0.4],
            class_separation: 2.0,
            noise_sigma: 1.0,
            seed: 11,
        }
    }

    #[test]
    fn positive_count_by_construction() {
        let c = generate(&spec()).unwrap();
        assert_eq!(
            c.slides
                .iter()
                .filter(|s| s.label == BagLabel::Positive)
                .count(),
            5
        );
        let norm: f64 = c.direction.iter().map(|v| v * v).sum();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn negative_slides_have_no_tumor() {
        let c = generate(&spec()).unwrap();
        for s in c.slides.iter().filter(|s| s.label == BagLabel::Negative) {
            assert!(s.gt.iter().all(|&y| y == 0));
        }
    }

    #[test]
    fn fixed_fraction_gives_exact_counts() {
        let spec = SyntheticSpec {
            patches_per_slide: PatchCount::Fixed(100),
            tumor_fraction_range: [0.3, 0.3],
            ..spec()
        };
        let c = generate(&spec).unwrap();
        for s in c.slides.iter().filter(|s| s.label == BagLabel::Positive) {
            assert_eq!(s.gt.iter().filter(|&&y| y == 1).count(), 30);
        }
    }

    #[test]
    fn tumor_run_is_contiguous_and_count_is_ceil() {
        let c = generate(&spec()).unwrap();
        for s in c.slides.iter().filter(|s| s.label == BagLabel::Positive) {
            let ones: Vec<usize> =
                s.gt.iter()
                    .enumerate()
                    .filter(|(_, &y)| y == 1)
                    .map(|(i, _)| i)
                    .collect();
            assert_eq!(ones.len(), ceil_count(s.gt.len(), s.tumor_fraction));
            assert_eq!(ones.last().unwrap() - ones[0] + 1, ones.len());
        }
    }

    #[test]
    fn coordinates_row_major() {
        let c = generate(&SyntheticSpec {
            patches_per_slide: PatchCount::Fixed(10),
            tumor_fraction_range: [0.3, 0.3],
            ..spec()
        })
        .unwrap();
        let s = &c.slides[0];
        assert_eq!(grid_width(10), 4);
        assert_eq!(
            &s.coords[..6],
            &[(0, 0), (1, 0), (2, 0), (3, 0), (0, 1), (1, 1)]
        );
        assert_eq!(grid_width(1), 1);
        assert_eq!(grid_width(16), 4);
        assert_eq!(grid_width(17), 5);
    }

    #[test]
    fn deterministic() {
        assert_eq!(generate(&spec()).unwrap(), generate(&spec()).unwrap());
        assert_ne!(
            generate(&spec()).unwrap(),
            generate(&SyntheticSpec { seed: 12, ..spec() }).unwrap()
        );
    }

    #[test]
    fn validation_names_fields() {
        let bad = SyntheticSpec {
            tumor_fraction_range: [0.5, 0.3],
            ..spec()
        };
        assert!(matches!(
            bad.validate(),
            Err(Error::InvalidSpec {
                field: "tumor_fraction_range",
                ..
            })
        ));
        let bad = SyntheticSpec {
            tumor_fraction_range: [0.01, 0.3],
            ..spec()
        };
        assert!(matches!(
            bad.validate(),
            Err(Error::InvalidSpec {
                field: "tumor_fraction_range",
                ..
            })
        ));
        let bad = SyntheticSpec {
            positive_fraction: 0.0,
            ..spec()
        };
        assert!(matches!(
            bad.validate(),
            Err(Error::InvalidSpec {
                field: "positive_fraction",
                ..
            })
        ));
        let bad = SyntheticSpec {
            noise_sigma: 0.0,
            ..spec()
        };
        assert!(matches!(
            generate(&bad),
            Err(Error::InvalidSpec {
                field: "noise_sigma",
                ..
            })
        ));
        let bad = SyntheticSpec {
            patches_per_slide: PatchCount::Range([5, 3]),
            ..spec()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn bayes_auc() {
        assert_eq!(
            oracle_separability(&SyntheticSpec {
                class_separation: 0.0,
                ..spec()
            }),
            0.5
        );
        assert!(
            oracle_separability(&SyntheticSpec {
                class_separation: 60.0,
                ..spec()
            }) > 1.0 - 1e-12
        );
        // Φ(√2), tabulated
        let v = oracle_separability(&spec());
        assert!((v - 0.921_350_396_474_857_5).abs() < 1e-12, "{v}");
    }
}
