//! The weakly supervised training loop.
//!
//! Every epoch visits each training slide once in a seeded shuffled order.
//! For each slide a batch of `B` patches is drawn, scored by the current
//! model, converted to proxy labels, and used for one Adam step.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::loss::batch_loss;
use crate::matrix::Matrix;
use crate::metrics::roc_auc;
use crate::model::{AdamState, Mlp};
use crate::proxy::{assign_proxy_labels, floor_count, BagLabel, FrameworkConfig};
use crate::{Error, Result};

/// A training slide. Carries no instance ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Bag {
    pub slide_id: String,
    pub label: BagLabel,
    pub features: Matrix,
}

/// A held-out slide with instance ground truth, for per-epoch monitoring.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedBag {
    pub features: Matrix,
    pub gt: Vec<u8>,
}

fn default_lr() -> f64 {
    1e-4
}
fn default_epochs() -> usize {
    20
}
fn default_batch() -> usize {
    150
}
fn default_val() -> f64 {
    0.15
}
fn default_test() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    /// Fraction of slides held out for threshold selection and monitoring.
    #[serde(default = "default_val")]
    pub validation_fraction: f64,
    /// Fraction of slides held out for final evaluation.
    #[serde(default = "default_test")]
    pub test_fraction: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            learning_rate: default_lr(),
            epochs: default_epochs(),
            batch_size: default_batch(),
            seed: 0,
            validation_fraction: default_val(),
            test_fraction: default_test(),
        }
    }
}

impl TrainSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidSettings(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidSettings("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidSettings("batch_size must be >= 1".into()));
        }
        let (v, t) = (self.validation_fraction, self.test_fraction);
        if !(0.0..1.0).contains(&v) || !(0.0..1.0).contains(&t) || v + t >= 1.0 {
            return Err(Error::InvalidSettings(format!(
                "validation_fraction ({v}) and test_fraction ({t}) must be in [0, 1) and sum below 1"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// Stable slide-level split from a seeded hash of the slide id.
pub fn split_for(slide_id: &str, seed: u64, validation_fraction: f64, test_fraction: f64) -> Split {
    // FNV-1a over seed and id, then a splitmix64 finaliser
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in seed.to_le_bytes().iter().chain(slide_id.as_bytes()) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^= h >> 31;
    let u = (h >> 11) as f64 / (1u64 << 53) as f64;
    if u < test_fraction {
        Split::Test
    } else if u < test_fraction + validation_fraction {
        Split::Validation
    } else {
        Split::Train
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean batch loss over negative slides, if any were visited.
    pub mean_loss_negative: Option<f64>,
    /// Mean batch loss over positive slides, if any were visited.
    pub mean_loss_positive: Option<f64>,
    pub validation_auc: Option<f64>,
    pub wall_clock_secs: Option<f64>,
    pub slides_visited: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: Mlp,
    pub adam: AdamState,
    pub log: TrainLog,
}

#[derive(Debug, Clone)]
pub struct Trainer {
    pub framework: FrameworkConfig,
    pub settings: TrainSettings,
    pub hidden: Vec<usize>,
}

impl Trainer {
    pub fn new(
        framework: FrameworkConfig,
        settings: TrainSettings,
        hidden: Vec<usize>,
    ) -> Result<Self> {
        framework.validate()?;
        settings.validate()?;
        Ok(Trainer {
            framework,
            settings,
            hidden,
        })
    }

    pub fn layer_dims(&self, input_dim: usize) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        dims.push(input_dim);
        dims.extend_from_slice(&self.hidden);
        dims.push(1);
        dims
    }

    pub fn train(&self, bags: &[Bag], validation: &[AnnotatedBag]) -> Result<TrainOutcome> {
        self.train_with(bags, validation, |_| {})
    }

    /// Runs training; `on_epoch` sees each epoch's stats before they are
    /// logged and may fill in fields such as wall-clock time.
    pub fn train_with<F>(
        &self,
        bags: &[Bag],
        validation: &[AnnotatedBag],
        mut on_epoch: F,
    ) -> Result<TrainOutcome>
    where
        F: FnMut(&mut EpochStats),
    {
        let first = bags
            .first()
            .ok_or(Error::NoSlides("training needs at least one slide"))?;
        let d = first.features.cols();
        for bag in bags {
            if bag.features.cols() != d {
                return Err(Error::Shape(format!(
                    "slide {} has {} features, expected {d}",
                    bag.slide_id,
                    bag.features.cols()
                )));
            }
            if bag.features.rows() == 0 {
                return Err(Error::Shape(format!(
                    "slide {} has no patches",
                    bag.slide_id
                )));
            }
        }
        if !bags.iter().any(|b| b.label == BagLabel::Positive) {
            log::warn!("no positive slides: training reduces to fully supervised negatives");
        }
        let b = self.settings.batch_size;
        if bags.iter().any(|bag| bag.label == BagLabel::Positive)
            && floor_count(b, self.framework.alpha) == 0
        {
            log::warn!(
                "batch size {b} with alpha = {} gives no tumor proxy labels",
                self.framework.alpha
            );
        }

        let mut model = Mlp::init(&self.layer_dims(d), self.settings.seed)?;
        let mut adam = AdamState::new(&model);
        let mut rng = ChaCha8Rng::seed_from_u64(self.settings.seed);
        rng.set_stream(1);
        let mut order: Vec<usize> = (0..bags.len()).collect();
        let mut log = TrainLog::default();

        for epoch in 1..=self.settings.epochs {
            order.shuffle(&mut rng);
            let (mut sum_neg, mut n_neg, mut sum_pos, mut n_pos) = (0.0, 0usize, 0.0, 0usize);
            for &si in &order {
                let bag = &bags[si];
                let rows = bag.features.rows();
                let picked: Vec<usize> = if rows >= b {
                    index::sample(&mut rng, rows, b).into_vec()
                } else {
                    (0..b).map(|_| rng.random_range(0..rows)).collect()
                };
                let batch = bag.features.select_rows(&picked);
                let cache = model.forward_cached(&batch)?;
                let proxy = assign_proxy_labels(cache.predictions(), bag.label, &self.framework)?;
                if bag.label == BagLabel::Positive {
                    debug_assert_eq!(proxy.positive_count(), floor_count(b, self.framework.alpha));
                    debug_assert_eq!(
                        proxy.negative_count(),
                        floor_count(b, self.framework.beta)
                            .min(b - floor_count(b, self.framework.alpha))
                    );
                }
                let loss = batch_loss(cache.predictions(), &proxy, bag.label, &self.framework)?;
                if !loss.value.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        epoch,
                        slide_id: bag.slide_id.clone(),
                    });
                }
                match bag.label {
                    BagLabel::Negative => {
                        sum_neg += loss.value;
                        n_neg += 1;
                    }
                    BagLabel::Positive => {
                        sum_pos += loss.value;
                        n_pos += 1;
                    }
                }
                let grads = model.backward_cached(&cache, &loss.grad_wrt_pred)?;
                adam.step(&mut model, &grads, self.settings.learning_rate)?;
            }
            let mut stats = EpochStats {
                epoch,
                mean_loss_negative: (n_neg > 0).then(|| sum_neg / n_neg as f64),
                mean_loss_positive: (n_pos > 0).then(|| sum_pos / n_pos as f64),
                validation_auc: validation_auc(&model, validation)?,
                wall_clock_secs: None,
                slides_visited: order.len(),
            };
            on_epoch(&mut stats);
            log.epochs.push(stats);
        }
        Ok(TrainOutcome { model, adam, log })
    }
}

fn validation_auc(model: &Mlp, validation: &[AnnotatedBag]) -> Result<Option<f64>> {
    if validation.is_empty() {
        return Ok(None);
    }
    let mut scores = Vec::new();
    let mut gt = Vec::new();
    for v in validation {
        scores.extend(model.forward(&v.features)?);
        gt.extend_from_slice(&v.gt);
    }
    match roc_auc(&scores, &gt) {
        Ok(a) => Ok(Some(a)),
        Err(Error::SingleClass(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Scores every patch exactly once, in order.
pub fn predict(model: &Mlp, features: &Matrix) -> Result<Vec<f64>> {
    model.forward(features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{generate, PatchCount, SyntheticSpec};

    fn cohort(n: usize, positive_fraction: f64) -> (Vec<Bag>, Vec<AnnotatedBag>) {
        let spec = SyntheticSpec {
            n_slides: n,
            positive_fraction,
            patches_per_slide: PatchCount::Range([30, 50]),
            feature_dim: 4,
            tumor_fraction_range: [0.2, 0.4],
            class_separation: 2.0,
            noise_sigma: 1.0,
            seed: 5,
        };
        let c = generate(&spec).unwrap();
        let bags = c
            .slides
            .iter()
            .map(|s| Bag {
                slide_id: s.slide_id.clone(),
                label: s.label,
                features: s.features.clone(),
            })
            .collect();
        let ann = c
            .slides
            .iter()
            .map(|s| AnnotatedBag {
                features: s.features.clone(),
                gt: s.gt.clone(),
            })
            .collect();
        (bags, ann)
    }

    fn settings(epochs: usize) -> TrainSettings {
        TrainSettings {
            epochs,
            batch_size: 40,
            learning_rate: 1e-3,
            seed: 3,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let (bags, _) = cohort(8, 0.5);
        let t = Trainer::new(
            FrameworkConfig::new(0.2, 0.2).unwrap(),
            settings(3),
            alloc::vec![8],
        )
        .unwrap();
        let a = t.train(&bags, &[]).unwrap();
        let b = t.train(&bags, &[]).unwrap();
        assert!(a
            .model
            .params()
            .zip(b.model.params())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(a.adam, b.adam);
        assert_eq!(a.log, b.log);
        assert_eq!(a.adam.t, 3 * 8);
    }

    #[test]
    fn each_epoch_visits_every_slide() {
        let (bags, ann) = cohort(6, 0.5);
        let t = Trainer::new(
            FrameworkConfig::new(0.4, 0.2).unwrap(),
            settings(4),
            alloc::vec![4],
        )
        .unwrap();
        let out = t.train(&bags, &ann).unwrap();
        assert_eq!(out.log.epochs.len(), 4);
        assert!(out.log.epochs.iter().all(|e| e.slides_visited == 6));
        assert!(out.log.epochs.iter().all(|e| e.validation_auc.is_some()));
        assert_eq!(out.adam.t, 24);
    }

    #[test]
    fn negatives_only_cohort() {
        let (mut bags, _) = cohort(6, 0.5);
        bags.retain(|b| b.label == BagLabel::Negative);
        let t = Trainer::new(
            FrameworkConfig::new(0.2, 0.2).unwrap(),
            settings(10),
            alloc::vec![8, 4],
        )
        .unwrap();
        let out = t.train(&bags, &[]).unwrap();
        let losses: Vec<f64> = out
            .log
            .epochs
            .iter()
            .map(|e| e.mean_loss_negative.unwrap())
            .collect();
        assert!(losses.windows(2).all(|w| w[1] <= w[0]), "{losses:?}");
        assert!(out
            .log
            .epochs
            .iter()
            .all(|e| e.mean_loss_positive.is_none()));
        for bag in &bags {
            let p = predict(&out.model, &bag.features).unwrap();
            assert!(p.iter().sum::<f64>() / (p.len() as f64) < 0.5);
        }
    }

    #[test]
    fn small_slides_are_sampled_with_replacement() {
        let bag = Bag {
            slide_id: "tiny".into(),
            label: BagLabel::Positive,
            features: Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap(),
        };
        let t = Trainer::new(
            FrameworkConfig::new(0.5, 0.5).unwrap(),
            settings(2),
            alloc::vec![],
        )
        .unwrap();
        let out = t.train(&[bag], &[]).unwrap();
        assert_eq!(out.model.layer_dims(), alloc::vec![2, 1]);
        assert!(out.log.epochs[0].mean_loss_positive.unwrap() > 0.0);
    }

    #[test]
    fn rejects_bad_input() {
        let t = Trainer::new(
            FrameworkConfig::new(0.2, 0.2).unwrap(),
            settings(1),
            alloc::vec![4],
        )
        .unwrap();
        assert!(matches!(t.train(&[], &[]), Err(Error::NoSlides(_))));
        let a = Bag {
            slide_id: "a".into(),
            label: BagLabel::Negative,
            features: Matrix::zeros(3, 2),
        };
        let b = Bag {
            slide_id: "b".into(),
            label: BagLabel::Positive,
            features: Matrix::zeros(3, 3),
        };
        assert!(matches!(t.train(&[a, b], &[]), Err(Error::Shape(_))));
        assert!(Trainer::new(
            FrameworkConfig {
                alpha: 0.0,
                beta: 0.0,
                c0: 1.0,
                c1: 1.0
            },
            settings(1),
            alloc::vec![]
        )
        .is_err());
        assert!(Trainer::new(
            FrameworkConfig::new(0.2, 0.2).unwrap(),
            TrainSettings {
                epochs: 0,
                ..settings(1)
            },
            alloc::vec![]
        )
        .is_err());
        let s = TrainSettings {
            validation_fraction: 0.6,
            test_fraction: 0.5,
            ..settings(1)
        };
        assert!(s.validate().is_err());
    }

    #[test]
    fn split_is_stable_and_roughly_proportional() {
        assert_eq!(
            split_for("slide_0001", 4, 0.15, 0.2),
            split_for("slide_0001", 4, 0.15, 0.2)
        );
        let mut counts = [0usize; 3];
        for i in 0..4000 {
            match split_for(&format!("slide_{i:04}"), 1, 0.15, 0.2) {
                Split::Train => counts[0] += 1,
                Split::Validation => counts[1] += 1,
                Split::Test => counts[2] += 1,
            }
        }
        assert!(
            (counts[0] as f64 / 4000.0 - 0.65).abs() < 0.03,
            "{counts:?}"
        );
        assert!(
            (counts[1] as f64 / 4000.0 - 0.15).abs() < 0.03,
            "{counts:?}"
        );
        assert!(
            (counts[2] as f64 / 4000.0 - 0.20).abs() < 0.03,
            "{counts:?}"
        );
        assert_eq!(split_for("x", 0, 0.0, 0.0), Split::Train);
    }
}
