//! Proxy-label generation from bag labels and within-batch prediction ranks.
//!
//! All rankings use one total order: descending predicted probability, ties
//! broken by ascending original index. The "top" of a batch is the head of
//! that order and the "bottom" is its tail, so a batch of equal predictions
//! labels the lowest indices tumor and the highest indices normal.

use alloc::format;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Absolute slack used when flooring `B·fraction`, so that products such as
/// `150 × 0.3` land on the intended integer despite binary rounding.
const COUNT_SLACK: f64 = 1e-9;

/// Binary slide-level label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum BagLabel {
    /// No tumor tissue anywhere in the slide.
    Negative,
    /// Some (unknown) portion of the slide is tumor.
    Positive,
}

impl BagLabel {
    pub fn as_u8(self) -> u8 {
        match self {
            BagLabel::Negative => 0,
            BagLabel::Positive => 1,
        }
    }
}

impl TryFrom<u8> for BagLabel {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            0 => Ok(BagLabel::Negative),
            1 => Ok(BagLabel::Positive),
            other => Err(Error::InvalidConfig(format!(
                "bag label must be 0 or 1, got {other}"
            ))),
        }
    }
}

impl From<BagLabel> for u8 {
    fn from(l: BagLabel) -> u8 {
        l.as_u8()
    }
}

impl core::fmt::Display for BagLabel {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

fn default_weight() -> f64 {
    1.0
}

/// One point of the framework space: `alpha` is the minimum assumed tumor
/// fraction of a positive slide, `beta` the minimum assumed normal fraction.
/// `c0` and `c1` weight the negative-slide and positive-slide risk terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameworkConfig {
    pub alpha: f64,
    pub beta: f64,
    #[serde(default = "default_weight")]
    pub c0: f64,
    #[serde(default = "default_weight")]
    pub c1: f64,
}

impl FrameworkConfig {
    /// Config with unit class weights.
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        Self::with_weights(alpha, beta, 1.0, 1.0)
    }

    pub fn with_weights(alpha: f64, beta: f64, c0: f64, c1: f64) -> Result<Self> {
        let cfg = FrameworkConfig {
            alpha,
            beta,
            c0,
            c1,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks membership of the feasible space `α > 0, β ≥ 0, α + β ≤ 1`
    /// plus nonnegative finite weights.
    pub fn validate(&self) -> Result<()> {
        let FrameworkConfig {
            alpha,
            beta,
            c0,
            c1,
        } = *self;
        if !(alpha.is_finite() && beta.is_finite() && c0.is_finite() && c1.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "non-finite field in {self:?}"
            )));
        }
        if alpha <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "alpha must be > 0 (alpha = {alpha} assigns no tumor labels to positive slides)"
            )));
        }
        if alpha > 1.0 + COUNT_SLACK {
            return Err(Error::InvalidConfig(format!(
                "alpha must be <= 1, got {alpha}"
            )));
        }
        if beta < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "beta must be >= 0, got {beta}"
            )));
        }
        if alpha + beta > 1.0 + COUNT_SLACK {
            return Err(Error::InvalidConfig(format!(
                "alpha + beta must be <= 1 (got {alpha} + {beta}); larger values give contradictory proxy labels"
            )));
        }
        if c0 < 0.0 || c1 < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "c0 and c1 must be >= 0, got {c0}, {c1}"
            )));
        }
        Ok(())
    }
}

/// Per-instance proxy labels and the loss mask (`true` = contributes).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProxyLabels {
    pub labels: Vec<u8>,
    pub mask: Vec<bool>,
}

impl ProxyLabels {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of unmasked instances.
    pub fn contributing(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Number of unmasked instances labelled 1.
    pub fn positive_count(&self) -> usize {
        self.iter_active().filter(|&(_, y)| y == 1).count()
    }

    /// Number of unmasked instances labelled 0.
    pub fn negative_count(&self) -> usize {
        self.iter_active().filter(|&(_, y)| y == 0).count()
    }

    /// `(index, label)` for every unmasked instance.
    pub fn iter_active(&self) -> impl Iterator<Item = (usize, u8)> + '_ {
        self.labels
            .iter()
            .zip(&self.mask)
            .enumerate()
            .filter_map(|(i, (&y, &m))| m.then_some((i, y)))
    }
}

/// `⌊n·fraction⌋`, tolerant to binary rounding of decimal fractions.
pub fn floor_count(n: usize, fraction: f64) -> usize {
    let x = n as f64 * fraction;
    let c = libm::floor(x + COUNT_SLACK);
    if c <= 0.0 {
        0
    } else {
        (c as usize).min(n)
    }
}

/// `⌈n·fraction⌉`, tolerant to binary rounding of decimal fractions.
pub fn ceil_count(n: usize, fraction: f64) -> usize {
    let x = n as f64 * fraction;
    let c = libm::ceil(x - COUNT_SLACK);
    if c <= 0.0 {
        0
    } else {
        (c as usize).min(n)
    }
}

pub(crate) fn validate_predictions(pred: &[f64]) -> Result<()> {
    if pred.is_empty() {
        return Err(Error::EmptyPredictions);
    }
    match pred.iter().position(|p| !(0.0..=1.0).contains(p)) {
        Some(index) => Err(Error::PredictionOutOfRange {
            index,
            value: pred[index],
        }),
        None => Ok(()),
    }
}

#[inline]
fn rank_cmp(pred: &[f64], a: usize, b: usize) -> Ordering {
    pred[b].total_cmp(&pred[a]).then(a.cmp(&b))
}

/// Indices ordered by descending prediction, ties by ascending index.
pub fn descending_order(pred: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pred.len()).collect();
    order.sort_unstable_by(|&a, &b| rank_cmp(pred, a, b));
    order
}

/// Builds proxy labels for one batch.
///
/// A negative bag yields all-zero labels with a full mask. A positive bag
/// labels the `⌊B·α⌋` highest-ranked instances 1, the `⌊B·β⌋` lowest-ranked
/// instances 0, and masks out the rest.
pub fn assign_proxy_labels(
    pred: &[f64],
    bag_label: BagLabel,
    cfg: &FrameworkConfig,
) -> Result<ProxyLabels> {
    cfg.validate()?;
    validate_predictions(pred)?;
    let b = pred.len();
    match bag_label {
        BagLabel::Negative => Ok(ProxyLabels {
            labels: alloc::vec![0; b],
            mask: alloc::vec![true; b],
        }),
        BagLabel::Positive => {
            let n_pos = floor_count(b, cfg.alpha);
            let n_neg = floor_count(b, cfg.beta).min(b - n_pos);
            if n_pos == 0 {
                log::warn!(
                    "batch of {b} with alpha = {} yields no tumor proxy labels",
                    cfg.alpha
                );
            }
            let mut labels = alloc::vec![0u8; b];
            let mut mask = alloc::vec![false; b];
            let order = descending_order(pred);
            for &i in &order[..n_pos] {
                labels[i] = 1;
                mask[i] = true;
            }
            for &i in &order[b - n_neg..] {
                mask[i] = true;
            }
            Ok(ProxyLabels { labels, mask })
        }
    }
}

/// Indices whose rank lies between the `p_min`-th and `p_max`-th percentile
/// of the batch, using nearest-rank counts over the stable ordering.
///
/// An instance at ascending rank `a` (0 = lowest) is included when it is
/// among the top `⌊B·(100 − p_min)/100⌋` and among the bottom
/// `⌊B·p_max/100⌋`. Indices are returned in ascending index order.
pub fn percentile_subset(pred: &[f64], p_min: f64, p_max: f64) -> Result<Vec<usize>> {
    if !(0.0..=100.0).contains(&p_min) || !(0.0..=100.0).contains(&p_max) || p_min > p_max {
        return Err(Error::InvalidPercentiles { p_min, p_max });
    }
    validate_predictions(pred)?;
    let b = pred.len();
    let above = floor_count(b, (100.0 - p_min) / 100.0);
    let below = floor_count(b, p_max / 100.0);
    let order = descending_order(pred);
    let mut out: Vec<usize> = order
        .iter()
        .enumerate()
        .filter(|&(r, _)| {
            let ascending = b - 1 - r;
            ascending >= b - above && ascending < below
        })
        .map(|(_, &i)| i)
        .collect();
    out.sort_unstable();
    Ok(out)
}

/// Enumerates the lattice `{0, step, …, 1}²` restricted to `α + β ≤ 1` and
/// `α > 0`, ordered lexicographically by `(α, β)`, with unit weights.
pub fn feasible_grid(step: f64) -> Result<Vec<FrameworkConfig>> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::InvalidGridStep(step));
    }
    let n = libm::round(1.0 / step);
    if (n * step - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidGridStep(step));
    }
    let n = n as usize;
    let mut grid = Vec::with_capacity(n * (n + 1) / 2);
    for i in 1..=n {
        for j in 0..=(n - i) {
            grid.push(FrameworkConfig {
                alpha: i as f64 / n as f64,
                beta: j as f64 / n as f64,
                c0: 1.0,
                c1: 1.0,
            });
        }
    }
    Ok(grid)
}
