//! Masked binary cross-entropy over proxy labels.
//!
//! For a negative slide the loss is the false-positive term (every instance
//! labelled 0, weighted by `c0`). For a positive slide it covers the union of
//! the tumor-labelled head and normal-labelled tail of the batch, weighted by
//! `c1`. Within a batch the reduction is the mean over unmasked instances.

use alloc::vec::Vec;

use crate::proxy::{BagLabel, FrameworkConfig, ProxyLabels};
use crate::{Error, Result};

/// Probabilities are clamped to `[EPS, 1 - EPS]` before taking logs.
pub const EPS: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub value: f64,
    /// Derivative of `value` with respect to each prediction; exactly zero
    /// at masked indices.
    pub grad_wrt_pred: Vec<f64>,
    pub contributing_count: usize,
}

impl LossResult {
    fn scaled(mut self, c: f64) -> Self {
        self.value *= c;
        for g in &mut self.grad_wrt_pred {
            *g *= c;
        }
        self
    }
}

/// Mean BCE over the unmasked instances. An empty mask gives a zero loss.
pub fn masked_bce(pred: &[f64], proxy: &ProxyLabels) -> Result<LossResult> {
    if pred.len() != proxy.len() || proxy.mask.len() != proxy.labels.len() {
        return Err(Error::LengthMismatch {
            expected: proxy.len(),
            actual: pred.len(),
        });
    }
    if let Some(index) = pred.iter().position(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::PredictionOutOfRange {
            index,
            value: pred[index],
        });
    }
    let n = proxy.contributing();
    let mut grad = alloc::vec![0.0; pred.len()];
    if n == 0 {
        return Ok(LossResult {
            value: 0.0,
            grad_wrt_pred: grad,
            contributing_count: 0,
        });
    }
    let inv_n = 1.0 / n as f64;
    let mut total = 0.0;
    for (i, y) in proxy.iter_active() {
        let p = pred[i].clamp(EPS, 1.0 - EPS);
        if y == 1 {
            total -= libm::log(p);
            grad[i] = -inv_n / p;
        } else {
            total -= libm::log(1.0 - p);
            grad[i] = inv_n / (1.0 - p);
        }
    }
    Ok(LossResult {
        value: total * inv_n,
        grad_wrt_pred: grad,
        contributing_count: n,
    })
}

/// Slide-level risk term: `c0 · BCE` for negative slides, `c1 · BCE` for
/// positive ones.
pub fn batch_loss(
    pred: &[f64],
    proxy: &ProxyLabels,
    bag_label: BagLabel,
    cfg: &FrameworkConfig,
) -> Result<LossResult> {
    let weight = match bag_label {
        BagLabel::Negative => cfg.c0,
        BagLabel::Positive => cfg.c1,
    };
    Ok(masked_bce(pred, proxy)?.scaled(weight))
}
