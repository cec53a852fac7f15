//! Unweighted and learnable weighted pq-gram distances.
//!
//! The weighted distance is `sum_i softplus(w_i) * |x_i - y_i|` over the
//! profile dimensions. Softplus keeps every effective weight positive, so
//! the distance stays a pseudo-metric for any finite `w`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::pqgram::{merge_sparse, GramShape, Profile, Vocabulary};

/// `ln(1 + e^x)`.
///
/// Uses `x + ln(1 + e^-x)` above 30 so large inputs cannot overflow. Below
/// that threshold the direct form is accurate and makes
/// `softplus(unit_weight())` exactly 1.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic sigmoid, the derivative of [`softplus`].
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// The raw weight `ln(e - 1)` whose softplus is 1.
pub fn unit_weight() -> f64 {
    (std::f64::consts::E - 1.0).ln()
}

/// Unweighted pq-gram distance: the number of grams not shared by the two
/// trees, counted with multiplicity.
pub fn pq_distance(x: &Profile, y: &Profile) -> Result<u64> {
    x.check_compatible(y)?;
    let mut total = 0;
    merge_sparse(x.counts(), y.counts(), |_, a, b| total += a.abs_diff(b));
    Ok(total)
}

/// Raw weights `w` over a vocabulary, with the softplus-mapped weights
/// cached.
#[derive(Debug, Clone)]
pub struct WeightModel {
    vocab: Arc<Vocabulary>,
    raw: Vec<f64>,
    effective: Vec<f64>,
}

impl PartialEq for WeightModel {
    fn eq(&self, other: &Self) -> bool {
        self.raw == other.raw && self.vocab == other.vocab
    }
}

impl WeightModel {
    /// Every weight at [`unit_weight`], so the distance starts equal to the
    /// unweighted pq-gram distance.
    pub fn unit(vocab: Arc<Vocabulary>) -> WeightModel {
        let raw = vec![unit_weight(); vocab.dim()];
        WeightModel::from_raw(vocab, raw).expect("dimension matches by construction")
    }

    pub fn from_raw(vocab: Arc<Vocabulary>, raw: Vec<f64>) -> Result<WeightModel> {
        if raw.len() != vocab.dim() {
            return Err(Error::DimensionMismatch {
                expected: vocab.dim(),
                found: raw.len(),
            });
        }
        if let Some(bad) = raw.iter().find(|w| !w.is_finite()) {
            return Err(Error::InvalidConfig(format!("non-finite weight {bad}")));
        }
        let effective = raw.iter().map(|&w| softplus(w)).collect();
        Ok(WeightModel { vocab, raw, effective })
    }

    pub fn vocabulary(&self) -> &Arc<Vocabulary> {
        &self.vocab
    }

    pub fn shape(&self) -> GramShape {
        self.vocab.shape()
    }

    pub fn dim(&self) -> usize {
        self.raw.len()
    }

    /// Raw parameters `w`.
    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    /// Effective weights `softplus(w)`.
    pub fn effective(&self) -> &[f64] {
        &self.effective
    }

    /// Replaces the raw weights in place, refreshing the cache.
    pub fn set_raw(&mut self, raw: &[f64]) -> Result<()> {
        if raw.len() != self.raw.len() {
            return Err(Error::DimensionMismatch {
                expected: self.raw.len(),
                found: raw.len(),
            });
        }
        self.raw.copy_from_slice(raw);
        for (a, &w) in self.effective.iter_mut().zip(raw) {
            *a = softplus(w);
        }
        Ok(())
    }

    fn check(&self, x: &Profile, y: &Profile) -> Result<()> {
        x.check_compatible(y)?;
        if x.vocabulary_fingerprint() != self.vocab.fingerprint() || x.dim() != self.dim() {
            return Err(Error::VocabularyMismatch);
        }
        Ok(())
    }

    /// Weighted distance without the vocabulary check; callers guarantee
    /// compatibility.
    pub(crate) fn distance_unchecked(&self, x: &Profile, y: &Profile) -> f64 {
        let mut total = 0.0;
        merge_sparse(x.counts(), y.counts(), |i, a, b| {
            total += self.effective[i] * a.abs_diff(b) as f64;
        });
        total
    }

    /// Adds `scale * grad_w dist(x, y)` into `grad`.
    pub(crate) fn add_gradient_unchecked(
        &self,
        x: &Profile,
        y: &Profile,
        scale: f64,
        grad: &mut [f64],
    ) {
        merge_sparse(x.counts(), y.counts(), |i, a, b| {
            let d = a.abs_diff(b);
            if d > 0 {
                grad[i] += scale * sigmoid(self.raw[i]) * d as f64;
            }
        });
    }
}

pub fn weighted_distance(model: &WeightModel, x: &Profile, y: &Profile) -> Result<f64> {
    model.check(x, y)?;
    Ok(model.distance_unchecked(x, y))
}

/// Gradient of [`weighted_distance`] with respect to the raw weights:
/// `sigmoid(w_i) * |x_i - y_i|` per component.
pub fn distance_gradient(model: &WeightModel, x: &Profile, y: &Profile) -> Result<Vec<f64>> {
    model.check(x, y)?;
    let mut grad = vec![0.0; model.dim()];
    model.add_gradient_unchecked(x, y, 1.0, &mut grad);
    Ok(grad)
}
