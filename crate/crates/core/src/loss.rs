//! Training costs over the K rating scores of one item, with their
//! gradients with respect to those scores.
//!
//! * regular: negative log of the softmax conditional;
//! * ordinal: negative log of a product of two listwise ranking
//!   likelihoods, one walking down from the true rating to 1 and one walking
//!   up from it to K;
//! * hybrid: `(1 - λ)·regular + λ·ordinal`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{log_softmax, log_sum_exp, softmax};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostVariant {
    Regular,
    Ordinal,
    Hybrid,
}

/// Weight of the ordinal cost in the training objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostConfig {
    pub lambda: f64,
}

impl CostConfig {
    pub fn regular() -> Self {
        Self { lambda: 0.0 }
    }

    pub fn ordinal() -> Self {
        Self { lambda: 1.0 }
    }

    pub fn hybrid(lambda: f64) -> Result<Self> {
        let c = Self { lambda };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::config("lambda", format!("{} is not in [0, 1]", self.lambda)));
        }
        Ok(())
    }

    pub fn variant(&self) -> CostVariant {
        if self.lambda == 0.0 {
            CostVariant::Regular
        } else if self.lambda == 1.0 {
            CostVariant::Ordinal
        } else {
            CostVariant::Hybrid
        }
    }
}

#[inline]
fn check_rating(len: usize, rating: u8) -> usize {
    assert!(len >= 1, "empty score vector");
    let k = rating as usize;
    assert!(k >= 1 && k <= len, "rating {rating} outside 1..={len}");
    k - 1
}

/// `-log softmax(scores)[k]` and `softmax(scores) - onehot(k)`.
pub fn regular_nll<T: Scalar>(scores: &[T], rating: u8) -> (T, Vec<T>) {
    let idx = check_rating(scores.len(), rating);
    let cost = -log_softmax(scores)[idx];
    let mut grad = softmax(scores);
    grad[idx] -= T::one();
    (cost, grad)
}

/// Log of the ordinal conditional for true rating `k` and its gradient.
///
/// ```text
/// log p = Σ_{j=k..1} [s_j - log Σ_{t=1..j} e^{s_t}]  +  Σ_{j=k..K} [s_j - log Σ_{t=j..K} e^{s_t}]
/// ```
///
/// The `j = k` term appears in both sums. The value is not normalized over k.
pub fn ordinal_log_conditional<T: Scalar>(scores: &[T], rating: u8) -> (T, Vec<T>) {
    let idx = check_rating(scores.len(), rating);
    let n = scores.len();
    let mut logp = T::zero();
    let mut grad = vec![T::zero(); n];
    // down: slices s_1..s_j for j = k..1
    for j in 0..=idx {
        let slice = &scores[..=j];
        logp += scores[j] - log_sum_exp(slice);
        grad[j] += T::one();
        for (g, p) in grad[..=j].iter_mut().zip(softmax(slice)) {
            *g -= p;
        }
    }
    // up: slices s_j..s_K for j = k..K
    for j in idx..n {
        let slice = &scores[j..];
        logp += scores[j] - log_sum_exp(slice);
        grad[j] += T::one();
        for (g, p) in grad[j..].iter_mut().zip(softmax(slice)) {
            *g -= p;
        }
    }
    (logp, grad)
}

/// Negative log of the ordinal conditional.
pub fn ordinal_cost<T: Scalar>(scores: &[T], rating: u8) -> (T, Vec<T>) {
    let (logp, grad) = ordinal_log_conditional(scores, rating);
    (-logp, grad.into_iter().map(|g| -g).collect())
}

/// `(1 - λ)·regular + λ·ordinal`; the endpoints return the pure costs.
pub fn hybrid_cost<T: Scalar>(scores: &[T], rating: u8, config: &CostConfig) -> (T, Vec<T>) {
    match config.variant() {
        CostVariant::Regular => regular_nll(scores, rating),
        CostVariant::Ordinal => ordinal_cost(scores, rating),
        CostVariant::Hybrid => {
            let lambda = T::of(config.lambda);
            let keep = T::one() - lambda;
            let (cr, gr) = regular_nll(scores, rating);
            let (co, go) = ordinal_cost(scores, rating);
            let grad = gr.iter().zip(&go).map(|(&a, &b)| keep * a + lambda * b).collect();
            (keep * cr + lambda * co, grad)
        }
    }
}

/// Suffix items of one sampled (ordering, split) case.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitCostInput<T> {
    /// Total rated items D.
    pub num_rated: usize,
    /// 1-based split position i; the suffix holds `D - i + 1` items.
    pub split: usize,
    /// Scores and true rating of every suffix item, all computed from the
    /// same prefix hidden state.
    pub items: Vec<(Vec<T>, u8)>,
}

impl<T> SplitCostInput<T> {
    /// `D / (D - i + 1)`.
    pub fn scale(&self) -> f64 {
        self.num_rated as f64 / (self.num_rated - self.split + 1) as f64
    }
}

/// Suffix cost scaled by `D / (D - i + 1)`; the gradients carry the same factor.
pub fn split_cost<T: Scalar>(input: &SplitCostInput<T>, config: &CostConfig) -> (T, Vec<Vec<T>>) {
    let d = input.num_rated;
    assert!(
        input.split >= 1 && input.split <= d,
        "split {} outside 1..={d}",
        input.split
    );
    assert_eq!(
        input.items.len(),
        d - input.split + 1,
        "suffix length must be D - i + 1"
    );
    let scale = T::of(input.scale());
    let mut total = T::zero();
    let mut grads = Vec::with_capacity(input.items.len());
    for (scores, rating) in &input.items {
        let (c, g) = hybrid_cost(scores, *rating, config);
        total += c;
        grads.push(g.into_iter().map(|v| v * scale).collect());
    }
    (total * scale, grads)
}
