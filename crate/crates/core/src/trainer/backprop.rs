use crate::error::{Error, Result};
use crate::loss::{split_cost, CostConfig, SplitCostInput};
use crate::model::{GradientSet, HiddenState, ParamGroup, ParameterSet, Weights};
use crate::numeric::{sample_permutation, SeededRng};
use crate::Scalar;

/// One sampled training case: an ordering of the entity's rated targets and
/// a split position. The prefix is the conditioning context, the suffix the
/// items whose ratings are predicted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainStep {
    /// Rated items D.
    pub num_rated: usize,
    /// 1-based split position i.
    pub split: usize,
    /// Ordering positions `< i`, sorted by item index.
    pub prefix: Vec<(usize, u8)>,
    /// Ordering positions `>= i`, in ordering order.
    pub suffix: Vec<(usize, u8)>,
}

impl TrainStep {
    /// Builds the case for a given `ordering` (a permutation of `0..D`
    /// indexing `ratings`) and 1-based `split`.
    pub fn from_ordering(ratings: &[(u32, u8)], ordering: &[usize], split: usize) -> Self {
        let d = ratings.len();
        assert_eq!(ordering.len(), d, "ordering must cover every rated item");
        assert!(split >= 1 && split <= d, "split {split} outside 1..={d}");
        let pick = |&i: &usize| (ratings[i].0 as usize, ratings[i].1);
        let mut prefix: Vec<(usize, u8)> = ordering[..split - 1].iter().map(pick).collect();
        prefix.sort_unstable_by_key(|&(m, _)| m);
        let suffix = ordering[split - 1..].iter().map(pick).collect();
        Self {
            num_rated: d,
            split,
            prefix,
            suffix,
        }
    }
}

/// Draws a uniform ordering and a uniform split in `1..=D`.
pub fn sample_training_step(rng: &mut SeededRng, ratings: &[(u32, u8)]) -> TrainStep {
    assert!(!ratings.is_empty(), "cannot sample a training case without ratings");
    let ordering = sample_permutation(rng, ratings.len());
    let split = rng.below(ratings.len()) + 1;
    TrainStep::from_ordering(ratings, &ordering, split)
}

/// Receives gradient contributions one parameter row at a time.
pub trait GradientSink<T> {
    fn add_row(&mut self, group: ParamGroup, row: usize, values: &[T]);
}

impl<T: Scalar> GradientSink<T> for ParameterSet<T> {
    fn add_row(&mut self, group: ParamGroup, row: usize, values: &[T]) {
        self.get_mut(group).add_to_row(row, values);
    }
}

/// Row contributions recorded for later, ordered application.
#[derive(Debug, Clone, Default)]
pub struct SparseGradient<T> {
    rows: Vec<(ParamGroup, usize, Vec<T>)>,
}

impl<T: Scalar> SparseGradient<T> {
    pub fn new() -> Self {
        Self { rows: Vec::new() }
    }

    /// Adds every recorded row into `dense`, in recording order.
    pub fn apply(&self, dense: &mut GradientSet<T>) {
        for (g, r, v) in &self.rows {
            dense.get_mut(*g).add_to_row(*r, v);
        }
    }

    /// Parameter rows that received a contribution.
    pub fn touched(&self) -> impl Iterator<Item = (ParamGroup, usize)> + '_ {
        self.rows.iter().map(|(g, r, _)| (*g, *r))
    }
}

impl<T: Scalar> GradientSink<T> for SparseGradient<T> {
    fn add_row(&mut self, group: ParamGroup, row: usize, values: &[T]) {
        self.rows.push((group, row, values.to_vec()));
    }
}

struct Forward<T> {
    hidden: HiddenState<T>,
    projection: Vec<T>,
    input: SplitCostInput<T>,
}

fn forward<T: Scalar>(params: &ParameterSet<T>, step: &TrainStep) -> Forward<T> {
    let hidden = params.hidden_from_prefix(&step.prefix);
    let projection = params.project(hidden.top());
    let items = step
        .suffix
        .iter()
        .map(|&(m, r)| (params.cost_scores(&projection, m), r))
        .collect();
    Forward {
        hidden,
        projection,
        input: SplitCostInput {
            num_rated: step.num_rated,
            split: step.split,
            items,
        },
    }
}

/// Split-scaled training cost of one case, forward pass only.
pub fn step_cost<T: Scalar>(params: &ParameterSet<T>, step: &TrainStep, cost: &CostConfig) -> T {
    split_cost(&forward(params, step).input, cost).0
}

/// Cost of one case and its full gradient.
pub fn backprop_step<T: Scalar>(
    params: &ParameterSet<T>,
    step: &TrainStep,
    cost: &CostConfig,
) -> Result<(T, GradientSet<T>)> {
    let mut grads = params.zeros_like();
    let c = accumulate_step(params, step, cost, T::one(), &mut grads)?;
    Ok((c, grads))
}

fn scaled<T: Scalar>(v: &[T], by: T) -> Vec<T> {
    v.iter().map(|&x| x * by).collect()
}

/// Backpropagates one case into `sink`, multiplying every gradient by
/// `weight`. Returns the unweighted cost.
///
/// Only rows that take part in the case are written: input rows of prefix
/// items (every rating `t <= r` when shared), output rows and score biases of
/// suffix items, plus the dense hidden-side arrays.
pub fn accumulate_step<T: Scalar, S: GradientSink<T>>(
    params: &ParameterSet<T>,
    step: &TrainStep,
    cost: &CostConfig,
    weight: T,
    sink: &mut S,
) -> Result<T> {
    let config = *params.config();
    let fwd = forward(params, step);
    let (total, dscores) = split_cost(&fwd.input, cost);
    if !total.is_finite() {
        return Err(Error::NonFinite(format!(
            "training cost {total} (D={}, split={})",
            step.num_rated, step.split
        )));
    }

    let (out_mats, in_mats_len) = match &params.weights {
        Weights::Full { v, w } => (v, w.len()),
        Weights::Factored { p, a, .. } => (p, a.len()),
    };
    debug_assert_eq!(in_mats_len, config.rating_scale);

    // output side: score biases and per-rating output rows of suffix items
    let mut dproj = vec![T::zero(); fwd.projection.len()];
    for (&(m, _), ds) in step.suffix.iter().zip(&dscores) {
        let mut de: Vec<T> = ds.iter().map(|&g| g * weight).collect();
        if config.share_ratings {
            // s^k = Σ_{j<=k} e_j, so ∂C/∂e_j = Σ_{k>=j} ∂C/∂s^k
            for j in (0..de.len().saturating_sub(1)).rev() {
                let next = de[j + 1];
                de[j] += next;
            }
            // the first term is left out of the cost scores
            de[0] = T::zero();
        }
        sink.add_row(ParamGroup::ScoreBias, m, &de);
        let first = usize::from(config.share_ratings);
        for (j, &dej) in de.iter().enumerate().skip(first) {
            sink.add_row(ParamGroup::OutputWeight(j), m, &scaled(&fwd.projection, dej));
            for (d, &v) in dproj.iter_mut().zip(out_mats[j].row(m)) {
                *d += dej * v;
            }
        }
    }

    let h_top = fwd.hidden.top();
    let mut dh = match &params.weights {
        Weights::Full { .. } => dproj,
        Weights::Factored { q, .. } => {
            for (j, &dz) in dproj.iter().enumerate() {
                sink.add_row(ParamGroup::OutputFactor, j, &scaled(h_top, dz));
            }
            q.matvec_transpose(&dproj)
        }
    };

    // stacked layers, top down
    for l in (0..params.deep.len()).rev() {
        let out = &fwd.hidden.layers[l + 1];
        let below = &fwd.hidden.layers[l];
        let dpre: Vec<T> = dh.iter().zip(out).map(|(&g, &h)| g * (T::one() - h * h)).collect();
        sink.add_row(ParamGroup::DeepBias(l), 0, &dpre);
        for (i, &d) in dpre.iter().enumerate() {
            sink.add_row(ParamGroup::DeepWeight(l), i, &scaled(below, d));
        }
        dh = params.deep[l].weight.matvec_transpose(&dpre);
    }

    let h1 = &fwd.hidden.layers[0];
    let da: Vec<T> = dh.iter().zip(h1).map(|(&g, &h)| g * (T::one() - h * h)).collect();
    if da.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "first-layer gradient (D={}, split={})",
            step.num_rated, step.split
        )));
    }
    sink.add_row(ParamGroup::HiddenBias, 0, &da);

    let din = match &params.weights {
        Weights::Full { .. } => da,
        Weights::Factored { b, .. } => {
            for (i, &d) in da.iter().enumerate() {
                sink.add_row(ParamGroup::InputFactor, i, &scaled(&fwd.hidden.input_sum, d));
            }
            b.matvec_transpose(&da)
        }
    };
    for &(m, r) in &step.prefix {
        let r = r as usize;
        let first = if config.share_ratings { 0 } else { r - 1 };
        for t in first..r {
            sink.add_row(ParamGroup::InputWeight(t), m, &din);
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    #[test]
    fn single_item_step() {
        let mut rng = SeededRng::new(1);
        for _ in 0..10 {
            let s = sample_training_step(&mut rng, &[(4, 2)]);
            assert_eq!(s.split, 1);
            assert!(s.prefix.is_empty());
            assert_eq!(s.suffix, vec![(4, 2)]);
        }
    }

    #[test]
    fn split_is_uniform() {
        let mut rng = SeededRng::new(77);
        let ratings = [(0, 1), (1, 2), (2, 3)];
        let mut counts = [0usize; 3];
        let n = 60_000;
        for _ in 0..n {
            let s = sample_training_step(&mut rng, &ratings);
            counts[s.split - 1] += 1;
            assert_eq!(s.prefix.len() + s.suffix.len(), 3);
            assert_eq!(s.prefix.len(), s.split - 1);
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 1.0 / 3.0).abs() < 0.01, "{counts:?}");
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let ratings: Vec<(u32, u8)> = (0..8).map(|i| (i * 3, (i % 5 + 1) as u8)).collect();
        let run = || {
            let mut rng = SeededRng::new(5);
            (0..20)
                .map(|_| sample_training_step(&mut rng, &ratings))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn sparse_and_dense_sinks_agree() {
        let config = ModelConfig {
            num_items: 9,
            rating_scale: 4,
            hidden_units: 5,
            layers: 2,
            factor_rank: None,
            share_ratings: true,
        };
        let params = ParameterSet::<f64>::init(config, &mut SeededRng::new(3)).unwrap();
        let step = TrainStep::from_ordering(&[(1, 2), (4, 4), (7, 1), (8, 3)], &[2, 0, 3, 1], 3);
        let (c, dense) = backprop_step(&params, &step, &CostConfig::hybrid(0.5).unwrap()).unwrap();
        let mut sparse = SparseGradient::new();
        let c2 = accumulate_step(&params, &step, &CostConfig::hybrid(0.5).unwrap(), 1.0, &mut sparse).unwrap();
        let mut applied = params.zeros_like();
        sparse.apply(&mut applied);
        assert_eq!(c, c2);
        assert_eq!(dense, applied);
    }
}
