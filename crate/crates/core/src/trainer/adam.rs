use rayon::prelude::*;

use crate::model::{GradientSet, ParameterSet};
use crate::trainer::TrainConfig;
use crate::Scalar;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

const PAR_CHUNK: usize = 1 << 14;

/// First and second moment estimates, one vector per parameter array in
/// group order, plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
    step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ParameterSet<T>) -> Self {
        let zeros = || {
            params
                .groups()
                .into_iter()
                .map(|g| vec![T::zero(); params.get(g).len()])
                .collect::<Vec<_>>()
        };
        Self {
            first: zeros(),
            second: zeros(),
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// Per-element constants of one Adam step.
#[derive(Debug, Clone, Copy)]
pub struct AdamStep<T> {
    pub learning_rate: T,
    pub weight_decay: T,
    /// `1 / (1 - β1^t)`.
    pub first_correction: T,
    /// `1 / (1 - β2^t)`.
    pub second_correction: T,
}

impl<T: Scalar> AdamStep<T> {
    pub fn new(learning_rate: f64, weight_decay: f64, t: u64) -> Self {
        let t = t as i32;
        Self {
            learning_rate: T::of(learning_rate),
            weight_decay: T::of(weight_decay),
            first_correction: T::of(1.0 / (1.0 - ADAM_BETA1.powi(t))),
            second_correction: T::of(1.0 / (1.0 - ADAM_BETA2.powi(t))),
        }
    }

    /// Updates `param` in place; `weight_decay · param` is added to the gradient first.
    #[inline]
    pub fn apply(&self, param: &mut [T], grad: &[T], first: &mut [T], second: &mut [T]) {
        let b1 = T::of(ADAM_BETA1);
        let b2 = T::of(ADAM_BETA2);
        let eps = T::of(ADAM_EPSILON);
        let one = T::one();
        for i in 0..param.len() {
            let g = grad[i] + self.weight_decay * param[i];
            first[i] = b1 * first[i] + (one - b1) * g;
            second[i] = b2 * second[i] + (one - b2) * g * g;
            let m_hat = first[i] * self.first_correction;
            let v_hat = second[i] * self.second_correction;
            param[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// One Adam step over every parameter array.
///
/// First-layer arrays use `learning_rate × first_layer_lr_multiplier`;
/// weight decay applies to weight matrices only, never to biases.
pub fn adam_update<T: Scalar>(
    params: &mut ParameterSet<T>,
    grads: &GradientSet<T>,
    state: &mut AdamState<T>,
    config: &TrainConfig,
) {
    state.step += 1;
    let parallel = !config.deterministic;
    for (gi, group) in params.groups().into_iter().enumerate() {
        let lr = if group.is_first_layer() {
            config.learning_rate * config.first_layer_lr_multiplier
        } else {
            config.learning_rate
        };
        let wd = if group.is_bias() { 0.0 } else { config.weight_decay };
        let step = AdamStep::<T>::new(lr, wd, state.step);
        let param = params.get_mut(group).as_mut_slice();
        let grad = grads.get(group).as_slice();
        let first = &mut state.first[gi];
        let second = &mut state.second[gi];
        if parallel && param.len() > PAR_CHUNK {
            param
                .par_chunks_mut(PAR_CHUNK)
                .zip(grad.par_chunks(PAR_CHUNK))
                .zip(first.par_chunks_mut(PAR_CHUNK))
                .zip(second.par_chunks_mut(PAR_CHUNK))
                .for_each(|(((p, g), m), v)| step.apply(p, g, m, v));
        } else {
            step.apply(param, grad, first, second);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, ParamGroup};
    use crate::numeric::SeededRng;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let step = AdamStep::<f64>::new(0.001, 0.0, 1);
        let (mut p, mut m, mut v) = ([1.0], [0.0], [0.0]);
        step.apply(&mut p, &[1.0], &mut m, &mut v);
        let delta = 1.0 - p[0];
        assert!((delta - 0.001 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_only_decays_weights() {
        let config = ModelConfig {
            num_items: 3,
            rating_scale: 2,
            hidden_units: 2,
            layers: 1,
            factor_rank: None,
            share_ratings: false,
        };
        let mut rng = SeededRng::new(4);
        let mut params = ParameterSet::<f64>::init(config, &mut rng).unwrap();
        params.score_bias.fill(0.5);
        params.hidden_bias.fill(-0.25);
        let before = params.clone();
        let grads = params.zeros_like();

        let mut state = AdamState::new(&params);
        let no_decay = TrainConfig {
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        adam_update(&mut params, &grads, &mut state, &no_decay);
        assert_eq!(params, before);

        let mut state = AdamState::new(&params);
        let decay = TrainConfig {
            weight_decay: 0.015,
            ..TrainConfig::default()
        };
        adam_update(&mut params, &grads, &mut state, &decay);
        assert_eq!(params.score_bias, before.score_bias);
        assert_eq!(params.hidden_bias, before.hidden_bias);
        for g in [ParamGroup::InputWeight(0), ParamGroup::OutputWeight(1)] {
            for (a, b) in params.get(g).as_slice().iter().zip(before.get(g).as_slice()) {
                assert!(a.abs() < b.abs(), "weight decay must shrink {b} (got {a})");
            }
        }
    }

    #[test]
    fn first_layer_multiplier_doubles_step() {
        let config = ModelConfig {
            num_items: 2,
            rating_scale: 2,
            hidden_units: 3,
            layers: 1,
            factor_rank: Some(2),
            share_ratings: true,
        };
        let base = ParameterSet::<f64>::init(config, &mut SeededRng::new(9)).unwrap();
        let mut grads = base.zeros_like();
        grads.fill(0.3);
        let run = |mult: f64| {
            let mut p = base.clone();
            let mut s = AdamState::new(&p);
            let cfg = TrainConfig {
                learning_rate: 0.01,
                first_layer_lr_multiplier: mult,
                weight_decay: 0.0,
                ..TrainConfig::default()
            };
            adam_update(&mut p, &grads, &mut s, &cfg);
            p
        };
        let one = run(1.0);
        let two = run(2.0);
        for g in base.groups() {
            for ((b, x), y) in base
                .get(g)
                .as_slice()
                .iter()
                .zip(one.get(g).as_slice())
                .zip(two.get(g).as_slice())
            {
                let (d1, d2) = (b - x, b - y);
                if g.is_first_layer() {
                    assert!((d2 - 2.0 * d1).abs() < 1e-15, "{g}: {d1} vs {d2}");
                } else {
                    assert_eq!(d1, d2);
                }
            }
        }
    }
}
