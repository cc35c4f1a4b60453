//! Model configuration, parameters and every forward computation: hidden
//! representations, per-item rating scores, softmax conditionals and
//! expected-rating prediction.

mod checkpoint;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{dot, softmax, DenseMatrix, SeededRng};
use crate::Scalar;

pub use checkpoint::{
    load_checkpoint, load_checkpoint_file, save_checkpoint, save_checkpoint_file, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Number of targets M (items for a user-based model, users for an
    /// item-based one).
    pub num_items: usize,
    /// Rating scale size K.
    pub rating_scale: usize,
    /// Hidden units H in every layer.
    pub hidden_units: usize,
    /// Hidden layer count L.
    pub layers: usize,
    /// Rank J of the factored weights, or `None` for full matrices.
    pub factor_rank: Option<usize>,
    /// Cumulative sharing of weights across ratings.
    pub share_ratings: bool,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("num_items", self.num_items),
            ("rating_scale", self.rating_scale),
            ("hidden_units", self.hidden_units),
            ("layers", self.layers),
        ] {
            if v == 0 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        if self.rating_scale > u8::MAX as usize {
            return Err(Error::config("rating_scale", "must fit in 8 bits"));
        }
        if let Some(j) = self.factor_rank {
            if j == 0 {
                return Err(Error::config("factor_rank", "must be at least 1"));
            }
            if j >= self.hidden_units || j >= self.num_items {
                log::warn!(
                    "factor rank {j} is not small next to H={} and M={}; factoring saves little",
                    self.hidden_units,
                    self.num_items
                );
            }
        }
        Ok(())
    }

    /// Exact number of scalars in the parameter set.
    pub fn parameter_count(&self) -> usize {
        let (m, k, h) = (self.num_items, self.rating_scale, self.hidden_units);
        let weights = match self.factor_rank {
            None => 2 * k * m * h,
            Some(j) => h * j + k * j * m + k * m * j + j * h,
        };
        let deep = (self.layers - 1) * (h * h + h);
        weights + k * m + h + deep
    }

    /// Stable 64-bit fingerprint of the configuration.
    pub fn fingerprint(&self) -> u64 {
        checkpoint::fnv1a(&checkpoint::config_bytes(self))
    }
}

/// Names one parameter array.
///
/// Storage is item-major wherever an array is indexed by item: the input
/// weights `W^k` (H×M) and factors `A^k` (J×M) are stored transposed, so
/// row `m` holds column `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    /// `W^k` (M×H, transposed) or `A^k` (M×J, transposed); index is `k - 1`.
    InputWeight(usize),
    /// `B` (H×J), factored models only.
    InputFactor,
    /// `V^k` (M×H) or `P^k` (M×J); index is `k - 1`.
    OutputWeight(usize),
    /// `Q` (J×H), factored models only.
    OutputFactor,
    /// `b^k_m` as an M×K matrix.
    ScoreBias,
    /// First-layer bias `c` (1×H).
    HiddenBias,
    /// Weight of hidden layer `index + 2` (H×H, output-major).
    DeepWeight(usize),
    /// Bias of hidden layer `index + 2` (1×H).
    DeepBias(usize),
}

impl ParamGroup {
    /// Parameters of the first hidden layer (input weights, `B`, `c`).
    pub fn is_first_layer(self) -> bool {
        matches!(
            self,
            ParamGroup::InputWeight(_) | ParamGroup::InputFactor | ParamGroup::HiddenBias
        )
    }

    pub fn is_bias(self) -> bool {
        matches!(
            self,
            ParamGroup::ScoreBias | ParamGroup::HiddenBias | ParamGroup::DeepBias(_)
        )
    }
}

impl std::fmt::Display for ParamGroup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParamGroup::InputWeight(k) => write!(f, "input_weight[{}]", k + 1),
            ParamGroup::InputFactor => write!(f, "input_factor"),
            ParamGroup::OutputWeight(k) => write!(f, "output_weight[{}]", k + 1),
            ParamGroup::OutputFactor => write!(f, "output_factor"),
            ParamGroup::ScoreBias => write!(f, "score_bias"),
            ParamGroup::HiddenBias => write!(f, "hidden_bias"),
            ParamGroup::DeepWeight(l) => write!(f, "deep_weight[{}]", l + 2),
            ParamGroup::DeepBias(l) => write!(f, "deep_bias[{}]", l + 2),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Weights<T> {
    Full {
        w: Vec<DenseMatrix<T>>,
        v: Vec<DenseMatrix<T>>,
    },
    Factored {
        a: Vec<DenseMatrix<T>>,
        b: DenseMatrix<T>,
        p: Vec<DenseMatrix<T>>,
        q: DenseMatrix<T>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeepLayer<T> {
    pub weight: DenseMatrix<T>,
    pub bias: DenseMatrix<T>,
}

/// Every learnable array of a model, bound to its configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet<T> {
    config: ModelConfig,
    pub weights: Weights<T>,
    pub score_bias: DenseMatrix<T>,
    pub hidden_bias: DenseMatrix<T>,
    pub deep: Vec<DeepLayer<T>>,
}

/// Gradients share the parameter layout array for array.
pub type GradientSet<T> = ParameterSet<T>;

impl<T: Scalar> ParameterSet<T> {
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self::build(config, |rows, cols, _| DenseMatrix::zeros(rows, cols)))
    }

    /// Uniform Glorot initialization of weight matrices; biases start at zero.
    pub fn init(config: ModelConfig, rng: &mut SeededRng) -> Result<Self> {
        config.validate()?;
        Ok(Self::build(config, |rows, cols, fan| match fan {
            Some(fan) => DenseMatrix::uniform(rows, cols, (6.0 / fan as f64).sqrt(), rng),
            None => DenseMatrix::zeros(rows, cols),
        }))
    }

    /// Zeroed arrays with the same layout.
    pub fn zeros_like(&self) -> Self {
        Self::build(self.config, |rows, cols, _| DenseMatrix::zeros(rows, cols))
    }

    /// Calls `make(rows, cols, fan_in + fan_out)` per array in group order;
    /// the fan sum is `None` for biases.
    fn build(config: ModelConfig, mut make: impl FnMut(usize, usize, Option<usize>) -> DenseMatrix<T>) -> Self {
        let (m, k, h) = (config.num_items, config.rating_scale, config.hidden_units);
        let weights = match config.factor_rank {
            None => {
                let w = (0..k).map(|_| make(m, h, Some(h + m))).collect();
                let v = (0..k).map(|_| make(m, h, Some(m + h))).collect();
                Weights::Full { w, v }
            }
            Some(j) => {
                let a = (0..k).map(|_| make(m, j, Some(j + m))).collect();
                let b = make(h, j, Some(h + j));
                let p = (0..k).map(|_| make(m, j, Some(m + j))).collect();
                let q = make(j, h, Some(j + h));
                Weights::Factored { a, b, p, q }
            }
        };
        let score_bias = make(m, k, None);
        let hidden_bias = make(1, h, None);
        let deep = (1..config.layers)
            .map(|_| {
                let weight = make(h, h, Some(2 * h));
                let bias = make(1, h, None);
                DeepLayer { weight, bias }
            })
            .collect();
        Self {
            config,
            weights,
            score_bias,
            hidden_bias,
            deep,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Every array name in the fixed serialization order.
    pub fn groups(&self) -> Vec<ParamGroup> {
        let k = self.config.rating_scale;
        let factored = self.config.factor_rank.is_some();
        let mut out: Vec<ParamGroup> = (0..k).map(ParamGroup::InputWeight).collect();
        if factored {
            out.push(ParamGroup::InputFactor);
        }
        out.extend((0..k).map(ParamGroup::OutputWeight));
        if factored {
            out.push(ParamGroup::OutputFactor);
        }
        out.push(ParamGroup::ScoreBias);
        out.push(ParamGroup::HiddenBias);
        for l in 0..self.deep.len() {
            out.push(ParamGroup::DeepWeight(l));
            out.push(ParamGroup::DeepBias(l));
        }
        out
    }

    pub fn get(&self, group: ParamGroup) -> &DenseMatrix<T> {
        match (group, &self.weights) {
            (ParamGroup::InputWeight(k), Weights::Full { w, .. }) => &w[k],
            (ParamGroup::OutputWeight(k), Weights::Full { v, .. }) => &v[k],
            (ParamGroup::InputWeight(k), Weights::Factored { a, .. }) => &a[k],
            (ParamGroup::InputFactor, Weights::Factored { b, .. }) => b,
            (ParamGroup::OutputWeight(k), Weights::Factored { p, .. }) => &p[k],
            (ParamGroup::OutputFactor, Weights::Factored { q, .. }) => q,
            (ParamGroup::ScoreBias, _) => &self.score_bias,
            (ParamGroup::HiddenBias, _) => &self.hidden_bias,
            (ParamGroup::DeepWeight(l), _) => &self.deep[l].weight,
            (ParamGroup::DeepBias(l), _) => &self.deep[l].bias,
            (g, _) => panic!("{g} does not exist in a full-rank model"),
        }
    }

    pub fn get_mut(&mut self, group: ParamGroup) -> &mut DenseMatrix<T> {
        match (group, &mut self.weights) {
            (ParamGroup::InputWeight(k), Weights::Full { w, .. }) => &mut w[k],
            (ParamGroup::OutputWeight(k), Weights::Full { v, .. }) => &mut v[k],
            (ParamGroup::InputWeight(k), Weights::Factored { a, .. }) => &mut a[k],
            (ParamGroup::InputFactor, Weights::Factored { b, .. }) => b,
            (ParamGroup::OutputWeight(k), Weights::Factored { p, .. }) => &mut p[k],
            (ParamGroup::OutputFactor, Weights::Factored { q, .. }) => q,
            (ParamGroup::ScoreBias, _) => &mut self.score_bias,
            (ParamGroup::HiddenBias, _) => &mut self.hidden_bias,
            (ParamGroup::DeepWeight(l), _) => &mut self.deep[l].weight,
            (ParamGroup::DeepBias(l), _) => &mut self.deep[l].bias,
            (g, _) => panic!("{g} does not exist in a full-rank model"),
        }
    }

    pub fn len(&self) -> usize {
        self.groups().into_iter().map(|g| self.get(g).len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All scalars concatenated in group order.
    pub fn to_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.len());
        for g in self.groups() {
            out.extend_from_slice(self.get(g).as_slice());
        }
        out
    }

    /// Inverse of [`ParameterSet::to_flat`].
    pub fn set_flat(&mut self, flat: &[T]) {
        assert_eq!(flat.len(), self.len(), "flat parameter length");
        let mut offset = 0;
        for g in self.groups() {
            let dst = self.get_mut(g).as_mut_slice();
            dst.copy_from_slice(&flat[offset..offset + dst.len()]);
            offset += dst.len();
        }
    }

    pub fn fill(&mut self, v: T) {
        for g in self.groups() {
            self.get_mut(g).fill(v);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.groups().into_iter().all(|g| self.get(g).is_finite())
    }

    #[inline]
    fn check_item_rating(&self, item: usize, rating: u8) {
        assert!(
            item < self.config.num_items,
            "item {item} out of range {}",
            self.config.num_items
        );
        assert!(
            rating >= 1 && rating as usize <= self.config.rating_scale,
            "rating {rating} outside 1..={}",
            self.config.rating_scale
        );
    }

    /// Adds the input-space row(s) of `item` at `rating` into `acc`: rows of
    /// `W` (length H) for full models, rows of `A` (length J) for factored
    /// ones. With sharing every rating `t <= rating` contributes.
    #[inline]
    pub(crate) fn add_input_rows(&self, item: usize, rating: u8, acc: &mut [T]) {
        let mats = match &self.weights {
            Weights::Full { w, .. } => w,
            Weights::Factored { a, .. } => a,
        };
        let r = rating as usize;
        let first = if self.config.share_ratings { 0 } else { r - 1 };
        for mat in &mats[first..r] {
            for (x, &v) in acc.iter_mut().zip(mat.row(item)) {
                *x += v;
            }
        }
    }

    /// Width of the input accumulator: H, or J when factored.
    pub(crate) fn input_width(&self) -> usize {
        self.config.factor_rank.unwrap_or(self.config.hidden_units)
    }

    /// Contribution of one rated item to the first-layer pre-activation.
    pub fn effective_w_column(&self, item: usize, rating: u8) -> Vec<T> {
        self.check_item_rating(item, rating);
        let mut acc = vec![T::zero(); self.input_width()];
        self.add_input_rows(item, rating, &mut acc);
        match &self.weights {
            Weights::Full { .. } => acc,
            Weights::Factored { b, .. } => b.matvec(&acc),
        }
    }

    /// Hidden vectors of every layer given the rated items in `prefix`.
    ///
    /// Items are summed in ascending index order regardless of the order
    /// they are passed in. Panics on a repeated item.
    pub fn hidden_from_prefix(&self, prefix: &[(usize, u8)]) -> HiddenState<T> {
        let mut sorted = prefix.to_vec();
        sorted.sort_unstable_by_key(|&(m, _)| m);
        for pair in sorted.windows(2) {
            assert!(pair[0].0 != pair[1].0, "item {} appears twice in the prefix", pair[0].0);
        }
        let mut state = PrefixState::new(self);
        for &(m, r) in &sorted {
            state.absorb(self, m, r);
        }
        self.hidden_from_state(state)
    }

    /// Finishes the forward pass from an accumulated prefix.
    pub fn hidden_from_state(&self, state: PrefixState<T>) -> HiddenState<T> {
        let pre = state.pre_activation(self);
        let mut layers = Vec::with_capacity(self.config.layers);
        layers.push(pre.iter().map(|v| v.tanh()).collect::<Vec<T>>());
        for layer in &self.deep {
            let below = layers.last().expect("first layer present");
            let mut z = layer.weight.matvec(below);
            for (zi, &ci) in z.iter_mut().zip(layer.bias.row(0)) {
                *zi = (*zi + ci).tanh();
            }
            layers.push(z);
        }
        HiddenState {
            input_sum: state.acc,
            layers,
        }
    }

    /// Output-side projection of the top hidden vector: the vector itself for
    /// full models, `Q·h` for factored ones. Scores of any item are linear in it.
    pub fn project(&self, h_top: &[T]) -> Vec<T> {
        match &self.weights {
            Weights::Full { .. } => h_top.to_vec(),
            Weights::Factored { q, .. } => q.matvec(h_top),
        }
    }

    /// Per-rating terms `b^j_m + V^j_m · h` for `j = 1..K`.
    pub fn rating_terms(&self, projection: &[T], item: usize) -> Vec<T> {
        assert!(
            item < self.config.num_items,
            "item {item} out of range {}",
            self.config.num_items
        );
        let mats = match &self.weights {
            Weights::Full { v, .. } => v,
            Weights::Factored { p, .. } => p,
        };
        let bias = self.score_bias.row(item);
        mats.iter()
            .zip(bias)
            .map(|(mat, &b)| b + dot(mat.row(item), projection))
            .collect()
    }

    /// Scores `s^1..s^K` for `item` (cumulative over ratings when shared).
    pub fn scores_from_projection(&self, projection: &[T], item: usize) -> Vec<T> {
        scores_from_terms(self.rating_terms(projection, item), self.config.share_ratings)
    }

    /// Scores up to a common shift, as fed to the training costs.
    ///
    /// Both costs depend only on score differences. With sharing the first
    /// rating's term is added to every score, so it is left out here, which
    /// makes the cost exactly independent of `b^1` and `V^1`.
    pub fn cost_scores(&self, projection: &[T], item: usize) -> Vec<T> {
        let mut terms = self.rating_terms(projection, item);
        if self.config.share_ratings {
            terms[0] = T::zero();
        }
        scores_from_terms(terms, self.config.share_ratings)
    }

    pub fn scores_for_item(&self, h_top: &[T], item: usize) -> Vec<T> {
        self.scores_from_projection(&self.project(h_top), item)
    }

    /// Expected rating of `target` given the full `history`, clamped to `[1, K]`.
    ///
    /// A history entry for `target` itself is dropped with a warning.
    pub fn predict_rating(&self, history: &[(usize, u8)], target: usize) -> T {
        self.predict_many(history, &[target])[0]
    }

    /// [`ParameterSet::predict_rating`] for several targets sharing one history.
    pub fn predict_many(&self, history: &[(usize, u8)], targets: &[usize]) -> Vec<T> {
        let filtered;
        let history = if history.iter().any(|(m, _)| targets.contains(m)) {
            log::warn!("target item found in history; dropping it from the history");
            filtered = history
                .iter()
                .copied()
                .filter(|(m, _)| !targets.contains(m))
                .collect::<Vec<_>>();
            &filtered[..]
        } else {
            history
        };
        let hidden = self.hidden_from_prefix(history);
        let projection = self.project(hidden.top());
        let k = T::of_usize(self.config.rating_scale);
        targets
            .iter()
            .map(|&m| {
                let probs = softmax_conditional(&self.scores_from_projection(&projection, m));
                expected_rating(&probs).max(T::one()).min(k)
            })
            .collect()
    }
}

/// Running first-layer input sum over absorbed items.
///
/// The accumulator lives in input space: length H for full models, length J
/// for factored ones (where `B` is applied once at the end).
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixState<T> {
    acc: Vec<T>,
    absorbed: usize,
}

impl<T: Scalar> PrefixState<T> {
    pub fn new(params: &ParameterSet<T>) -> Self {
        Self {
            acc: vec![T::zero(); params.input_width()],
            absorbed: 0,
        }
    }

    pub fn absorb(&mut self, params: &ParameterSet<T>, item: usize, rating: u8) {
        params.check_item_rating(item, rating);
        params.add_input_rows(item, rating, &mut self.acc);
        self.absorbed += 1;
    }

    pub fn absorbed(&self) -> usize {
        self.absorbed
    }

    /// `c + Σ` effective columns.
    pub fn pre_activation(&self, params: &ParameterSet<T>) -> Vec<T> {
        let mut pre = match &params.weights {
            Weights::Full { .. } => self.acc.clone(),
            Weights::Factored { b, .. } => b.matvec(&self.acc),
        };
        for (p, &c) in pre.iter_mut().zip(params.hidden_bias.row(0)) {
            *p += c;
        }
        pre
    }
}

/// Hidden activations of all layers for one prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState<T> {
    /// Input-space sum of absorbed rows (before `B` and the bias).
    pub input_sum: Vec<T>,
    /// `h^(1)..h^(L)`.
    pub layers: Vec<Vec<T>>,
}

impl<T> HiddenState<T> {
    pub fn top(&self) -> &[T] {
        self.layers.last().expect("at least one hidden layer")
    }
}

/// Scores from per-rating terms: identity, or the running sum when shared.
pub fn scores_from_terms<T: Scalar>(mut terms: Vec<T>, shared: bool) -> Vec<T> {
    if shared {
        for j in 1..terms.len() {
            let prev = terms[j - 1];
            terms[j] += prev;
        }
    }
    terms
}

/// Softmax over the K rating scores.
pub fn softmax_conditional<T: Scalar>(scores: &[T]) -> Vec<T> {
    softmax(scores)
}

/// `Σ k·p_k` with ratings numbered from 1.
pub fn expected_rating<T: Scalar>(probs: &[T]) -> T {
    probs.iter().enumerate().map(|(i, &p)| T::of_usize(i + 1) * p).sum()
}
