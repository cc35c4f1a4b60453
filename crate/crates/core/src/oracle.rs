//! Brute-force reference computations for tests.
//!
//! Everything here reads the raw parameter arrays and redoes the arithmetic
//! with plain loops and no log-space tricks; nothing calls into the forward
//! pass, the losses or the trainer. Only usable on tiny instances.

use crate::loss::CostConfig;
use crate::model::{ModelConfig, ParameterSet, Weights};
use crate::numeric::SeededRng;

/// A tiny model with every parameter (biases included) drawn uniformly, and
/// one entity's distinct rated items with a fixed ordering.
#[derive(Debug, Clone)]
pub struct TinyInstance {
    pub params: ParameterSet<f64>,
    /// `(item, rating)` pairs, ratings 1-based.
    pub ratings: Vec<(usize, usize)>,
    /// Permutation of `0..D` indexing `ratings`.
    pub ordering: Vec<usize>,
}

impl TinyInstance {
    /// Parameters uniform in `[-scale, scale]`; `d` distinct items with
    /// uniform ratings and a uniform ordering.
    pub fn random(config: ModelConfig, d: usize, scale: f64, seed: u64) -> Self {
        assert!(
            d <= config.num_items,
            "cannot rate {d} distinct items out of {}",
            config.num_items
        );
        let mut rng = SeededRng::new(seed);
        let mut params = ParameterSet::zeros(config).expect("valid tiny config");
        let flat: Vec<f64> = (0..params.len()).map(|_| rng.uniform(-scale, scale)).collect();
        params.set_flat(&flat);
        let mut items: Vec<usize> = (0..config.num_items).collect();
        rng.shuffle(&mut items);
        let ratings = items[..d]
            .iter()
            .map(|&m| (m, rng.below(config.rating_scale) + 1))
            .collect();
        let mut ordering: Vec<usize> = (0..d).collect();
        rng.shuffle(&mut ordering);
        Self {
            params,
            ratings,
            ordering,
        }
    }

    /// Rated items in ordering order.
    pub fn ordered_items(&self) -> Vec<usize> {
        self.ordering.iter().map(|&i| self.ratings[i].0).collect()
    }

    /// Ratings in the `(u32, u8)` form used by datasets.
    pub fn dataset_ratings(&self) -> Vec<(u32, u8)> {
        self.ratings.iter().map(|&(m, r)| (m as u32, r as u8)).collect()
    }
}

/// Ordinal conditional probability for true rating `k` (1-based), evaluated
/// as the two plain products. Only meaningful for moderate scores.
pub fn ordinal_direct_product(scores: &[f64], k: usize) -> f64 {
    let n = scores.len();
    assert!(k >= 1 && k <= n, "rating {k} outside 1..={n}");
    let e: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
    let mut p = 1.0;
    let mut j = k;
    while j >= 1 {
        let denom: f64 = e[..j].iter().sum();
        p *= e[j - 1] / denom;
        j -= 1;
    }
    for j in k..=n {
        let denom: f64 = e[j - 1..].iter().sum();
        p *= e[j - 1] / denom;
    }
    p
}

/// Plain softmax probability of rating `k` (1-based).
fn softmax_prob(scores: &[f64], k: usize) -> f64 {
    let denom: f64 = scores.iter().map(|s| s.exp()).sum();
    scores[k - 1].exp() / denom
}

fn oracle_cost(scores: &[f64], k: usize, cost: &CostConfig) -> f64 {
    let regular = -softmax_prob(scores, k).ln();
    let ordinal = -ordinal_direct_product(scores, k).ln();
    (1.0 - cost.lambda) * regular + cost.lambda * ordinal
}

/// Reimplementation of the network on raw arrays.
struct Net<'a> {
    p: &'a ParameterSet<f64>,
}

impl Net<'_> {
    fn dims(&self) -> (usize, usize, usize) {
        let c = self.p.config();
        (c.num_items, c.rating_scale, c.hidden_units)
    }

    /// Ratings whose input weights an observed rating `r` uses.
    fn input_ratings(&self, r: usize) -> std::ops::RangeInclusive<usize> {
        if self.p.config().share_ratings {
            1..=r
        } else {
            r..=r
        }
    }

    /// Effective first-layer column of item `m` at rating `r`, length H.
    fn input_column(&self, m: usize, r: usize) -> Vec<f64> {
        let (_, _, h) = self.dims();
        let mut col = vec![0.0; h];
        for t in self.input_ratings(r) {
            match &self.p.weights {
                Weights::Full { w, .. } => {
                    for (i, c) in col.iter_mut().enumerate() {
                        *c += w[t - 1].get(m, i);
                    }
                }
                Weights::Factored { a, b, .. } => {
                    for (i, c) in col.iter_mut().enumerate() {
                        for j in 0..b.cols() {
                            *c += b.get(i, j) * a[t - 1].get(m, j);
                        }
                    }
                }
            }
        }
        col
    }

    fn hidden(&self, context: &[(usize, usize)]) -> Vec<f64> {
        let (_, _, h) = self.dims();
        let mut sorted = context.to_vec();
        sorted.sort();
        let mut pre: Vec<f64> = (0..h).map(|i| self.p.hidden_bias.get(0, i)).collect();
        for &(m, r) in &sorted {
            for (x, c) in pre.iter_mut().zip(self.input_column(m, r)) {
                *x += c;
            }
        }
        let mut act: Vec<f64> = pre.iter().map(|x| x.tanh()).collect();
        for layer in &self.p.deep {
            act = (0..h)
                .map(|i| {
                    let mut z = layer.bias.get(0, i);
                    for (j, a) in act.iter().enumerate() {
                        z += layer.weight.get(i, j) * a;
                    }
                    z.tanh()
                })
                .collect();
        }
        act
    }

    /// Output weight row of item `m` for rating `j` (1-based), length H.
    fn output_row(&self, m: usize, j: usize) -> Vec<f64> {
        let (_, _, h) = self.dims();
        match &self.p.weights {
            Weights::Full { v, .. } => (0..h).map(|i| v[j - 1].get(m, i)).collect(),
            Weights::Factored { p, q, .. } => (0..h)
                .map(|i| (0..q.rows()).map(|f| p[j - 1].get(m, f) * q.get(f, i)).sum())
                .collect(),
        }
    }

    fn scores(&self, hidden: &[f64], m: usize) -> Vec<f64> {
        let (_, k, _) = self.dims();
        let shared = self.p.config().share_ratings;
        let mut out = Vec::with_capacity(k);
        for rating in 1..=k {
            let mut s = 0.0;
            let from = if shared { 1 } else { rating };
            for j in from..=rating {
                s += self.p.score_bias.get(m, j - 1);
                for (w, x) in self.output_row(m, j).iter().zip(hidden) {
                    s += w * x;
                }
            }
            out.push(s);
        }
        out
    }
}

/// Sum over all `K^D` rating assignments to `items` (taken in the given
/// order) of the chain-rule probability under softmax conditionals. A valid
/// model gives 1.
pub fn enumerate_joint_probability(params: &ParameterSet<f64>, items: &[usize]) -> f64 {
    let net = Net { p: params };
    let (_, k, _) = net.dims();
    let d = items.len();
    let mut total = 0.0;
    let mut ratings = vec![1usize; d];
    loop {
        let mut prob = 1.0;
        for i in 0..d {
            let context: Vec<(usize, usize)> = (0..i).map(|t| (items[t], ratings[t])).collect();
            let h = net.hidden(&context);
            prob *= softmax_prob(&net.scores(&h, items[i]), ratings[i]);
        }
        total += prob;
        // odometer increment
        let mut pos = 0;
        loop {
            if pos == d {
                return total;
            }
            ratings[pos] += 1;
            if ratings[pos] <= k {
                break;
            }
            ratings[pos] = 1;
            pos += 1;
        }
    }
}

/// All permutations of `0..n` in lexicographic order.
pub fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(n);
    let mut used = vec![false; n];
    fn rec(n: usize, current: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if current.len() == n {
            out.push(current.clone());
            return;
        }
        for i in 0..n {
            if !used[i] {
                used[i] = true;
                current.push(i);
                rec(n, current, used, out);
                current.pop();
                used[i] = false;
            }
        }
    }
    rec(n, &mut current, &mut used, &mut out);
    out
}

/// Split-scaled cost of one (ordering, split) case, computed from scratch.
/// `split` is 1-based.
pub fn oracle_split_cost(
    params: &ParameterSet<f64>,
    ratings: &[(usize, usize)],
    ordering: &[usize],
    split: usize,
    cost: &CostConfig,
) -> f64 {
    let net = Net { p: params };
    let d = ratings.len();
    let context: Vec<(usize, usize)> = ordering[..split - 1].iter().map(|&i| ratings[i]).collect();
    let h = net.hidden(&context);
    let suffix: f64 = ordering[split - 1..]
        .iter()
        .map(|&i| {
            let (m, r) = ratings[i];
            oracle_cost(&net.scores(&h, m), r, cost)
        })
        .sum();
    d as f64 / (d - split + 1) as f64 * suffix
}

/// Full chain-rule cost of one ordering: each item conditioned on the items
/// before it.
pub fn oracle_ordering_cost(
    params: &ParameterSet<f64>,
    ratings: &[(usize, usize)],
    ordering: &[usize],
    cost: &CostConfig,
) -> f64 {
    let net = Net { p: params };
    (0..ordering.len())
        .map(|pos| {
            let context: Vec<(usize, usize)> = ordering[..pos].iter().map(|&i| ratings[i]).collect();
            let (m, r) = ratings[ordering[pos]];
            oracle_cost(&net.scores(&net.hidden(&context), m), r, cost)
        })
        .sum()
}

/// `(lhs, rhs)`: the mean over all orderings and splits of the split-scaled
/// cost, and the mean over all orderings of the full chain-rule cost.
pub fn enumerate_split_expectation(
    params: &ParameterSet<f64>,
    ratings: &[(usize, usize)],
    cost: &CostConfig,
) -> (f64, f64) {
    let d = ratings.len();
    assert!(d >= 1, "need at least one rating");
    let perms = all_permutations(d);
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for o in &perms {
        for split in 1..=d {
            lhs += oracle_split_cost(params, ratings, o, split, cost);
        }
        rhs += oracle_ordering_cost(params, ratings, o, cost);
    }
    (lhs / (perms.len() * d) as f64, rhs / perms.len() as f64)
}
