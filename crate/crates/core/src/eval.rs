//! Test-set prediction, RMSE and the per-item-mean baseline.

use std::fmt;

use rayon::prelude::*;

use crate::data::{default_prediction, Basis, RatingDataset};
use crate::error::{Error, Result};
use crate::model::ParameterSet;
use crate::Scalar;

/// Root mean squared error. Fails on empty or mismatched input.
pub fn rmse<T: Scalar>(truth: &[T], predicted: &[T]) -> Result<T> {
    if truth.is_empty() {
        return Err(Error::Empty("rmse of zero ratings".into()));
    }
    if truth.len() != predicted.len() {
        return Err(Error::Shape {
            what: "rmse inputs".into(),
            expected: format!("{} predictions", truth.len()),
            found: format!("{} predictions", predicted.len()),
        });
    }
    let sse: T = truth.iter().zip(predicted).map(|(&a, &b)| (a - b) * (a - b)).sum();
    Ok((sse / T::of_usize(truth.len())).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rmse: f64,
    pub count: usize,
    /// Ratings predicted by the default rule.
    pub cold_count: usize,
    pub scale: usize,
    /// `confusion[true - 1][rounded prediction - 1]`.
    pub confusion: Vec<Vec<u64>>,
}

impl EvalReport {
    /// Single-line `key=value` record.
    pub fn record_line(&self, seed: Option<u64>, config_hash: u64) -> String {
        let seed = seed.map_or_else(|| "none".to_string(), |s| s.to_string());
        format!(
            "rmse={:.6} count={} cold_count={} seed={} config_hash={:016x}",
            self.rmse, self.count, self.cold_count, seed, config_hash
        )
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "test RMSE      {:.6}", self.rmse)?;
        writeln!(f, "ratings        {}", self.count)?;
        writeln!(f, "default-rated  {}", self.cold_count)?;
        writeln!(f, "confusion (rows: true rating, columns: rounded prediction)")?;
        write!(f, "      ")?;
        for k in 1..=self.scale {
            write!(f, "{k:>8}")?;
        }
        for (i, row) in self.confusion.iter().enumerate() {
            write!(f, "\n{:>5} ", i + 1)?;
            for c in row {
                write!(f, "{c:>8}")?;
            }
        }
        Ok(())
    }
}

/// Round half up, clamped to the scale.
fn rounded_rating(pred: f64, scale: usize) -> usize {
    ((pred + 0.5).floor() as i64).clamp(1, scale as i64) as usize
}

/// Whether a test rating must fall back to the default rule: the underlying
/// item has no training ratings, or the target has never been seen.
fn cold_flags(train: &RatingDataset) -> (Vec<bool>, Vec<bool>) {
    let target_cold: Vec<bool> = train.target_counts().iter().map(|&c| c == 0).collect();
    let entity_cold: Vec<bool> = match train.basis {
        Basis::User => vec![false; train.num_entities()],
        Basis::Item => train.entries.iter().map(Vec::is_empty).collect(),
    };
    (entity_cold, target_cold)
}

/// Predicts every test rating from the entity's training ratings.
///
/// Returns `(truth, prediction, cold)` in test order (entity then target).
pub fn predict_split<T: Scalar>(
    params: &ParameterSet<T>,
    train: &RatingDataset,
    test: &RatingDataset,
    parallel: bool,
) -> Result<Vec<(u8, f64, bool)>> {
    train.check_compatible(test)?;
    let config = params.config();
    if config.num_items != train.num_targets || config.rating_scale != train.scale {
        return Err(Error::Shape {
            what: "checkpoint vs dataset".into(),
            expected: format!("M={} K={} (dataset)", train.num_targets, train.scale),
            found: format!("M={} K={} (checkpoint)", config.num_items, config.rating_scale),
        });
    }
    let (entity_cold, target_cold) = cold_flags(train);
    let fallback = default_prediction(train.scale);

    let per_entity = |e: usize| -> Vec<(u8, f64, bool)> {
        let wanted = &test.entries[e];
        if wanted.is_empty() {
            return Vec::new();
        }
        let history: Vec<(usize, u8)> = train.entries[e].iter().map(|&(t, r)| (t as usize, r)).collect();
        let warm: Vec<usize> = wanted
            .iter()
            .filter(|&&(t, _)| !entity_cold[e] && !target_cold[t as usize])
            .map(|&(t, _)| t as usize)
            .collect();
        let preds = if warm.is_empty() {
            Vec::new()
        } else {
            params.predict_many(&history, &warm)
        };
        let mut preds = preds.into_iter();
        wanted
            .iter()
            .map(|&(t, r)| {
                if entity_cold[e] || target_cold[t as usize] {
                    (r, fallback, true)
                } else {
                    (r, preds.next().expect("one prediction per warm target").as_f64(), false)
                }
            })
            .collect()
    };

    let nested: Vec<Vec<(u8, f64, bool)>> = if parallel {
        (0..test.num_entities()).into_par_iter().map(per_entity).collect()
    } else {
        (0..test.num_entities()).map(per_entity).collect()
    };
    Ok(nested.into_iter().flatten().collect())
}

pub fn evaluate_model<T: Scalar>(
    params: &ParameterSet<T>,
    train: &RatingDataset,
    test: &RatingDataset,
) -> Result<EvalReport> {
    evaluate_model_with(params, train, test, true)
}

/// [`evaluate_model`] with explicit control over worker threads. Results
/// do not depend on `parallel`.
pub fn evaluate_model_with<T: Scalar>(
    params: &ParameterSet<T>,
    train: &RatingDataset,
    test: &RatingDataset,
    parallel: bool,
) -> Result<EvalReport> {
    let rows = predict_split(params, train, test, parallel)?;
    let scale = train.scale;
    let truth: Vec<f64> = rows.iter().map(|&(r, _, _)| r as f64).collect();
    let preds: Vec<f64> = rows.iter().map(|&(_, p, _)| p).collect();
    let rmse = rmse(&truth, &preds)?;
    let mut confusion = vec![vec![0u64; scale]; scale];
    for &(r, p, _) in &rows {
        confusion[r as usize - 1][rounded_rating(p, scale) - 1] += 1;
    }
    Ok(EvalReport {
        rmse,
        count: rows.len(),
        cold_count: rows.iter().filter(|&&(_, _, c)| c).count(),
        scale,
        confusion,
    })
}

/// RMSE of predicting each test rating by its item's training mean (the
/// global training mean for items without training ratings).
pub fn item_mean_baseline(train: &RatingDataset, test: &RatingDataset) -> Result<f64> {
    train.check_compatible(test)?;
    if train.is_empty() {
        return Err(Error::Empty("baseline needs training ratings".into()));
    }
    let num_items = match train.basis {
        Basis::User => train.num_targets,
        Basis::Item => train.num_entities(),
    };
    let mut sums = vec![0.0f64; num_items];
    let mut counts = vec![0usize; num_items];
    let mut total = 0.0;
    for (_, item, r) in train.user_item_triples() {
        sums[item as usize] += r as f64;
        counts[item as usize] += 1;
        total += r as f64;
    }
    let global = total / train.len() as f64;
    let (truth, preds): (Vec<f64>, Vec<f64>) = test
        .user_item_triples()
        .map(|(_, item, r)| {
            let i = item as usize;
            let p = if counts[i] > 0 {
                sums[i] / counts[i] as f64
            } else {
                global
            };
            (r as f64, p)
        })
        .unzip();
    rmse(&truth, &preds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, ParameterSet};

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 4.0, 2.0], &[1.0, 4.0, 2.0]).unwrap(), 0.0);
        let v = rmse(&[1.0f64, 5.0], &[2.0, 3.0]).unwrap();
        assert!((v - 2.5f64.sqrt()).abs() < 1e-15);
        assert!((v - 1.58114).abs() < 1e-5);
        assert!(rmse::<f64>(&[], &[]).is_err());
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
        assert_eq!(
            rmse(&[1.0, 3.0], &[2.0, 2.0]).unwrap(),
            rmse(&[1.0, 3.0], &[0.0, 4.0]).unwrap()
        );
    }

    fn zero_model(m: usize, k: usize) -> ParameterSet<f64> {
        ParameterSet::zeros(ModelConfig {
            num_items: m,
            rating_scale: k,
            hidden_units: 3,
            layers: 1,
            factor_rank: None,
            share_ratings: false,
        })
        .unwrap()
    }

    #[test]
    fn uniform_model_predicts_midpoint() {
        let train =
            RatingDataset::from_triples(Basis::User, 2, 3, 5, [(0, 0, 5), (0, 1, 1), (1, 2, 2), (1, 0, 3)]).unwrap();
        let test = RatingDataset::from_triples(Basis::User, 2, 3, 5, [(0, 2, 4), (1, 1, 1)]).unwrap();
        let report = evaluate_model(&zero_model(3, 5), &train, &test).unwrap();
        let expected = rmse(&[4.0, 1.0], &[3.0, 3.0]).unwrap();
        assert!((report.rmse - expected).abs() < 1e-12);
        assert_eq!(report.count, 2);
        assert_eq!(report.cold_count, 0);
        assert_eq!(report.confusion.iter().flatten().sum::<u64>(), 2);
    }

    #[test]
    fn cold_item_gets_default() {
        let train = RatingDataset::from_triples(Basis::User, 1, 2, 5, [(0, 0, 5)]).unwrap();
        let test = RatingDataset::from_triples(Basis::User, 1, 2, 5, [(0, 1, 1)]).unwrap();
        let rows = predict_split(&zero_model(2, 5), &train, &test, false).unwrap();
        assert_eq!(rows, vec![(1, 3.0, true)]);
        let report = evaluate_model(&zero_model(2, 5), &train, &test).unwrap();
        assert_eq!(report.cold_count, 1);
        assert_eq!(report.confusion[0][2], 1);
    }

    #[test]
    fn item_based_empty_item_is_cold() {
        // item 1 has no training ratings; as an entity its history is empty
        let train = RatingDataset::from_triples(Basis::Item, 2, 2, 5, [(0, 0, 4), (0, 1, 2)]).unwrap();
        let test = RatingDataset::from_triples(Basis::Item, 2, 2, 5, [(1, 0, 5)]).unwrap();
        let report = evaluate_model(&zero_model(2, 5), &train, &test).unwrap();
        assert_eq!(report.cold_count, 1);
    }

    #[test]
    fn dimension_mismatch_names_both_shapes() {
        let train = RatingDataset::from_triples(Basis::User, 1, 2, 5, [(0, 0, 5)]).unwrap();
        let err = evaluate_model(&zero_model(2, 10), &train, &train).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("K=5") && msg.contains("K=10"), "{msg}");
    }

    #[test]
    fn baseline_examples() {
        let once = RatingDataset::from_triples(Basis::User, 2, 2, 5, [(0, 0, 4), (1, 1, 2)]).unwrap();
        assert_eq!(item_mean_baseline(&once, &once).unwrap(), 0.0);
        let train = RatingDataset::from_triples(Basis::User, 3, 1, 5, [(0, 0, 2), (1, 0, 4)]).unwrap();
        let test = RatingDataset::from_triples(Basis::User, 3, 1, 5, [(2, 0, 3)]).unwrap();
        assert_eq!(item_mean_baseline(&train, &test).unwrap(), 0.0);
        assert_eq!(item_mean_baseline(&train.transpose(), &test.transpose()).unwrap(), 0.0);
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(rounded_rating(2.5, 5), 3);
        assert_eq!(rounded_rating(2.49, 5), 2);
        assert_eq!(rounded_rating(0.2, 5), 1);
        assert_eq!(rounded_rating(7.0, 5), 5);
    }
}
