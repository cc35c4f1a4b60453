//! Rating ingestion: MovieLens parsing, dense reindexing, random splits,
//! user/item transposition and the binary split cache.

mod cache;
mod parse;
mod synthetic;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{sample_permutation, SeededRng};

pub use cache::{read_cache, read_cache_file, write_cache, write_cache_file, CACHE_MAGIC, CACHE_VERSION};
pub use parse::{parse_movielens, parse_movielens_str, ParsedRatings};
pub use synthetic::{planted_ratings, to_movielens_text, PlantedSpec};

/// One raw rating as read from disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RatingTriple {
    pub user_id: u64,
    pub item_id: u64,
    pub rating: u8,
    pub timestamp: i64,
}

/// Which side of the rating matrix each model instance is built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    /// One model per user; targets are items.
    User,
    /// One model per item; targets are users.
    Item,
}

impl Basis {
    pub fn flipped(self) -> Self {
        match self {
            Basis::User => Basis::Item,
            Basis::Item => Basis::User,
        }
    }
}

impl std::str::FromStr for Basis {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "user" => Ok(Basis::User),
            "item" => Ok(Basis::Item),
            other => Err(format!("unknown basis {other:?}, expected user or item")),
        }
    }
}

impl std::fmt::Display for Basis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Basis::User => "user",
            Basis::Item => "item",
        })
    }
}

/// Sorted raw ids; the dense index of an id is its position.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IdMap {
    raw: Vec<u64>,
}

impl IdMap {
    pub fn from_ids(ids: impl IntoIterator<Item = u64>) -> Self {
        let mut raw: Vec<u64> = ids.into_iter().collect();
        raw.sort_unstable();
        raw.dedup();
        Self { raw }
    }

    pub fn index_of(&self, raw_id: u64) -> Option<usize> {
        self.raw.binary_search(&raw_id).ok()
    }

    pub fn raw_id(&self, index: usize) -> u64 {
        self.raw[index]
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }
}

/// A rating with dense 0-based user and item indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenseRating {
    pub user: u32,
    pub item: u32,
    pub rating: u8,
}

/// All ratings of a dataset, densely indexed, with the id maps to get back
/// to raw MovieLens ids.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingTable {
    pub users: IdMap,
    pub items: IdMap,
    pub scale: usize,
    pub ratings: Vec<DenseRating>,
}

impl RatingTable {
    pub fn from_parsed(parsed: &ParsedRatings) -> Self {
        Self::from_triples(&parsed.triples, parsed.scale)
    }

    /// Indexes `triples` densely in sorted raw-id order.
    pub fn from_triples(triples: &[RatingTriple], scale: usize) -> Self {
        let users = IdMap::from_ids(triples.iter().map(|t| t.user_id));
        let items = IdMap::from_ids(triples.iter().map(|t| t.item_id));
        let ratings = triples
            .iter()
            .map(|t| DenseRating {
                user: users.index_of(t.user_id).expect("user id present") as u32,
                item: items.index_of(t.item_id).expect("item id present") as u32,
                rating: t.rating,
            })
            .collect();
        Self {
            users,
            items,
            scale,
            ratings,
        }
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }
}

/// Sparse ratings grouped per entity (a user, or an item when item-based).
///
/// Each entity list holds `(target, rating)` pairs sorted by target. Lists may
/// be empty: an entity whose ratings all landed in the test split is kept and
/// simply contributes no training case.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatingDataset {
    pub basis: Basis,
    pub num_targets: usize,
    pub scale: usize,
    pub entries: Vec<Vec<(u32, u8)>>,
}

impl RatingDataset {
    /// Builds a dataset from `(entity, target, rating)` triples.
    ///
    /// A repeated `(entity, target)` pair keeps the last occurrence.
    pub fn from_triples(
        basis: Basis,
        num_entities: usize,
        num_targets: usize,
        scale: usize,
        triples: impl IntoIterator<Item = (u32, u32, u8)>,
    ) -> Result<Self> {
        let mut entries: Vec<Vec<(u32, u8)>> = vec![Vec::new(); num_entities];
        for (e, t, r) in triples {
            if e as usize >= num_entities || t as usize >= num_targets {
                return Err(Error::Shape {
                    what: "rating index".into(),
                    expected: format!("entity < {num_entities}, target < {num_targets}"),
                    found: format!("entity {e}, target {t}"),
                });
            }
            if r == 0 || r as usize > scale {
                return Err(Error::Shape {
                    what: "rating value".into(),
                    expected: format!("1..={scale}"),
                    found: r.to_string(),
                });
            }
            entries[e as usize].push((t, r));
        }
        let mut dropped = 0usize;
        for list in &mut entries {
            // stable sort keeps insertion order among equal targets; keep the last
            list.sort_by_key(|&(t, _)| t);
            let before = list.len();
            let mut deduped: Vec<(u32, u8)> = Vec::with_capacity(before);
            for &(t, r) in list.iter() {
                match deduped.last_mut() {
                    Some(last) if last.0 == t => *last = (t, r),
                    _ => deduped.push((t, r)),
                }
            }
            dropped += before - deduped.len();
            *list = deduped;
        }
        if dropped > 0 {
            log::warn!("dropped {dropped} duplicate ratings, keeping the last occurrence");
        }
        Ok(Self {
            basis,
            num_targets,
            scale,
            entries,
        })
    }

    pub fn num_entities(&self) -> usize {
        self.entries.len()
    }

    /// Number of ratings.
    pub fn len(&self) -> usize {
        self.entries.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(entity, target, rating)` in entity then target order.
    pub fn triples(&self) -> impl Iterator<Item = (u32, u32, u8)> + '_ {
        self.entries
            .iter()
            .enumerate()
            .flat_map(|(e, list)| list.iter().map(move |&(t, r)| (e as u32, t, r)))
    }

    /// `(user, item, rating)` regardless of basis.
    pub fn user_item_triples(&self) -> impl Iterator<Item = (u32, u32, u8)> + '_ {
        let basis = self.basis;
        self.triples().map(move |(e, t, r)| match basis {
            Basis::User => (e, t, r),
            Basis::Item => (t, e, r),
        })
    }

    /// Number of ratings each target received.
    pub fn target_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_targets];
        for list in &self.entries {
            for &(t, _) in list {
                counts[t as usize] += 1;
            }
        }
        counts
    }

    /// Switches the roles of entities and targets.
    pub fn transpose(&self) -> RatingDataset {
        let mut entries: Vec<Vec<(u32, u8)>> = vec![Vec::new(); self.num_targets];
        // entity order is ascending, so every new list comes out sorted
        for (e, t, r) in self.triples() {
            entries[t as usize].push((e, r));
        }
        RatingDataset {
            basis: self.basis.flipped(),
            num_targets: self.num_entities(),
            scale: self.scale,
            entries,
        }
    }

    /// Same ratings, arranged for `basis`.
    pub fn with_basis(&self, basis: Basis) -> RatingDataset {
        if basis == self.basis {
            self.clone()
        } else {
            self.transpose()
        }
    }

    /// Dimensions must agree before two splits can be used together.
    pub fn check_compatible(&self, other: &RatingDataset) -> Result<()> {
        let dims = |d: &RatingDataset| {
            format!(
                "{} basis, {}x{} targets, K={}",
                d.basis,
                d.num_entities(),
                d.num_targets,
                d.scale
            )
        };
        if self.basis != other.basis
            || self.num_entities() != other.num_entities()
            || self.num_targets != other.num_targets
            || self.scale != other.scale
        {
            return Err(Error::Shape {
                what: "dataset split".into(),
                expected: dims(self),
                found: dims(other),
            });
        }
        Ok(())
    }
}

/// Fractions for the random train/valid/test split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub valid_fraction_of_train: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            test_fraction: 0.10,
            valid_fraction_of_train: 0.05,
            seed: 1,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("test_fraction", self.test_fraction),
            ("valid_fraction_of_train", self.valid_fraction_of_train),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::config(name, format!("{v} is not in (0, 1)")));
            }
        }
        Ok(())
    }

    /// `(train, valid, test)` sizes for `total` ratings.
    pub fn sizes(&self, total: usize) -> (usize, usize, usize) {
        let test = (self.test_fraction * total as f64).round() as usize;
        let rest = total - test;
        let valid = (self.valid_fraction_of_train * rest as f64).round() as usize;
        (rest - valid, valid, test)
    }
}

/// The three disjoint partitions, all user-based.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: RatingDataset,
    pub valid: RatingDataset,
    pub test: RatingDataset,
}

impl Split {
    pub fn with_basis(&self, basis: Basis) -> Split {
        Split {
            train: self.train.with_basis(basis),
            valid: self.valid.with_basis(basis),
            test: self.test.with_basis(basis),
        }
    }

    /// Targets that appear in the test split but never in training; these
    /// are predicted with [`default_prediction`].
    pub fn cold_test_targets(&self) -> Vec<u32> {
        let train_counts = self.train.target_counts();
        let mut cold: Vec<u32> = self
            .test
            .triples()
            .filter(|&(_, t, _)| train_counts[t as usize] == 0)
            .map(|(_, t, _)| t)
            .collect();
        cold.sort_unstable();
        cold.dedup();
        cold
    }
}

/// Random split by individual rating: test first, then the validation slice
/// of what remains.
pub fn split_dataset(table: &RatingTable, spec: &SplitSpec, rng: &mut SeededRng) -> Result<Split> {
    spec.validate()?;
    let total = table.ratings.len();
    if total < 20 {
        return Err(Error::Empty(format!(
            "need at least 20 ratings to split, found {total}"
        )));
    }
    let (_, n_valid, n_test) = spec.sizes(total);
    let order = sample_permutation(rng, total);
    let build = |idx: &[usize]| {
        RatingDataset::from_triples(
            Basis::User,
            table.num_users(),
            table.num_items(),
            table.scale,
            idx.iter().map(|&i| {
                let r = table.ratings[i];
                (r.user, r.item, r.rating)
            }),
        )
    };
    let test = build(&order[..n_test])?;
    let valid = build(&order[n_test..n_test + n_valid])?;
    let train = build(&order[n_test + n_valid..])?;
    Ok(Split { train, valid, test })
}

/// Rating used when the model has nothing to go on: the scale midpoint.
pub fn default_prediction(scale: usize) -> f64 {
    assert!(scale >= 1, "rating scale must be at least 1");
    (1.0 + scale as f64) / 2.0
}
