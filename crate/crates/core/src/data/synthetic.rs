use serde::{Deserialize, Serialize};

use crate::data::RatingTriple;
use crate::error::{Error, Result};
use crate::numeric::SeededRng;

/// Ratings from a planted low-rank model:
/// `round(mid + a_item + gain · u_user · v_item + noise · ε)` clamped to `1..=K`,
/// with every latent draw standard normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub users: usize,
    pub items: usize,
    pub scale: usize,
    pub rank: usize,
    /// Fraction of the user × item grid that is rated.
    pub density: f64,
    pub gain: f64,
    pub item_bias_sd: f64,
    pub noise: f64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        Self {
            users: 50,
            items: 20,
            scale: 5,
            rank: 2,
            density: 1.0,
            gain: 1.0,
            item_bias_sd: 0.3,
            noise: 0.3,
        }
    }
}

/// Draws a planted dataset; raw ids are 1-based and timestamps are zero.
pub fn planted_ratings(spec: &PlantedSpec, seed: u64) -> Result<Vec<RatingTriple>> {
    if spec.users == 0 || spec.items == 0 || spec.scale < 2 || spec.rank == 0 {
        return Err(Error::config(
            "planted",
            "users, items and rank must be positive and K at least 2",
        ));
    }
    if !(spec.density > 0.0 && spec.density <= 1.0) {
        return Err(Error::config("density", "must be in (0, 1]"));
    }
    let mut rng = SeededRng::new(seed);
    let mut factors =
        |n: usize| -> Vec<Vec<f64>> { (0..n).map(|_| (0..spec.rank).map(|_| rng.normal()).collect()).collect() };
    let u = factors(spec.users);
    let v = factors(spec.items);
    let bias: Vec<f64> = (0..spec.items).map(|_| spec.item_bias_sd * rng.normal()).collect();
    let mid = (1.0 + spec.scale as f64) / 2.0;
    let mut out = Vec::new();
    for (i, ui) in u.iter().enumerate() {
        for (j, vj) in v.iter().enumerate() {
            if spec.density < 1.0 && rng.uniform(0.0, 1.0) >= spec.density {
                continue;
            }
            let affinity: f64 = ui.iter().zip(vj).map(|(a, b)| a * b).sum();
            let x = mid + bias[j] + spec.gain * affinity + spec.noise * rng.normal();
            let rating = x.round().clamp(1.0, spec.scale as f64) as u8;
            out.push(RatingTriple {
                user_id: i as u64 + 1,
                item_id: j as u64 + 1,
                rating,
                timestamp: 0,
            });
        }
    }
    Ok(out)
}

/// Renders triples in the `user::item::rating::timestamp` layout.
pub fn to_movielens_text(triples: &[RatingTriple], separator: &str) -> String {
    let mut s = String::with_capacity(triples.len() * 16);
    for t in triples {
        s.push_str(&format!(
            "{}{sep}{}{sep}{}{sep}{}\n",
            t.user_id,
            t.item_id,
            t.rating,
            t.timestamp,
            sep = separator
        ));
    }
    s
}
