//! Trains on a planted low-rank dataset and compares against the item-mean baseline.
//!
//! `cargo run --release -p cfnade --example planted -- [lr] [batch] [epochs] [seed]`

use cfnade::data::{planted_ratings, split_dataset, PlantedSpec};
use cfnade::eval::{evaluate_model, item_mean_baseline};
use cfnade::trainer::train;
use cfnade::{ModelConfig, RatingTable, SeededRng, SplitSpec, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, d: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let (lr, batch, epochs, seed) = (
        arg(0, 0.005),
        arg(1, 5.0) as usize,
        arg(2, 30.0) as usize,
        arg(3, 1.0) as u64,
    );

    let triples = planted_ratings(&PlantedSpec::default(), seed).expect("planted data");
    let table = RatingTable::from_triples(&triples, 5);
    let split = split_dataset(&table, &SplitSpec::default(), &mut SeededRng::new(seed)).expect("split");
    let model = ModelConfig {
        num_items: split.train.num_targets,
        rating_scale: 5,
        hidden_units: 16,
        layers: 1,
        factor_rank: None,
        share_ratings: true,
    };
    let config = TrainConfig {
        learning_rate: lr,
        batch_size: batch,
        max_epochs: epochs,
        patience: epochs,
        seed,
        deterministic: true,
        ..TrainConfig::default()
    };
    let out = train::<f64>(&split.train, &split.valid, &model, &config, |r| {
        println!("{}", r.tsv_line())
    })
    .expect("training");
    let rmse = evaluate_model(&out.best, &split.train, &split.test).expect("eval").rmse;
    let baseline = item_mean_baseline(&split.train, &split.test).expect("baseline");
    println!(
        "best_epoch={} model={rmse:.4} baseline={baseline:.4} gap={:.4}",
        out.best_epoch,
        baseline - rmse
    );
}
