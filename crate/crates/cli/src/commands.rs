use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use cfnade::data::{parse_movielens, read_cache_file, split_dataset, write_cache_file, RatingDataset};
use cfnade::eval::{evaluate_model_with, item_mean_baseline};
use cfnade::model::{load_checkpoint_file, save_checkpoint_file};
use cfnade::trainer::train;
use cfnade::{Basis, IdMap, Params, RatingTable, SeededRng, SplitSpec};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const TRAIN_CACHE: &str = "train.cfds";
pub const VALID_CACHE: &str = "valid.cfds";
pub const TEST_CACHE: &str = "test.cfds";
pub const ID_MAP: &str = "id_map.json";
pub const SUMMARY: &str = "summary.json";
pub const CHECKPOINT: &str = "model.cfnd";
pub const TRAIN_LOG: &str = "train_log.tsv";
pub const RESOLVED_CONFIG: &str = "resolved_config.json";

#[derive(Debug, Parser)]
#[command(name = "cfnade", version, about = "Neural autoregressive collaborative filtering")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a ratings file, split it and write binary caches.
    Prepare(PrepareArgs),
    /// Train a model on prepared data.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a prepared split.
    Eval(EvalArgs),
    /// Predict one rating from a rating history.
    Predict(PredictArgs),
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Ratings file, one `user<sep>item<sep>rating<sep>timestamp` per line.
    #[arg(long)]
    pub input: PathBuf,
    /// Field separator; `tab` stands for a tab character.
    #[arg(long, default_value = "::")]
    pub separator: String,
    /// Map half-star ratings r to 2r on a 10-point scale.
    #[arg(long)]
    pub rescale_half_stars: bool,
    /// Whether each autoregressive model runs over a user's or an item's ratings.
    #[arg(long, default_value = "user")]
    pub basis: Basis,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = SplitSpec::default().test_fraction)]
    pub test_fraction: f64,
    /// Fraction of the non-test ratings held out for validation.
    #[arg(long, default_value_t = SplitSpec::default().valid_fraction_of_train)]
    pub valid_fraction: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Flat JSON run configuration; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub hidden_units: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    /// Rank of the factored weights; 0 means full matrices.
    #[arg(long)]
    pub factor_rank: Option<usize>,
    #[arg(long)]
    pub share_ratings: Option<bool>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub first_layer_lr_multiplier: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Single worker everywhere.
    #[arg(long)]
    pub deterministic: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Directory written by `prepare`.
    #[arg(long)]
    pub data: PathBuf,
    /// Evaluate on the validation split instead of the test split.
    #[arg(long)]
    pub valid: bool,
    /// Also report the per-item-mean baseline.
    #[arg(long)]
    pub baseline: bool,
    #[arg(long)]
    pub deterministic: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Comma-separated `id:rating` pairs, raw ids of the model's targets.
    #[arg(long, default_value = "", allow_hyphen_values = true)]
    pub history: String,
    /// Raw id to predict.
    #[arg(long)]
    pub target: u64,
    /// Id map; defaults to the one next to the checkpoint.
    #[arg(long)]
    pub id_map: Option<PathBuf>,
}

/// Raw ids behind the dense indices of a prepared dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdMaps {
    pub basis: Basis,
    pub users: IdMap,
    pub items: IdMap,
}

impl IdMaps {
    /// Ids of the model's targets: items for user-based data, users otherwise.
    pub fn targets(&self) -> &IdMap {
        match self.basis {
            Basis::User => &self.items,
            Basis::Item => &self.users,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareSummary {
    pub basis: Basis,
    pub num_users: usize,
    pub num_items: usize,
    pub rating_scale: usize,
    pub entities: usize,
    pub targets: usize,
    pub ratings: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub cold_test_targets: usize,
    pub duplicates: usize,
    pub seed: u64,
}

pub fn run_command(command: Command) -> CliResult<()> {
    match command {
        Command::Prepare(a) => prepare(&a),
        Command::Train(a) => train_cmd(&a),
        Command::Eval(a) => eval_cmd(&a),
        Command::Predict(a) => predict_cmd(&a),
    }
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|source| CliError::File {
        path: path.to_path_buf(),
        source,
    })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::File {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|source| CliError::File {
        path: path.to_path_buf(),
        source,
    })
}

fn read_split(dir: &Path, name: &str) -> CliResult<RatingDataset> {
    let path = dir.join(name);
    read_cache_file(&path).map_err(|e| CliError::core(path.display().to_string(), e))
}

pub fn prepare(args: &PrepareArgs) -> CliResult<()> {
    let separator = if args.separator == "tab" {
        "\t"
    } else {
        args.separator.as_str()
    };
    if separator.is_empty() {
        return Err(CliError::Usage("--separator must not be empty".into()));
    }
    let spec = SplitSpec {
        test_fraction: args.test_fraction,
        valid_fraction_of_train: args.valid_fraction,
        seed: args.seed,
    };
    spec.validate().map_err(|e| CliError::core("split", e))?;
    let parsed = parse_movielens(&args.input, separator, args.rescale_half_stars)
        .map_err(|e| CliError::core(args.input.display().to_string(), e))?;
    let table = RatingTable::from_parsed(&parsed);
    let split = split_dataset(&table, &spec, &mut SeededRng::new(args.seed))
        .map_err(|e| CliError::core("split", e))?
        .with_basis(args.basis);

    create_dir(&args.out)?;
    for (name, ds) in [
        (TRAIN_CACHE, &split.train),
        (VALID_CACHE, &split.valid),
        (TEST_CACHE, &split.test),
    ] {
        let path = args.out.join(name);
        write_cache_file(ds, &path).map_err(|e| CliError::core(path.display().to_string(), e))?;
    }
    let maps = IdMaps {
        basis: args.basis,
        users: table.users.clone(),
        items: table.items.clone(),
    };
    write_file(
        &args.out.join(ID_MAP),
        &(serde_json::to_string(&maps).expect("id map serializes") + "\n"),
    )?;
    let summary = PrepareSummary {
        basis: args.basis,
        num_users: table.num_users(),
        num_items: table.num_items(),
        rating_scale: table.scale,
        entities: split.train.num_entities(),
        targets: split.train.num_targets,
        ratings: table.ratings.len(),
        train: split.train.len(),
        valid: split.valid.len(),
        test: split.test.len(),
        cold_test_targets: split.cold_test_targets().len(),
        duplicates: parsed.duplicates,
        seed: args.seed,
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    write_file(&args.out.join(SUMMARY), &json)?;
    print!("{json}");
    Ok(())
}

/// Config file (or defaults) with command-line overrides applied.
pub fn resolve_config(args: &TrainArgs) -> CliResult<RunConfig> {
    let mut c = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(v) = &args.data {
        c.data_dir = Some(v.clone());
    }
    if let Some(v) = &args.out {
        c.out_dir = Some(v.clone());
    }
    if let Some(v) = args.hidden_units {
        c.hidden_units = v;
    }
    if let Some(v) = args.layers {
        c.layers = v;
    }
    if let Some(v) = args.factor_rank {
        c.factor_rank = (v > 0).then_some(v);
    }
    if let Some(v) = args.share_ratings {
        c.share_ratings = v;
    }
    if let Some(v) = args.learning_rate {
        c.learning_rate = v;
    }
    if let Some(v) = args.first_layer_lr_multiplier {
        c.first_layer_lr_multiplier = v;
    }
    if let Some(v) = args.weight_decay {
        c.weight_decay = v;
    }
    if let Some(v) = args.batch_size {
        c.batch_size = v;
    }
    if let Some(v) = args.max_epochs {
        c.max_epochs = v;
    }
    if let Some(v) = args.patience {
        c.patience = v;
    }
    if let Some(v) = args.seed {
        c.seed = v;
    }
    if let Some(v) = args.lambda {
        c.lambda = v;
    }
    if args.deterministic {
        c.deterministic = true;
    }
    Ok(c)
}

pub fn train_cmd(args: &TrainArgs) -> CliResult<()> {
    let config = resolve_config(args)?;
    let data_dir = config.data_dir()?.to_path_buf();
    let out_dir = config.out_dir()?.to_path_buf();
    let train_cfg = config.train();
    train_cfg.validate().map_err(|e| CliError::core("config", e))?;

    let train_set = read_split(&data_dir, TRAIN_CACHE)?;
    let valid_set = read_split(&data_dir, VALID_CACHE)?;
    let model = config.model(train_set.num_targets, train_set.scale);
    model.validate().map_err(|e| CliError::core("config", e))?;

    create_dir(&out_dir)?;
    write_file(&out_dir.join(RESOLVED_CONFIG), &config.to_json())?;
    let maps = data_dir.join(ID_MAP);
    if maps.exists() {
        std::fs::copy(&maps, out_dir.join(ID_MAP)).map_err(|source| CliError::File {
            path: maps.clone(),
            source,
        })?;
    }

    let log_path = out_dir.join(TRAIN_LOG);
    let log_file = File::create(&log_path).map_err(|source| CliError::File {
        path: log_path.clone(),
        source,
    })?;
    let mut log = BufWriter::new(log_file);
    let mut log_error = None;
    let _ = writeln!(log, "epoch\ttrain_cost\tvalid_rmse\tseconds");
    let result = train::<f64>(&train_set, &valid_set, &model, &train_cfg, |record| {
        if let Err(e) = writeln!(log, "{}", record.tsv_line()).and_then(|_| log.flush()) {
            log_error.get_or_insert(e);
        }
        eprintln!(
            "epoch {:>4}  cost {:.6}  valid rmse {:.6}  ({:.1}s)",
            record.epoch, record.train_cost, record.valid_rmse, record.seconds
        );
    });
    drop(log);
    if let Some(source) = log_error {
        return Err(CliError::File { path: log_path, source });
    }
    let outcome = result.map_err(|e| CliError::core("training", e))?;

    let ckpt = out_dir.join(CHECKPOINT);
    save_checkpoint_file(&outcome.best, &ckpt).map_err(|e| CliError::core(ckpt.display().to_string(), e))?;
    let best = &outcome.log[outcome.best_epoch - 1];
    println!(
        "best_epoch={} valid_rmse={:.6} epochs_run={} parameters={} checkpoint={}",
        outcome.best_epoch,
        best.valid_rmse,
        outcome.log.len(),
        model.parameter_count(),
        ckpt.display()
    );
    Ok(())
}

fn load_params(path: &Path) -> CliResult<Params> {
    load_checkpoint_file(path).map_err(|e| CliError::core(path.display().to_string(), e))
}

fn sibling(checkpoint: &Path, name: &str) -> PathBuf {
    checkpoint.parent().unwrap_or_else(|| Path::new(".")).join(name)
}

pub fn eval_cmd(args: &EvalArgs) -> CliResult<()> {
    let params = load_params(&args.checkpoint)?;
    let train_set = read_split(&args.data, TRAIN_CACHE)?;
    let test_set = read_split(&args.data, if args.valid { VALID_CACHE } else { TEST_CACHE })?;
    let report = evaluate_model_with(&params, &train_set, &test_set, !args.deterministic)
        .map_err(|e| CliError::core("evaluation", e))?;
    let seed = std::fs::read_to_string(sibling(&args.checkpoint, RESOLVED_CONFIG))
        .ok()
        .and_then(|t| serde_json::from_str::<RunConfig>(&t).ok())
        .map(|c| c.seed);
    println!("{report}");
    if args.baseline {
        let base = item_mean_baseline(&train_set, &test_set).map_err(|e| CliError::core("baseline", e))?;
        println!("baseline RMSE  {base:.6}");
        println!("improvement    {:.6}", base - report.rmse);
    }
    println!("{}", report.record_line(seed, params.config().fingerprint()));
    Ok(())
}

/// Parses `id:rating,id:rating`; whitespace around tokens is ignored.
pub fn parse_history(text: &str) -> CliResult<Vec<(u64, u8)>> {
    text.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|token| {
            let bad = || CliError::Usage(format!("history token '{token}' is not id:rating"));
            let (id, r) = token.split_once(':').ok_or_else(bad)?;
            Ok((
                id.trim().parse().map_err(|_| bad())?,
                r.trim().parse().map_err(|_| bad())?,
            ))
        })
        .collect()
}

pub fn predict_cmd(args: &PredictArgs) -> CliResult<()> {
    let params = load_params(&args.checkpoint)?;
    let map_path = args.id_map.clone().unwrap_or_else(|| sibling(&args.checkpoint, ID_MAP));
    let maps: IdMaps = read_json(&map_path)?;
    let ids = maps.targets();
    if ids.len() != params.config().num_items {
        return Err(CliError::Usage(format!(
            "id map has {} targets but the checkpoint has M={}",
            ids.len(),
            params.config().num_items
        )));
    }
    let k = params.config().rating_scale;
    let mut history = Vec::new();
    let mut unknown = Vec::new();
    for (raw, r) in parse_history(&args.history)? {
        if r == 0 || r as usize > k {
            return Err(CliError::Usage(format!("rating {r} for id {raw} is outside 1..={k}")));
        }
        match ids.index_of(raw) {
            Some(i) => history.push((i, r)),
            None => unknown.push(format!("{raw}:{r}")),
        }
    }
    if !unknown.is_empty() {
        return Err(CliError::Usage(format!(
            "unknown id in --history: {}",
            unknown.join(", ")
        )));
    }
    history.sort_unstable();
    if let Some(w) = history.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(CliError::Usage(format!(
            "id {} appears twice in --history",
            ids.raw_id(w[0].0)
        )));
    }
    let target = ids
        .index_of(args.target)
        .ok_or_else(|| CliError::Usage(format!("unknown --target id {}", args.target)))?;
    println!("{:.6}", params.predict_rating(&history, target));
    Ok(())
}
