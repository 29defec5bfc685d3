//! Command-line surface: data generation, two-phase training, evaluation,
//! and attention export, each writing a run manifest next to its outputs.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::data::{
    build_from_implicit_feedback, generate_oracle_dataset, read_ratings, read_samples, split,
    write_samples, DatasetSpec, OracleWorld, Sample,
};
use crate::error::{Error, Result};
use crate::eval::{
    evaluate, train_pointwise, EvalContext, Method, PointwiseScorer, write_reports_csv,
};
use crate::gattn::{encode_sample, FeatureMode, FeatureTable, ModelConfig, PolicyModel};
use crate::graph::Constraint;
use crate::reward::{RewardConfig, RewardModel};
use crate::training::{
    apply_config_kv, parse_kv_file, run_training, write_curve_csv, TrainConfig,
};
use crate::Tape;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Parser)]
#[command(name = "exactk", version, about = "Exact-K card recommendation toolkit")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a train/test dataset (synthetic oracle or implicit feedback).
    GenData(GenDataArgs),
    /// Two-phase training: reward estimator, then the pointer policy.
    Train(TrainArgs),
    /// Evaluate a method on a test split and print a report.
    Eval(EvalArgs),
    /// Dump encoder attention weights for one sample as CSV.
    ExportAttention(ExportAttentionArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DataMode {
    Oracle,
    Implicit,
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long, value_enum)]
    mode: DataMode,
    /// Card size K.
    #[arg(long)]
    k: usize,
    /// Candidate-set size N.
    #[arg(long)]
    n: usize,
    /// Number of users to simulate (oracle mode).
    #[arg(long, default_value_t = 200)]
    users: usize,
    /// Item universe size (oracle mode).
    #[arg(long, default_value_t = 100)]
    items: usize,
    /// Pairwise synergy weight of the oracle utility.
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    /// Latent dimension of the oracle world.
    #[arg(long, default_value_t = 16)]
    dim: usize,
    /// Ratings file (user item rating per line) for implicit mode.
    #[arg(long)]
    ratings: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory produced by gen-data.
    #[arg(long)]
    data: PathBuf,
    /// key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, value_parser = parse_on_off)]
    policy_sampling: Option<bool>,
    #[arg(long, value_parser = parse_on_off)]
    hill_climbing: Option<bool>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for checkpoints and curves.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Dataset directory produced by gen-data.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    policy: Option<PathBuf>,
    #[arg(long)]
    reward: Option<PathBuf>,
    /// policy_beam | greedy_baseline | brute_force_oracle
    #[arg(long)]
    method: String,
    /// Report CSV path; a table is printed alongside.
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ExportAttentionArgs {
    #[arg(long)]
    policy: PathBuf,
    /// Dataset directory; the sample comes from its test split.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    sample_index: usize,
    #[arg(long)]
    out: PathBuf,
}

fn parse_on_off(s: &str) -> std::result::Result<bool, String> {
    match s {
        "on" | "true" | "1" => Ok(true),
        "off" | "false" | "0" => Ok(false),
        _ => Err(format!("expected on|off, got {s:?}")),
    }
}

// ---------------------------------------------------------------------------
// Run manifest

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: BTreeMap<String, String>,
    pub seed: u64,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub version: String,
    pub duration_secs: f64,
}

/// Write the manifest atomically (temp file + rename) next to the outputs.
pub fn write_manifest(path: &Path, manifest: &RunManifest) -> Result<()> {
    let json = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::Data(format!("manifest serialization: {e}")))?;
    let tmp = path.with_extension("json.tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(json.as_bytes())?;
        f.write_all(b"\n")?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn manifest_skeleton(command: &str, seed: u64) -> RunManifest {
    RunManifest {
        command: command.into(),
        config: BTreeMap::new(),
        seed,
        inputs: Vec::new(),
        outputs: Vec::new(),
        version: env!("CARGO_PKG_VERSION").into(),
        duration_secs: 0.0,
    }
}

/// Seed precedence: flag, then EXACTK_SEED, then 0.
fn resolve_seed(flag: Option<u64>) -> u64 {
    flag.or_else(|| {
        std::env::var("EXACTK_SEED")
            .ok()
            .and_then(|v| v.parse().ok())
    })
    .unwrap_or(0)
}

/// Entry point used by the binary: parses argv, runs, maps errors to the
/// exit-code convention (0 ok, 2 usage, 3 I/O, 4 numeric/infeasibility).
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            // clap handles --help/--version as "errors" with exit code 0
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::GenData(args) => cmd_gen_data(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::ExportAttention(args) => cmd_export_attention(args),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Parse { .. } => EXIT_USAGE,
                Error::Io(_) | Error::Checkpoint(_) | Error::Data(_) => EXIT_IO,
                Error::Infeasible(_) => EXIT_NUMERIC,
            }
        }
    }
}

// ---------------------------------------------------------------------------
// gen-data

fn cmd_gen_data(args: GenDataArgs) -> Result<()> {
    let start = Instant::now();
    if args.k >= args.n {
        return Err(Error::Config(format!("K must be < N (got K={}, N={})", args.k, args.n)));
    }
    let seed = resolve_seed(args.seed);
    let spec = DatasetSpec::new(args.k, args.n, seed)?;
    std::fs::create_dir_all(&args.out)?;

    let mut rng = crate::rng::seeded(seed);
    let mut manifest = manifest_skeleton("gen-data", seed);
    manifest.config.insert("k".into(), args.k.to_string());
    manifest.config.insert("n".into(), args.n.to_string());
    manifest.config.insert("seed".into(), seed.to_string());

    let samples = match args.mode {
        DataMode::Oracle => {
            if args.users == 0 || args.items < args.n {
                return Err(Error::Config(
                    "oracle mode needs users >= 1 and items >= N".into(),
                ));
            }
            manifest.config.insert("mode".into(), "oracle".into());
            manifest.config.insert("users".into(), args.users.to_string());
            manifest.config.insert("items".into(), args.items.to_string());
            manifest.config.insert("beta".into(), args.beta.to_string());
            manifest.config.insert("dim".into(), args.dim.to_string());
            let world = OracleWorld::random(args.users, args.items, args.dim, args.beta, &mut rng);
            let world_path = args.out.join("world.ckpt");
            world.save(&world_path)?;
            manifest.outputs.push(world_path.display().to_string());
            generate_oracle_dataset(&world, &spec, args.users, &mut rng)?
        }
        DataMode::Implicit => {
            let ratings_path = args
                .ratings
                .as_ref()
                .ok_or_else(|| Error::Config("implicit mode requires --ratings".into()))?;
            manifest.config.insert("mode".into(), "implicit".into());
            manifest.inputs.push(ratings_path.display().to_string());
            let ratings = read_ratings(ratings_path)?;
            let built = build_from_implicit_feedback(&ratings, &spec, &mut rng)?;
            if built.skipped_users > 0 {
                eprintln!("skipped {} users with too little history", built.skipped_users);
            }
            built.samples
        }
    };

    let (train, test) = split(samples, spec.split_ratio, &mut rng)?;
    let train_path = args.out.join("train.tsv");
    let test_path = args.out.join("test.tsv");
    write_samples(&train, &train_path)?;
    write_samples(&test, &test_path)?;
    manifest.outputs.push(train_path.display().to_string());
    manifest.outputs.push(test_path.display().to_string());
    manifest.duration_secs = start.elapsed().as_secs_f64();
    write_manifest(&args.out.join("run_manifest.json"), &manifest)?;
    println!("wrote {} train / {} test samples to {}", train.len(), test.len(), args.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// shared dataset loading

struct LoadedData {
    train: Vec<Sample>,
    test: Vec<Sample>,
    world: Option<OracleWorld>,
    features: Option<FeatureTable>,
    k: usize,
    n: usize,
}

fn load_data(dir: &Path) -> Result<LoadedData> {
    let train = read_samples(&dir.join("train.tsv"))?;
    let test = read_samples(&dir.join("test.tsv"))?;
    let probe = train.first().or_else(|| test.first()).ok_or_else(|| {
        Error::Data(format!("dataset in {} is empty", dir.display()))
    })?;
    let (k, n) = (probe.card.len(), probe.candidates.len());
    let world_path = dir.join("world.ckpt");
    let world = if world_path.exists() {
        Some(OracleWorld::load(&world_path)?)
    } else {
        None
    };
    let features = world.as_ref().map(FeatureTable::from_world);
    Ok(LoadedData { train, test, world, features, k, n })
}

fn feature_mode(data: &LoadedData) -> FeatureMode {
    match &data.world {
        Some(w) => FeatureMode::Dense { d_item: w.dim, d_user: w.dim },
        None => {
            let max_id = |f: fn(&Sample) -> u32| {
                data.train
                    .iter()
                    .chain(&data.test)
                    .map(f)
                    .max()
                    .unwrap_or(0) as usize
                    + 1
            };
            FeatureMode::Ids {
                n_items: data
                    .train
                    .iter()
                    .chain(&data.test)
                    .flat_map(|s| s.candidates.iter().copied())
                    .max()
                    .unwrap_or(0) as usize
                    + 1,
                n_users: max_id(|s| s.user_id),
                embed_dim: 16,
            }
        }
    }
}

// ---------------------------------------------------------------------------
// train

fn cmd_train(args: TrainArgs) -> Result<()> {
    let start = Instant::now();
    let data = load_data(&args.data)?;
    let features_mode = feature_mode(&data);

    // precedence: flags > config file > built-in defaults
    let mut train_cfg = TrainConfig::default();
    let mut model_cfg = ModelConfig::defaults(data.k, data.n, features_mode.clone());
    if let Some(cfg_path) = &args.config {
        let kv = parse_kv_file(cfg_path)?;
        apply_config_kv(&mut train_cfg, &mut model_cfg, &kv)?;
    }
    if let Some(alpha) = args.alpha {
        train_cfg.alpha = alpha;
    }
    if let Some(ps) = args.policy_sampling {
        train_cfg.policy_sampling = ps;
    }
    if let Some(hc) = args.hill_climbing {
        train_cfg.hill_climbing = hc;
    }
    if let Some(epochs) = args.epochs {
        train_cfg.epochs = epochs;
    }
    if let Some(seed) = args.seed {
        train_cfg.seed = seed;
    } else if args.config.as_ref().is_none_or(|p| {
        parse_kv_file(p).map_or(true, |kv| kv.iter().all(|(k, _)| k != "seed"))
    }) {
        train_cfg.seed = resolve_seed(None);
    }
    train_cfg.validate()?;
    model_cfg.validate()?;
    std::fs::create_dir_all(&args.out)?;

    let mut rng = crate::rng::seeded(train_cfg.seed.wrapping_add(1));
    let mut policy = PolicyModel::new(model_cfg.clone(), &mut rng)?;
    let mut reward = if train_cfg.alpha < 1.0 {
        Some(RewardModel::new(
            RewardConfig::defaults(data.k, features_mode.clone()),
            &mut rng,
        )?)
    } else {
        None
    };

    let summary = run_training(
        &mut policy,
        reward.as_mut(),
        &data.train,
        &Constraint::None,
        data.features.as_ref(),
        &train_cfg,
    )?;

    // infeasible-decode storm: more than 1% of training decodes dead-ended
    if summary.total_samples > 0 {
        let rate = summary.infeasible_samples as f64 / summary.total_samples as f64;
        if rate > 0.01 {
            return Err(Error::Infeasible(format!(
                "infeasible-decode rate {:.2}% exceeds 1%",
                rate * 100.0
            )));
        }
    }

    let policy_path = args.out.join("policy.ckpt");
    policy.save(&policy_path)?;
    let mut outputs = vec![policy_path.display().to_string()];
    if let Some(reward) = &reward {
        let reward_path = args.out.join("reward.ckpt");
        reward.save(&reward_path)?;
        outputs.push(reward_path.display().to_string());
    }
    let curve_path = args.out.join("curve.csv");
    write_curve_csv(&curve_path, &summary.rows)?;
    outputs.push(curve_path.display().to_string());

    let mut manifest = manifest_skeleton("train", train_cfg.seed);
    manifest.inputs.push(args.data.display().to_string());
    manifest.outputs = outputs;
    manifest.config.insert("alpha".into(), train_cfg.alpha.to_string());
    manifest.config.insert("m".into(), train_cfg.m.to_string());
    manifest.config.insert("epochs".into(), train_cfg.epochs.to_string());
    manifest.config.insert("batch_size".into(), train_cfg.batch_size.to_string());
    manifest.config.insert("learning_rate".into(), train_cfg.learning_rate.to_string());
    manifest.config.insert("policy_sampling".into(), train_cfg.policy_sampling.to_string());
    manifest.config.insert("hill_climbing".into(), train_cfg.hill_climbing.to_string());
    manifest.config.insert("beam_size".into(), model_cfg.beam_size.to_string());
    manifest.duration_secs = start.elapsed().as_secs_f64();
    write_manifest(&args.out.join("run_manifest.json"), &manifest)?;

    if let Some(last) = summary.rows.last() {
        println!(
            "trained {} iterations; final loss {:.4}, P@K {:.4}, HR@K {:.4}",
            last.iter, last.loss_total, last.p_at_k, last.hr_at_k
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// eval

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let start = Instant::now();
    let method = Method::parse(&args.method)?;
    let data = load_data(&args.data)?;
    let seed = resolve_seed(args.seed);

    let policy = args.policy.as_deref().map(PolicyModel::load).transpose()?;
    let reward = args.reward.as_deref().map(RewardModel::load).transpose()?;

    // the greedy baseline's node weights come from a small pointwise CTR
    // head fitted on the train split at evaluation time
    let scorer = if method == Method::GreedyBaseline {
        let mut scorer = PointwiseScorer::new(feature_mode(&data), &mut crate::rng::seeded(seed))?;
        train_pointwise(
            &mut scorer,
            &data.train,
            data.features.as_ref(),
            10,
            0.01,
            &mut crate::rng::stream(seed, 1),
        )?;
        Some(scorer)
    } else {
        None
    };

    let ctx = EvalContext {
        policy: policy.as_ref(),
        reward: reward.as_ref(),
        scorer: scorer.as_ref(),
        world: data.world.as_ref(),
        features: data.features.as_ref(),
        constraint: Constraint::None,
    };
    let report = evaluate(method, &data.test, &ctx)?;
    write_reports_csv(&args.report, std::slice::from_ref(&report))?;
    print!("{}", report.table());

    let mut manifest = manifest_skeleton("eval", seed);
    manifest.inputs.push(args.data.display().to_string());
    if let Some(p) = &args.policy {
        manifest.inputs.push(p.display().to_string());
    }
    if let Some(r) = &args.reward {
        manifest.inputs.push(r.display().to_string());
    }
    manifest.config.insert("method".into(), method.name().into());
    manifest.outputs.push(args.report.display().to_string());
    manifest.duration_secs = start.elapsed().as_secs_f64();
    let manifest_path = args.report.with_extension("manifest.json");
    write_manifest(&manifest_path, &manifest)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// export-attention

fn cmd_export_attention(args: ExportAttentionArgs) -> Result<()> {
    let start = Instant::now();
    let policy = PolicyModel::load(&args.policy)?;
    let data = load_data(&args.data)?;
    let sample = data.test.get(args.sample_index).ok_or_else(|| {
        Error::Config(format!(
            "sample index {} out of range (test split has {})",
            args.sample_index,
            data.test.len()
        ))
    })?;
    let mut tape = Tape::new();
    let mut records = Vec::new();
    encode_sample(&mut tape, &policy, data.features.as_ref(), sample, Some(&mut records))?;

    let mut out = std::io::BufWriter::new(std::fs::File::create(&args.out)?);
    writeln!(out, "layer,head,node_i,node_j,weight")?;
    for rec in &records {
        let n = rec.weights.shape()[0];
        for i in 0..n {
            for j in 0..n {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    rec.layer,
                    rec.head,
                    i,
                    j,
                    rec.weights.data()[i * n + j]
                )?;
            }
        }
    }
    drop(out);

    let mut manifest = manifest_skeleton("export-attention", 0);
    manifest.inputs.push(args.policy.display().to_string());
    manifest.inputs.push(args.data.display().to_string());
    manifest.config.insert("sample_index".into(), args.sample_index.to_string());
    manifest.outputs.push(args.out.display().to_string());
    manifest.duration_secs = start.elapsed().as_secs_f64();
    write_manifest(&args.out.with_extension("manifest.json"), &manifest)?;
    Ok(())
}
