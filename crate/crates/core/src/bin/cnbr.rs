use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use causal_neighbors::baselines::{run_baseline, BaselineConfig, BaselineMethod};
use causal_neighbors::causal::{run_ranker, RankerConfig};
use causal_neighbors::data::{load_log, to_matrices, DatasetSplits, LogFormat, Split};
use causal_neighbors::datagen::{build_priors, generate_splits, GenParams};
use causal_neighbors::error::{Error, Result};
use causal_neighbors::harness::{
    configure_workers, emit_tables, run_experiment, sensitivity_sweep, write_sweep_csv, GeneratorSpec, Method,
    Sensitivity, SweepSpec,
};
use causal_neighbors::matching::{estimate, read_panel, write_result};
use causal_neighbors::metrics::{evaluate_tau, MetricKind};
use causal_neighbors::ranking::{read_score_file, Rankings};
use causal_neighbors::similarity::{Orientation, SimilarityConfig, Source};

/// Causal-effect neighborhood rankers and evaluation.
#[derive(Parser)]
#[command(name = "cnbr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample semi-synthetic train/validation/test splits.
    Generate(GenerateArgs),
    /// Rank items for every user with one method.
    Rank(RankArgs),
    /// Compute causal metrics of a ranking or score file.
    Evaluate(EvaluateArgs),
    /// Grid search with validation selection, or a sensitivity sweep.
    Sweep(SweepArgs),
    /// Matching estimate of ATE/ATT on a subject panel.
    Match(MatchArgs),
}

/// Reads a JSON config file, or the default when none is given.
fn config<T: DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            Ok(serde_json::from_str(&text)?)
        }
    }
}

fn required<T>(v: Option<T>, name: &str) -> Result<T> {
    v.ok_or_else(|| Error::InvalidParameter(format!("--{name} is required (flag or config file)")))
}

#[derive(Args)]
struct GenerateArgs {
    /// JSON file with any of the flag names plus `params`.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for the splits and priors.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    n_users: Option<usize>,
    #[arg(long)]
    n_items: Option<usize>,
    /// Rating predictions (dense triplet file); synthesized when absent.
    #[arg(long)]
    r_hat: Option<PathBuf>,
    /// Observation probabilities (dense triplet file).
    #[arg(long)]
    o_hat: Option<PathBuf>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    /// Propensity scale; ignored when a target is set.
    #[arg(long)]
    a: Option<f64>,
    /// Mean number of logged recommendations per user (calibrates `a`).
    #[arg(long)]
    target: Option<f64>,
    #[arg(long)]
    n_validation: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct GenerateConfig {
    seed: Option<u64>,
    out: Option<PathBuf>,
    n_users: Option<usize>,
    n_items: Option<usize>,
    r_hat: Option<PathBuf>,
    o_hat: Option<PathBuf>,
    #[serde(default)]
    params: GenParams,
}

fn generate(args: GenerateArgs) -> Result<serde_json::Value> {
    let cfg: GenerateConfig = config(&args.config)?;
    let mut params = cfg.params;
    if let Some(v) = args.epsilon {
        params.epsilon = v;
    }
    if let Some(v) = args.b {
        params.b = v;
    }
    if let Some(v) = args.a {
        params.a = v;
        params.target_recs_per_user = None;
    }
    if let Some(v) = args.target {
        params.target_recs_per_user = Some(v);
    }
    if let Some(v) = args.n_validation {
        params.n_validation = v;
    }
    if let Some(v) = args.n_test {
        params.n_test = v;
    }
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let out = required(args.out.or(cfg.out), "out")?;
    let spec = GeneratorSpec {
        n_users: args.n_users.or(cfg.n_users).unwrap_or(0),
        n_items: args.n_items.or(cfg.n_items).unwrap_or(0),
        r_hat: args.r_hat.or(cfg.r_hat),
        o_hat: args.o_hat.or(cfg.o_hat),
        params,
    };
    let (r_hat, o_hat) = spec.predictions(seed)?;
    let (priors, resolved) = build_priors(&r_hat, &o_hat, &spec.params)?;
    let splits = generate_splits(&priors, &resolved, seed)?;
    splits.save(&out)?;
    priors.save(out.join("priors"))?;
    Ok(serde_json::json!({
        "out": out,
        "n_users": splits.train.n_users(),
        "n_items": splits.train.n_items(),
        "a": resolved.a,
        "ate": {
            "train": splits.train.tau.mean(),
            "validation": splits.validation.iter().map(|d| d.tau.mean()).collect::<Vec<_>>(),
            "test": splits.test.iter().map(|d| d.tau.mean()).collect::<Vec<_>>(),
        },
    }))
}

#[derive(Args)]
struct RankArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory; rankers are fit on its training split.
    #[arg(long)]
    dataset_dir: Option<PathBuf>,
    /// Interaction log (`user,item,y,z`) to rank from instead of a dataset.
    #[arg(long)]
    log: Option<PathBuf>,
    /// CUBN-O, CUBN-T, CIBN-O, CIBN-T (optionally -woM), UBN, IBN, Random or Pop.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Shrinkage for both groups.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    beta_t: Option<f64>,
    #[arg(long)]
    beta_c: Option<f64>,
    /// Seed of the random ranker.
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV (`user,item,rank,score`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RankConfig {
    dataset_dir: Option<PathBuf>,
    log: Option<PathBuf>,
    method: Option<String>,
    k: Option<usize>,
    alpha: Option<f64>,
    beta: Option<f64>,
    beta_t: Option<f64>,
    beta_c: Option<f64>,
    seed: Option<u64>,
    out: Option<PathBuf>,
}

fn rank(args: RankArgs) -> Result<serde_json::Value> {
    let cfg: RankConfig = config(&args.config)?;
    let method: Method = required(args.method.or(cfg.method), "method")?.parse()?;
    let out = required(args.out.or(cfg.out), "out")?;
    let (y, z, users, items) = match (args.log.or(cfg.log), args.dataset_dir.or(cfg.dataset_dir)) {
        (Some(log), None) => {
            let format = LogFormat::from_path(&log);
            let log = load_log(&log, format)?;
            let (y, z) = to_matrices(&log);
            (y, z, Some(log.users), Some(log.items))
        }
        (None, Some(dir)) => {
            let train = DatasetSplits::load(&dir)?.train;
            (train.y, train.z, train.user_ids, train.item_ids)
        }
        (Some(_), Some(_)) => return Err(Error::InvalidParameter("give --log or --dataset-dir, not both".into())),
        (None, None) => return Err(Error::InvalidParameter("--dataset-dir or --log is required".into())),
    };
    let sim = |source, orientation| -> Result<SimilarityConfig> {
        Ok(SimilarityConfig {
            k: required(args.k.or(cfg.k), "k")?,
            alpha: args.alpha.or(cfg.alpha).unwrap_or(1.0),
            source,
            orientation,
        })
    };
    let (rankings, score_column): (Rankings, &str) = match method {
        Method::Causal {
            orientation,
            source,
            mix_own,
        } => {
            let beta = args.beta.or(cfg.beta);
            let rc = RankerConfig {
                sim: sim(source, orientation)?,
                beta_t: args.beta_t.or(cfg.beta_t).or(beta).unwrap_or(0.0),
                beta_c: args.beta_c.or(cfg.beta_c).or(beta).unwrap_or(0.0),
                mix_own,
            };
            (run_ranker(&y, &z, &rc)?, "tau_hat")
        }
        Method::Baseline(b) => {
            let bc = BaselineConfig {
                method: b,
                sim: match b {
                    BaselineMethod::Ubn | BaselineMethod::Ibn => {
                        Some(sim(Source::Outcomes, Orientation::User)?)
                    }
                    _ => None,
                },
                seed: match b {
                    BaselineMethod::Random => Some(args.seed.or(cfg.seed).unwrap_or(0)),
                    _ => None,
                },
            };
            (run_baseline(&y, &bc)?, "score")
        }
    };
    rankings.write_csv(&out, score_column, users.as_ref(), items.as_ref())?;
    Ok(serde_json::json!({ "method": method.to_string(), "out": out, "users": rankings.n_users() }))
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset_dir: Option<PathBuf>,
    /// Ranking CSV written by `rank`.
    #[arg(long)]
    rankings: Option<PathBuf>,
    /// Score CSV (`user,item,score`) of an external model.
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Split whose effects are used: validation or test.
    #[arg(long)]
    split: Option<Split>,
    /// Sample index within the split.
    #[arg(long)]
    sample: Option<usize>,
    /// Metric such as CP@10, CDCG or CAR; repeatable.
    #[arg(long)]
    metric: Vec<MetricKind>,
    /// Report file, `.csv` or `.json`; printed when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Include per-user values.
    #[arg(long)]
    per_user: bool,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct EvaluateConfig {
    dataset_dir: Option<PathBuf>,
    rankings: Option<PathBuf>,
    scores: Option<PathBuf>,
    split: Option<Split>,
    sample: Option<usize>,
    #[serde(default)]
    metric: Vec<MetricKind>,
    out: Option<PathBuf>,
    #[serde(default)]
    per_user: bool,
}

fn evaluate(args: EvaluateArgs) -> Result<serde_json::Value> {
    let cfg: EvaluateConfig = config(&args.config)?;
    let splits = DatasetSplits::load(required(args.dataset_dir.or(cfg.dataset_dir), "dataset-dir")?)?;
    let split = args.split.or(cfg.split).unwrap_or(Split::Test);
    let sample = args.sample.or(cfg.sample).unwrap_or(0);
    let data = match split {
        Split::Train => return Err(Error::InvalidParameter("effects of the training split are not evaluated".into())),
        Split::Validation => &splits.validation,
        Split::Test => &splits.test,
    }
    .get(sample)
    .ok_or_else(|| Error::MissingSplit(format!("{split} sample {sample}")))?;
    let (n_users, n_items) = (data.n_users(), data.n_items());
    let (users, items) = (splits.train.user_ids.as_ref(), splits.train.item_ids.as_ref());
    let rankings = match (args.rankings.or(cfg.rankings), args.scores.or(cfg.scores)) {
        (Some(r), None) => Rankings::read_csv(r, n_users, n_items, users, items)?,
        (None, Some(s)) => Rankings::from_score_matrix(&read_score_file(s, n_users, n_items, users, items)?),
        _ => return Err(Error::InvalidParameter("give exactly one of --rankings or --scores".into())),
    };
    let mut metrics = if args.metric.is_empty() { cfg.metric } else { args.metric };
    if metrics.is_empty() {
        metrics = vec![MetricKind::CpAt(10), MetricKind::CpAt(100), MetricKind::Cdcg, MetricKind::Car];
        metrics.retain(|m| !matches!(m, MetricKind::CpAt(n) if *n > n_items));
    }
    let mut cutoffs: Vec<usize> = metrics
        .iter()
        .filter_map(|m| match m {
            MetricKind::CpAt(n) => Some(*n),
            _ => None,
        })
        .collect();
    cutoffs.sort_unstable();
    cutoffs.dedup();
    let report = evaluate_tau(&rankings, &data.tau, &cutoffs, args.per_user || cfg.per_user)?;
    let summary: serde_json::Map<String, serde_json::Value> = metrics
        .iter()
        .map(|m| (m.to_string(), m.value(&report).into()))
        .collect();
    match args.out.or(cfg.out) {
        Some(out) if out.extension().is_some_and(|e| e == "csv") => report.write_csv(&out)?,
        Some(out) => report.write_json(&out)?,
        None if report.per_user.is_some() => return Ok(serde_json::to_value(&report)?),
        None => {}
    }
    Ok(serde_json::Value::Object(summary))
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep specification (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dataset_dir: Option<PathBuf>,
    /// Method to include; repeatable, replaces the config's list.
    #[arg(long)]
    method: Vec<Method>,
    /// Metric to optimize; repeatable, replaces the config's list.
    #[arg(long)]
    metric: Vec<MetricKind>,
    /// Sensitivity experiment: neighbors, alpha_beta, unevenness or log_size.
    #[arg(long)]
    sensitivity: Option<String>,
    /// Sweep points for unevenness (b) or log_size (targets), comma separated.
    #[arg(long, value_delimiter = ',')]
    values: Vec<f64>,
    /// Output directory for tables.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// The config file is a sweep spec with two extra keys, `sensitivity` and
/// `out`.
fn sweep(args: SweepArgs) -> Result<serde_json::Value> {
    let cfg: serde_json::Value = config::<Option<serde_json::Value>>(&args.config)?.unwrap_or(serde_json::json!({}));
    let mut cfg_map = cfg.as_object().cloned().unwrap_or_default();
    let sensitivity_cfg: Option<Sensitivity> = cfg_map.remove("sensitivity").map(serde_json::from_value).transpose()?;
    let out_cfg: Option<PathBuf> = cfg_map.remove("out").map(serde_json::from_value).transpose()?;
    let mut spec: SweepSpec = serde_json::from_value(serde_json::Value::Object(cfg_map))?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(dir) = args.dataset_dir {
        spec.dataset_dir = Some(dir);
        spec.generator = None;
    }
    if !args.method.is_empty() {
        spec.methods = args.method;
    }
    if !args.metric.is_empty() {
        spec.metrics = args.metric;
    }
    let sensitivity = match args.sensitivity.as_deref() {
        None => sensitivity_cfg,
        Some("neighbors") => Some(Sensitivity::Neighbors),
        Some("alpha_beta") => Some(Sensitivity::AlphaBeta),
        Some("unevenness") => Some(Sensitivity::Unevenness { b: args.values.clone() }),
        Some("log_size") => Some(Sensitivity::LogSize { targets: args.values.clone() }),
        Some(other) => return Err(Error::InvalidParameter(format!("unknown sensitivity {other:?}"))),
    };
    let out = required(args.out.or(out_cfg), "out")?;
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let files: Vec<PathBuf> = match sensitivity {
        None => emit_tables(&run_experiment(&spec)?, &out)?,
        Some(kind) => {
            let rows = sensitivity_sweep(&kind, &spec)?;
            let csv = out.join(format!("sweep_{}.csv", kind.name()));
            write_sweep_csv(&rows, &csv)?;
            let json = out.join(format!("sweep_{}.json", kind.name()));
            std::fs::write(&json, serde_json::to_string_pretty(&rows)? + "\n").map_err(|e| Error::io(&json, e))?;
            vec![csv, json]
        }
    };
    Ok(serde_json::json!({ "files": files }))
}

#[derive(Args)]
struct MatchArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Panel CSV with columns `id,z,y` and binary covariate columns.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Matches per group.
    #[arg(long)]
    matches: Option<usize>,
    /// Output directory for subjects.csv and summary.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct MatchConfig {
    input: Option<PathBuf>,
    matches: Option<usize>,
    out: Option<PathBuf>,
}

fn run_match(args: MatchArgs) -> Result<serde_json::Value> {
    let cfg: MatchConfig = config(&args.config)?;
    let (ids, panel) = read_panel(required(args.input.or(cfg.input), "input")?)?;
    let result = estimate(&panel, args.matches.or(cfg.matches).unwrap_or(1))?;
    if let Some(out) = args.out.or(cfg.out) {
        write_result(Path::new(&out), &ids, &panel, &result)?;
    }
    Ok(serde_json::json!({ "subjects": panel.len(), "ate": result.ate, "att": result.att }))
}

fn fail(kind: &str, message: String, code: u8) -> ExitCode {
    let body = serde_json::json!({ "error": { "kind": kind, "message": message } });
    let _ = writeln!(std::io::stderr(), "{body}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            e.exit()
        }
        Err(e) => return fail("usage", e.to_string().trim().to_string(), 2),
    };
    let result = configure_workers().and_then(|()| match cli.command {
        Command::Generate(a) => generate(a),
        Command::Rank(a) => rank(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Sweep(a) => sweep(a),
        Command::Match(a) => run_match(a),
    });
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => fail(e.kind(), e.to_string(), 1),
    }
}
