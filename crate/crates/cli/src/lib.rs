//! Library side of the `mad` executable: config resolution and the
//! `collect`, `train`, `eval`, `plan`, `gt` and `sweep` commands.
//!
//! Every command writes into the configured output directory a
//! `config.resolved` echo and a `manifest.txt`; the manifest is the only
//! file carrying a timestamp.

pub mod config;

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mad_core::dataset::{collect, DatasetError, TrajectoryDataset};
use mad_core::diffnet::{read_checkpoint, write_checkpoint, DiffError, Mlp};
use mad_core::env::{CliffWalking, Environment, KeyDoorGridWorld, NoisyGridWorld, PointMaze};
use mad_core::evaluation::{
    evaluate, evaluate_pairs, ConstantDistance, EvalError, LearnedDistance, MetricsReport,
    OracleDistance, StateDistance,
};
use mad_core::planner::run_suite;
use mad_core::training::{history_csv, train, EvalHook, HistoryRow, TrainError};

pub use config::{Config, Metric, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Invalid(m) => CliError::Config(m),
            other => CliError::Io(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Diff(DiffError::NonFinite(m)) => CliError::Numeric(m),
            EvalError::NonFinite(m) => CliError::Numeric(m.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFinite { .. } | TrainError::Diff(DiffError::NonFinite(_)) => {
                CliError::Numeric(e.to_string())
            }
            TrainError::Dataset(d) => d.into(),
            TrainError::Eval(v) => v.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Collect,
    Train,
    Eval,
    Plan,
    Gt,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Collect => "collect",
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Plan => "plan",
            Command::Gt => "gt",
            Command::Sweep => "sweep",
        }
    }
}

/// Output file names.
pub mod files {
    pub const CONFIG: &str = "config.resolved";
    pub const MANIFEST: &str = "manifest.txt";
    pub const DATASET: &str = "dataset.txt";
    pub const CHECKPOINT: &str = "checkpoint.madnet";
    pub const METRICS: &str = "metrics.csv";
    pub const EVAL: &str = "eval.csv";
    pub const PAIRS: &str = "pairs.csv";
    pub const PLAN: &str = "plan.csv";
    pub const EPISODES: &str = "episodes.csv";
    pub const GT: &str = "gt.csv";
    pub const STATES: &str = "states.csv";
    pub const SWEEP: &str = "sweep.csv";
    pub const NONFINITE_DUMP: &str = "nonfinite_batch.txt";
}

enum AnyEnv {
    Cliff(CliffWalking),
    KeyDoor(KeyDoorGridWorld),
    Noisy(NoisyGridWorld),
    Maze(PointMaze),
}

fn build_env(cfg: &RunConfig) -> Result<AnyEnv, CliError> {
    let s = &cfg.env;
    Ok(match s.name.as_str() {
        "cliffwalking" => AnyEnv::Cliff(CliffWalking::new()),
        "keydoor" => AnyEnv::KeyDoor(KeyDoorGridWorld::new()),
        "noisygrid" => AnyEnv::Noisy(NoisyGridWorld::new(s.sigma).map_err(CliError::Config)?),
        "pointmaze" => {
            AnyEnv::Maze(PointMaze::builtin(&s.layout, s.resolution).map_err(CliError::Config)?)
        }
        other => return Err(CliError::Config(format!("unknown env `{other}`"))),
    })
}

macro_rules! with_env {
    ($cfg:expr, $env:ident => $body:expr) => {
        match build_env($cfg)? {
            AnyEnv::Cliff($env) => $body,
            AnyEnv::KeyDoor($env) => $body,
            AnyEnv::Noisy($env) => $body,
            AnyEnv::Maze($env) => $body,
        }
    };
}

/// Resolves `raw` and runs `cmd`.
pub fn execute(
    cmd: Command,
    raw: &Config,
    seed_override: Option<u64>,
    env_seed: Option<&str>,
) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(raw, seed_override, env_seed)?;
    write_resolved(&cfg)?;
    match cmd {
        Command::Sweep => cmd_sweep(raw, &cfg),
        _ => with_env!(&cfg, env => run_single(cmd, &env, &cfg)),
    }
}

fn write_resolved(cfg: &RunConfig) -> Result<(), CliError> {
    write_file(
        &out_dir(cfg)?.join(files::CONFIG),
        &cfg.to_config().to_string(),
    )
}

fn run_single<E: Environment>(cmd: Command, env: &E, cfg: &RunConfig) -> Result<(), CliError> {
    let notes = match cmd {
        Command::Collect => cmd_collect(env, cfg)?,
        Command::Train => cmd_train(env, cfg)?,
        Command::Eval => cmd_eval(env, cfg)?,
        Command::Plan => cmd_plan(env, cfg)?,
        Command::Gt => cmd_gt(env, cfg)?,
        Command::Sweep => unreachable!("sweep is dispatched separately"),
    };
    write_manifest(cmd, env, cfg, &notes)
}

fn out_dir(cfg: &RunConfig) -> Result<&Path, CliError> {
    fs::create_dir_all(&cfg.out).map_err(|e| io_err(&cfg.out, e))?;
    Ok(&cfg.out)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn write_manifest<E: Environment>(
    cmd: Command,
    env: &E,
    cfg: &RunConfig,
    notes: &[String],
) -> Result<(), CliError> {
    let dir = out_dir(cfg)?;
    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut text = format!(
        "command = {}\nenv = {}\nobs_dim = {}\nseed = {}\ntimestamp_unix = {stamp}\n",
        cmd.name(),
        env.name(),
        env.obs_dim(),
        cfg.seed
    );
    for n in notes {
        text.push_str(n);
        text.push('\n');
    }
    write_file(&dir.join(files::MANIFEST), &text)
}

fn dataset_notes(ds: &TrajectoryDataset) -> Vec<String> {
    vec![
        format!("trajectories = {}", ds.trajectories().len()),
        format!("states = {}", ds.num_states()),
        format!("unique_observations = {}", ds.num_unique_observations()),
    ]
}

fn obtain_dataset<E: Environment>(env: &E, cfg: &RunConfig) -> Result<TrajectoryDataset, CliError> {
    let ds = match &cfg.dataset_path {
        Some(p) => {
            let f = fs::File::open(p).map_err(|e| io_err(p, e))?;
            TrajectoryDataset::load(BufReader::new(f)).map_err(|e| io_err(p, e))?
        }
        None => collect(env, cfg.trajectories, cfg.max_len, cfg.seed)?,
    };
    if ds.obs_dim() != env.obs_dim() {
        return Err(CliError::Config(format!(
            "dataset `{}` has observation width {}, env `{}` produces {}",
            ds.env_name(),
            ds.obs_dim(),
            env.name(),
            env.obs_dim()
        )));
    }
    Ok(ds)
}

fn save_dataset(ds: &TrajectoryDataset, path: &Path) -> Result<(), CliError> {
    let f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    ds.save(BufWriter::new(f)).map_err(|e| io_err(path, e))
}

pub fn cmd_collect<E: Environment>(env: &E, cfg: &RunConfig) -> Result<Vec<String>, CliError> {
    let ds = collect(env, cfg.trajectories, cfg.max_len, cfg.seed)?;
    let dir = out_dir(cfg)?;
    save_dataset(&ds, &dir.join(files::DATASET))?;
    eprintln!(
        "collected {} trajectories ({} states) into {}",
        ds.trajectories().len(),
        ds.num_states(),
        dir.display()
    );
    Ok(dataset_notes(&ds))
}

/// Deterministic rng for the evaluation at a given training step.
fn eval_rng(seed: u64, step: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 << 32 | step as u64);
    rng
}

/// Trains on the configured dataset and returns the history and network.
pub fn run_training<E: Environment>(
    env: &E,
    cfg: &RunConfig,
    ds: &TrajectoryDataset,
) -> Result<(Vec<HistoryRow>, Mlp), CliError> {
    let truth = env.ground_truth();
    let qm = cfg.train.quasimetric.clone();
    let pairs = cfg.train_eval_pairs;
    let seed = cfg.seed;
    let mut hook = |step: usize, net: &Mlp| -> Result<MetricsReport, EvalError> {
        let report = evaluate(
            env,
            &LearnedDistance::new(net, &qm),
            &truth,
            pairs,
            &mut eval_rng(seed, step),
        )?;
        eprintln!("step {step}: {report}");
        Ok(report)
    };
    let hook: &mut EvalHook<'_> = &mut hook;
    match train(ds, &cfg.train, cfg.seed, Some(hook)) {
        Ok(state) => Ok((state.history, state.online)),
        Err(TrainError::NonFinite {
            step,
            message,
            dump,
        }) => {
            let path = out_dir(cfg)?.join(files::NONFINITE_DUMP);
            write_file(&path, &dump)?;
            Err(CliError::Numeric(format!(
                "non-finite loss at step {step}: {message}; offending batch written to {}",
                path.display()
            )))
        }
        Err(e) => Err(e.into()),
    }
}

pub fn cmd_train<E: Environment>(env: &E, cfg: &RunConfig) -> Result<Vec<String>, CliError> {
    let ds = obtain_dataset(env, cfg)?;
    let dir = out_dir(cfg)?.to_path_buf();
    if cfg.dataset_path.is_none() {
        save_dataset(&ds, &dir.join(files::DATASET))?;
    }
    let (history, net) = run_training(env, cfg, &ds)?;
    write_file(&dir.join(files::METRICS), &history_csv(&history))?;
    let ckpt = dir.join(files::CHECKPOINT);
    let f = fs::File::create(&ckpt).map_err(|e| io_err(&ckpt, e))?;
    let mut w = BufWriter::new(f);
    write_checkpoint(&net, &mut w).map_err(|e| io_err(&ckpt, e))?;
    w.flush().map_err(|e| io_err(&ckpt, e))?;
    let mut notes = dataset_notes(&ds);
    notes.push(format!("algorithm = {}", cfg.train.objective.name()));
    notes.push(format!("history_rows = {}", history.len()));
    notes.push(format!("parameters = {}", net.num_params()));
    Ok(notes)
}

fn load_network<E: Environment>(env: &E, cfg: &RunConfig) -> Result<Mlp, CliError> {
    let path = cfg.checkpoint.as_ref().ok_or_else(|| {
        CliError::Config("a learned metric needs `checkpoint` (or --checkpoint)".into())
    })?;
    let f = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let net = read_checkpoint(BufReader::new(f)).map_err(|e| io_err(path, e))?;
    if net.input_dim() != env.obs_dim() {
        return Err(CliError::Config(format!(
            "checkpoint expects observation width {}, env `{}` produces {}",
            net.input_dim(),
            env.name(),
            env.obs_dim()
        )));
    }
    Ok(net)
}

fn continuous_note<E: Environment>(env: &E) -> Option<String> {
    (env.name() == "pointmaze").then(|| {
        "eval_states = ground-truth sub-cell centres at rest, pairs uniform over sub-cells"
            .to_string()
    })
}

pub fn cmd_eval<E: Environment>(env: &E, cfg: &RunConfig) -> Result<Vec<String>, CliError> {
    let truth = env.ground_truth();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let net;
    let model: Box<dyn StateDistance<E> + '_> = match cfg.eval_metric {
        Metric::Learned => {
            net = load_network(env, cfg)?;
            Box::new(LearnedDistance::new(&net, &cfg.train.quasimetric))
        }
        _ => Box::new(OracleDistance { truth: &truth }),
    };
    let (records, excluded, sampled) =
        evaluate_pairs(env, model.as_ref(), &truth, cfg.eval_pairs, &mut rng)?;
    let t: Vec<f64> = records.iter().map(|r| r.true_distance).collect();
    let p: Vec<f64> = records.iter().map(|r| r.predicted).collect();
    let report = MetricsReport::from_pairs(&t, &p, excluded, sampled)?;
    let dir = out_dir(cfg)?;
    write_file(
        &dir.join(files::EVAL),
        &format!(
            "env,metric,{}\n{},{},{}\n",
            MetricsReport::CSV_HEADER,
            env.name(),
            cfg.eval_metric.as_str(),
            report.csv_row()
        ),
    )?;
    if cfg.dump_pairs {
        let mut text = String::from("from,to,from_label,to_label,true_distance,predicted\n");
        for r in &records {
            text.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.from,
                r.to,
                env.latent_label(r.from),
                env.latent_label(r.to),
                r.true_distance,
                r.predicted
            ));
        }
        write_file(&dir.join(files::PAIRS), &text)?;
    }
    println!("{report}");
    let mut notes = vec![
        format!("excluded_infinite = {excluded}"),
        format!("sampled = {sampled}"),
    ];
    notes.extend(continuous_note(env));
    Ok(notes)
}

pub fn cmd_plan<E: Environment>(env: &E, cfg: &RunConfig) -> Result<Vec<String>, CliError> {
    let truth = env.ground_truth();
    let net;
    let model: Box<dyn StateDistance<E> + '_> = match cfg.plan_metric {
        Metric::Learned => {
            net = load_network(env, cfg)?;
            Box::new(LearnedDistance::new(&net, &cfg.train.quasimetric))
        }
        Metric::Oracle => Box::new(OracleDistance { truth: &truth }),
        Metric::Zero => Box::new(ConstantDistance(0.0)),
    };
    let summary = run_suite(env, model.as_ref(), &cfg.plan, cfg.episodes, cfg.seed)?;
    let dir = out_dir(cfg)?.to_path_buf();
    write_file(
        &dir.join(files::PLAN),
        &format!(
            "{}\n{}\n",
            mad_core::planner::SuiteSummary::CSV_HEADER,
            summary.csv_row()
        ),
    )?;
    let mut eps = String::from("episode,success,steps\n");
    for (k, e) in summary.episodes.iter().enumerate() {
        eps.push_str(&format!("{k},{},{}\n", e.success, e.steps));
    }
    write_file(&dir.join(files::EPISODES), &eps)?;
    if cfg.traces {
        let tdir = dir.join("traces");
        fs::create_dir_all(&tdir).map_err(|e| io_err(&tdir, e))?;
        for (k, e) in summary.episodes.iter().enumerate() {
            write_file(&tdir.join(format!("episode_{k:03}.csv")), &e.trace_csv())?;
        }
    }
    println!(
        "success rate {:.3} over {} episodes",
        summary.success_rate(),
        summary.episodes.len()
    );
    Ok(vec![format!("success_rate = {}", summary.success_rate())])
}

pub fn cmd_gt<E: Environment>(env: &E, cfg: &RunConfig) -> Result<Vec<String>, CliError> {
    let truth = env.ground_truth();
    let dir = out_dir(cfg)?;
    let path = dir.join(files::GT);
    let f = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
    let mut w = BufWriter::new(f);
    truth.write_csv(&mut w).map_err(|e| io_err(&path, e))?;
    w.flush().map_err(|e| io_err(&path, e))?;
    let mut states = String::from("state_id,label\n");
    for id in 0..env.num_latent() {
        states.push_str(&format!("{id},{}\n", env.latent_label(id)));
    }
    write_file(&dir.join(files::STATES), &states)?;
    Ok(vec![format!("states = {}", env.num_latent())])
}

fn cmd_sweep(raw: &Config, cfg: &RunConfig) -> Result<(), CliError> {
    let dir = out_dir(cfg)?.to_path_buf();
    let mut summary = format!(
        "{},step,L_o,L_r,L_c,spearman,pearson,ratio_cv\n",
        cfg.sweep_key
    );
    for value in &cfg.sweep_values {
        let mut run = raw.clone();
        run.set(&cfg.sweep_key, value)?;
        let sub: PathBuf = dir.join(format!("{}={value}", cfg.sweep_key));
        run.set("out", &sub.display().to_string())?;
        run.set("seed", &cfg.seed.to_string())?;
        let run_cfg = RunConfig::resolve(&run, None, None)?;
        write_resolved(&run_cfg)?;
        eprintln!("sweep {} = {value}", cfg.sweep_key);
        with_env!(&run_cfg, env => run_single(Command::Train, &env, &run_cfg))?;
        let metrics = fs::read_to_string(sub.join(files::METRICS)).map_err(|e| io_err(&sub, e))?;
        let last = metrics.lines().last().unwrap_or_default();
        summary.push_str(&format!("{value},{last}\n"));
    }
    write_file(&dir.join(files::SWEEP), &summary)?;
    with_env!(cfg, env => write_manifest(Command::Sweep, &env, cfg, &[format!("runs = {}", cfg.sweep_values.len())]))
}
