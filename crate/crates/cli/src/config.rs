//! Flat `key = value` run configuration with dotted section names.
//!
//! ```text
//! # comment
//! seed = 7
//! env.name = cliffwalking
//! [train]
//! steps = 20000        # same as train.steps
//! ```
//!
//! Values are layered: built-in defaults, then `--config` files in order,
//! then `--set` overrides. `auto` defers to an environment-specific default.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use mad_core::diffnet::AdamWConfig;
use mad_core::planner::PlanConfig;
use mad_core::quasimetric::QuasimetricSpec;
use mad_core::training::{Objective, TrainConfig};

use crate::CliError;

/// `(key, default, description)`; an empty default means unset.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("seed", "", "master seed; falls back to MAD_SEED"),
    ("out", "out", "output directory"),
    ("checkpoint", "", "network checkpoint for eval/plan"),
    (
        "env.name",
        "cliffwalking",
        "cliffwalking | keydoor | noisygrid | pointmaze",
    ),
    ("env.sigma", "0.1", "noisygrid observation noise"),
    ("env.layout", "umaze", "pointmaze layout: umaze | medium"),
    (
        "env.resolution",
        "2",
        "pointmaze ground-truth sub-cells per maze cell",
    ),
    (
        "dataset.path",
        "",
        "existing dataset file; empty collects a fresh one",
    ),
    ("dataset.trajectories", "100", "random-policy trajectories"),
    (
        "dataset.max_len",
        "auto",
        "states per trajectory; auto = 200 grids, 500 pointmaze",
    ),
    ("train.algorithm", "maddist", "maddist | tdmaddist"),
    ("train.steps", "50000", "optimizer steps"),
    ("train.w_r", "1", "random-pair term weight"),
    ("train.w_c", "0.1", "constraint term weight"),
    ("train.d_max", "100", "maddist repulsion cap"),
    ("train.h_c", "6", "constraint horizon"),
    ("train.polyak_beta", "0.005", "tdmaddist target update rate"),
    (
        "train.batch_objective",
        "256",
        "objective and random-pair batch",
    ),
    ("train.batch_constraint", "1024", "constraint batch"),
    ("train.learning_rate", "0.0001", "AdamW step size"),
    (
        "train.weight_decay",
        "0.0001",
        "AdamW decoupled weight decay",
    ),
    ("train.hidden", "512,512", "hidden layer widths"),
    ("train.latent_dim", "256", "embedding width"),
    (
        "train.quasimetric",
        "simple(0.5)",
        "max | sum | mean | simple(a) | convex(w*q, ...)",
    ),
    ("train.eval_interval", "1000", "steps between metric rows"),
    (
        "train.eval_pairs",
        "100000",
        "pair budget of each periodic evaluation",
    ),
    (
        "train.grad_clip",
        "none",
        "global gradient-norm clip or none",
    ),
    (
        "eval.pairs",
        "100000",
        "enumerate up to this many pairs, else sample this many",
    ),
    ("eval.metric", "learned", "learned | oracle"),
    ("eval.dump_pairs", "false", "also write pairs.csv"),
    ("plan.episodes", "50", "episodes per suite"),
    (
        "plan.candidates",
        "100",
        "sampled action sequences per step",
    ),
    ("plan.horizon", "10", "actions per sequence"),
    (
        "plan.max_steps",
        "auto",
        "episode step budget; auto = 100 grids, 400 pointmaze",
    ),
    ("plan.goal_tolerance", "0.5", "pointmaze goal radius"),
    ("plan.metric", "learned", "learned | oracle | zero"),
    ("plan.traces", "false", "write one trace CSV per episode"),
    ("sweep.key", "train.latent_dim", "key varied by sweep"),
    ("sweep.values", "2,8,32,256", "comma-separated values"),
];

/// Raw layered key/value map.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

fn known(key: &str) -> bool {
    KEYS.iter().any(|(k, _, _)| *k == key)
}

impl Config {
    pub fn defaults() -> Self {
        let values = KEYS
            .iter()
            .filter(|(_, d, _)| !d.is_empty())
            .map(|(k, d, _)| (k.to_string(), d.to_string()))
            .collect();
        Self { values }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let key = key.trim();
        if !known(key) {
            return Err(CliError::Config(format!("unknown config key `{key}`")));
        }
        self.values
            .insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    /// `KEY=VALUE` as given to `--set`.
    pub fn set_assignment(&mut self, assignment: &str) -> Result<(), CliError> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("expected KEY=VALUE, got `{assignment}`")))?;
        self.set(k, v)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values
            .get(key)
            .map(String::as_str)
            .filter(|v| !v.is_empty())
    }

    /// Applies a config file on top of the current values.
    pub fn merge_text(&mut self, text: &str, origin: &str) -> Result<(), CliError> {
        let mut section = String::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: String| CliError::Config(format!("{origin}:{}: {m}", n + 1));
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let key = if section.is_empty() {
                k.trim().to_string()
            } else {
                format!("{section}.{}", k.trim())
            };
            if !known(&key) {
                return Err(err(format!("unknown config key `{key}`")));
            }
            self.values.insert(key, v.trim().to_string());
        }
        Ok(())
    }

    fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, CliError> {
        let v = self.raw(key);
        v.parse()
            .map_err(|_| CliError::Config(format!("bad value for `{key}`: `{v}`")))
    }

    fn parse_bool(&self, key: &str) -> Result<bool, CliError> {
        match self.raw(key) {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            v => Err(CliError::Config(format!("bad boolean for `{key}`: `{v}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Learned,
    Oracle,
    Zero,
}

impl Metric {
    fn parse(key: &str, v: &str, allow_zero: bool) -> Result<Self, CliError> {
        match v {
            "learned" => Ok(Metric::Learned),
            "oracle" => Ok(Metric::Oracle),
            "zero" if allow_zero => Ok(Metric::Zero),
            _ => Err(CliError::Config(format!("bad value for `{key}`: `{v}`"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Learned => "learned",
            Metric::Oracle => "oracle",
            Metric::Zero => "zero",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvSettings {
    pub name: String,
    pub sigma: f64,
    pub layout: String,
    pub resolution: usize,
}

impl EnvSettings {
    fn is_continuous(&self) -> bool {
        self.name == "pointmaze"
    }
}

/// Fully resolved, typed configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub env: EnvSettings,
    pub dataset_path: Option<PathBuf>,
    pub trajectories: usize,
    pub max_len: usize,
    pub train: TrainConfig,
    pub train_eval_pairs: usize,
    pub eval_pairs: usize,
    pub eval_metric: Metric,
    pub dump_pairs: bool,
    pub episodes: usize,
    pub plan: PlanConfig,
    pub plan_metric: Metric,
    pub traces: bool,
    pub sweep_key: String,
    pub sweep_values: Vec<String>,
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>, CliError> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| CliError::Config(format!("bad list entry for `{key}`: `{s}`")))
        })
        .collect()
}

impl RunConfig {
    /// Resolves `cfg`; `seed_override` wins over the `seed` key, which wins
    /// over `env_seed`.
    pub fn resolve(
        cfg: &Config,
        seed_override: Option<u64>,
        env_seed: Option<&str>,
    ) -> Result<Self, CliError> {
        let seed = match (seed_override, cfg.get("seed"), env_seed) {
            (Some(s), _, _) => s,
            (None, Some(s), _) => s
                .parse()
                .map_err(|_| CliError::Config(format!("bad seed `{s}`")))?,
            (None, None, Some(s)) => s
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("bad MAD_SEED `{s}`")))?,
            (None, None, None) => {
                return Err(CliError::Config(
                    "no seed: pass --seed, set `seed`, or export MAD_SEED".into(),
                ))
            }
        };
        let env = EnvSettings {
            name: cfg.raw("env.name").to_string(),
            sigma: cfg.parse("env.sigma")?,
            layout: cfg.raw("env.layout").to_string(),
            resolution: cfg.parse("env.resolution")?,
        };
        if !mad_core::env::ENV_NAMES.contains(&env.name.as_str()) {
            return Err(CliError::Config(format!(
                "unknown env `{}`; expected one of {}",
                env.name,
                mad_core::env::ENV_NAMES.join(", ")
            )));
        }
        let max_len = match cfg.raw("dataset.max_len") {
            "auto" if env.is_continuous() => mad_core::dataset::DEFAULT_MAZE_MAX_LEN,
            "auto" => mad_core::dataset::DEFAULT_GRID_MAX_LEN,
            _ => cfg.parse("dataset.max_len")?,
        };
        if max_len < 2 {
            return Err(CliError::Config(
                "dataset.max_len must be at least 2".into(),
            ));
        }
        let objective = match cfg.raw("train.algorithm") {
            "maddist" => Objective::MadDist {
                d_max: cfg.parse("train.d_max")?,
            },
            "tdmaddist" => Objective::TdMadDist {
                polyak_beta: cfg.parse("train.polyak_beta")?,
            },
            v => {
                return Err(CliError::Config(format!(
                    "bad value for `train.algorithm`: `{v}`"
                )))
            }
        };
        let quasimetric: QuasimetricSpec = cfg
            .raw("train.quasimetric")
            .parse()
            .map_err(|e| CliError::Config(format!("train.quasimetric: {e}")))?;
        let grad_clip = match cfg.raw("train.grad_clip") {
            "none" | "" => None,
            _ => Some(cfg.parse("train.grad_clip")?),
        };
        let train = TrainConfig {
            objective,
            w_r: cfg.parse("train.w_r")?,
            w_c: cfg.parse("train.w_c")?,
            h_c: cfg.parse("train.h_c")?,
            batch_objective: cfg.parse("train.batch_objective")?,
            batch_constraint: cfg.parse("train.batch_constraint")?,
            steps: cfg.parse("train.steps")?,
            optimizer: AdamWConfig {
                learning_rate: cfg.parse("train.learning_rate")?,
                weight_decay: cfg.parse("train.weight_decay")?,
                ..AdamWConfig::default()
            },
            quasimetric,
            hidden: parse_list("train.hidden", cfg.raw("train.hidden"))?,
            latent_dim: cfg.parse("train.latent_dim")?,
            eval_interval: cfg.parse("train.eval_interval")?,
            grad_clip,
        };
        train
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        let max_steps = match cfg.raw("plan.max_steps") {
            "auto" if env.is_continuous() => 400,
            "auto" => 100,
            _ => cfg.parse("plan.max_steps")?,
        };
        let plan = PlanConfig {
            n_candidates: cfg.parse("plan.candidates")?,
            horizon: cfg.parse("plan.horizon")?,
            max_episode_steps: max_steps,
            goal_tolerance: cfg.parse("plan.goal_tolerance")?,
        };
        plan.validate().map_err(CliError::Config)?;
        Ok(Self {
            seed,
            out: PathBuf::from(cfg.raw("out")),
            checkpoint: cfg.get("checkpoint").map(PathBuf::from),
            dataset_path: cfg.get("dataset.path").map(PathBuf::from),
            trajectories: cfg.parse("dataset.trajectories")?,
            max_len,
            train,
            train_eval_pairs: cfg.parse("train.eval_pairs")?,
            eval_pairs: cfg.parse("eval.pairs")?,
            eval_metric: Metric::parse("eval.metric", cfg.raw("eval.metric"), false)?,
            dump_pairs: cfg.parse_bool("eval.dump_pairs")?,
            episodes: cfg.parse("plan.episodes")?,
            plan,
            plan_metric: Metric::parse("plan.metric", cfg.raw("plan.metric"), true)?,
            traces: cfg.parse_bool("plan.traces")?,
            sweep_key: cfg.raw("sweep.key").to_string(),
            sweep_values: parse_list("sweep.values", cfg.raw("sweep.values"))?,
            env,
        })
    }

    /// Every key with its effective value, `auto` resolved.
    pub fn to_config(&self) -> Config {
        let t = &self.train;
        let path = |p: &Option<PathBuf>| {
            p.as_ref()
                .map_or(String::new(), |p| p.display().to_string())
        };
        let (algorithm, d_max, beta) = match t.objective {
            Objective::MadDist { d_max } => ("maddist", d_max, Objective::DEFAULT_POLYAK_BETA),
            Objective::TdMadDist { polyak_beta } => {
                ("tdmaddist", Objective::DEFAULT_D_MAX, polyak_beta)
            }
        };
        let hidden: Vec<String> = t.hidden.iter().map(|h| h.to_string()).collect();
        let pairs: Vec<(&str, String)> = vec![
            ("seed", self.seed.to_string()),
            ("out", self.out.display().to_string()),
            ("checkpoint", path(&self.checkpoint)),
            ("env.name", self.env.name.clone()),
            ("env.sigma", self.env.sigma.to_string()),
            ("env.layout", self.env.layout.clone()),
            ("env.resolution", self.env.resolution.to_string()),
            ("dataset.path", path(&self.dataset_path)),
            ("dataset.trajectories", self.trajectories.to_string()),
            ("dataset.max_len", self.max_len.to_string()),
            ("train.algorithm", algorithm.to_string()),
            ("train.steps", t.steps.to_string()),
            ("train.w_r", t.w_r.to_string()),
            ("train.w_c", t.w_c.to_string()),
            ("train.d_max", d_max.to_string()),
            ("train.h_c", t.h_c.to_string()),
            ("train.polyak_beta", beta.to_string()),
            ("train.batch_objective", t.batch_objective.to_string()),
            ("train.batch_constraint", t.batch_constraint.to_string()),
            ("train.learning_rate", t.optimizer.learning_rate.to_string()),
            ("train.weight_decay", t.optimizer.weight_decay.to_string()),
            ("train.hidden", hidden.join(",")),
            ("train.latent_dim", t.latent_dim.to_string()),
            ("train.quasimetric", t.quasimetric.to_string()),
            ("train.eval_interval", t.eval_interval.to_string()),
            ("train.eval_pairs", self.train_eval_pairs.to_string()),
            (
                "train.grad_clip",
                t.grad_clip.map_or("none".to_string(), |c| c.to_string()),
            ),
            ("eval.pairs", self.eval_pairs.to_string()),
            ("eval.metric", self.eval_metric.as_str().to_string()),
            ("eval.dump_pairs", self.dump_pairs.to_string()),
            ("plan.episodes", self.episodes.to_string()),
            ("plan.candidates", self.plan.n_candidates.to_string()),
            ("plan.horizon", self.plan.horizon.to_string()),
            ("plan.max_steps", self.plan.max_episode_steps.to_string()),
            ("plan.goal_tolerance", self.plan.goal_tolerance.to_string()),
            ("plan.metric", self.plan_metric.as_str().to_string()),
            ("plan.traces", self.traces.to_string()),
            ("sweep.key", self.sweep_key.clone()),
            ("sweep.values", self.sweep_values.join(",")),
        ];
        Config {
            values: pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        }
    }
}

impl fmt::Display for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.values {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolved(text: &str) -> Result<RunConfig, CliError> {
        let mut c = Config::defaults();
        c.merge_text(text, "test")?;
        RunConfig::resolve(&c, None, None)
    }

    #[test]
    fn sections_and_comments() {
        let r =
            resolved("seed = 3\n[train]\nsteps = 10 # short\n\n[env]\nname = keydoor\n").unwrap();
        assert_eq!(r.seed, 3);
        assert_eq!(r.train.steps, 10);
        assert_eq!(r.env.name, "keydoor");
        assert_eq!(r.max_len, 200);
    }

    #[test]
    fn resolved_round_trip() {
        let r = resolved("seed = 1\nenv.name = pointmaze\ntrain.algorithm = tdmaddist\n").unwrap();
        assert_eq!(r.max_len, 500);
        let text = r.to_config().to_string();
        assert_eq!(resolved(&text).unwrap(), r);
    }

    #[test]
    fn errors_are_config_errors() {
        assert!(matches!(
            resolved("bogus = 1\nseed = 1"),
            Err(CliError::Config(_))
        ));
        assert!(matches!(
            resolved("train.steps = many\nseed = 1"),
            Err(CliError::Config(_))
        ));
        assert!(matches!(
            resolved("train.h_c = 0\nseed = 1"),
            Err(CliError::Config(_))
        ));
        assert!(matches!(resolved(""), Err(CliError::Config(_))));
        assert!(matches!(
            resolved("seed = 1\nenv.name = atari"),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn seed_precedence() {
        let mut c = Config::defaults();
        assert_eq!(RunConfig::resolve(&c, None, Some("5")).unwrap().seed, 5);
        c.set("seed", "6").unwrap();
        assert_eq!(RunConfig::resolve(&c, None, Some("5")).unwrap().seed, 6);
        assert_eq!(RunConfig::resolve(&c, Some(7), Some("5")).unwrap().seed, 7);
    }
}
