//! `MadDist` and `TdMadDist` objectives and the training loop.
//!
//! Each optimizer step draws three batches: objective pairs from within
//! trajectories, random state pairs, and constraint pairs whose index gap is
//! at most `H_c`. Every distinct observation in the step is embedded once
//! and the rows are gathered per role, so discrete environments forward at
//! most one row per state.

use std::fmt::Write as _;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{
    sample_constraint_pairs, sample_objective_pairs, sample_random_state_pairs,
    sample_random_states, DatasetError, PairBatch, StateRef, TrajectoryDataset,
};
use crate::diffnet::{
    clip_global_norm, polyak_update, AdamW, AdamWConfig, DiffError, Graph, Mlp, ParamVars, Tensor,
    Var, DEFAULT_HIDDEN, DEFAULT_LATENT_DIM,
};
use crate::evaluation::{EvalError, MetricsReport};
use crate::quasimetric::QuasimetricSpec;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("invalid batch: {0}")]
    Input(String),
    #[error("non-finite loss at step {step}: {message}")]
    NonFinite {
        step: usize,
        message: String,
        dump: String,
    },
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Objective {
    /// Direct regression onto trajectory gaps, hinge repulsion up to `d_max`.
    MadDist { d_max: f64 },
    /// Bootstrapped targets through a Polyak-averaged target network.
    TdMadDist { polyak_beta: f64 },
}

impl Objective {
    pub const DEFAULT_D_MAX: f64 = 100.0;
    pub const DEFAULT_POLYAK_BETA: f64 = 0.005;

    pub fn name(&self) -> &'static str {
        match self {
            Objective::MadDist { .. } => "maddist",
            Objective::TdMadDist { .. } => "tdmaddist",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub objective: Objective,
    pub w_r: f64,
    pub w_c: f64,
    pub h_c: usize,
    /// Batch size shared by the objective and random-pair terms.
    pub batch_objective: usize,
    pub batch_constraint: usize,
    pub steps: usize,
    pub optimizer: AdamWConfig,
    pub quasimetric: QuasimetricSpec,
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    /// Steps between history rows; 0 keeps only the first and last.
    pub eval_interval: usize,
    /// Global-norm gradient clip.
    pub grad_clip: Option<f64>,
}

impl TrainConfig {
    pub fn maddist() -> Self {
        Self {
            objective: Objective::MadDist {
                d_max: Objective::DEFAULT_D_MAX,
            },
            w_r: 1.0,
            w_c: 0.1,
            h_c: 6,
            batch_objective: 256,
            batch_constraint: 1024,
            steps: 50_000,
            optimizer: AdamWConfig::default(),
            quasimetric: QuasimetricSpec::default(),
            hidden: DEFAULT_HIDDEN.to_vec(),
            latent_dim: DEFAULT_LATENT_DIM,
            eval_interval: 1000,
            grad_clip: None,
        }
    }

    pub fn tdmaddist() -> Self {
        Self {
            objective: Objective::TdMadDist {
                polyak_beta: Objective::DEFAULT_POLYAK_BETA,
            },
            ..Self::maddist()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if !(self.w_r > 0.0 && self.w_r.is_finite()) {
            return bad(format!("w_r must be positive, got {}", self.w_r));
        }
        if !(self.w_c > 0.0 && self.w_c.is_finite()) {
            return bad(format!("w_c must be positive, got {}", self.w_c));
        }
        if self.h_c == 0 {
            return bad("h_c must be at least 1".into());
        }
        if self.batch_objective == 0 || self.batch_constraint == 0 {
            return bad("batch sizes must be positive".into());
        }
        if self.latent_dim == 0 || self.hidden.iter().any(|&h| h == 0) {
            return bad("layer widths must be positive".into());
        }
        match self.objective {
            Objective::MadDist { d_max } if !(d_max > 0.0 && d_max.is_finite()) => {
                return bad(format!("d_max must be positive, got {d_max}"));
            }
            Objective::TdMadDist { polyak_beta } if !(polyak_beta > 0.0 && polyak_beta <= 1.0) => {
                return bad(format!("polyak_beta must lie in (0, 1], got {polyak_beta}"));
            }
            _ => {}
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0 && c.is_finite()) {
                return bad(format!("grad_clip must be positive, got {c}"));
            }
        }
        let opt = &self.optimizer;
        if !(opt.learning_rate > 0.0 && opt.learning_rate.is_finite()) {
            return bad(format!(
                "learning rate must be positive, got {}",
                opt.learning_rate
            ));
        }
        self.quasimetric
            .validate()
            .map_err(|e| TrainError::Config(e.to_string()))?;
        Ok(())
    }
}

/// Loss values of one step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossComponents {
    pub objective: f64,
    pub random: f64,
    pub constraint: f64,
    pub total: f64,
}

/// How the random-pair term turns distances into a loss.
#[derive(Clone, Debug, PartialEq)]
pub enum RandomTerm {
    /// `relu(1 − d/d_max)²`
    Hinge { d_max: f64 },
    /// `(d/target − 1)²` with fixed per-pair targets.
    Bootstrap { targets: Vec<f64> },
}

/// Recorded composite loss over precomputed distance nodes.
#[derive(Clone, Copy, Debug)]
pub struct LossNodes {
    pub objective: Var,
    pub random: Var,
    pub constraint: Var,
    pub total: Var,
}

impl LossNodes {
    pub fn values(&self, graph: &Graph) -> Result<LossComponents, DiffError> {
        let get = |v: Var| -> Result<f64, DiffError> {
            graph
                .value(v)?
                .item()
                .ok_or_else(|| DiffError::Shape("loss is not scalar".into()))
        };
        Ok(LossComponents {
            objective: get(self.objective)?,
            random: get(self.random)?,
            constraint: get(self.constraint)?,
            total: get(self.total)?,
        })
    }
}

/// `mean((d_o/den − 1)²) + w_r·L_r + w_c·mean(relu(d_c − gap)²)`.
#[allow(clippy::too_many_arguments)]
pub fn composite_loss(
    graph: &mut Graph,
    d_objective: Var,
    denominators: &[f64],
    d_random: Var,
    random: &RandomTerm,
    d_constraint: Var,
    constraint_gaps: &[f64],
    w_r: f64,
    w_c: f64,
) -> Result<LossNodes, TrainError> {
    if let Some(d) = denominators.iter().find(|&&d| !(d > 0.0)) {
        return Err(TrainError::Input(format!(
            "objective denominator {d} must be positive"
        )));
    }
    let inv: Vec<f64> = denominators.iter().map(|d| 1.0 / d).collect();
    let ratio = graph.mul_const(d_objective, &inv)?;
    let err = graph.offset_scalar(ratio, -1.0)?;
    let sq = graph.square(err)?;
    let l_o = graph.mean(sq)?;

    let l_r = match random {
        RandomTerm::Hinge { d_max } => {
            let scaled = graph.scale(d_random, -1.0 / d_max)?;
            let gap = graph.offset_scalar(scaled, 1.0)?;
            let hinge = graph.relu(gap)?;
            let sq = graph.square(hinge)?;
            graph.mean(sq)?
        }
        RandomTerm::Bootstrap { targets } => {
            if let Some(t) = targets.iter().find(|&&t| !(t > 0.0)) {
                return Err(TrainError::Input(format!(
                    "bootstrap target {t} must be positive"
                )));
            }
            let inv: Vec<f64> = targets.iter().map(|t| 1.0 / t).collect();
            let ratio = graph.mul_const(d_random, &inv)?;
            let err = graph.offset_scalar(ratio, -1.0)?;
            let sq = graph.square(err)?;
            graph.mean(sq)?
        }
    };

    let neg: Vec<f64> = constraint_gaps.iter().map(|g| -g).collect();
    let excess = graph.offset(d_constraint, &neg)?;
    let hinge = graph.relu(excess)?;
    let sq = graph.square(hinge)?;
    let l_c = graph.mean(sq)?;

    let wr = graph.scale(l_r, w_r)?;
    let wc = graph.scale(l_c, w_c)?;
    let partial = graph.add(l_o, wr)?;
    let total = graph.add(partial, wc)?;
    Ok(LossNodes {
        objective: l_o,
        random: l_r,
        constraint: l_c,
        total,
    })
}

/// The three batches of one optimizer step. For the bootstrapped objective
/// the random batch reuses the objective anchors.
#[derive(Clone, Debug, PartialEq)]
pub struct StepBatches {
    pub objective: PairBatch,
    pub random: PairBatch,
    pub constraint: PairBatch,
}

pub fn sample_step_batches(
    ds: &TrajectoryDataset,
    cfg: &TrainConfig,
    rng: &mut dyn RngCore,
) -> Result<StepBatches, TrainError> {
    let objective = sample_objective_pairs(ds, cfg.batch_objective, rng)?;
    let random = match cfg.objective {
        Objective::MadDist { .. } => sample_random_state_pairs(ds, cfg.batch_objective, rng)?,
        Objective::TdMadDist { .. } => PairBatch {
            anchors: objective.anchors.clone(),
            partners: sample_random_states(ds, cfg.batch_objective, rng)?,
            gaps: None,
        },
    };
    let constraint = sample_constraint_pairs(ds, cfg.h_c, cfg.batch_constraint, rng)?;
    Ok(StepBatches {
        objective,
        random,
        constraint,
    })
}

fn gaps_of(batch: &PairBatch, what: &str) -> Result<Vec<f64>, TrainError> {
    let gaps = batch
        .gaps
        .as_ref()
        .ok_or_else(|| TrainError::Input(format!("{what} batch carries no gaps")))?;
    if gaps.len() != batch.len() {
        return Err(TrainError::Input(format!(
            "{what} batch has {} gaps for {} pairs",
            gaps.len(),
            batch.len()
        )));
    }
    if gaps.contains(&0) {
        return Err(TrainError::Input(format!(
            "{what} batch contains a zero gap"
        )));
    }
    Ok(gaps.iter().map(|&g| g as f64).collect())
}

/// Observation ids needed by a step, deduplicated, and the row of each id.
struct RowIndex {
    ids: Vec<u32>,
}

impl RowIndex {
    fn new(mut ids: Vec<u32>) -> Self {
        ids.sort_unstable();
        ids.dedup();
        Self { ids }
    }

    fn row(&self, id: u32) -> usize {
        self.ids.binary_search(&id).expect("id registered")
    }

    fn rows(&self, ds: &TrajectoryDataset, refs: &[StateRef]) -> Vec<usize> {
        refs.iter().map(|&r| self.row(ds.obs_id(r))).collect()
    }

    fn input(&self, ds: &TrajectoryDataset) -> Result<Tensor, DiffError> {
        let mut data = Vec::with_capacity(self.ids.len() * ds.obs_dim());
        for &id in &self.ids {
            data.extend_from_slice(ds.observation_by_id(id));
        }
        Tensor::new(vec![self.ids.len(), ds.obs_dim()], data)
    }
}

fn refs_of(batch: &PairBatch) -> impl Iterator<Item = &StateRef> {
    batch.anchors.iter().chain(&batch.partners)
}

/// Records the online embedding of every observation in `refs`.
fn embed_online(
    graph: &mut Graph,
    net: &Mlp,
    ds: &TrajectoryDataset,
    index: &RowIndex,
) -> Result<(Var, ParamVars), DiffError> {
    let x = graph.constant(index.input(ds)?)?;
    net.record(graph, x)
}

fn recorded_distance(
    graph: &mut Graph,
    qm: &QuasimetricSpec,
    emb: Var,
    index: &RowIndex,
    ds: &TrajectoryDataset,
    batch: &PairBatch,
) -> Result<Var, DiffError> {
    let a = graph.gather_rows(emb, &index.rows(ds, &batch.anchors))?;
    let b = graph.gather_rows(emb, &index.rows(ds, &batch.partners))?;
    qm.record(graph, a, b)
}

/// Records the `MadDist` loss on a fresh graph.
pub fn loss_maddist(
    graph: &mut Graph,
    net: &Mlp,
    ds: &TrajectoryDataset,
    batches: &StepBatches,
    cfg: &TrainConfig,
) -> Result<(LossNodes, ParamVars), TrainError> {
    let Objective::MadDist { d_max } = cfg.objective else {
        return Err(TrainError::Config(
            "loss_maddist needs the maddist objective".into(),
        ));
    };
    let obj_gaps = gaps_of(&batches.objective, "objective")?;
    let con_gaps = gaps_of(&batches.constraint, "constraint")?;
    let ids = refs_of(&batches.objective)
        .chain(refs_of(&batches.random))
        .chain(refs_of(&batches.constraint))
        .map(|&r| ds.obs_id(r))
        .collect();
    let index = RowIndex::new(ids);
    let (emb, params) = embed_online(graph, net, ds, &index)?;
    let qm = &cfg.quasimetric;
    let d_o = recorded_distance(graph, qm, emb, &index, ds, &batches.objective)?;
    let d_r = recorded_distance(graph, qm, emb, &index, ds, &batches.random)?;
    let d_c = recorded_distance(graph, qm, emb, &index, ds, &batches.constraint)?;
    let nodes = composite_loss(
        graph,
        d_o,
        &obj_gaps,
        d_r,
        &RandomTerm::Hinge { d_max },
        d_c,
        &con_gaps,
        cfg.w_r,
        cfg.w_c,
    )?;
    Ok((nodes, params))
}

fn successors(ds: &TrajectoryDataset, anchors: &[StateRef]) -> Result<Vec<StateRef>, TrainError> {
    anchors
        .iter()
        .map(|&a| {
            let len = ds.trajectories().get(a.trajectory).map_or(0, |t| t.len());
            if a.index + 1 < len {
                Ok(a.successor())
            } else {
                Err(TrainError::Input(format!(
                    "anchor {}:{} has no successor in its trajectory",
                    a.trajectory, a.index
                )))
            }
        })
        .collect()
}

/// Target-network distances `d_θ′(from_i, to_i)`, outside the graph.
fn target_distances(
    target: &Mlp,
    qm: &QuasimetricSpec,
    ds: &TrajectoryDataset,
    from: &[StateRef],
    to: &[StateRef],
) -> Result<Vec<f64>, TrainError> {
    let index = RowIndex::new(from.iter().chain(to).map(|&r| ds.obs_id(r)).collect());
    let emb = target.forward(&index.input(ds)?)?;
    from.iter()
        .zip(to)
        .map(|(&a, &b)| {
            let (ra, rb) = (index.row(ds.obs_id(a)), index.row(ds.obs_id(b)));
            qm.distance(emb.row(ra), emb.row(rb))
                .map_err(|e| TrainError::Input(e.to_string()))
        })
        .collect()
}

/// Records the `TdMadDist` loss. Targets come from `target` without
/// entering the graph.
pub fn loss_tdmaddist(
    graph: &mut Graph,
    net: &Mlp,
    target: &Mlp,
    ds: &TrajectoryDataset,
    batches: &StepBatches,
    cfg: &TrainConfig,
) -> Result<(LossNodes, ParamVars), TrainError> {
    let obj_gaps = gaps_of(&batches.objective, "objective")?;
    let con_gaps = gaps_of(&batches.constraint, "constraint")?;
    let qm = &cfg.quasimetric;

    let next_o = successors(ds, &batches.objective.anchors)?;
    let boot_o = target_distances(target, qm, ds, &next_o, &batches.objective.partners)?;
    let denominators: Vec<f64> = obj_gaps
        .iter()
        .zip(&boot_o)
        .map(|(g, d)| g.min(1.0 + d))
        .collect();
    let next_r = successors(ds, &batches.random.anchors)?;
    let boot_r = target_distances(target, qm, ds, &next_r, &batches.random.partners)?;
    let targets: Vec<f64> = boot_r.iter().map(|d| 1.0 + d).collect();

    let ids = refs_of(&batches.objective)
        .chain(refs_of(&batches.random))
        .chain(refs_of(&batches.constraint))
        .map(|&r| ds.obs_id(r))
        .collect();
    let index = RowIndex::new(ids);
    let (emb, params) = embed_online(graph, net, ds, &index)?;
    let d_o = recorded_distance(graph, qm, emb, &index, ds, &batches.objective)?;
    let d_r = recorded_distance(graph, qm, emb, &index, ds, &batches.random)?;
    let d_c = recorded_distance(graph, qm, emb, &index, ds, &batches.constraint)?;
    let nodes = composite_loss(
        graph,
        d_o,
        &denominators,
        d_r,
        &RandomTerm::Bootstrap { targets },
        d_c,
        &con_gaps,
        cfg.w_r,
        cfg.w_c,
    )?;
    Ok((nodes, params))
}

/// One history row: losses of the batch drawn at `step` (before that step's
/// update) and, when an evaluation hook is present, its metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct HistoryRow {
    pub step: usize,
    pub losses: LossComponents,
    pub metrics: Option<MetricsReport>,
}

impl HistoryRow {
    pub const CSV_HEADER: &'static str = "step,L_o,L_r,L_c,spearman,pearson,ratio_cv";

    pub fn csv_row(&self) -> String {
        let (s, p, c) = match &self.metrics {
            Some(m) => (
                m.spearman.to_string(),
                m.pearson.to_string(),
                m.ratio_cv.to_string(),
            ),
            None => (String::new(), String::new(), String::new()),
        };
        format!(
            "{},{},{},{},{s},{p},{c}",
            self.step, self.losses.objective, self.losses.random, self.losses.constraint
        )
    }
}

pub fn history_csv(history: &[HistoryRow]) -> String {
    let mut out = String::from(HistoryRow::CSV_HEADER);
    out.push('\n');
    for row in history {
        out.push_str(&row.csv_row());
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug)]
pub struct TrainState {
    pub online: Mlp,
    /// Present for the bootstrapped objective only.
    pub target: Option<Mlp>,
    pub optimizer: AdamW,
    pub step: usize,
    pub history: Vec<HistoryRow>,
}

impl TrainState {
    /// Fresh network with LeCun-uniform weights drawn from `seed`.
    pub fn new(obs_dim: usize, cfg: &TrainConfig, seed: u64) -> Result<Self, TrainError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let online = Mlp::new(obs_dim, &cfg.hidden, cfg.latent_dim, &mut rng)?;
        let target = matches!(cfg.objective, Objective::TdMadDist { .. }).then(|| online.clone());
        Ok(Self {
            online,
            target,
            optimizer: AdamW::new(cfg.optimizer),
            step: 0,
            history: Vec::new(),
        })
    }
}

/// Called at every history row with the step and the online network.
pub type EvalHook<'a> = dyn FnMut(usize, &Mlp) -> Result<MetricsReport, EvalError> + 'a;

fn dump_batches(ds: &TrajectoryDataset, b: &StepBatches) -> String {
    let mut out = String::new();
    for (name, batch) in [
        ("objective", &b.objective),
        ("random", &b.random),
        ("constraint", &b.constraint),
    ] {
        let _ = writeln!(
            out,
            "[{name}] trajectory:index -> trajectory:index gap | anchor obs | partner obs"
        );
        for (k, (a, p)) in batch.anchors.iter().zip(&batch.partners).enumerate() {
            let gap = batch
                .gaps
                .as_ref()
                .map_or("-".to_string(), |g| g[k].to_string());
            let _ = writeln!(
                out,
                "{}:{} -> {}:{} {gap} | {:?} | {:?}",
                a.trajectory,
                a.index,
                p.trajectory,
                p.index,
                ds.observation(*a),
                ds.observation(*p)
            );
        }
    }
    out
}

fn record_step(
    state: &TrainState,
    ds: &TrajectoryDataset,
    batches: &StepBatches,
    cfg: &TrainConfig,
) -> Result<(LossComponents, Vec<Tensor>), TrainError> {
    let mut graph = Graph::new();
    let (nodes, params) = match &state.target {
        None => loss_maddist(&mut graph, &state.online, ds, batches, cfg)?,
        Some(t) => loss_tdmaddist(&mut graph, &state.online, t, ds, batches, cfg)?,
    };
    let losses = nodes.values(&graph)?;
    let grads = graph.backward(nodes.total)?;
    Ok((losses, params.collect(&grads)))
}

/// Trains for `cfg.steps` optimizer steps, starting from `state` (so runs
/// can be resumed). History rows are recorded at step 0, every
/// `eval_interval` steps and at the final step. Sampling is a pure function
/// of `seed`.
pub fn train_from(
    mut state: TrainState,
    ds: &TrajectoryDataset,
    cfg: &TrainConfig,
    seed: u64,
    mut eval_hook: Option<&mut EvalHook<'_>>,
) -> Result<TrainState, TrainError> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(TrainError::Input("dataset is empty".into()));
    }
    if ds.obs_dim() != state.online.input_dim() {
        return Err(TrainError::Input(format!(
            "dataset observations have width {}, network expects {}",
            ds.obs_dim(),
            state.online.input_dim()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let first = state.step;
    let last = first + cfg.steps;
    loop {
        let step = state.step;
        let batches = sample_step_batches(ds, cfg, &mut rng)?;
        let (losses, mut grads) = match record_step(&state, ds, &batches, cfg) {
            Ok(r) => r,
            Err(TrainError::Diff(DiffError::NonFinite(message))) => {
                return Err(TrainError::NonFinite {
                    step,
                    message,
                    dump: dump_batches(ds, &batches),
                });
            }
            Err(e) => return Err(e),
        };
        if !losses.total.is_finite() {
            return Err(TrainError::NonFinite {
                step,
                message: format!("loss {losses:?}"),
                dump: dump_batches(ds, &batches),
            });
        }
        let due = step == first
            || step == last
            || (cfg.eval_interval > 0 && step % cfg.eval_interval == 0);
        if due {
            let metrics = match eval_hook.as_mut() {
                Some(hook) => Some(hook(step, &state.online)?),
                None => None,
            };
            state.history.push(HistoryRow {
                step,
                losses,
                metrics,
            });
        }
        if step == last {
            break;
        }
        if let Some(max) = cfg.grad_clip {
            clip_global_norm(&mut grads, max);
        }
        state
            .optimizer
            .step(&mut state.online.params_mut(), &grads)?;
        if let (Some(target), Objective::TdMadDist { polyak_beta }) =
            (state.target.as_mut(), cfg.objective)
        {
            polyak_update(target, &state.online, polyak_beta)?;
        }
        state.step += 1;
    }
    Ok(state)
}

/// Fresh training run: initialises from `seed` and calls [`train_from`].
pub fn train(
    ds: &TrajectoryDataset,
    cfg: &TrainConfig,
    seed: u64,
    eval_hook: Option<&mut EvalHook<'_>>,
) -> Result<TrainState, TrainError> {
    let state = TrainState::new(ds.obs_dim(), cfg, seed)?;
    train_from(state, ds, cfg, seed, eval_hook)
}
