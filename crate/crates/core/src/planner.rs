//! Random-shooting model-predictive control with a distance-to-goal score.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{Environment, DEFAULT_GOAL_TOLERANCE};
use crate::evaluation::{EvalError, StateDistance};

#[derive(Clone, Debug, PartialEq)]
pub struct PlanConfig {
    /// Candidate action sequences per decision (K).
    pub n_candidates: usize,
    /// Length of each candidate sequence (H).
    pub horizon: usize,
    pub max_episode_steps: usize,
    /// Euclidean goal radius; discrete environments ignore it.
    pub goal_tolerance: f64,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            n_candidates: 100,
            horizon: 10,
            max_episode_steps: 200,
            goal_tolerance: DEFAULT_GOAL_TOLERANCE,
        }
    }
}

impl PlanConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_candidates == 0 {
            return Err("planner needs at least one candidate".into());
        }
        if self.horizon == 0 {
            return Err("planner horizon must be at least 1".into());
        }
        if !(self.goal_tolerance >= 0.0) {
            return Err(format!(
                "goal tolerance must be non-negative, got {}",
                self.goal_tolerance
            ));
        }
        Ok(())
    }
}

/// `min_i d(s_{t+i}, g)` over a simulated rollout.
pub fn score_rollout<E, M>(
    env: &E,
    model: &M,
    rollout: &[E::State],
    goal: &E::State,
    rng: &mut dyn RngCore,
) -> Result<f64, EvalError>
where
    E: Environment,
    M: StateDistance<E> + ?Sized,
{
    let mut states = rollout.to_vec();
    states.push(goal.clone());
    let g = rollout.len();
    let pairs: Vec<(usize, usize)> = (0..g).map(|i| (i, g)).collect();
    Ok(min_score(&model.pairwise(env, &states, &pairs, rng)?))
}

fn min_score(d: &[f64]) -> f64 {
    d.iter().copied().fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanChoice<A> {
    pub action: A,
    pub score: f64,
    pub candidate: usize,
    /// Score of every candidate, in sampling order.
    pub scores: Vec<f64>,
}

/// Samples `K` uniform action sequences from the planning action set, rolls
/// each out on a copy of `state` and returns the first action of the best one
/// (lowest score, then lowest candidate index).
pub fn plan_step<E, M>(
    env: &E,
    state: &E::State,
    goal: &E::State,
    model: &M,
    cfg: &PlanConfig,
    rng: &mut dyn RngCore,
) -> Result<PlanChoice<E::Action>, EvalError>
where
    E: Environment,
    M: StateDistance<E> + ?Sized,
{
    let actions = env.planning_actions();
    let (k, h) = (cfg.n_candidates.max(1), cfg.horizon.max(1));
    let mut first = Vec::with_capacity(k);
    let mut states = Vec::with_capacity(k * h + 1);
    for _ in 0..k {
        let mut s = state.clone();
        for step in 0..h {
            let a = actions[rng.random_range(0..actions.len())];
            if step == 0 {
                first.push(a);
            }
            s = env.step(&s, a, rng);
            states.push(s.clone());
        }
    }
    let g = states.len();
    states.push(goal.clone());
    let pairs: Vec<(usize, usize)> = (0..g).map(|i| (i, g)).collect();
    let d = model.pairwise(env, &states, &pairs, rng)?;
    let scores: Vec<f64> = d.chunks_exact(h).map(min_score).collect();
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s < scores[best] {
            best = i;
        }
    }
    Ok(PlanChoice {
        action: first[best],
        score: scores[best],
        candidate: best,
        scores,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub state: String,
    pub action: String,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub success: bool,
    pub steps: usize,
    pub trace: Vec<TraceRow>,
}

impl Episode {
    pub const TRACE_HEADER: &'static str = "step,state,action,score";

    pub fn trace_csv(&self) -> String {
        let mut out = String::from(Self::TRACE_HEADER);
        out.push('\n');
        for r in &self.trace {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.step, r.state, r.action, r.score
            ));
        }
        out
    }
}

/// Receding-horizon control from `start` until the goal is reached or
/// `max_episode_steps` actions have been taken. Planning and the real
/// environment use separate random streams derived from `seed`.
pub fn run_episode<E, M>(
    env: &E,
    start: &E::State,
    goal: &E::State,
    model: &M,
    cfg: &PlanConfig,
    seed: u64,
) -> Result<Episode, EvalError>
where
    E: Environment,
    M: StateDistance<E> + ?Sized,
{
    let mut plan_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut env_rng = ChaCha8Rng::seed_from_u64(seed);
    env_rng.set_stream(1);
    let mut state = start.clone();
    let mut trace = Vec::new();
    if env.reached(&state, goal, cfg.goal_tolerance) {
        return Ok(Episode {
            success: true,
            steps: 0,
            trace,
        });
    }
    for step in 0..cfg.max_episode_steps {
        let choice = plan_step(env, &state, goal, model, cfg, &mut plan_rng)?;
        trace.push(TraceRow {
            step,
            state: env.format_state(&state),
            action: env.format_action(choice.action),
            score: choice.score,
        });
        state = env.step(&state, choice.action, &mut env_rng);
        if env.reached(&state, goal, cfg.goal_tolerance) {
            return Ok(Episode {
                success: true,
                steps: step + 1,
                trace,
            });
        }
    }
    Ok(Episode {
        success: false,
        steps: cfg.max_episode_steps,
        trace,
    })
}

/// Seed of episode `k` in a suite seeded with `seed`.
pub fn episode_seed(seed: u64, k: usize) -> u64 {
    seed ^ (k as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteSummary {
    pub episodes: Vec<Episode>,
}

impl SuiteSummary {
    pub const CSV_HEADER: &'static str = "episodes,successes,success_rate,mean_steps_to_success";

    pub fn successes(&self) -> usize {
        self.episodes.iter().filter(|e| e.success).count()
    }

    pub fn success_rate(&self) -> f64 {
        if self.episodes.is_empty() {
            return 0.0;
        }
        self.successes() as f64 / self.episodes.len() as f64
    }

    /// `NaN` when no episode succeeded.
    pub fn mean_steps_to_success(&self) -> f64 {
        let s = self.successes();
        if s == 0 {
            return f64::NAN;
        }
        self.episodes
            .iter()
            .filter(|e| e.success)
            .map(|e| e.steps as f64)
            .sum::<f64>()
            / s as f64
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{}",
            self.episodes.len(),
            self.successes(),
            self.success_rate(),
            self.mean_steps_to_success()
        )
    }
}

/// Runs `episodes` episodes on tasks drawn from [`Environment::planning_task`].
pub fn run_suite<E, M>(
    env: &E,
    model: &M,
    cfg: &PlanConfig,
    episodes: usize,
    seed: u64,
) -> Result<SuiteSummary, EvalError>
where
    E: Environment,
    M: StateDistance<E> + ?Sized,
{
    let mut task_rng = ChaCha8Rng::seed_from_u64(seed);
    task_rng.set_stream(2);
    let mut out = Vec::with_capacity(episodes);
    for k in 0..episodes {
        let (start, goal) = env.planning_task(&mut task_rng);
        out.push(run_episode(
            env,
            &start,
            &goal,
            model,
            cfg,
            episode_seed(seed, k),
        )?);
    }
    Ok(SuiteSummary { episodes: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{CliffWalking, Move};
    use crate::evaluation::{ConstantDistance, OracleDistance};

    /// Distance given by a per-latent table towards any goal.
    struct Table(Vec<f64>);

    impl StateDistance<CliffWalking> for Table {
        fn pairwise(
            &self,
            env: &CliffWalking,
            states: &[(usize, usize)],
            pairs: &[(usize, usize)],
            _rng: &mut dyn RngCore,
        ) -> Result<Vec<f64>, EvalError> {
            Ok(pairs
                .iter()
                .map(|&(a, _)| self.0[env.latent_id(&states[a])])
                .collect())
        }
    }

    #[test]
    fn score_is_rollout_minimum() {
        let env = CliffWalking::new();
        let mut table = vec![9.0; env.num_latent()];
        let rollout = [(0, 0), (1, 0), (2, 0)];
        for (c, v) in rollout.iter().zip([4.0, 1.5, 3.0]) {
            table[env.id_of(*c).unwrap()] = v;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = score_rollout(
            &env,
            &Table(table.clone()),
            &rollout,
            &CliffWalking::GOAL,
            &mut rng,
        )
        .unwrap();
        assert_eq!(s, 1.5);
        let s = score_rollout(
            &env,
            &Table(table),
            &rollout[..1],
            &CliffWalking::GOAL,
            &mut rng,
        )
        .unwrap();
        assert_eq!(s, 4.0);
    }

    #[test]
    fn goal_in_rollout_scores_zero() {
        let env = CliffWalking::new();
        let gt = env.ground_truth();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let rollout = [(10, 2), CliffWalking::GOAL];
        let s = score_rollout(
            &env,
            &OracleDistance { truth: &gt },
            &rollout,
            &CliffWalking::GOAL,
            &mut rng,
        );
        assert_eq!(s.unwrap(), 0.0);
    }

    #[test]
    fn single_candidate_takes_its_first_action() {
        let env = CliffWalking::new();
        let cfg = PlanConfig {
            n_candidates: 1,
            horizon: 3,
            ..PlanConfig::default()
        };
        let mut a = ChaCha8Rng::seed_from_u64(11);
        let mut b = ChaCha8Rng::seed_from_u64(11);
        let choice = plan_step(
            &env,
            &(0, 0),
            &CliffWalking::GOAL,
            &ConstantDistance(0.0),
            &cfg,
            &mut a,
        )
        .unwrap();
        let expected = Move::ALL[b.random_range(0..4)];
        assert_eq!(choice.action, expected);
        assert_eq!(choice.candidate, 0);
    }

    #[test]
    fn chosen_score_is_minimal() {
        let env = CliffWalking::new();
        let gt = env.ground_truth();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = plan_step(
            &env,
            &(3, 1),
            &CliffWalking::GOAL,
            &OracleDistance { truth: &gt },
            &PlanConfig::default(),
            &mut rng,
        )
        .unwrap();
        assert!(c.scores.iter().all(|&s| c.score <= s));
        assert!(c.scores[..c.candidate].iter().all(|&s| s > c.score));
    }

    #[test]
    fn start_at_goal_succeeds_immediately() {
        let env = CliffWalking::new();
        let ep = run_episode(
            &env,
            &CliffWalking::GOAL,
            &CliffWalking::GOAL,
            &ConstantDistance(0.0),
            &PlanConfig::default(),
            0,
        )
        .unwrap();
        assert!(ep.success);
        assert_eq!(ep.steps, 0);
        assert!(ep.trace.is_empty());
    }

    #[test]
    fn trace_bounded_and_deterministic() {
        let env = CliffWalking::new();
        let cfg = PlanConfig {
            max_episode_steps: 15,
            ..PlanConfig::default()
        };
        let a = run_episode(
            &env,
            &CliffWalking::START,
            &CliffWalking::GOAL,
            &ConstantDistance(0.0),
            &cfg,
            5,
        )
        .unwrap();
        let b = run_episode(
            &env,
            &CliffWalking::START,
            &CliffWalking::GOAL,
            &ConstantDistance(0.0),
            &cfg,
            5,
        )
        .unwrap();
        assert_eq!(a, b);
        assert!(a.trace.len() <= 15);
    }
}
