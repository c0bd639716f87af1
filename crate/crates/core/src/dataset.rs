//! Random-policy trajectory datasets and the pair samplers behind the three
//! loss terms.
//!
//! Observations are interned: identical observation vectors share one row of
//! [`TrajectoryDataset::observation_table`], so discrete environments end up
//! with a table no larger than their state space. Latent state ids are kept
//! next to each step for evaluation only; the samplers hand out
//! [`StateRef`]s and training reads observations through them.
//!
//! # File format
//!
//! Line-oriented text:
//!
//! ```text
//! MADDATA 1
//! env cliffwalking
//! obs_dim 2
//! seed 7
//! trajectories 2
//! trajectory 3
//! <latent id> <obs_0> ... <obs_{d-1}>      one line per step
//! ...
//! end
//! ```
//!
//! Floats use Rust's shortest round-trip formatting, so a save/load cycle is
//! bit-exact.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::Environment;

const FORMAT_HEADER: &str = "MADDATA 1";

/// Default trajectory length for the grid worlds.
pub const DEFAULT_GRID_MAX_LEN: usize = 200;
/// Default trajectory length for the point maze.
pub const DEFAULT_MAZE_MAX_LEN: usize = 500;
/// Default number of trajectories.
pub const DEFAULT_TRAJECTORIES: usize = 100;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Position of a state inside a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StateRef {
    pub trajectory: usize,
    pub index: usize,
}

impl StateRef {
    pub fn successor(self) -> StateRef {
        StateRef {
            trajectory: self.trajectory,
            index: self.index + 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trajectory {
    obs: Vec<u32>,
    latent: Vec<usize>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    /// Interned observation ids, one per step.
    pub fn observation_ids(&self) -> &[u32] {
        &self.obs
    }

    pub fn latent_ids(&self) -> &[usize] {
        &self.latent
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryDataset {
    env: String,
    obs_dim: usize,
    seed: u64,
    table: Vec<f64>,
    trajectories: Vec<Trajectory>,
    pool: Vec<StateRef>,
}

/// Accumulates trajectories and interns their observations.
#[derive(Debug)]
pub struct DatasetBuilder {
    env: String,
    obs_dim: usize,
    seed: u64,
    table: Vec<f64>,
    index: HashMap<Vec<u64>, u32>,
    trajectories: Vec<Trajectory>,
}

impl DatasetBuilder {
    pub fn new(env: &str, obs_dim: usize, seed: u64) -> Self {
        Self {
            env: env.to_string(),
            obs_dim,
            seed,
            table: Vec::new(),
            index: HashMap::new(),
            trajectories: Vec::new(),
        }
    }

    fn intern(&mut self, obs: &[f64]) -> u32 {
        let key: Vec<u64> = obs.iter().map(|v| v.to_bits()).collect();
        if let Some(&id) = self.index.get(&key) {
            return id;
        }
        let id = (self.table.len() / self.obs_dim.max(1)) as u32;
        self.table.extend_from_slice(obs);
        self.index.insert(key, id);
        id
    }

    /// Appends one trajectory of `(latent id, observation)` steps.
    pub fn push<'a, I>(&mut self, steps: I) -> Result<(), DatasetError>
    where
        I: IntoIterator<Item = (usize, &'a [f64])>,
    {
        let mut traj = Trajectory {
            obs: Vec::new(),
            latent: Vec::new(),
        };
        for (latent, obs) in steps {
            if obs.len() != self.obs_dim {
                return Err(DatasetError::Invalid(format!(
                    "observation of width {} in a dataset of width {}",
                    obs.len(),
                    self.obs_dim
                )));
            }
            if let Some(v) = obs.iter().find(|v| !v.is_finite()) {
                return Err(DatasetError::Invalid(format!(
                    "non-finite observation value {v}"
                )));
            }
            traj.obs.push(self.intern(obs));
            traj.latent.push(latent);
        }
        if traj.len() < 2 {
            return Err(DatasetError::Invalid(format!(
                "trajectory {} has {} states, need at least 2",
                self.trajectories.len(),
                traj.len()
            )));
        }
        self.trajectories.push(traj);
        Ok(())
    }

    pub fn finish(self) -> TrajectoryDataset {
        let pool = self
            .trajectories
            .iter()
            .enumerate()
            .flat_map(|(t, traj)| {
                (0..traj.len()).map(move |index| StateRef {
                    trajectory: t,
                    index,
                })
            })
            .collect();
        TrajectoryDataset {
            env: self.env,
            obs_dim: self.obs_dim,
            seed: self.seed,
            table: self.table,
            trajectories: self.trajectories,
            pool,
        }
    }
}

impl TrajectoryDataset {
    pub fn env_name(&self) -> &str {
        &self.env
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn num_states(&self) -> usize {
        self.pool.len()
    }

    /// Every `(trajectory, index)` position; the random-pair sampler draws
    /// uniformly from it.
    pub fn state_pool(&self) -> &[StateRef] {
        &self.pool
    }

    /// Interned observations, row-major `[num_unique × obs_dim]`.
    pub fn observation_table(&self) -> &[f64] {
        &self.table
    }

    pub fn num_unique_observations(&self) -> usize {
        self.table.len() / self.obs_dim.max(1)
    }

    pub fn obs_id(&self, r: StateRef) -> u32 {
        self.trajectories[r.trajectory].obs[r.index]
    }

    pub fn observation(&self, r: StateRef) -> &[f64] {
        self.observation_by_id(self.obs_id(r))
    }

    pub fn observation_by_id(&self, id: u32) -> &[f64] {
        let d = self.obs_dim;
        &self.table[id as usize * d..(id as usize + 1) * d]
    }

    pub fn latent(&self, r: StateRef) -> usize {
        self.trajectories[r.trajectory].latent[r.index]
    }

    /// Writes the text format described in the module docs.
    pub fn save<W: Write>(&self, mut w: W) -> Result<(), DatasetError> {
        writeln!(w, "{FORMAT_HEADER}")?;
        writeln!(w, "env {}", self.env)?;
        writeln!(w, "obs_dim {}", self.obs_dim)?;
        writeln!(w, "seed {}", self.seed)?;
        writeln!(w, "trajectories {}", self.trajectories.len())?;
        let mut line = String::new();
        for traj in &self.trajectories {
            writeln!(w, "trajectory {}", traj.len())?;
            for (&o, &l) in traj.obs.iter().zip(&traj.latent) {
                line.clear();
                line.push_str(&l.to_string());
                for v in self.observation_by_id(o) {
                    line.push(' ');
                    line.push_str(&v.to_string());
                }
                writeln!(w, "{line}")?;
            }
        }
        writeln!(w, "end")?;
        w.flush()?;
        Ok(())
    }

    pub fn load<R: BufRead>(r: R) -> Result<Self, DatasetError> {
        let mut lines = r.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut last_line = 0;
        let mut next = |what: &str| -> Result<(usize, String), DatasetError> {
            match lines.next() {
                Some((n, l)) => {
                    last_line = n;
                    Ok((n, l?))
                }
                None => Err(DatasetError::Parse {
                    line: last_line + 1,
                    message: format!("unexpected end of file, expected {what}"),
                }),
            }
        };
        fn field<T: std::str::FromStr>(n: usize, line: &str, key: &str) -> Result<T, DatasetError> {
            let value = line
                .strip_prefix(key)
                .and_then(|r| r.strip_prefix(' '))
                .ok_or_else(|| DatasetError::Parse {
                    line: n,
                    message: format!("expected `{key} <value>`, got `{line}`"),
                })?;
            value.trim().parse().map_err(|_| DatasetError::Parse {
                line: n,
                message: format!("bad value for `{key}`: `{value}`"),
            })
        }

        let (n, header) = next("header")?;
        if header.trim_end() != FORMAT_HEADER {
            return Err(DatasetError::Parse {
                line: n,
                message: format!("expected `{FORMAT_HEADER}`"),
            });
        }
        let (n, l) = next("env")?;
        let env: String = field(n, &l, "env")?;
        let (n, l) = next("obs_dim")?;
        let obs_dim: usize = field(n, &l, "obs_dim")?;
        if obs_dim == 0 {
            return Err(DatasetError::Parse {
                line: n,
                message: "obs_dim must be positive".into(),
            });
        }
        let (n, l) = next("seed")?;
        let seed: u64 = field(n, &l, "seed")?;
        let (n, l) = next("trajectories")?;
        let count: usize = field(n, &l, "trajectories")?;

        let mut builder = DatasetBuilder::new(&env, obs_dim, seed);
        let mut values = Vec::with_capacity(obs_dim);
        for _ in 0..count {
            let (n, l) = next("trajectory")?;
            let len: usize = field(n, &l, "trajectory")?;
            let mut steps: Vec<(usize, Vec<f64>)> = Vec::with_capacity(len);
            for _ in 0..len {
                let (n, l) = next("a step record")?;
                let mut parts = l.split_ascii_whitespace();
                let latent: usize = parts.next().and_then(|p| p.parse().ok()).ok_or_else(|| {
                    DatasetError::Parse {
                        line: n,
                        message: "bad latent id".into(),
                    }
                })?;
                values.clear();
                for p in parts {
                    let v: f64 = p.parse().map_err(|_| DatasetError::Parse {
                        line: n,
                        message: format!("bad observation value `{p}`"),
                    })?;
                    values.push(v);
                }
                if values.len() != obs_dim {
                    return Err(DatasetError::Parse {
                        line: n,
                        message: format!(
                            "expected {obs_dim} observation values, got {}",
                            values.len()
                        ),
                    });
                }
                steps.push((latent, values.clone()));
            }
            builder
                .push(steps.iter().map(|(l, o)| (*l, o.as_slice())))
                .map_err(|e| DatasetError::Parse {
                    line: n,
                    message: e.to_string(),
                })?;
        }
        let (n, l) = next("end")?;
        if l.trim_end() != "end" {
            return Err(DatasetError::Parse {
                line: n,
                message: format!("expected `end`, got `{l}`"),
            });
        }
        Ok(builder.finish())
    }
}

/// Per-trajectory random stream: one ChaCha stream per trajectory index.
pub fn trajectory_rng(seed: u64, trajectory: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trajectory as u64);
    rng
}

/// Rolls out the uniform random policy for `n_trajectories` episodes of
/// exactly `max_len` states each.
pub fn collect<E: Environment>(
    env: &E,
    n_trajectories: usize,
    max_len: usize,
    seed: u64,
) -> Result<TrajectoryDataset, DatasetError> {
    if max_len < 2 {
        return Err(DatasetError::Invalid(format!(
            "max_len must be at least 2, got {max_len}"
        )));
    }
    let mut builder = DatasetBuilder::new(env.name(), env.obs_dim(), seed);
    let mut steps: Vec<(usize, Vec<f64>)> = Vec::with_capacity(max_len);
    for t in 0..n_trajectories {
        let mut rng = trajectory_rng(seed, t);
        steps.clear();
        let mut state = env.initial_state(&mut rng);
        steps.push((env.latent_id(&state), env.observe(&state, &mut rng)));
        for _ in 1..max_len {
            let action = env.random_action(&mut rng);
            state = env.step(&state, action, &mut rng);
            steps.push((env.latent_id(&state), env.observe(&state, &mut rng)));
        }
        builder.push(steps.iter().map(|(l, o)| (*l, o.as_slice())))?;
    }
    Ok(builder.finish())
}

/// Pairs drawn from a dataset. `gaps` is present for same-trajectory pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct PairBatch {
    pub anchors: Vec<StateRef>,
    pub partners: Vec<StateRef>,
    pub gaps: Option<Vec<usize>>,
}

impl PairBatch {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }
}

fn require_nonempty(ds: &TrajectoryDataset) -> Result<(), DatasetError> {
    if ds.is_empty() {
        Err(DatasetError::Invalid(
            "cannot sample from an empty dataset".into(),
        ))
    } else {
        Ok(())
    }
}

/// Uniform trajectory, then a uniform index pair `i < j` within it.
pub fn sample_objective_pairs(
    ds: &TrajectoryDataset,
    batch: usize,
    rng: &mut dyn RngCore,
) -> Result<PairBatch, DatasetError> {
    require_nonempty(ds)?;
    let mut anchors = Vec::with_capacity(batch);
    let mut partners = Vec::with_capacity(batch);
    let mut gaps = Vec::with_capacity(batch);
    for _ in 0..batch {
        let t = rng.random_range(0..ds.trajectories.len());
        let n = ds.trajectories[t].len();
        let a = rng.random_range(0..n);
        let mut b = rng.random_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        let (i, j) = (a.min(b), a.max(b));
        anchors.push(StateRef {
            trajectory: t,
            index: i,
        });
        partners.push(StateRef {
            trajectory: t,
            index: j,
        });
        gaps.push(j - i);
    }
    Ok(PairBatch {
        anchors,
        partners,
        gaps: Some(gaps),
    })
}

/// Number of index pairs with `1 ≤ j − i ≤ horizon` in a trajectory of `len` states.
pub fn constraint_pair_count(len: usize, horizon: usize) -> usize {
    (1..=horizon.min(len.saturating_sub(1)))
        .map(|g| len - g)
        .sum()
}

/// Uniform trajectory, then a uniform pair among those with `1 ≤ j − i ≤ horizon`.
pub fn sample_constraint_pairs(
    ds: &TrajectoryDataset,
    horizon: usize,
    batch: usize,
    rng: &mut dyn RngCore,
) -> Result<PairBatch, DatasetError> {
    require_nonempty(ds)?;
    if horizon == 0 {
        return Err(DatasetError::Invalid(
            "constraint horizon must be at least 1".into(),
        ));
    }
    let mut anchors = Vec::with_capacity(batch);
    let mut partners = Vec::with_capacity(batch);
    let mut gaps = Vec::with_capacity(batch);
    for _ in 0..batch {
        let t = rng.random_range(0..ds.trajectories.len());
        let n = ds.trajectories[t].len();
        let mut k = rng.random_range(0..constraint_pair_count(n, horizon));
        let mut gap = 1;
        while k >= n - gap {
            k -= n - gap;
            gap += 1;
        }
        anchors.push(StateRef {
            trajectory: t,
            index: k,
        });
        partners.push(StateRef {
            trajectory: t,
            index: k + gap,
        });
        gaps.push(gap);
    }
    Ok(PairBatch {
        anchors,
        partners,
        gaps: Some(gaps),
    })
}

/// Both endpoints independently uniform over the state pool. Self-pairs can occur.
pub fn sample_random_state_pairs(
    ds: &TrajectoryDataset,
    batch: usize,
    rng: &mut dyn RngCore,
) -> Result<PairBatch, DatasetError> {
    require_nonempty(ds)?;
    let n = ds.pool.len();
    let anchors = (0..batch)
        .map(|_| ds.pool[rng.random_range(0..n)])
        .collect();
    let partners = (0..batch)
        .map(|_| ds.pool[rng.random_range(0..n)])
        .collect();
    Ok(PairBatch {
        anchors,
        partners,
        gaps: None,
    })
}

/// Uniform states from the pool, one per entry of `anchors`.
pub fn sample_random_states(
    ds: &TrajectoryDataset,
    count: usize,
    rng: &mut dyn RngCore,
) -> Result<Vec<StateRef>, DatasetError> {
    require_nonempty(ds)?;
    let n = ds.pool.len();
    Ok((0..count)
        .map(|_| ds.pool[rng.random_range(0..n)])
        .collect())
}
