//! Simulators with enumerable latent states and exact ground-truth distances.
//!
//! Every environment exposes a finite latent index (`0..num_latent()`), the
//! determinised one-step relation over it, and a representative state per
//! index so learned distances can be compared with the oracle. Continuous
//! environments discretise positions into a uniform grid for this purpose.

mod apsp;
mod cliff;
mod grid;
mod keydoor;
mod noisy;
mod pointmaze;

use std::fmt;

use rand::RngCore;

pub use apsp::{check_mad_optimality, floyd_warshall, GroundTruthMad, OptimalityReport};
pub use cliff::CliffWalking;
pub use grid::Move;
pub use keydoor::{KeyDoorGridWorld, KeyDoorState};
pub use noisy::NoisyGridWorld;
pub use pointmaze::{MazeLayout, PointMassState, PointMaze, DEFAULT_GOAL_TOLERANCE};

/// Environment names used in configs and dataset headers.
pub const ENV_NAMES: [&str; 4] = ["cliffwalking", "keydoor", "noisygrid", "pointmaze"];

pub trait Environment {
    type State: Clone + PartialEq + fmt::Debug;
    type Action: Copy + PartialEq + fmt::Debug;

    fn name(&self) -> &str;

    fn obs_dim(&self) -> usize;

    fn initial_state(&self, rng: &mut dyn RngCore) -> Self::State;

    /// One draw of the uniform behaviour policy.
    fn random_action(&self, rng: &mut dyn RngCore) -> Self::Action;

    /// Finite action set sampled by the planner.
    fn planning_actions(&self) -> Vec<Self::Action>;

    fn step(&self, state: &Self::State, action: Self::Action, rng: &mut dyn RngCore)
        -> Self::State;

    /// Observation vector; noisy environments draw fresh noise each call.
    fn observe(&self, state: &Self::State, rng: &mut dyn RngCore) -> Vec<f64>;

    fn num_latent(&self) -> usize;

    fn latent_id(&self, state: &Self::State) -> usize;

    /// Canonical state for a latent index.
    fn representative(&self, id: usize) -> Self::State;

    fn latent_label(&self, id: usize) -> String;

    /// `successors[s]` = every latent `s'` reachable from `s` in one step
    /// with nonzero probability.
    fn one_step_relation(&self) -> Vec<Vec<usize>>;

    fn ground_truth(&self) -> GroundTruthMad {
        floyd_warshall(&self.one_step_relation())
    }

    /// Goal test; discrete environments compare latent states and ignore
    /// `tolerance`.
    fn reached(&self, state: &Self::State, goal: &Self::State, _tolerance: f64) -> bool {
        self.latent_id(state) == self.latent_id(goal)
    }

    /// Start/goal pair for planning episodes.
    fn planning_task(&self, rng: &mut dyn RngCore) -> (Self::State, Self::State);

    /// Compact single-field rendering used in CSV traces.
    fn format_state(&self, state: &Self::State) -> String {
        format!("{state:?}").replace(',', ";")
    }

    fn format_action(&self, action: Self::Action) -> String {
        format!("{action:?}").replace(',', ";")
    }
}
