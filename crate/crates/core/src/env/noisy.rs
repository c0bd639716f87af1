use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};

use super::apsp::GroundTruthMad;
use super::grid::Move;
use super::Environment;

const SIZE: usize = 13;

/// Default standard deviation of the two noise channels.
pub const DEFAULT_SIGMA: f64 = 0.1;

/// 13×13 lattice with slippery moves: the intended move happens with
/// probability 0.5, otherwise a uniformly random move is applied. The
/// observation `(x, y, n₁, n₂)` appends two fresh `N(0, σ²)` draws.
///
/// Episodes start on a uniformly random lattice cell.
#[derive(Clone, Debug)]
pub struct NoisyGridWorld {
    sigma: f64,
    noise: Normal<f64>,
}

impl Default for NoisyGridWorld {
    fn default() -> Self {
        Self::new(DEFAULT_SIGMA).expect("default sigma is valid")
    }
}

impl NoisyGridWorld {
    pub fn new(sigma: f64) -> Result<Self, String> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(format!(
                "noise sigma must be finite and non-negative, got {sigma}"
            ));
        }
        let noise = Normal::new(0.0, sigma).map_err(|e| e.to_string())?;
        Ok(Self { sigma, noise })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn id_of(x: usize, y: usize) -> usize {
        y * SIZE + x
    }

    /// Closed-form minimum action distance.
    pub fn manhattan(a: (usize, usize), b: (usize, usize)) -> u32 {
        (a.0.abs_diff(b.0) + a.1.abs_diff(b.1)) as u32
    }
}

impl Environment for NoisyGridWorld {
    type State = (usize, usize);
    type Action = Move;

    fn name(&self) -> &str {
        "noisygrid"
    }

    fn obs_dim(&self) -> usize {
        4
    }

    fn initial_state(&self, rng: &mut dyn RngCore) -> Self::State {
        (rng.random_range(0..SIZE), rng.random_range(0..SIZE))
    }

    fn random_action(&self, rng: &mut dyn RngCore) -> Move {
        Move::random(rng)
    }

    fn planning_actions(&self) -> Vec<Move> {
        Move::ALL.to_vec()
    }

    fn step(&self, state: &Self::State, action: Move, rng: &mut dyn RngCore) -> Self::State {
        let applied = if rng.random_bool(0.5) {
            action
        } else {
            Move::random(rng)
        };
        applied.apply_clipped(state.0, state.1, SIZE, SIZE)
    }

    fn observe(&self, state: &Self::State, rng: &mut dyn RngCore) -> Vec<f64> {
        let mut rng = rng;
        vec![
            state.0 as f64,
            state.1 as f64,
            self.noise.sample(&mut rng),
            self.noise.sample(&mut rng),
        ]
    }

    fn num_latent(&self) -> usize {
        SIZE * SIZE
    }

    fn latent_id(&self, state: &Self::State) -> usize {
        Self::id_of(state.0, state.1)
    }

    fn representative(&self, id: usize) -> Self::State {
        (id % SIZE, id / SIZE)
    }

    fn latent_label(&self, id: usize) -> String {
        let (x, y) = self.representative(id);
        format!("({x};{y})")
    }

    fn one_step_relation(&self) -> Vec<Vec<usize>> {
        (0..SIZE * SIZE)
            .map(|id| {
                let (x, y) = self.representative(id);
                let mut next: Vec<usize> = Move::ALL
                    .iter()
                    .map(|m| {
                        let (nx, ny) = m.apply_clipped(x, y, SIZE, SIZE);
                        Self::id_of(nx, ny)
                    })
                    .collect();
                next.sort_unstable();
                next.dedup();
                next
            })
            .collect()
    }

    fn ground_truth(&self) -> GroundTruthMad {
        let n = SIZE * SIZE;
        let table = (0..n * n)
            .map(|k| Self::manhattan(self.representative(k / n), self.representative(k % n)))
            .collect();
        GroundTruthMad::from_table(n, table)
    }

    fn planning_task(&self, rng: &mut dyn RngCore) -> (Self::State, Self::State) {
        let start = self.initial_state(rng);
        loop {
            let goal = self.initial_state(rng);
            if goal != start {
                return (start, goal);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::floyd_warshall;

    #[test]
    fn closed_form_matches_floyd_warshall() {
        let env = NoisyGridWorld::default();
        assert_eq!(env.ground_truth(), floyd_warshall(&env.one_step_relation()));
        assert_eq!(
            env.ground_truth()
                .get(NoisyGridWorld::id_of(0, 0), NoisyGridWorld::id_of(12, 12)),
            Some(24)
        );
    }

    #[test]
    fn observation_carries_noise() {
        let env = NoisyGridWorld::new(0.5).unwrap();
        let mut rng = rand::rng();
        let a = env.observe(&(3, 4), &mut rng);
        let b = env.observe(&(3, 4), &mut rng);
        assert_eq!(&a[..2], &[3.0, 4.0]);
        assert_ne!(a[2..], b[2..]);
        assert!(NoisyGridWorld::new(-1.0).is_err());
    }
}
