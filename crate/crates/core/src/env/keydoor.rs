use rand::RngCore;

use super::grid::Move;
use super::Environment;

const SIZE: usize = 13;

/// `(x, y, key)` on the 13×13 key/door board.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct KeyDoorState {
    pub x: usize,
    pub y: usize,
    pub key: bool,
}

/// 13×13 grid split by a wall at column 6. The only gap is the door at
/// (6, 6), passable once the key at (3, 3) has been collected. The key is
/// picked up by entering its cell and never dropped. Episodes start at (1, 1).
///
/// Latent states are every reachable `(x, y, key)`: wall cells are excluded,
/// as are the door and key cells without the key (neither can be occupied).
#[derive(Clone, Debug)]
pub struct KeyDoorGridWorld {
    states: Vec<KeyDoorState>,
    ids: Vec<Option<usize>>,
}

impl Default for KeyDoorGridWorld {
    fn default() -> Self {
        Self::new()
    }
}

impl KeyDoorGridWorld {
    pub const WALL_X: usize = 6;
    pub const DOOR: (usize, usize) = (6, 6);
    pub const KEY: (usize, usize) = (3, 3);
    pub const START: (usize, usize) = (1, 1);

    pub fn new() -> Self {
        let mut states = Vec::new();
        let mut ids = vec![None; SIZE * SIZE * 2];
        for key in [false, true] {
            for y in 0..SIZE {
                for x in 0..SIZE {
                    let s = KeyDoorState { x, y, key };
                    if Self::occupiable(s) {
                        ids[Self::slot(s)] = Some(states.len());
                        states.push(s);
                    }
                }
            }
        }
        Self { states, ids }
    }

    fn slot(s: KeyDoorState) -> usize {
        (usize::from(s.key) * SIZE + s.y) * SIZE + s.x
    }

    pub fn is_wall(x: usize, y: usize) -> bool {
        x == Self::WALL_X && (x, y) != Self::DOOR
    }

    fn occupiable(s: KeyDoorState) -> bool {
        !Self::is_wall(s.x, s.y) && (s.key || ((s.x, s.y) != Self::DOOR && (s.x, s.y) != Self::KEY))
    }

    pub fn id_of(&self, s: KeyDoorState) -> Option<usize> {
        if s.x >= SIZE || s.y >= SIZE {
            return None;
        }
        self.ids[Self::slot(s)]
    }

    pub fn start_state() -> KeyDoorState {
        KeyDoorState {
            x: Self::START.0,
            y: Self::START.1,
            key: false,
        }
    }

    fn transition(s: KeyDoorState, m: Move) -> KeyDoorState {
        let (nx, ny) = m.apply_clipped(s.x, s.y, SIZE, SIZE);
        if Self::is_wall(nx, ny) || ((nx, ny) == Self::DOOR && !s.key) {
            return s;
        }
        KeyDoorState {
            x: nx,
            y: ny,
            key: s.key || (nx, ny) == Self::KEY,
        }
    }
}

impl Environment for KeyDoorGridWorld {
    type State = KeyDoorState;
    type Action = Move;

    fn name(&self) -> &str {
        "keydoor"
    }

    fn obs_dim(&self) -> usize {
        3
    }

    fn initial_state(&self, _rng: &mut dyn RngCore) -> KeyDoorState {
        Self::start_state()
    }

    fn random_action(&self, rng: &mut dyn RngCore) -> Move {
        Move::random(rng)
    }

    fn planning_actions(&self) -> Vec<Move> {
        Move::ALL.to_vec()
    }

    fn step(&self, state: &KeyDoorState, action: Move, _rng: &mut dyn RngCore) -> KeyDoorState {
        Self::transition(*state, action)
    }

    fn observe(&self, s: &KeyDoorState, _rng: &mut dyn RngCore) -> Vec<f64> {
        vec![s.x as f64, s.y as f64, if s.key { 1.0 } else { 0.0 }]
    }

    fn num_latent(&self) -> usize {
        self.states.len()
    }

    fn latent_id(&self, state: &KeyDoorState) -> usize {
        self.id_of(*state).expect("state is not occupiable")
    }

    fn representative(&self, id: usize) -> KeyDoorState {
        self.states[id]
    }

    fn latent_label(&self, id: usize) -> String {
        let s = self.states[id];
        format!("({};{};{})", s.x, s.y, u8::from(s.key))
    }

    fn one_step_relation(&self) -> Vec<Vec<usize>> {
        self.states
            .iter()
            .map(|&s| {
                let mut next: Vec<usize> = Move::ALL
                    .iter()
                    .map(|&m| self.latent_id(&Self::transition(s, m)))
                    .collect();
                next.sort_unstable();
                next.dedup();
                next
            })
            .collect()
    }

    fn planning_task(&self, _rng: &mut dyn RngCore) -> (KeyDoorState, KeyDoorState) {
        (
            Self::start_state(),
            KeyDoorState {
                x: SIZE - 2,
                y: SIZE - 2,
                key: true,
            },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn door_needs_key_and_key_sticks() {
        let env = KeyDoorGridWorld::new();
        let mut rng = rand::rng();
        let left_of_door = KeyDoorState {
            x: 5,
            y: 6,
            key: false,
        };
        assert_eq!(env.step(&left_of_door, Move::Right, &mut rng), left_of_door);
        let with_key = KeyDoorState {
            key: true,
            ..left_of_door
        };
        assert_eq!(
            env.step(&with_key, Move::Right, &mut rng),
            KeyDoorState {
                x: 6,
                y: 6,
                key: true
            }
        );
        let next_to_key = KeyDoorState {
            x: 2,
            y: 3,
            key: false,
        };
        let got = env.step(&next_to_key, Move::Right, &mut rng);
        assert_eq!(
            got,
            KeyDoorState {
                x: 3,
                y: 3,
                key: true
            }
        );
        assert!(env.step(&got, Move::Left, &mut rng).key);
        let against_wall = KeyDoorState {
            x: 5,
            y: 0,
            key: true,
        };
        assert_eq!(env.step(&against_wall, Move::Right, &mut rng), against_wall);
    }

    #[test]
    fn key_never_reverts() {
        let env = KeyDoorGridWorld::new();
        let gt = env.ground_truth();
        for (i, a) in env.states.iter().enumerate() {
            for (j, b) in env.states.iter().enumerate() {
                if a.key && !b.key {
                    assert_eq!(gt.get(i, j), None);
                }
            }
        }
    }

    #[test]
    fn latent_count() {
        // 157 open cells per key value, minus door and key cells without the key
        assert_eq!(KeyDoorGridWorld::new().num_latent(), 2 * 157 - 2);
    }
}
