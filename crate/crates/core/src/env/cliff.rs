use rand::RngCore;

use super::grid::Move;
use super::Environment;

const WIDTH: usize = 12;
const HEIGHT: usize = 4;

/// The 4×12 cliff grid. Start is the bottom-left corner, goal the
/// bottom-right one, and the cells between them on the bottom row are the
/// cliff: stepping into one teleports the agent back to the start without
/// ending the episode. Cliff cells are never occupied and are not latent
/// states.
///
/// Observations are the raw `(x, y)` coordinates, `y = 3` being the bottom row.
#[derive(Clone, Debug, Default)]
pub struct CliffWalking {
    ids: Vec<Option<usize>>,
    cells: Vec<(usize, usize)>,
}

impl CliffWalking {
    pub const START: (usize, usize) = (0, HEIGHT - 1);
    pub const GOAL: (usize, usize) = (WIDTH - 1, HEIGHT - 1);

    pub fn new() -> Self {
        let mut ids = vec![None; WIDTH * HEIGHT];
        let mut cells = Vec::new();
        for y in 0..HEIGHT {
            for x in 0..WIDTH {
                if !Self::is_cliff(x, y) {
                    ids[y * WIDTH + x] = Some(cells.len());
                    cells.push((x, y));
                }
            }
        }
        Self { ids, cells }
    }

    pub fn is_cliff(x: usize, y: usize) -> bool {
        y == HEIGHT - 1 && (1..WIDTH - 1).contains(&x)
    }

    pub fn id_of(&self, cell: (usize, usize)) -> Option<usize> {
        self.ids.get(cell.1 * WIDTH + cell.0).copied().flatten()
    }

    fn transition(&self, cell: (usize, usize), m: Move) -> (usize, usize) {
        let (nx, ny) = m.apply_clipped(cell.0, cell.1, WIDTH, HEIGHT);
        if Self::is_cliff(nx, ny) {
            Self::START
        } else {
            (nx, ny)
        }
    }
}

impl Environment for CliffWalking {
    type State = (usize, usize);
    type Action = Move;

    fn name(&self) -> &str {
        "cliffwalking"
    }

    fn obs_dim(&self) -> usize {
        2
    }

    fn initial_state(&self, _rng: &mut dyn RngCore) -> Self::State {
        Self::START
    }

    fn random_action(&self, rng: &mut dyn RngCore) -> Move {
        Move::random(rng)
    }

    fn planning_actions(&self) -> Vec<Move> {
        Move::ALL.to_vec()
    }

    fn step(&self, state: &Self::State, action: Move, _rng: &mut dyn RngCore) -> Self::State {
        self.transition(*state, action)
    }

    fn observe(&self, state: &Self::State, _rng: &mut dyn RngCore) -> Vec<f64> {
        vec![state.0 as f64, state.1 as f64]
    }

    fn num_latent(&self) -> usize {
        self.cells.len()
    }

    fn latent_id(&self, state: &Self::State) -> usize {
        self.id_of(*state).expect("cliff cells are never occupied")
    }

    fn representative(&self, id: usize) -> Self::State {
        self.cells[id]
    }

    fn latent_label(&self, id: usize) -> String {
        let (x, y) = self.cells[id];
        format!("({x};{y})")
    }

    fn one_step_relation(&self) -> Vec<Vec<usize>> {
        self.cells
            .iter()
            .map(|&c| {
                let mut next: Vec<usize> = Move::ALL
                    .iter()
                    .map(|&m| self.latent_id(&self.transition(c, m)))
                    .collect();
                next.sort_unstable();
                next.dedup();
                next
            })
            .collect()
    }

    fn planning_task(&self, _rng: &mut dyn RngCore) -> (Self::State, Self::State) {
        (Self::START, Self::GOAL)
    }
}
