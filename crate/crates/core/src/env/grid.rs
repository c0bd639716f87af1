use rand::{Rng, RngCore};

/// The four compass moves shared by the grid worlds. `Up` decreases `y`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Move {
    Up,
    Down,
    Left,
    Right,
}

impl Move {
    pub const ALL: [Move; 4] = [Move::Up, Move::Down, Move::Left, Move::Right];

    pub fn delta(self) -> (i32, i32) {
        match self {
            Move::Up => (0, -1),
            Move::Down => (0, 1),
            Move::Left => (-1, 0),
            Move::Right => (1, 0),
        }
    }

    pub fn random(rng: &mut dyn RngCore) -> Move {
        Move::ALL[rng.random_range(0..4)]
    }

    /// Target cell clipped to a `width × height` board.
    pub fn apply_clipped(self, x: usize, y: usize, width: usize, height: usize) -> (usize, usize) {
        let (dx, dy) = self.delta();
        let nx = (x as i32 + dx).clamp(0, width as i32 - 1) as usize;
        let ny = (y as i32 + dy).clamp(0, height as i32 - 1) as usize;
        (nx, ny)
    }
}
