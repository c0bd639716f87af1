//! Point mass in a 2-D maze with force control.
//!
//! Maze cells are one unit wide; cell `(cx, cy)` covers
//! `[cx, cx + 1) × [cy, cy + 1)` with `cy` growing downward (row order of the
//! ASCII layout). Dynamics per step, unit mass, `dt = 0.1`:
//!
//! ```text
//! v ← clamp(v + a·dt, ±5)
//! x ← x + vx·dt   unless that lands in a wall, in which case vx ← 0
//! y ← y + vy·dt   likewise for vy
//! ```

use std::fmt;

use rand::{Rng, RngCore};

use super::Environment;

pub const DT: f64 = 0.1;
pub const MAX_SPEED: f64 = 5.0;
pub const MAX_FORCE: f64 = 1.0;
/// Euclidean radius around the goal position that counts as reached.
pub const DEFAULT_GOAL_TOLERANCE: f64 = 0.5;

const UMAZE: &str = include_str!("../../layouts/umaze.txt");
const MEDIUM: &str = include_str!("../../layouts/medium.txt");

/// ASCII maze: `#` wall, `.` free, `S` start region, `G` goal region.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MazeLayout {
    name: String,
    width: usize,
    height: usize,
    walls: Vec<bool>,
    starts: Vec<(usize, usize)>,
    goals: Vec<(usize, usize)>,
}

impl MazeLayout {
    pub fn parse(name: &str, text: &str) -> Result<Self, String> {
        let rows: Vec<&str> = text
            .lines()
            .map(str::trim_end)
            .filter(|l| !l.is_empty())
            .collect();
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        if height == 0 || width == 0 {
            return Err(format!("maze `{name}` is empty"));
        }
        let mut walls = Vec::with_capacity(width * height);
        let (mut starts, mut goals) = (Vec::new(), Vec::new());
        for (y, row) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(format!("maze `{name}` row {} has a different width", y + 1));
            }
            for (x, c) in row.chars().enumerate() {
                match c {
                    '#' => walls.push(true),
                    '.' => walls.push(false),
                    'S' => {
                        walls.push(false);
                        starts.push((x, y));
                    }
                    'G' => {
                        walls.push(false);
                        goals.push((x, y));
                    }
                    other => {
                        return Err(format!(
                            "maze `{name}` row {}: unexpected character `{other}`",
                            y + 1
                        ))
                    }
                }
            }
        }
        if starts.is_empty() || goals.is_empty() {
            return Err(format!("maze `{name}` needs at least one S and one G cell"));
        }
        Ok(Self {
            name: name.to_string(),
            width,
            height,
            walls,
            starts,
            goals,
        })
    }

    /// Shipped layouts: `umaze` and `medium`.
    pub fn builtin(name: &str) -> Result<Self, String> {
        match name {
            "umaze" => Self::parse(name, UMAZE),
            "medium" => Self::parse(name, MEDIUM),
            other => Err(format!(
                "unknown maze layout `{other}` (expected umaze or medium)"
            )),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn is_free_cell(&self, cx: usize, cy: usize) -> bool {
        cx < self.width && cy < self.height && !self.walls[cy * self.width + cx]
    }

    pub fn is_free(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && self.is_free_cell(x.floor() as usize, y.floor() as usize)
    }

    pub fn free_cells(&self) -> Vec<(usize, usize)> {
        (0..self.height)
            .flat_map(|y| (0..self.width).map(move |x| (x, y)))
            .filter(|&(x, y)| self.is_free_cell(x, y))
            .collect()
    }

    pub fn starts(&self) -> &[(usize, usize)] {
        &self.starts
    }

    pub fn goals(&self) -> &[(usize, usize)] {
        &self.goals
    }
}

impl fmt::Display for MazeLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for y in 0..self.height {
            for x in 0..self.width {
                let c = if self.walls[y * self.width + x] {
                    '#'
                } else if self.starts.contains(&(x, y)) {
                    'S'
                } else if self.goals.contains(&(x, y)) {
                    'G'
                } else {
                    '.'
                };
                write!(f, "{c}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointMassState {
    pub pos: [f64; 2],
    pub vel: [f64; 2],
}

/// Point-mass maze with a uniform grid of `resolution × resolution` latent
/// cells per maze cell for ground truth.
#[derive(Clone, Debug)]
pub struct PointMaze {
    layout: MazeLayout,
    resolution: usize,
    sub_cells: Vec<(usize, usize)>,
    ids: Vec<Option<usize>>,
}

impl PointMaze {
    pub fn new(layout: MazeLayout, resolution: usize) -> Result<Self, String> {
        if resolution == 0 {
            return Err("pointmaze resolution must be at least 1".into());
        }
        let (gw, gh) = (layout.width * resolution, layout.height * resolution);
        let mut ids = vec![None; gw * gh];
        let mut sub_cells = Vec::new();
        for sy in 0..gh {
            for sx in 0..gw {
                if layout.is_free_cell(sx / resolution, sy / resolution) {
                    ids[sy * gw + sx] = Some(sub_cells.len());
                    sub_cells.push((sx, sy));
                }
            }
        }
        Ok(Self {
            layout,
            resolution,
            sub_cells,
            ids,
        })
    }

    pub fn builtin(name: &str, resolution: usize) -> Result<Self, String> {
        Self::new(MazeLayout::builtin(name)?, resolution)
    }

    pub fn layout(&self) -> &MazeLayout {
        &self.layout
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    fn grid_width(&self) -> usize {
        self.layout.width * self.resolution
    }

    fn sub_cell_of(&self, pos: [f64; 2]) -> (usize, usize) {
        let r = self.resolution as f64;
        let sx = (pos[0] * r).floor().max(0.0) as usize;
        let sy = (pos[1] * r).floor().max(0.0) as usize;
        (
            sx.min(self.grid_width() - 1),
            sy.min(self.layout.height * self.resolution - 1),
        )
    }

    fn cell_center(cell: (usize, usize)) -> [f64; 2] {
        [cell.0 as f64 + 0.5, cell.1 as f64 + 0.5]
    }

    fn jittered(cell: (usize, usize), rng: &mut dyn RngCore) -> [f64; 2] {
        let c = Self::cell_center(cell);
        [
            c[0] + rng.random_range(-0.25..0.25),
            c[1] + rng.random_range(-0.25..0.25),
        ]
    }

    pub fn at_rest(pos: [f64; 2]) -> PointMassState {
        PointMassState {
            pos,
            vel: [0.0, 0.0],
        }
    }
}

impl Environment for PointMaze {
    type State = PointMassState;
    type Action = [f64; 2];

    fn name(&self) -> &str {
        "pointmaze"
    }

    fn obs_dim(&self) -> usize {
        4
    }

    fn initial_state(&self, rng: &mut dyn RngCore) -> PointMassState {
        let cells = self.layout.free_cells();
        let (cx, cy) = cells[rng.random_range(0..cells.len())];
        let pos = [
            cx as f64 + rng.random::<f64>(),
            cy as f64 + rng.random::<f64>(),
        ];
        Self::at_rest(pos)
    }

    fn random_action(&self, rng: &mut dyn RngCore) -> [f64; 2] {
        [
            rng.random_range(-MAX_FORCE..=MAX_FORCE),
            rng.random_range(-MAX_FORCE..=MAX_FORCE),
        ]
    }

    fn planning_actions(&self) -> Vec<[f64; 2]> {
        let levels = [-MAX_FORCE, 0.0, MAX_FORCE];
        levels
            .iter()
            .flat_map(|&ax| levels.iter().map(move |&ay| [ax, ay]))
            .collect()
    }

    fn step(&self, s: &PointMassState, action: [f64; 2], _rng: &mut dyn RngCore) -> PointMassState {
        let mut pos = s.pos;
        let mut vel = [0.0; 2];
        for axis in 0..2 {
            let a = action[axis].clamp(-MAX_FORCE, MAX_FORCE);
            vel[axis] = (s.vel[axis] + a * DT).clamp(-MAX_SPEED, MAX_SPEED);
        }
        for axis in 0..2 {
            let mut next = pos;
            next[axis] += vel[axis] * DT;
            if self.layout.is_free(next[0], next[1]) {
                pos = next;
            } else {
                vel[axis] = 0.0;
            }
        }
        PointMassState { pos, vel }
    }

    fn observe(&self, s: &PointMassState, _rng: &mut dyn RngCore) -> Vec<f64> {
        vec![s.pos[0], s.pos[1], s.vel[0], s.vel[1]]
    }

    fn num_latent(&self) -> usize {
        self.sub_cells.len()
    }

    fn latent_id(&self, s: &PointMassState) -> usize {
        let (sx, sy) = self.sub_cell_of(s.pos);
        self.ids[sy * self.grid_width() + sx].expect("point mass inside a wall")
    }

    /// Sub-cell centre at rest.
    fn representative(&self, id: usize) -> PointMassState {
        let (sx, sy) = self.sub_cells[id];
        let r = self.resolution as f64;
        Self::at_rest([(sx as f64 + 0.5) / r, (sy as f64 + 0.5) / r])
    }

    fn latent_label(&self, id: usize) -> String {
        let (sx, sy) = self.sub_cells[id];
        format!("({sx};{sy})")
    }

    fn one_step_relation(&self) -> Vec<Vec<usize>> {
        let gw = self.grid_width() as i64;
        let gh = (self.layout.height * self.resolution) as i64;
        self.sub_cells
            .iter()
            .map(|&(sx, sy)| {
                let mut next = Vec::with_capacity(4);
                for (dx, dy) in [(0i64, -1i64), (0, 1), (-1, 0), (1, 0)] {
                    let (nx, ny) = (sx as i64 + dx, sy as i64 + dy);
                    if nx >= 0 && ny >= 0 && nx < gw && ny < gh {
                        if let Some(id) = self.ids[(ny * gw + nx) as usize] {
                            next.push(id);
                        }
                    }
                }
                next.sort_unstable();
                next
            })
            .collect()
    }

    fn reached(&self, s: &PointMassState, goal: &PointMassState, tolerance: f64) -> bool {
        let (dx, dy) = (s.pos[0] - goal.pos[0], s.pos[1] - goal.pos[1]);
        (dx * dx + dy * dy).sqrt() <= tolerance
    }

    fn planning_task(&self, rng: &mut dyn RngCore) -> (PointMassState, PointMassState) {
        let starts = self.layout.starts();
        let goals = self.layout.goals();
        let s = starts[rng.random_range(0..starts.len())];
        let g = goals[rng.random_range(0..goals.len())];
        (
            Self::at_rest(Self::jittered(s, rng)),
            Self::at_rest(Self::jittered(g, rng)),
        )
    }

    fn format_state(&self, s: &PointMassState) -> String {
        format!(
            "{:.4};{:.4};{:.4};{:.4}",
            s.pos[0], s.pos[1], s.vel[0], s.vel[1]
        )
    }

    fn format_action(&self, a: [f64; 2]) -> String {
        format!("{};{}", a[0], a[1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn umaze() -> PointMaze {
        PointMaze::builtin("umaze", 1).unwrap()
    }

    #[test]
    fn zero_force_at_rest_is_fixed_point() {
        let env = umaze();
        let s = PointMaze::at_rest([1.5, 3.5]);
        assert_eq!(env.step(&s, [0.0, 0.0], &mut rand::rng()), s);
    }

    #[test]
    fn single_euler_step() {
        let env = umaze();
        let s = env.step(
            &PointMaze::at_rest([1.5, 3.5]),
            [1.0, 0.0],
            &mut rand::rng(),
        );
        assert!((s.vel[0] - 0.1).abs() < 1e-15 && s.vel[1] == 0.0);
        assert!((s.pos[0] - 1.51).abs() < 1e-15 && s.pos[1] == 3.5);
    }

    #[test]
    fn walls_block_motion() {
        let env = umaze();
        let mut s = PointMassState {
            pos: [1.5, 3.5],
            vel: [0.0, -5.0],
        };
        let mut rng = rand::rng();
        for _ in 0..20 {
            s = env.step(&s, [0.0, -1.0], &mut rng);
            assert!(env.layout().is_free(s.pos[0], s.pos[1]));
        }
        assert!(s.pos[1] >= 3.0);
    }

    #[test]
    fn speed_is_clamped() {
        let env = PointMaze::builtin("medium", 1).unwrap();
        let mut s = PointMassState {
            pos: [2.5, 3.5],
            vel: [4.95, 0.0],
        };
        s = env.step(&s, [1.0, 0.0], &mut rand::rng());
        assert_eq!(s.vel[0], MAX_SPEED);
    }

    #[test]
    fn umaze_ground_truth() {
        let env = umaze();
        assert_eq!(env.num_latent(), 7);
        let gt = env.ground_truth();
        let s = env.latent_id(&PointMaze::at_rest([1.5, 3.5]));
        let g = env.latent_id(&PointMaze::at_rest([1.5, 1.5]));
        assert_eq!(gt.get(s, g), Some(6));
        let fine = PointMaze::builtin("umaze", 2).unwrap();
        assert_eq!(fine.num_latent(), 28);
    }

    #[test]
    fn layout_parsing_errors() {
        assert!(MazeLayout::parse("x", "#.#\n##\n").is_err());
        assert!(MazeLayout::parse("x", "#.#\n").is_err());
        assert!(MazeLayout::parse("x", "#S?G#\n").is_err());
        let l = MazeLayout::builtin("umaze").unwrap();
        assert_eq!(MazeLayout::parse("umaze", &l.to_string()).unwrap(), l);
    }
}
