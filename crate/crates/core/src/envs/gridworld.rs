//! Stochastic grid world with obstacles and absorbing targets.

use std::collections::VecDeque;
use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};
use crate::mdp::{CostTable, FiniteMdp, Horizon};

/// 10x10 map with a wall down the middle column and one gap at the bottom.
pub const DEFAULT_LAYOUT: &str = "\
.....#...*
.....#....
.....#....
.....#....
.....#....
.....#....
.....#....
.....#....
.....#....
..........
";

pub const MOVE_SUCCESS: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Free,
    Obstacle,
    Target,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Move {
    North,
    South,
    East,
    West,
    Stay,
}

impl Move {
    pub const ALL: [Move; 5] = [Move::North, Move::South, Move::East, Move::West, Move::Stay];

    fn delta(self) -> (isize, isize) {
        match self {
            Move::North => (-1, 0),
            Move::South => (1, 0),
            Move::East => (0, 1),
            Move::West => (0, -1),
            Move::Stay => (0, 0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridWorld {
    width: usize,
    height: usize,
    cells: Vec<Cell>,
    success_prob: f64,
}

impl Default for GridWorld {
    fn default() -> Self {
        Self::from_ascii(DEFAULT_LAYOUT).expect("default layout parses")
    }
}

impl GridWorld {
    /// Parses `#` obstacle, `*` target, `.` free; blank lines are ignored.
    pub fn from_ascii(map: &str) -> Result<Self> {
        let rows: Vec<&str> = map.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        if rows.is_empty() {
            return Err(Error::Config("grid map is empty".into()));
        }
        let width = rows[0].chars().count();
        let mut cells = Vec::with_capacity(width * rows.len());
        for (r, line) in rows.iter().enumerate() {
            if line.chars().count() != width {
                return Err(Error::Config(format!(
                    "grid row {r} has {} cells, expected {width}",
                    line.chars().count()
                )));
            }
            for (c, ch) in line.chars().enumerate() {
                cells.push(match ch {
                    '.' => Cell::Free,
                    '#' => Cell::Obstacle,
                    '*' => Cell::Target,
                    other => {
                        return Err(Error::Config(format!("unknown grid symbol {other:?} at row {r}, column {c}")))
                    }
                });
            }
        }
        Self::new(width, rows.len(), cells, MOVE_SUCCESS)
    }

    pub fn new(width: usize, height: usize, cells: Vec<Cell>, success_prob: f64) -> Result<Self> {
        if cells.len() != width * height {
            return Err(Error::Shape(format!("{} cells for a {width}x{height} grid", cells.len())));
        }
        if !cells.contains(&Cell::Target) {
            return Err(Error::Config("grid has no target cell".into()));
        }
        if !(0.0..=1.0).contains(&success_prob) {
            return Err(Error::Config(format!("move success probability {success_prob} outside [0, 1]")));
        }
        Ok(Self { width, height, cells, success_prob })
    }

    pub fn with_success_prob(mut self, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("move success probability {p} outside [0, 1]")));
        }
        self.success_prob = p;
        Ok(self)
    }

    /// Random layout with at least one target; obstacles drawn independently.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, width: usize, height: usize, obstacle_prob: f64) -> Self {
        let n = width * height;
        let mut cells: Vec<Cell> =
            (0..n).map(|_| if rng.random::<f64>() < obstacle_prob { Cell::Obstacle } else { Cell::Free }).collect();
        let targets = 1 + rng.random_range(0..n.min(3));
        for _ in 0..targets {
            cells[rng.random_range(0..n)] = Cell::Target;
        }
        Self { width, height, cells, success_prob: MOVE_SUCCESS }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell(&self, row: usize, col: usize) -> Cell {
        self.cells[row * self.width + col]
    }

    fn neighbour(&self, row: usize, col: usize, m: Move) -> Option<(usize, usize)> {
        let (dr, dc) = m.delta();
        let r = row.checked_add_signed(dr)?;
        let c = col.checked_add_signed(dc)?;
        (r < self.height && c < self.width && self.cell(r, c) != Cell::Obstacle).then_some((r, c))
    }

    /// Tabular model over the non-obstacle cells in row-major order, with
    /// controls indexed as [`Move::ALL`].
    pub fn to_mdp(&self) -> Result<GridMdp> {
        let mut index = vec![usize::MAX; self.cells.len()];
        let mut cells = Vec::new();
        for r in 0..self.height {
            for c in 0..self.width {
                if self.cell(r, c) != Cell::Obstacle {
                    index[r * self.width + c] = cells.len();
                    cells.push((r, c));
                }
            }
        }
        let nx = cells.len();
        let nu = Move::ALL.len();
        let mut transition = vec![0.0; nx * nu * nx];
        let mut allowed = vec![false; nx * nu];
        let mut cost = vec![0.0; nx * nu];
        let mut targets = Vec::new();
        for (x, &(r, c)) in cells.iter().enumerate() {
            let is_target = self.cell(r, c) == Cell::Target;
            if is_target {
                targets.push(x);
            }
            for (u, &m) in Move::ALL.iter().enumerate() {
                let Some((nr, nc)) = self.neighbour(r, c, m) else { continue };
                allowed[x * nu + u] = true;
                cost[x * nu + u] = if is_target { 0.0 } else { 1.0 };
                let row = &mut transition[(x * nu + u) * nx..][..nx];
                if is_target || m == Move::Stay {
                    row[x] = 1.0;
                } else {
                    row[index[nr * self.width + nc]] += self.success_prob;
                    row[x] += 1.0 - self.success_prob;
                }
            }
        }
        let mdp = FiniteMdp::with_allowed(
            nx,
            nu,
            transition,
            CostTable::Stationary(cost),
            1.0,
            Horizon::Infinite,
            targets.clone(),
            allowed,
        )?;
        let unreachable = unreachable_states(&mdp, &targets);
        Ok(GridMdp { mdp, cells, targets, unreachable })
    }
}

fn unreachable_states(mdp: &FiniteMdp, targets: &[usize]) -> Vec<usize> {
    let nx = mdp.num_states();
    let mut preds = vec![Vec::new(); nx];
    for x in 0..nx {
        for u in mdp.allowed_controls(x) {
            for &(y, _) in mdp.successors(x, u) {
                if y != x {
                    preds[y].push(x);
                }
            }
        }
    }
    let mut seen = vec![false; nx];
    let mut queue: VecDeque<usize> = targets.iter().copied().collect();
    for &t in targets {
        seen[t] = true;
    }
    while let Some(y) = queue.pop_front() {
        for &x in &preds[y] {
            if !seen[x] {
                seen[x] = true;
                queue.push_back(x);
            }
        }
    }
    (0..nx).filter(|&x| !seen[x]).collect()
}

impl fmt::Display for GridWorld {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in 0..self.height {
            for c in 0..self.width {
                let ch = match self.cell(r, c) {
                    Cell::Free => '.',
                    Cell::Obstacle => '#',
                    Cell::Target => '*',
                };
                write!(f, "{ch}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// A grid world compiled to a tabular MDP.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMdp {
    pub mdp: FiniteMdp,
    /// `(row, col)` of each state.
    pub cells: Vec<(usize, usize)>,
    pub targets: Vec<usize>,
    /// States with no path to any target. Not an error, but any policy is
    /// improper there, so undiscounted values are infinite.
    pub unreachable: Vec<usize>,
}

impl GridMdp {
    /// Non-target states, the episode reset distribution's support.
    pub fn start_states(&self) -> Vec<usize> {
        (0..self.mdp.num_states()).filter(|x| !self.mdp.is_absorbing(*x)).collect()
    }

    pub fn state_of(&self, row: usize, col: usize) -> Option<usize> {
        self.cells.iter().position(|&rc| rc == (row, col))
    }
}
