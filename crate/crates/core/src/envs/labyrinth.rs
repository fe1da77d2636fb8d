use crate::error::{bail, Result};
use crate::rng::Rng;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// North, east, south, west.
pub const ACTIONS: usize = 4;
/// Per direction `[wall, flag]`, then the previous action one-hot.
pub const OBS_DIM: usize = 2 * ACTIONS + ACTIONS;

const STEP_PENALTY: f64 = -0.01;
const TERMINAL_REWARD: f64 = 1.0;
const EXPLORE_PROB: f64 = 0.75;

/// Grid of cells with passages between orthogonal neighbours.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Maze {
    pub height: usize,
    pub width: usize,
    /// `east[r*w + c]`: passage from `(r,c)` to `(r,c+1)`.
    pub east: Vec<bool>,
    /// `south[r*w + c]`: passage from `(r,c)` to `(r+1,c)`.
    pub south: Vec<bool>,
}

impl Maze {
    pub fn closed(height: usize, width: usize) -> Self {
        Maze { height, width, east: vec![false; height * width], south: vec![false; height * width] }
    }

    /// Every internal wall removed.
    pub fn open(height: usize, width: usize) -> Self {
        let mut m = Self::closed(height, width);
        for r in 0..height {
            for c in 0..width {
                m.east[r * width + c] = c + 1 < width;
                m.south[r * width + c] = r + 1 < height;
            }
        }
        m
    }

    pub fn cells(&self) -> usize {
        self.height * self.width
    }

    /// Neighbour through direction `a`, if a passage exists.
    pub fn neighbour(&self, cell: usize, a: usize) -> Option<usize> {
        let (r, c, w) = (cell / self.width, cell % self.width, self.width);
        match a {
            0 if r > 0 && self.south[cell - w] => Some(cell - w),
            1 if c + 1 < w && self.east[cell] => Some(cell + 1),
            2 if r + 1 < self.height && self.south[cell] => Some(cell + w),
            3 if c > 0 && self.east[cell - 1] => Some(cell - 1),
            _ => None,
        }
    }

    /// BFS distances from `start`; `usize::MAX` marks unreachable cells.
    pub fn distances(&self, start: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.cells()];
        dist[start] = 0;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for a in 0..ACTIONS {
                if let Some(n) = self.neighbour(v, a) {
                    if dist[n] == usize::MAX {
                        dist[n] = dist[v] + 1;
                        queue.push_back(n);
                    }
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        self.distances(0).iter().all(|&d| d != usize::MAX)
    }

    /// Farthest cell from the origin (lowest index on ties).
    pub fn farthest_cell(&self) -> usize {
        let d = self.distances(0);
        (0..self.cells()).max_by_key(|&i| (d[i], std::cmp::Reverse(i))).unwrap_or(0)
    }
}

/// Depth-first carving from the origin: a spanning tree of the grid.
pub fn generate_maze(height: usize, width: usize, rng: &mut Rng) -> Result<Maze> {
    if height < 2 || width < 2 {
        bail!(Configuration, "maze dims must be >= 2, got {height}x{width}");
    }
    let mut m = Maze::closed(height, width);
    let mut seen = vec![false; m.cells()];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(&v) = stack.last() {
        let (r, c) = (v / width, v % width);
        let mut options = Vec::with_capacity(4);
        if r > 0 && !seen[v - width] {
            options.push(0);
        }
        if c + 1 < width && !seen[v + 1] {
            options.push(1);
        }
        if r + 1 < height && !seen[v + width] {
            options.push(2);
        }
        if c > 0 && !seen[v - 1] {
            options.push(3);
        }
        if options.is_empty() {
            stack.pop();
            continue;
        }
        let n = match options[rng.random_range(0..options.len())] {
            0 => {
                m.south[v - width] = true;
                v - width
            }
            1 => {
                m.east[v] = true;
                v + 1
            }
            2 => {
                m.south[v] = true;
                v + width
            }
            _ => {
                m.east[v - 1] = true;
                v - 1
            }
        };
        seen[n] = true;
        stack.push(n);
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Reach the exit cell.
    Escape,
    /// Visit every cell.
    Explore,
}

impl Variant {
    pub fn default_cap(self) -> usize {
        match self {
            Variant::Escape => 80,
            Variant::Explore => 40,
        }
    }
}

/// Agent in a maze starting at the origin. Observations show only the four
/// adjacent passages/walls, a per-direction flag (exit ahead for escape,
/// already visited for explore when `show_visited`), and the previous action.
#[derive(Debug, Clone)]
pub struct LabyrinthEnv {
    pub maze: Maze,
    pub variant: Variant,
    pub cap: usize,
    pub show_visited: bool,
    pub exit: usize,
    pub pos: usize,
    pub steps: usize,
    pub done: bool,
    pub success: bool,
    pub visited: Vec<bool>,
    /// Whether the start square's exploration coin is still pending.
    start_pending: bool,
    prev_action: Option<usize>,
    rng: Rng,
}

impl LabyrinthEnv {
    pub fn new(maze: Maze, variant: Variant, cap: usize, rng: Rng) -> Self {
        let exit = maze.farthest_cell();
        let mut visited = vec![false; maze.cells()];
        visited[0] = true;
        LabyrinthEnv {
            maze,
            variant,
            cap,
            show_visited: true,
            exit,
            pos: 0,
            steps: 0,
            done: false,
            success: false,
            visited,
            start_pending: true,
            prev_action: None,
            rng,
        }
    }

    pub fn observe(&self) -> Vec<f64> {
        let mut o = vec![0.0; OBS_DIM];
        for a in 0..ACTIONS {
            match self.maze.neighbour(self.pos, a) {
                None => o[2 * a] = 1.0,
                Some(n) => {
                    o[2 * a + 1] = match self.variant {
                        Variant::Escape => f64::from(u8::from(n == self.exit)),
                        Variant::Explore => f64::from(u8::from(self.show_visited && self.visited[n])),
                    };
                }
            }
        }
        if let Some(a) = self.prev_action {
            o[2 * ACTIONS + a] = 1.0;
        }
        o
    }

    fn explore_bonus(&mut self) -> f64 {
        let coin: f64 = self.rng.random();
        if coin < EXPLORE_PROB {
            1.0 / self.maze.cells() as f64
        } else {
            0.0
        }
    }

    /// Returns `(observation, reward, done)`.
    pub fn step(&mut self, action: usize) -> Result<(Vec<f64>, f64, bool)> {
        if self.done {
            bail!(Contract, "step after episode end");
        }
        if action >= ACTIONS {
            bail!(Contract, "action {action} out of range");
        }
        let mut reward = STEP_PENALTY;
        if let Some(n) = self.maze.neighbour(self.pos, action) {
            self.pos = n;
        }
        self.steps += 1;
        self.prev_action = Some(action);
        match self.variant {
            Variant::Escape => {
                if self.pos == self.exit {
                    reward += TERMINAL_REWARD;
                    self.success = true;
                }
            }
            Variant::Explore => {
                if self.start_pending {
                    self.start_pending = false;
                    reward += self.explore_bonus();
                }
                if !self.visited[self.pos] {
                    self.visited[self.pos] = true;
                    reward += self.explore_bonus();
                }
                if self.visited.iter().all(|&v| v) {
                    reward += TERMINAL_REWARD;
                    self.success = true;
                }
            }
        }
        self.done = self.success || self.steps >= self.cap;
        Ok((self.observe(), reward, self.done))
    }
}
