//! Benchmark MDPs: a three-state toy model, GridWorld and Frozen Lake.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::Mdp;

/// The three-state, one-action example where Gumbel-max counterfactuals
/// disagree with the closed-form bounds.
pub fn build_toy_mdp() -> Mdp {
    Mdp::new(
        vec![
            vec![vec![0.3, 0.4, 0.3]],
            vec![vec![0.4, 0.0, 0.6]],
            vec![vec![0.0, 0.0, 1.0]],
        ],
        vec![vec![0.0]; 3],
        vec![1.0, 0.0, 0.0],
    )
    .expect("toy MDP is well formed")
}

/// A `(row, col)` grid cell.
pub type Cell = (usize, usize);

/// How probability mass not assigned to the intended move is spread.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlipModel {
    /// Split evenly over the three other directions.
    OtherDirections,
    /// Split evenly over the two perpendicular directions.
    Perpendicular,
}

/// What happens after the agent enters the goal, a danger cell or a hole.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Absorption {
    /// The cell loops to itself and keeps paying its reward.
    SelfLoop,
    /// The cell moves to one extra zero-reward terminal state.
    #[default]
    Terminal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub start: Cell,
    pub goal: Cell,
    #[serde(default)]
    pub danger_cells: Vec<Cell>,
    #[serde(default)]
    pub hole_cells: Vec<Cell>,
    pub p_intended: f64,
    pub goal_reward: f64,
    pub danger_reward: f64,
    pub slip: SlipModel,
    #[serde(default)]
    pub absorption: Absorption,
}

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("cell {cell:?} lies outside the {width}x{height} grid")]
    OutOfRange { cell: Cell, width: usize, height: usize },
    #[error("p_intended = {0} is not a probability")]
    BadProbability(f64),
    #[error("grid must have at least one cell")]
    Empty,
}

/// Actions in index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Move {
    Up,
    Down,
    Left,
    Right,
}

impl Move {
    pub const ALL: [Move; 4] = [Move::Up, Move::Down, Move::Left, Move::Right];

    fn perpendicular(self) -> [Move; 2] {
        match self {
            Move::Up | Move::Down => [Move::Left, Move::Right],
            Move::Left | Move::Right => [Move::Up, Move::Down],
        }
    }
}

impl GridSpec {
    /// The 4x4 GridWorld with a central danger cell. Goal and danger cells
    /// are absorbing and keep paying their reward.
    pub fn gridworld(p_intended: f64) -> Self {
        GridSpec {
            width: 4,
            height: 4,
            start: (0, 0),
            goal: (3, 3),
            danger_cells: vec![(1, 2)],
            hole_cells: Vec::new(),
            p_intended,
            goal_reward: 100.0,
            danger_reward: -100.0,
            slip: SlipModel::OtherDirections,
            absorption: Absorption::SelfLoop,
        }
    }

    /// The standard 4x4 Frozen Lake layout.
    pub fn frozen_lake() -> Self {
        GridSpec {
            width: 4,
            height: 4,
            start: (0, 0),
            goal: (3, 3),
            danger_cells: Vec::new(),
            hole_cells: vec![(1, 1), (1, 3), (2, 3), (3, 0)],
            p_intended: 1.0 / 3.0,
            goal_reward: 100.0,
            danger_reward: -100.0,
            slip: SlipModel::Perpendicular,
            absorption: Absorption::Terminal,
        }
    }

    pub fn num_cells(&self) -> usize {
        self.width * self.height
    }

    /// Index of the zero-reward terminal state, if the layout has one.
    pub fn terminal(&self) -> Option<usize> {
        (self.absorption == Absorption::Terminal).then(|| self.num_cells())
    }

    pub fn num_states(&self) -> usize {
        self.num_cells() + usize::from(self.terminal().is_some())
    }

    pub fn index(&self, (r, c): Cell) -> usize {
        r * self.width + c
    }

    pub fn cell(&self, s: usize) -> Cell {
        (s / self.width, s % self.width)
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if self.width == 0 || self.height == 0 {
            return Err(GridError::Empty);
        }
        if !(0.0..=1.0).contains(&self.p_intended) {
            return Err(GridError::BadProbability(self.p_intended));
        }
        let cells = [self.start, self.goal].into_iter().chain(self.danger_cells.iter().copied()).chain(self.hole_cells.iter().copied());
        for cell in cells {
            if cell.0 >= self.height || cell.1 >= self.width {
                return Err(GridError::OutOfRange { cell, width: self.width, height: self.height });
            }
        }
        Ok(())
    }

    fn is_penalty(&self, cell: Cell) -> bool {
        self.danger_cells.contains(&cell) || self.hole_cells.contains(&cell)
    }

    fn step(&self, (r, c): Cell, mv: Move) -> Cell {
        match mv {
            Move::Up if r > 0 => (r - 1, c),
            Move::Down if r + 1 < self.height => (r + 1, c),
            Move::Left if c > 0 => (r, c - 1),
            Move::Right if c + 1 < self.width => (r, c + 1),
            _ => (r, c),
        }
    }

    fn move_distribution(&self, intended: Move) -> Vec<(Move, f64)> {
        let p = self.p_intended;
        let others: Vec<Move> = match self.slip {
            SlipModel::OtherDirections => Move::ALL.into_iter().filter(|&m| m != intended).collect(),
            SlipModel::Perpendicular => intended.perpendicular().to_vec(),
        };
        let share = (1.0 - p) / others.len() as f64;
        std::iter::once((intended, p)).chain(others.into_iter().map(|m| (m, share))).collect()
    }

    fn cell_reward(&self, cell: Cell) -> f64 {
        if cell == self.goal {
            return self.goal_reward;
        }
        if self.is_penalty(cell) {
            return self.danger_reward;
        }
        let d_max = (self.width + self.height - 2) as f64;
        let dist = cell.0.abs_diff(self.goal.0) + cell.1.abs_diff(self.goal.1);
        d_max - dist as f64
    }

    fn labels(&self) -> Vec<String> {
        (0..self.num_cells())
            .map(|s| {
                let (r, c) = self.cell(s);
                format!("({r},{c})")
            })
            .chain(self.terminal().map(|_| "terminal".to_string()))
            .collect()
    }
}

/// Builds a grid MDP: one state per cell (plus a terminal state when the
/// layout uses one) and four moves. Goal, danger and hole cells are
/// absorbing.
pub fn build_grid(spec: &GridSpec) -> Result<Mdp, GridError> {
    spec.validate()?;
    let n = spec.num_states();
    let mut transition = vec![vec![vec![0.0; n]; Move::ALL.len()]; n];
    let mut reward = vec![vec![0.0; Move::ALL.len()]; n];
    for s in 0..spec.num_cells() {
        let cell = spec.cell(s);
        let absorbing = cell == spec.goal || spec.is_penalty(cell);
        for (a, &mv) in Move::ALL.iter().enumerate() {
            reward[s][a] = spec.cell_reward(cell);
            let row = &mut transition[s][a];
            if absorbing {
                row[spec.terminal().unwrap_or(s)] = 1.0;
                continue;
            }
            for (m, p) in spec.move_distribution(mv) {
                row[spec.index(spec.step(cell, m))] += p;
            }
        }
    }
    if let Some(term) = spec.terminal() {
        for row in &mut transition[term] {
            row[term] = 1.0;
        }
    }
    let mut initial = vec![0.0; n];
    initial[spec.index(spec.start)] = 1.0;
    let m = Mdp::new(transition, reward, initial).expect("grid builder keeps rows stochastic");
    Ok(m.with_labels(spec.labels()))
}

/// GridWorld with intended-move probability `p`.
pub fn build_gridworld(p: f64) -> Result<Mdp, GridError> {
    build_grid(&GridSpec::gridworld(p))
}

pub fn build_frozen_lake() -> Mdp {
    build_grid(&GridSpec::frozen_lake()).expect("frozen lake spec is valid")
}
