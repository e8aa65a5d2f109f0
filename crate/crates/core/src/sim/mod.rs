//! Stochastic container-mixing simulator.
//!
//! The container is a `rows x cols` grid with row 0 at the top and gravity
//! pointing toward larger row indices. Balls are poured into random columns
//! and a shake lets heavier balls sink past lighter ones below them with a
//! probability that grows with the density gap.

mod metric;
mod rng;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use metric::{homogeneity, HomogeneityReading};
pub use rng::{derive_seed, RandomSource};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("container dimensions must be at least 1x1, got {rows}x{cols}")]
    Dimension { rows: usize, cols: usize },
    #[error("cannot add {requested} balls: only {free} free cells")]
    Capacity { requested: usize, free: usize },
    #[error("percent must be in 1..=100, got {0}")]
    Percent(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BallType {
    Light,
    Normal,
    Heavy,
}

impl BallType {
    pub const ALL: [BallType; 3] = [BallType::Light, BallType::Normal, BallType::Heavy];

    /// Density ordering, also the numeric cell code.
    pub fn density_rank(self) -> u8 {
        match self {
            BallType::Light => 1,
            BallType::Normal => 2,
            BallType::Heavy => 3,
        }
    }

    pub fn from_rank(rank: u8) -> Option<Self> {
        match rank {
            1 => Some(BallType::Light),
            2 => Some(BallType::Normal),
            3 => Some(BallType::Heavy),
            _ => None,
        }
    }

    /// One-letter symbol used in function-call arguments (`L`, `N`, `H`).
    pub fn symbol(self) -> &'static str {
        match self {
            BallType::Light => "L",
            BallType::Normal => "N",
            BallType::Heavy => "H",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        match s {
            "L" => Some(BallType::Light),
            "N" => Some(BallType::Normal),
            "H" => Some(BallType::Heavy),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BallType::Light => "light",
            BallType::Normal => "normal",
            BallType::Heavy => "heavy",
        }
    }
}

impl fmt::Display for BallType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Cell {
    #[default]
    Empty,
    Ball(BallType),
}

impl Cell {
    /// 0 for empty, otherwise the ball's density rank.
    pub fn code(self) -> u8 {
        match self {
            Cell::Empty => 0,
            Cell::Ball(b) => b.density_rank(),
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        if code == 0 {
            Some(Cell::Empty)
        } else {
            BallType::from_rank(code).map(Cell::Ball)
        }
    }

    pub fn ball(self) -> Option<BallType> {
        match self {
            Cell::Empty => None,
            Cell::Ball(b) => Some(b),
        }
    }

    pub fn is_empty(self) -> bool {
        self == Cell::Empty
    }
}

/// Swap probabilities per density gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShakeConfig {
    pub p_gap1: f64,
    pub p_gap2: f64,
}

impl Default for ShakeConfig {
    fn default() -> Self {
        Self {
            p_gap1: 0.35,
            p_gap2: 0.6,
        }
    }
}

impl ShakeConfig {
    pub fn new(p_gap1: f64, p_gap2: f64) -> Result<Self, String> {
        let cfg = Self { p_gap1, p_gap2 };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Requires `0 <= p_gap1 <= p_gap2 <= 1`.
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.p_gap1) || !(0.0..=1.0).contains(&self.p_gap2) {
            return Err(format!(
                "swap probabilities must lie in [0, 1], got p_gap1={} p_gap2={}",
                self.p_gap1, self.p_gap2
            ));
        }
        if self.p_gap1 > self.p_gap2 {
            return Err(format!(
                "p_gap1 ({}) must not exceed p_gap2 ({})",
                self.p_gap1, self.p_gap2
            ));
        }
        Ok(())
    }

    pub fn swap_probability(&self, gap: u8) -> f64 {
        match gap {
            0 => 0.0,
            1 => self.p_gap1,
            _ => self.p_gap2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TypeCounts {
    pub light: usize,
    pub normal: usize,
    pub heavy: usize,
}

impl TypeCounts {
    pub fn get(&self, ball: BallType) -> usize {
        match ball {
            BallType::Light => self.light,
            BallType::Normal => self.normal,
            BallType::Heavy => self.heavy,
        }
    }

    fn bump(&mut self, ball: BallType) {
        match ball {
            BallType::Light => self.light += 1,
            BallType::Normal => self.normal += 1,
            BallType::Heavy => self.heavy += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.light + self.normal + self.heavy
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Container {
    rows: usize,
    cols: usize,
    cells: Vec<Cell>,
}

impl Container {
    pub fn new(rows: usize, cols: usize) -> Result<Self, SimError> {
        if rows == 0 || cols == 0 {
            return Err(SimError::Dimension { rows, cols });
        }
        Ok(Self {
            rows,
            cols,
            cells: vec![Cell::Empty; rows * cols],
        })
    }

    /// Builds a container from row-major cells without checking support.
    /// Use [`Container::is_supported`] or [`Container::settle`] afterwards
    /// when the layout may contain floating balls.
    pub fn from_cells(rows: usize, cols: usize, cells: Vec<Cell>) -> Result<Self, SimError> {
        if rows == 0 || cols == 0 || cells.len() != rows * cols {
            return Err(SimError::Dimension { rows, cols });
        }
        Ok(Self { rows, cols, cells })
    }

    /// Builds a container by evaluating `f(row, col)` for every cell.
    pub fn from_fn(
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> Cell,
    ) -> Result<Self, SimError> {
        let mut c = Self::new(rows, cols)?;
        for r in 0..rows {
            for col in 0..cols {
                c.cells[r * cols + col] = f(r, col);
            }
        }
        Ok(c)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn capacity(&self) -> usize {
        self.rows * self.cols
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn get(&self, row: usize, col: usize) -> Cell {
        self.cells[row * self.cols + col]
    }

    pub fn occupied(&self) -> usize {
        self.cells.iter().filter(|c| !c.is_empty()).count()
    }

    pub fn free_cells(&self) -> usize {
        self.capacity() - self.occupied()
    }

    pub fn type_counts(&self) -> TypeCounts {
        let mut counts = TypeCounts::default();
        for ball in self.cells.iter().filter_map(|c| c.ball()) {
            counts.bump(ball);
        }
        counts
    }

    /// True when no occupied cell has an empty cell directly beneath it.
    pub fn is_supported(&self) -> bool {
        (0..self.rows - 1).all(|r| {
            (0..self.cols).all(|c| self.get(r, c).is_empty() || !self.get(r + 1, c).is_empty())
        })
    }

    /// Number of balls `percent` of the capacity corresponds to (half rounds up).
    pub fn balls_for_percent(&self, percent: u32) -> usize {
        (percent as usize * self.capacity() + 50) / 100
    }

    /// Pours `percent` of the capacity as `ball` balls, one at a time, each
    /// landing on top of a uniformly drawn column that still has room.
    /// Returns the number of balls added. The container is untouched on error.
    pub fn add_balls(
        &mut self,
        ball: BallType,
        percent: u32,
        rng: &mut RandomSource,
    ) -> Result<usize, SimError> {
        if !(1..=100).contains(&percent) {
            return Err(SimError::Percent(percent));
        }
        let count = self.balls_for_percent(percent);
        let free = self.free_cells();
        if count > free {
            return Err(SimError::Capacity {
                requested: count,
                free,
            });
        }
        let mut open: Vec<usize> = Vec::with_capacity(self.cols);
        for _ in 0..count {
            open.clear();
            open.extend((0..self.cols).filter(|&c| self.lowest_empty(c).is_some()));
            let col = open[rng.below(open.len())];
            let row = self.lowest_empty(col).expect("column has room");
            self.cells[row * self.cols + col] = Cell::Ball(ball);
        }
        Ok(count)
    }

    fn lowest_empty(&self, col: usize) -> Option<usize> {
        (0..self.rows).rev().find(|&r| self.get(r, col).is_empty())
    }

    /// Applies `times` shake sweeps, settling after each.
    pub fn shake(&mut self, times: u32, config: &ShakeConfig, rng: &mut RandomSource) {
        for _ in 0..times {
            self.sweep(config, rng);
            self.settle();
        }
    }

    /// One pass of the sinking rule. Rows are visited from the second-to-bottom
    /// row upward, columns in a fresh random order per row. Each ball looks at
    /// the three cells beneath it in random order: it drops into the first empty
    /// one, otherwise it may swap with the first strictly lighter one. A ball
    /// moves at most once per sweep.
    fn sweep(&mut self, config: &ShakeConfig, rng: &mut RandomSource) {
        if self.rows < 2 {
            return;
        }
        let cols = self.cols;
        let mut moved = vec![false; self.cells.len()];
        let mut order: Vec<usize> = (0..cols).collect();
        let mut below: Vec<usize> = Vec::with_capacity(3);
        for r in (0..self.rows - 1).rev() {
            rng.shuffle(&mut order);
            for &c in &order {
                let here = r * cols + c;
                let Cell::Ball(ball) = self.cells[here] else {
                    continue;
                };
                if moved[here] {
                    continue;
                }
                below.clear();
                below.push((r + 1) * cols + c);
                if c > 0 {
                    below.push((r + 1) * cols + c - 1);
                }
                if c + 1 < cols {
                    below.push((r + 1) * cols + c + 1);
                }
                rng.shuffle(&mut below);

                if let Some(&target) = below.iter().find(|&&t| self.cells[t].is_empty()) {
                    self.cells.swap(here, target);
                    moved[target] = true;
                    continue;
                }
                let lighter = below.iter().copied().find(|&t| match self.cells[t] {
                    Cell::Ball(other) => other.density_rank() < ball.density_rank(),
                    Cell::Empty => false,
                });
                if let Some(target) = lighter {
                    let other = self.cells[target].ball().expect("occupied");
                    let gap = ball.density_rank() - other.density_rank();
                    if rng.chance(config.swap_probability(gap)) {
                        self.cells.swap(here, target);
                        moved[here] = true;
                        moved[target] = true;
                    }
                }
            }
        }
    }

    /// Lets every ball fall until it rests on the bottom row or another ball.
    /// Vertical order within a column is preserved.
    pub fn settle(&mut self) {
        let cols = self.cols;
        for c in 0..cols {
            let mut write = self.rows;
            for r in (0..self.rows).rev() {
                let cell = self.cells[r * cols + c];
                if !cell.is_empty() {
                    write -= 1;
                    if write != r {
                        self.cells[write * cols + c] = cell;
                        self.cells[r * cols + c] = Cell::Empty;
                    }
                }
            }
        }
    }

    pub fn homogeneity(&self) -> HomogeneityReading {
        homogeneity(self)
    }
}
