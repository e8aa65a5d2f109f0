//! Data and control interfaces of the mixing twin.
//!
//! The data side turns a [`Container`] into the fixed text matrix agents read
//! ([`render_text`]) and back ([`parse_text`]). The control side is the
//! [`FunctionRegistry`], which validates JSON function calls and applies them.

mod registry;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{homogeneity, Cell, Container, HomogeneityReading, TypeCounts};

pub use registry::{
    ArgKind, ArgSchema, CallError, ExecutionOutcome, FinishStatus, FunctionCall, FunctionRegistry,
    FunctionSchema, DEFAULT_MAX_SHAKE_PER_CALL,
};

/// Final line of every rendered grid.
pub const LEGEND: &str = "0=empty 1=light 2=normal 3=heavy";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("grid text has no rows")]
    Empty,
    #[error("row {row} has {found} cells, expected {expected}")]
    Ragged {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("unknown cell code {token:?} at row {row}")]
    UnknownCode { row: usize, token: String },
}

/// Rows top to bottom, codes separated by single spaces, then the legend.
pub fn render_text(container: &Container) -> String {
    let mut out = String::with_capacity(container.capacity() * 2 + LEGEND.len() + 1);
    for r in 0..container.rows() {
        for c in 0..container.cols() {
            if c > 0 {
                out.push(' ');
            }
            out.push(char::from(b'0' + container.get(r, c).code()));
        }
        out.push('\n');
    }
    out.push_str(LEGEND);
    out
}

/// Inverse of [`render_text`]. The legend line is optional; blank lines are
/// ignored. Floating balls are accepted as-is.
pub fn parse_text(text: &str) -> Result<Container, FormatError> {
    let mut cells = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for line in text.lines().map(str::trim) {
        if line.is_empty() || line == LEGEND {
            continue;
        }
        let mut width = 0;
        for token in line.split_whitespace() {
            let cell = token
                .parse::<u8>()
                .ok()
                .and_then(Cell::from_code)
                .ok_or_else(|| FormatError::UnknownCode {
                    row: rows,
                    token: token.to_string(),
                })?;
            cells.push(cell);
            width += 1;
        }
        match cols {
            None => cols = Some(width),
            Some(expected) if expected != width => {
                return Err(FormatError::Ragged {
                    row: rows,
                    found: width,
                    expected,
                })
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or(FormatError::Empty)?;
    Container::from_cells(rows, cols, cells).map_err(|_| FormatError::Empty)
}

/// What the data interface hands to the observation agent each cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSnapshot {
    pub grid_text: String,
    pub rows: usize,
    pub cols: usize,
    pub counts: TypeCounts,
    pub free_cells: usize,
    pub metric: HomogeneityReading,
    pub run_index: u32,
    pub cycle_index: u32,
    pub shakes_so_far: u32,
}

impl SimulationSnapshot {
    pub fn capture(container: &Container, run_index: u32, cycle_index: u32, shakes_so_far: u32) -> Self {
        Self {
            grid_text: render_text(container),
            rows: container.rows(),
            cols: container.cols(),
            counts: container.type_counts(),
            free_cells: container.free_cells(),
            metric: homogeneity(container),
            run_index,
            cycle_index,
            shakes_so_far,
        }
    }

    pub fn capacity(&self) -> usize {
        self.rows * self.cols
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{BallType, RandomSource};

    #[test]
    fn empty_grid_renders_zeros() {
        let text = render_text(&Container::new(10, 10).unwrap());
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 11);
        assert!(lines[..10].iter().all(|l| *l == "0 0 0 0 0 0 0 0 0 0"));
        assert_eq!(lines[10], LEGEND);
    }

    #[test]
    fn small_grid_render() {
        let c = Container::from_fn(2, 2, |r, col| {
            if (r, col) == (1, 0) {
                Cell::Ball(BallType::Light)
            } else {
                Cell::Empty
            }
        })
        .unwrap();
        assert_eq!(render_text(&c), format!("0 0\n1 0\n{LEGEND}"));
    }

    #[test]
    fn parse_zeros_and_bad_codes() {
        let zeros = "0 0 0 0 0 0 0 0 0 0\n".repeat(10);
        assert_eq!(parse_text(&zeros).unwrap(), Container::new(10, 10).unwrap());
        assert!(matches!(
            parse_text("0 0\n0 4\n"),
            Err(FormatError::UnknownCode { row: 1, .. })
        ));
        assert!(matches!(
            parse_text("0 0\n0 0 0\n"),
            Err(FormatError::Ragged { row: 1, found: 3, expected: 2 })
        ));
        assert_eq!(parse_text(LEGEND), Err(FormatError::Empty));
    }

    #[test]
    fn snapshot_fields() {
        let empty = SimulationSnapshot::capture(&Container::new(10, 10).unwrap(), 0, 0, 0);
        assert_eq!(empty.counts.total(), 0);
        assert_eq!(empty.metric.raw, 0.0);
        assert_eq!(empty.free_cells, 100);

        let full = Container::from_fn(10, 10, |_, _| Cell::Ball(BallType::Light)).unwrap();
        let snap = SimulationSnapshot::capture(&full, 1, 2, 3);
        assert_eq!(snap.counts.light, 100);
        assert_eq!(snap.metric.raw, 1.0);

        let mut mixed = Container::new(10, 10).unwrap();
        let mut rng = RandomSource::new(4);
        use BallType::*;
        for (b, p) in [(Light, 20), (Normal, 20), (Heavy, 20), (Light, 20), (Normal, 10), (Heavy, 10)] {
            mixed.add_balls(b, p, &mut rng).unwrap();
        }
        let snap = SimulationSnapshot::capture(&mixed, 1, 6, 0);
        assert_eq!((snap.counts.light, snap.counts.normal, snap.counts.heavy), (40, 30, 30));
        let reparsed = parse_text(&snap.grid_text).unwrap();
        assert_eq!(reparsed.type_counts(), snap.counts);
        assert_eq!(homogeneity(&reparsed), snap.metric);
    }
}
