use serde::{Deserialize, Serialize};

use super::Container;

/// Degree of even distribution: summed neighbor diversity over ball count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomogeneityReading {
    /// In `[0, 3]`.
    pub raw: f64,
    /// `(raw - 1) / 2` clamped to `[0, 1]`, for display.
    pub normalized: f64,
    pub ball_count: usize,
}

impl HomogeneityReading {
    pub fn from_parts(diversity_sum: usize, ball_count: usize) -> Self {
        if ball_count == 0 {
            return Self {
                raw: 0.0,
                normalized: 0.0,
                ball_count: 0,
            };
        }
        let raw = diversity_sum as f64 / ball_count as f64;
        Self {
            raw,
            normalized: ((raw - 1.0) / 2.0).clamp(0.0, 1.0),
            ball_count,
        }
    }
}

/// For every ball, counts the distinct ball types among the occupied cells of
/// its 8-cell neighborhood, then averages over balls.
pub fn homogeneity(container: &Container) -> HomogeneityReading {
    let rows = container.rows() as isize;
    let cols = container.cols() as isize;
    let mut sum = 0usize;
    let mut balls = 0usize;
    for r in 0..rows {
        for c in 0..cols {
            if container.get(r as usize, c as usize).is_empty() {
                continue;
            }
            balls += 1;
            let mut seen = 0u8;
            for dr in -1..=1 {
                for dc in -1..=1 {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let (nr, nc) = (r + dr, c + dc);
                    if nr < 0 || nc < 0 || nr >= rows || nc >= cols {
                        continue;
                    }
                    if let Some(b) = container.get(nr as usize, nc as usize).ball() {
                        seen |= 1 << b.density_rank();
                    }
                }
            }
            sum += seen.count_ones() as usize;
        }
    }
    HomogeneityReading::from_parts(sum, balls)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{BallType, Cell};

    #[test]
    fn single_type_full() {
        let c = Container::from_fn(10, 10, |_, _| Cell::Ball(BallType::Light)).unwrap();
        let m = homogeneity(&c);
        assert_eq!(m.raw, 1.0);
        assert_eq!(m.normalized, 0.0);
        assert_eq!(m.ball_count, 100);
    }

    #[test]
    fn isolated_ball() {
        let c = Container::from_fn(10, 10, |r, col| {
            if r == 9 && col == 4 {
                Cell::Ball(BallType::Heavy)
            } else {
                Cell::Empty
            }
        })
        .unwrap();
        assert_eq!(homogeneity(&c).raw, 0.0);
    }

    #[test]
    fn empty_is_zero() {
        let m = homogeneity(&Container::new(3, 3).unwrap());
        assert_eq!((m.raw, m.normalized, m.ball_count), (0.0, 0.0, 0));
    }

    #[test]
    fn two_by_two_block() {
        use BallType::*;
        let c = Container::from_fn(4, 4, |r, col| match (r, col) {
            (2, 0) => Cell::Ball(Light),
            (2, 1) => Cell::Ball(Normal),
            (3, 0) => Cell::Ball(Normal),
            (3, 1) => Cell::Ball(Light),
            _ => Cell::Empty,
        })
        .unwrap();
        let m = homogeneity(&c);
        assert_eq!(m.raw, 2.0);
        assert_eq!(m.normalized, 0.5);
    }
}
