//! Shake curves for the two layered starting stacks.
//!
//! Heavy-on-top: heavy balls sink through the lighter layers, the mixture
//! peaks after a handful of shakes and restratifies when shaking continues.
//! Heavy-at-bottom: the stack is already gravity-stable and barely changes.
//!
//! ```bash
//! cargo run -p mixtwin --release --example mixing_dynamics
//! ```

use mixtwin::sim::{BallType, Cell, Container, RandomSource, ShakeConfig};

fn layered(heavy_on_top: bool) -> Container {
    Container::from_fn(10, 10, |r, _| {
        let ball = match (heavy_on_top, r) {
            (true, 0..=2) => BallType::Heavy,
            (true, 3..=5) => BallType::Normal,
            (true, _) => BallType::Light,
            (false, 0..=3) => BallType::Light,
            (false, 4..=6) => BallType::Normal,
            (false, _) => BallType::Heavy,
        };
        Cell::Ball(ball)
    })
    .expect("10x10 is a valid size")
}

fn mean_curve(heavy_on_top: bool, checkpoints: &[u32], seeds: u64) -> Vec<f64> {
    let config = ShakeConfig::default();
    let mut sums = vec![0.0; checkpoints.len()];
    for seed in 0..seeds {
        let mut container = layered(heavy_on_top);
        let mut rng = RandomSource::new(seed);
        let mut done = 0;
        for (i, &target) in checkpoints.iter().enumerate() {
            container.shake(target - done, &config, &mut rng);
            done = target;
            sums[i] += container.homogeneity().raw;
        }
    }
    sums.iter().map(|s| s / seeds as f64).collect()
}

fn main() {
    let checkpoints = [0, 2, 4, 8, 12, 16, 24, 32, 48, 64];
    let seeds = 200;
    for (label, heavy_on_top) in [("heavy on top", true), ("heavy at bottom", false)] {
        println!("{label} (mean raw metric over {seeds} seeds)");
        for (shakes, metric) in checkpoints.iter().zip(mean_curve(heavy_on_top, &checkpoints, seeds)) {
            println!("  shakes {shakes:>3}: {metric:.4}");
        }
    }
}
