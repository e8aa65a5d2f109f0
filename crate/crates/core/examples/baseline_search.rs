//! Random search and hill climbing over pour compositions and shake counts,
//! compared with the agent pipeline.
//!
//! ```bash
//! cargo run -p mixtwin --release --example baseline_search
//! ```

use mixtwin::bench::{run_bench, BenchConfig, Strategy};
use mixtwin::orchestrator::baselines::{hill_climb, random_search, ParamSpace};

fn main() {
    let toy = ParamSpace::toy();
    let exhaustive = random_search(&toy, toy.size(), 5, 11).expect("valid space");
    println!(
        "toy space ({} settings) exhaustive optimum: {} mean {:.4}",
        toy.size(),
        exhaustive.setting,
        exhaustive.score
    );

    let space = ParamSpace::standard();
    println!("standard space: {} settings", space.size());
    let random = random_search(&space, 40, 3, 1).expect("valid space");
    println!("random search (40 trials): {} mean {:.4}", random.setting, random.score);
    let climbed = hill_climb(&space, random.setting.clone(), 8, 3, 1).expect("valid start");
    println!(
        "hill climb from there: {} mean {:.4} ({} simulator runs)",
        climbed.setting, climbed.score, climbed.evaluations_used
    );

    let bench = BenchConfig {
        strategies: vec![Strategy::Heuristic, Strategy::Random, Strategy::HillClimb],
        trials: 2,
        seeds: 3,
        ..BenchConfig::default()
    };
    println!("\nstrategy   trial  mean    setting");
    for row in run_bench(&bench).expect("bench runs") {
        println!(
            "{:<10} {:>5}  {:.4}  {} shake x{}",
            row.strategy, row.trial, row.mean_metric, row.composition, row.shake_times
        );
    }
}
