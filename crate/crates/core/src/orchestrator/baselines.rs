//! Non-agent parameter searches over (pour composition, shake count).

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{derive_seed, BallType, Container, RandomSource, ShakeConfig, SimError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Batch {
    pub ball: BallType,
    pub percent: u32,
}

/// An ordered pour composition followed by one shake phase.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Setting {
    pub composition: Vec<Batch>,
    pub shake_times: u32,
}

impl Setting {
    fn canonical_key(&self) -> (u32, usize, Vec<(u8, u32)>) {
        (
            self.shake_times,
            self.composition.len(),
            self.composition
                .iter()
                .map(|b| (b.ball.density_rank(), b.percent))
                .collect(),
        )
    }

    /// Compact form such as `40%L-20%H-30%N-10%H`.
    pub fn composition_string(&self) -> String {
        self.composition
            .iter()
            .map(|b| format!("{}%{}", b.percent, b.ball.symbol()))
            .collect::<Vec<_>>()
            .join("-")
    }

    pub fn total_percent(&self) -> u32 {
        self.composition.iter().map(|b| b.percent).sum()
    }
}

impl Ord for Setting {
    fn cmp(&self, other: &Self) -> Ordering {
        self.canonical_key().cmp(&other.canonical_key())
    }
}

impl PartialOrd for Setting {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} shake x{}", self.composition_string(), self.shake_times)
    }
}

/// Finite search space: non-empty sequences of at most `max_batches`
/// batches whose percents sum to at most 100, times a shake range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    pub rows: usize,
    pub cols: usize,
    pub ball_types: Vec<BallType>,
    /// Allowed batch percents, ascending and distinct.
    pub percents: Vec<u32>,
    pub max_batches: usize,
    pub shake_min: u32,
    pub shake_max: u32,
    pub shake_config: ShakeConfig,
}

impl ParamSpace {
    /// 10x10 container, three types, 10% steps, up to six batches, 0..=20 shakes.
    pub fn standard() -> Self {
        Self {
            rows: 10,
            cols: 10,
            ball_types: BallType::ALL.to_vec(),
            percents: (1..=10).map(|k| k * 10).collect(),
            max_batches: 6,
            shake_min: 0,
            shake_max: 20,
            shake_config: ShakeConfig::default(),
        }
    }

    /// 4x4 container, light and heavy, 25%/50% batches, 0..=5 shakes.
    pub fn toy() -> Self {
        Self {
            rows: 4,
            cols: 4,
            ball_types: vec![BallType::Light, BallType::Heavy],
            percents: vec![25, 50],
            max_batches: 4,
            shake_min: 0,
            shake_max: 5,
            shake_config: ShakeConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), BaselineError> {
        let arg = |m: &str| Err(BaselineError::Argument(m.into()));
        if self.rows == 0 || self.cols == 0 {
            return arg("container dimensions must be at least 1");
        }
        if self.ball_types.is_empty() || self.percents.is_empty() || self.max_batches == 0 {
            return arg("ball types, percents and max_batches must be non-empty");
        }
        if !self.percents.windows(2).all(|w| w[0] < w[1]) || self.percents[0] == 0 || *self.percents.last().unwrap() > 100
        {
            return arg("percents must be ascending, distinct and within 1..=100");
        }
        if self.shake_min > self.shake_max {
            return arg("shake_min exceeds shake_max");
        }
        self.shake_config.validate().map_err(BaselineError::Argument)
    }

    fn shake_count(&self) -> u64 {
        (self.shake_max - self.shake_min) as u64 + 1
    }

    /// Compositions using at most `batches` more batches within `budget` percent, including the empty tail.
    fn tails(&self, budget: u32, batches: usize, memo: &mut HashMap<(u32, usize), u64>) -> u64 {
        if batches == 0 {
            return 1;
        }
        if let Some(&n) = memo.get(&(budget, batches)) {
            return n;
        }
        let mut n = 1;
        for &p in self.percents.iter().filter(|&&p| p <= budget) {
            n += self.ball_types.len() as u64 * self.tails(budget - p, batches - 1, memo);
        }
        memo.insert((budget, batches), n);
        n
    }

    pub fn composition_count(&self) -> u64 {
        self.tails(100, self.max_batches, &mut HashMap::new()) - 1
    }

    pub fn size(&self) -> u64 {
        self.composition_count() * self.shake_count()
    }

    /// The `index`-th setting in a fixed enumeration order.
    pub fn setting_at(&self, index: u64) -> Setting {
        let shakes = self.shake_count();
        let mut rest = index / shakes;
        let shake_times = self.shake_min + (index % shakes) as u32;
        let mut memo = HashMap::new();
        let mut composition = Vec::new();
        let (mut budget, mut batches) = (100u32, self.max_batches);
        // rank 0 of a tail is "stop here"; the first batch is mandatory
        rest += 1;
        'outer: while rest > 0 {
            rest -= 1;
            for &p in self.percents.iter().filter(|&&p| p <= budget) {
                for &ball in &self.ball_types {
                    let block = self.tails(budget - p, batches - 1, &mut memo);
                    if rest < block {
                        composition.push(Batch { ball, percent: p });
                        budget -= p;
                        batches -= 1;
                        continue 'outer;
                    }
                    rest -= block;
                }
            }
            unreachable!("index {index} out of range");
        }
        Setting {
            composition,
            shake_times,
        }
    }

    pub fn contains(&self, s: &Setting) -> bool {
        !s.composition.is_empty()
            && s.composition.len() <= self.max_batches
            && s.total_percent() <= 100
            && (self.shake_min..=self.shake_max).contains(&s.shake_times)
            && s.composition
                .iter()
                .all(|b| self.ball_types.contains(&b.ball) && self.percents.contains(&b.percent))
    }

    fn step(&self, percent: u32, up: bool) -> Option<u32> {
        let i = self.percents.iter().position(|&p| p == percent)?;
        if up {
            self.percents.get(i + 1).copied()
        } else {
            i.checked_sub(1).map(|j| self.percents[j])
        }
    }

    /// Local moves: swap adjacent batches, move one percent step between
    /// adjacent batches (a plain step for a single batch), and +-1 shake.
    pub fn neighbors(&self, s: &Setting) -> Vec<Setting> {
        let mut out = BTreeSet::new();
        let n = s.composition.len();
        for i in 0..n.saturating_sub(1) {
            let mut t = s.clone();
            t.composition.swap(i, i + 1);
            out.insert(t);
        }
        for i in 0..n {
            for up in [true, false] {
                let Some(p) = self.step(s.composition[i].percent, up) else {
                    continue;
                };
                let delta = p as i64 - s.composition[i].percent as i64;
                if n == 1 {
                    let mut t = s.clone();
                    t.composition[0].percent = p;
                    out.insert(t);
                    continue;
                }
                for j in [i.wrapping_sub(1), i + 1] {
                    let Some(other) = s.composition.get(j) else { continue };
                    let target = other.percent as i64 - delta;
                    if target > 0 && self.percents.contains(&(target as u32)) {
                        let mut t = s.clone();
                        t.composition[i].percent = p;
                        t.composition[j].percent = target as u32;
                        out.insert(t);
                    }
                }
            }
        }
        for shake in [s.shake_times.checked_sub(1), s.shake_times.checked_add(1)].into_iter().flatten() {
            out.insert(Setting {
                shake_times: shake,
                ..s.clone()
            });
        }
        out.remove(s);
        out.into_iter().filter(|t| self.contains(t)).collect()
    }
}

/// Mean raw metric over `eval_seeds` independent simulations of one setting.
pub fn evaluate(setting: &Setting, space: &ParamSpace, eval_seeds: u32, seed: u64) -> Result<f64, BaselineError> {
    if eval_seeds == 0 {
        return Err(BaselineError::Argument("eval_seeds must be at least 1".into()));
    }
    let mut total = 0.0;
    for j in 0..eval_seeds {
        let mut rng = RandomSource::new(derive_seed(seed, j as u64));
        let mut c = Container::new(space.rows, space.cols)?;
        for b in &setting.composition {
            c.add_balls(b.ball, b.percent, &mut rng)?;
        }
        c.shake(setting.shake_times, &space.shake_config, &mut rng);
        total += c.homogeneity().raw;
    }
    Ok(total / eval_seeds as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestParams {
    pub setting: Setting,
    pub score: f64,
    /// Settings evaluated, each over `eval_seeds` simulations.
    pub evaluations_used: u64,
}

/// Strictly better score, or an equal score and an earlier canonical setting.
fn improves(score: f64, setting: &Setting, best: &Option<BestParams>) -> bool {
    match best {
        None => true,
        Some(b) => score > b.score || (score == b.score && setting < &b.setting),
    }
}

/// Evaluates `min(trials, size)` distinct settings drawn uniformly.
pub fn random_search(
    space: &ParamSpace,
    trials: u64,
    eval_seeds: u32,
    seed: u64,
) -> Result<BestParams, BaselineError> {
    space.validate()?;
    if trials == 0 {
        return Err(BaselineError::Argument("trials must be at least 1".into()));
    }
    let size = space.size();
    let indices: Vec<u64> = if trials >= size {
        (0..size).collect()
    } else {
        let mut rng = RandomSource::new(derive_seed(seed, u64::MAX));
        let mut seen = BTreeSet::new();
        let mut order = Vec::new();
        while (order.len() as u64) < trials {
            let i = rng.below(size as usize) as u64;
            if seen.insert(i) {
                order.push(i);
            }
        }
        order
    };
    let mut best: Option<BestParams> = None;
    for &i in &indices {
        let setting = space.setting_at(i);
        let score = evaluate(&setting, space, eval_seeds, seed)?;
        if improves(score, &setting, &best) {
            best = Some(BestParams {
                setting,
                score,
                evaluations_used: 0,
            });
        }
    }
    let mut best = best.expect("at least one trial");
    best.evaluations_used = indices.len() as u64;
    Ok(best)
}

/// Steepest-ascent hill climbing from `start`; stops at a local optimum or after `max_steps` moves.
pub fn hill_climb(
    space: &ParamSpace,
    start: Setting,
    max_steps: u32,
    eval_seeds: u32,
    seed: u64,
) -> Result<BestParams, BaselineError> {
    space.validate()?;
    if !space.contains(&start) {
        return Err(BaselineError::Argument(format!("start setting {start} is outside the space")));
    }
    let mut cache: HashMap<Setting, f64> = HashMap::new();
    let mut score_of = |s: &Setting| -> Result<f64, BaselineError> {
        if let Some(&v) = cache.get(s) {
            return Ok(v);
        }
        let v = evaluate(s, space, eval_seeds, seed)?;
        cache.insert(s.clone(), v);
        Ok(v)
    };
    let mut current = BestParams {
        score: score_of(&start)?,
        setting: start,
        evaluations_used: 0,
    };
    for _ in 0..max_steps {
        let mut best: Option<BestParams> = None;
        for n in space.neighbors(&current.setting) {
            let score = score_of(&n)?;
            if improves(score, &n, &best) {
                best = Some(BestParams {
                    setting: n,
                    score,
                    evaluations_used: 0,
                });
            }
        }
        match best {
            Some(b) if b.score > current.score => current = b,
            _ => break,
        }
    }
    current.evaluations_used = cache.len() as u64;
    Ok(current)
}

/// Uniform random member of the space.
pub fn random_setting(space: &ParamSpace, rng: &mut RandomSource) -> Setting {
    space.setting_at(rng.below(space.size() as usize) as u64)
}
