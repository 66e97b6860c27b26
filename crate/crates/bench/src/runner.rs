//! Drives optimizers through the 16-batch protocol on builtin objectives.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use squirrel_core::scheduler::{BATCH_SIZE, TOTAL_BATCHES};
use squirrel_core::{Configuration, Optimizer, OptimizerConfig, Registry};

use crate::functions::FuncSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OptimizerKind {
    Squirrel,
    Random,
}

impl OptimizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::Squirrel => "squirrel",
            OptimizerKind::Random => "random",
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "squirrel" => Ok(OptimizerKind::Squirrel),
            "random" => Ok(OptimizerKind::Random),
            other => Err(format!("unknown optimizer `{other}` (expected squirrel or random)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub function: String,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    /// Best value after each of the 16 batches.
    pub best_so_far: Vec<f64>,
    /// Cumulative wall time after each batch, in seconds.
    pub wall_time_s: Vec<f64>,
    /// Time spent inside suggest/observe, excluding objective evaluations.
    pub optimizer_time: Duration,
}

impl RunResult {
    pub fn final_best(&self) -> f64 {
        self.best_so_far.last().copied().unwrap_or(f64::INFINITY)
    }
}

/// Evaluates `config`, mapping panics and NaN to `+inf`.
pub fn safe_evaluate(func: &FuncSpec, config: &Configuration) -> f64 {
    match catch_unwind(AssertUnwindSafe(|| func.evaluate(config))) {
        Ok(y) if !y.is_nan() => y,
        _ => f64::INFINITY,
    }
}

pub fn run_one(
    func: &FuncSpec,
    kind: OptimizerKind,
    seed: u64,
    registry: Option<&Registry>,
    config: &OptimizerConfig,
) -> RunResult {
    let start = Instant::now();
    let mut optimizer_time = Duration::ZERO;
    let mut best = f64::INFINITY;
    let mut best_so_far = Vec::with_capacity(TOTAL_BATCHES);
    let mut wall_time_s = Vec::with_capacity(TOTAL_BATCHES);
    let mut record = |values: &[f64], best: &mut f64| {
        for &y in values {
            if y < *best {
                *best = y;
            }
        }
        best_so_far.push(*best);
        wall_time_s.push(start.elapsed().as_secs_f64());
    };
    match kind {
        OptimizerKind::Squirrel => {
            let t = Instant::now();
            let mut opt = Optimizer::new(func.space.clone(), config.clone(), registry, seed);
            optimizer_time += t.elapsed();
            while !opt.is_finished() {
                let t = Instant::now();
                let batch = opt.suggest().expect("suggest follows observe");
                optimizer_time += t.elapsed();
                let values: Vec<f64> = batch.iter().map(|c| safe_evaluate(func, c)).collect();
                let t = Instant::now();
                opt.observe_values(&values).expect("values match the batch");
                optimizer_time += t.elapsed();
                record(&values, &mut best);
            }
        }
        OptimizerKind::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..TOTAL_BATCHES {
                let t = Instant::now();
                let batch: Vec<Configuration> =
                    (0..BATCH_SIZE).map(|_| func.space.sample_random(&mut rng)).collect();
                optimizer_time += t.elapsed();
                let values: Vec<f64> = batch.iter().map(|c| safe_evaluate(func, c)).collect();
                record(&values, &mut best);
            }
        }
    }
    RunResult {
        function: func.name.to_string(),
        optimizer: kind,
        seed,
        best_so_far,
        wall_time_s,
        optimizer_time,
    }
}

/// Runs every (function, optimizer, seed) combination on `threads` worker
/// threads. Results come back sorted by function order, optimizer, seed.
pub fn run_experiment(
    functions: &[FuncSpec],
    kinds: &[OptimizerKind],
    seeds: &[u64],
    registry: Option<&Registry>,
    config: &OptimizerConfig,
    threads: usize,
) -> Vec<RunResult> {
    let mut jobs = Vec::new();
    for (fi, _) in functions.iter().enumerate() {
        for &kind in kinds {
            for &seed in seeds {
                jobs.push((fi, kind, seed));
            }
        }
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<RunResult>>> = Mutex::new(vec![None; jobs.len()]);
    std::thread::scope(|scope| {
        for _ in 0..threads.max(1).min(jobs.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(fi, kind, seed)) = jobs.get(i) else {
                    break;
                };
                let r = run_one(&functions[fi], kind, seed, registry, config);
                results.lock().expect("no poisoned workers")[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("no poisoned workers")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

/// Parses `a..b` (inclusive) or a comma-separated list of seeds.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, String> {
    let text = text.trim();
    let seeds: Vec<u64> = if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| format!("bad seed range `{text}`"))?;
        let b: u64 = b.trim().parse().map_err(|_| format!("bad seed range `{text}`"))?;
        if b < a {
            return Err(format!("empty seed range `{text}`"));
        }
        (a..=b).collect()
    } else {
        text.split(',')
            .map(|s| s.trim().parse().map_err(|_| format!("bad seed `{s}`")))
            .collect::<Result<_, _>>()?
    };
    if seeds.is_empty() {
        return Err("no seeds given".into());
    }
    Ok(seeds)
}
