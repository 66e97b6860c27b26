//! Results CSV and summary statistics.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::time::Duration;

use crate::runner::{OptimizerKind, RunResult};

pub const HEADER: [&str; 6] = ["function", "optimizer", "seed", "batch", "best_so_far", "wall_time_s"];

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("row {row}: {reason}")]
    BadRow { row: usize, reason: String },
}

pub fn write_csv<W: io::Write>(results: &[RunResult], writer: W) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(HEADER)?;
    for r in results {
        for (batch, (best, wall)) in r.best_so_far.iter().zip(&r.wall_time_s).enumerate() {
            w.write_record([
                r.function.clone(),
                r.optimizer.to_string(),
                r.seed.to_string(),
                batch.to_string(),
                best.to_string(),
                format!("{wall:.6}"),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: io::Read>(reader: R) -> Result<Vec<RunResult>, ReportError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != HEADER {
        return Err(ReportError::BadRow {
            row: 0,
            reason: format!("expected header {}", HEADER.join(",")),
        });
    }
    let mut results: Vec<RunResult> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let bad = |reason: String| ReportError::BadRow { row, reason };
        let optimizer: OptimizerKind = record[1].parse().map_err(bad)?;
        let seed: u64 = record[2].parse().map_err(|_| bad(format!("bad seed `{}`", &record[2])))?;
        let batch: usize = record[3].parse().map_err(|_| bad(format!("bad batch `{}`", &record[3])))?;
        let best: f64 = record[4].parse().map_err(|_| bad(format!("bad value `{}`", &record[4])))?;
        let wall: f64 = record[5].parse().map_err(|_| bad(format!("bad time `{}`", &record[5])))?;
        let same_run = results.last().is_some_and(|r| {
            r.function == record[0] && r.optimizer == optimizer && r.seed == seed
        });
        if !same_run {
            results.push(RunResult {
                function: record[0].to_string(),
                optimizer,
                seed,
                best_so_far: Vec::new(),
                wall_time_s: Vec::new(),
                optimizer_time: Duration::ZERO,
            });
        }
        let run = results.last_mut().expect("pushed above");
        if batch != run.best_so_far.len() {
            return Err(bad(format!("batch {batch} out of order")));
        }
        run.best_so_far.push(best);
        run.wall_time_s.push(wall);
    }
    Ok(results)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionSummary {
    pub function: String,
    pub medians: BTreeMap<OptimizerKind, f64>,
    /// Squirrel vs random on common seeds: (wins, ties, losses).
    pub paired: Option<(usize, usize, usize)>,
}

pub fn summarize(results: &[RunResult]) -> Vec<FunctionSummary> {
    let mut order: Vec<&str> = Vec::new();
    for r in results {
        if !order.contains(&r.function.as_str()) {
            order.push(&r.function);
        }
    }
    order
        .into_iter()
        .map(|function| {
            let finals = |kind: OptimizerKind| -> BTreeMap<u64, f64> {
                results
                    .iter()
                    .filter(|r| r.function == function && r.optimizer == kind)
                    .map(|r| (r.seed, r.final_best()))
                    .collect()
            };
            let squirrel = finals(OptimizerKind::Squirrel);
            let random = finals(OptimizerKind::Random);
            let mut medians = BTreeMap::new();
            for (kind, map) in [(OptimizerKind::Squirrel, &squirrel), (OptimizerKind::Random, &random)] {
                if !map.is_empty() {
                    medians.insert(kind, median(&map.values().copied().collect::<Vec<_>>()));
                }
            }
            let paired = (!squirrel.is_empty() && !random.is_empty()).then(|| {
                let mut tally = (0, 0, 0);
                for (seed, s) in &squirrel {
                    if let Some(r) = random.get(seed) {
                        match s.total_cmp(r) {
                            std::cmp::Ordering::Less => tally.0 += 1,
                            std::cmp::Ordering::Equal => tally.1 += 1,
                            std::cmp::Ordering::Greater => tally.2 += 1,
                        }
                    }
                }
                tally
            });
            FunctionSummary {
                function: function.to_string(),
                medians,
                paired,
            }
        })
        .collect()
}

pub fn format_summary(summaries: &[FunctionSummary]) -> String {
    let mut out = String::new();
    for s in summaries {
        let medians: Vec<String> = s
            .medians
            .iter()
            .map(|(k, v)| format!("{k}={v:.6e}"))
            .collect();
        let _ = write!(out, "{:<14} median final best: {}", s.function, medians.join(" "));
        if let Some((w, t, l)) = s.paired {
            let n = (w + t + l).max(1);
            let _ = write!(
                out,
                " | squirrel vs random win rate {:.2} ({w} wins, {t} ties, {l} losses)",
                w as f64 / n as f64
            );
        }
        out.push('\n');
    }
    out
}
